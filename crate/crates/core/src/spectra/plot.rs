use std::fmt::Write as _;

use super::SpectrumReport;

/// Exponents of the dashed guide lines `n^{-p}`.
pub const REFERENCE_SLOPES: [(f64, &str); 3] = [(0.25, "n^-1/4"), (0.5, "n^-1/2"), (1.0, "n^-1")];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
/// Normalized values below this are clipped from the plot.
const FLOOR: f64 = 1e-16;

pub struct PlotSeries<'a> {
    pub label: &'a str,
    pub report: &'a SpectrumReport,
}

struct Axes {
    x_max: f64,
    y_min: f64,
}

impl Axes {
    fn x(&self, n: f64) -> f64 {
        MARGIN_LEFT + n.log10() / self.x_max.log10().max(1e-12) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }
    fn y(&self, v: f64) -> f64 {
        MARGIN_TOP + v.log10() / self.y_min.log10() * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

/// Log-log plot of normalized spectra with reference slopes.
pub fn spectrum_svg(title: &str, series: &[PlotSeries<'_>]) -> String {
    let len = series.iter().map(|s| s.report.len()).max().unwrap_or(1).max(2);
    let smallest = series
        .iter()
        .flat_map(|s| s.report.normalized().iter().copied())
        .filter(|&v| v > FLOOR)
        .fold(1.0, f64::min);
    let axes = Axes {
        x_max: 10f64.powf((len as f64).log10().ceil()),
        y_min: 10f64.powf(smallest.log10().floor().min(-1.0)),
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#, WIDTH / 2.0, escape(title));

    let (x0, x1) = (axes.x(1.0), axes.x(axes.x_max));
    let (y0, y1) = (axes.y(1.0), axes.y(axes.y_min));
    let mut decade = 1.0;
    while decade <= axes.x_max * 1.0001 {
        let x = axes.x(decade);
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{y1:.2}" stroke="#e0e0e0"/>"##);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, y1 + 16.0, decade_label(decade));
        decade *= 10.0;
    }
    let mut decade = 1.0;
    while decade >= axes.y_min * 0.9999 {
        let y = axes.y(decade);
        let _ = writeln!(s, r##"<line x1="{x0:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 6.0, y + 4.0, decade_label(decade));
        decade /= 10.0;
    }
    let _ = writeln!(s, r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#, x1 - x0, y1 - y0);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">n</text>"#, (x0 + x1) / 2.0, HEIGHT - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">σ_n / σ_1</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );

    let mut legend_y = MARGIN_TOP + 10.0;
    let legend_x = WIDTH - MARGIN_RIGHT + 12.0;
    for (p, label) in REFERENCE_SLOPES {
        let end = axes.x_max.min(axes.y_min.powf(-1.0 / p));
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#808080" stroke-dasharray="5,4"/>"##,
            axes.x(1.0),
            axes.y(1.0),
            axes.x(end),
            axes.y(end.powf(-p))
        );
        let _ = writeln!(s, r##"<line x1="{legend_x}" y1="{legend_y}" x2="{}" y2="{legend_y}" stroke="#808080" stroke-dasharray="5,4"/>"##, legend_x + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{label}</text>"#, legend_x + 26.0, legend_y + 4.0);
        legend_y += 16.0;
    }

    for (k, series) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let mut points = String::new();
        for (i, &v) in series.report.normalized().iter().enumerate() {
            if v <= FLOOR {
                break;
            }
            let _ = write!(points, "{:.2},{:.2} ", axes.x((i + 1) as f64), axes.y(v));
        }
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#, points.trim_end());
        let _ = writeln!(s, r#"<line x1="{legend_x}" y1="{legend_y}" x2="{}" y2="{legend_y}" stroke="{colour}" stroke-width="2"/>"#, legend_x + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, legend_x + 26.0, legend_y + 4.0, escape(series.label));
        legend_y += 16.0;
    }
    s.push_str("</svg>\n");
    s
}

fn decade_label(v: f64) -> String {
    format!("1e{}", v.log10().round() as i32)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
