//! Singular value spectra of assembled operators, decay-law fits and
//! comparisons between configurations.

mod export;
mod plot;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use export::{parse_spectrum_csv, spectrum_csv, FitSummary};
pub use plot::{spectrum_svg, PlotSeries, REFERENCE_SLOPES};

/// Relative slack for dominance checks, so curves equal up to rounding
/// dominate each other.
const DOMINANCE_SLACK: f64 = 1e-12;

/// Singular values below `RANK_TOLERANCE·σ₁` count as numerically zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// All singular values of `matrix`, nonincreasing.
pub fn singular_values(matrix: &DMatrix<f64>) -> Result<Vec<f64>> {
    if let Some((i, v)) = matrix.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        let (r, c) = (i % matrix.nrows(), i / matrix.nrows());
        return Err(Error::Input(format!("matrix entry ({r}, {c}) is {v}")));
    }
    if matrix.is_empty() {
        return Ok(Vec::new());
    }
    let mut sv: Vec<f64> = matrix.singular_values().iter().map(|s| s.max(0.0)).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub label: String,
    pub config_hash: String,
    singular_values: Vec<f64>,
    normalized: Vec<f64>,
}

impl SpectrumReport {
    pub fn new(label: impl Into<String>, config_hash: impl Into<String>, mut singular_values: Vec<f64>) -> Result<Self> {
        if singular_values.is_empty() {
            return Err(Error::Input("empty spectrum".into()));
        }
        if let Some(v) = singular_values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Input(format!("singular value {v} is not a finite nonnegative number")));
        }
        if singular_values.windows(2).any(|w| w[1] > w[0]) {
            singular_values.sort_by(|a, b| b.total_cmp(a));
        }
        let leading = singular_values[0];
        if leading <= 0.0 {
            return Err(Error::Input("spectrum is identically zero".into()));
        }
        let normalized = singular_values.iter().map(|s| s / leading).collect();
        Ok(Self {
            label: label.into(),
            config_hash: config_hash.into(),
            singular_values,
            normalized,
        })
    }

    pub fn from_matrix(label: impl Into<String>, config_hash: impl Into<String>, matrix: &DMatrix<f64>) -> Result<Self> {
        Self::new(label, config_hash, singular_values(matrix)?)
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }
    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }
    pub fn len(&self) -> usize {
        self.singular_values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.singular_values.is_empty()
    }

    /// `σ_n` with 1-based `n`.
    pub fn sigma(&self, n: usize) -> f64 {
        self.singular_values[n - 1]
    }

    /// Largest `n` with `σ_n > RANK_TOLERANCE·σ₁`.
    pub fn rank_estimate(&self) -> usize {
        self.normalized.iter().take_while(|&&s| s > RANK_TOLERANCE).count()
    }

    /// `[5, min(0.3·rank, 100)]`.
    pub fn default_window(&self) -> Result<FitWindow> {
        let upper = ((0.3 * self.rank_estimate() as f64).floor() as usize).min(100);
        FitWindow::new(5, upper).map_err(|_| {
            Error::Window(format!(
                "rank estimate {} is too small for the default window [5, min(0.3·rank, 100)]",
                self.rank_estimate()
            ))
        })
    }
}

/// Inclusive range `[first, last]` of 1-based singular value indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitWindow {
    pub first: usize,
    pub last: usize,
}

impl FitWindow {
    pub fn new(first: usize, last: usize) -> Result<Self> {
        if first < 1 || last <= first {
            return Err(Error::Window(format!("window [{first}, {last}] needs 1 ≤ first < last")));
        }
        Ok(Self { first, last })
    }

    /// Parses `a:b` or `a,b`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut parts = text.split([':', ',']).map(str::trim);
        let mut next = || -> Result<usize> {
            parts
                .next()
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| Error::Window(format!("cannot parse window `{text}`, expected FIRST:LAST")))
        };
        let (first, last) = (next()?, next()?);
        if parts.next().is_some() {
            return Err(Error::Window(format!("cannot parse window `{text}`, expected FIRST:LAST")));
        }
        Self::new(first, last)
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        self.first..=self.last
    }

    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn check(&self, report: &SpectrumReport) -> Result<()> {
        if self.last > report.len() {
            return Err(Error::Window(format!(
                "window [{}, {}] exceeds the spectrum length {}",
                self.first,
                self.last,
                report.len()
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for FitWindow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.first, self.last)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecayModel {
    /// `σ_n ≈ C·n^{ν}`, fitted in `log σ` against `log n`.
    PowerLaw,
    /// `σ_n ≈ C·e^{νn}`, fitted in `log σ` against `n`.
    Exponential,
}

impl DecayModel {
    pub fn name(&self) -> &'static str {
        match self {
            DecayModel::PowerLaw => "power_law",
            DecayModel::Exponential => "exponential",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "power_law" | "power" => Ok(DecayModel::PowerLaw),
            "exponential" | "exp" => Ok(DecayModel::Exponential),
            other => Err(Error::Configuration(format!("unknown decay model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub model: DecayModel,
    pub window: FitWindow,
    /// Power-law exponent or exponential rate; negative for decaying spectra.
    pub exponent: f64,
    /// Intercept of the fitted line in `log σ`.
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `log σ_n` over the window.
pub fn fit_decay(report: &SpectrumReport, model: DecayModel, window: Option<FitWindow>) -> Result<DecayFit> {
    let window = match window {
        Some(w) => w,
        None => report.default_window()?,
    };
    window.check(report)?;
    let mut xs = Vec::with_capacity(window.len());
    let mut ys = Vec::with_capacity(window.len());
    for n in window.indices() {
        let s = report.sigma(n);
        if !(report.normalized[n - 1] > RANK_TOLERANCE) {
            return Err(Error::Window(format!(
                "σ_{n} = {s:e} is zero at working precision, shrink the window below the rank estimate {}",
                report.rank_estimate()
            )));
        }
        xs.push(match model {
            DecayModel::PowerLaw => (n as f64).ln(),
            DecayModel::Exponential => n as f64,
        });
        ys.push(s.ln());
    }
    let (slope, intercept, r_squared) = least_squares(&xs, &ys);
    Ok(DecayFit {
        model,
        window,
        exponent: slope,
        intercept,
        r_squared,
    })
}

/// Slope, intercept and R² of the ordinary least-squares line.
fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (1.0 - sse / syy).clamp(0.0, 1.0)
    };
    (slope, intercept, r_squared)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Curves divided by their own `σ₁`.
    #[default]
    Leading,
    /// Raw singular values.
    Raw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub labels: Vec<String>,
    pub window: FitWindow,
    pub normalization: Normalization,
    /// `ratios[k][i]` is curve `k` over curve 0 at `n = window.first + i`.
    pub ratios: Vec<Vec<f64>>,
    /// `dominates[a][b]`: curve `a` lies on or above curve `b` over the whole window.
    pub dominates: Vec<Vec<bool>>,
    /// Curves are nondecreasing in list order at every `n` of the window.
    pub ordered: bool,
}

impl ComparisonReport {
    pub fn verdicts(&self) -> Vec<String> {
        let mut out = Vec::new();
        let k = self.labels.len();
        if k == 1 {
            out.push(format!("{}: single member, trivially consistent", self.labels[0]));
        }
        for a in 0..k {
            for b in a + 1..k {
                let (la, lb) = (&self.labels[a], &self.labels[b]);
                let verdict = match (self.dominates[a][b], self.dominates[b][a]) {
                    (true, true) => format!("{la} and {lb} coincide over window {}", self.window),
                    (true, false) => format!("{la} slower-decaying than {lb} over window {}", self.window),
                    (false, true) => format!("{lb} slower-decaying than {la} over window {}", self.window),
                    (false, false) => format!("{la} and {lb} cross within window {}", self.window),
                };
                out.push(verdict);
            }
        }
        if k > 1 {
            out.push(format!(
                "ordering {} over window {}: {}",
                self.labels.join(" <= "),
                self.window,
                if self.ordered { "holds" } else { "violated" }
            ));
        }
        out
    }
}

/// Aligns spectra by index and reports per-`n` ratios and dominance.
pub fn compare(reports: &[SpectrumReport], normalization: Normalization, window: FitWindow) -> Result<ComparisonReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Comparison("nothing to compare".into()))?;
    if let Some(r) = reports.iter().find(|r| r.len() != first.len()) {
        return Err(Error::Comparison(format!(
            "{} has {} singular values but {} has {}; members must share the spatial discretization",
            r.label,
            r.len(),
            first.label,
            first.len()
        )));
    }
    window.check(first).map_err(|e| Error::Comparison(e.to_string()))?;
    let curve = |r: &SpectrumReport| -> Vec<f64> {
        let src = match normalization {
            Normalization::Leading => r.normalized(),
            Normalization::Raw => r.singular_values(),
        };
        src[window.first - 1..window.last].to_vec()
    };
    let curves: Vec<Vec<f64>> = reports.iter().map(curve).collect();
    let ratios = curves
        .iter()
        .map(|c| c.iter().zip(&curves[0]).map(|(a, b)| a / b).collect())
        .collect();
    let dominates = curves
        .iter()
        .map(|a| curves.iter().map(|b| a.iter().zip(b).all(|(x, y)| *x >= y * (1.0 - DOMINANCE_SLACK))).collect())
        .collect();
    let ordered = curves.windows(2).all(|p| p[1].iter().zip(&p[0]).all(|(hi, lo)| *hi >= lo * (1.0 - DOMINANCE_SLACK)));
    Ok(ComparisonReport {
        labels: reports.iter().map(|r| r.label.clone()).collect(),
        window,
        normalization,
        ratios,
        dominates,
        ordered,
    })
}
