//! Running configured experiments end to end and writing their artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::config::{ExperimentConfig, Member};
use crate::discretize::{assemble, OperatorMatrix};
use crate::error::{Error, Result};
use crate::spectra::{
    compare, fit_decay, spectrum_csv, spectrum_svg, ComparisonReport, DecayModel, FitSummary, FitWindow, Normalization,
    PlotSeries, SpectrumReport,
};

/// Environment variable that relocates relative output directories.
pub const OUTPUT_ROOT_VAR: &str = "MPISV_OUTPUT_ROOT";

pub fn output_root_from_env() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_ROOT_VAR).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Spectrum and fits of one particle size.
#[derive(Debug, Clone)]
pub struct MemberResult {
    pub label: String,
    pub diameter_nm: Option<f64>,
    pub report: SpectrumReport,
    /// `None` when the default window does not fit the spectrum.
    pub fits: Option<FitSummary>,
    pub rows: usize,
    pub columns: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub name: String,
    pub config_hash: String,
    pub members: Vec<MemberResult>,
    pub warnings: Vec<String>,
    pub wall_time_s: f64,
}

/// Assembled operator of one member, kept only when asked for.
pub struct Computed {
    pub result: MemberResult,
    pub matrix: Option<OperatorMatrix>,
}

fn fit_both(report: &SpectrumReport) -> Result<FitSummary> {
    let window = report.default_window()?;
    let fits = [DecayModel::PowerLaw, DecayModel::Exponential]
        .iter()
        .map(|&m| fit_decay(report, m, Some(window)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FitSummary::new(report, fits))
}

fn run_member(config: &ExperimentConfig, member: &Member, hash: &str, keep_matrix: bool) -> Result<Computed> {
    let grid = config.grid()?;
    let mut op = assemble(&member.specs, &grid, &config.quadrature(), &config.assembly_options())?;
    op.config_hash = hash.to_string();
    let report = SpectrumReport::from_matrix(member.label.clone(), hash, &op.matrix)?;
    let mut warnings = op.warnings.clone();
    let fits = match fit_both(&report) {
        Ok(f) => Some(f),
        Err(e) => {
            warnings.push(format!("{}: no decay fit: {e}", member.label));
            None
        }
    };
    Ok(Computed {
        result: MemberResult {
            label: member.label.clone(),
            diameter_nm: member.diameter_nm,
            report,
            fits,
            rows: op.rows(),
            columns: op.columns(),
            warnings,
        },
        matrix: keep_matrix.then_some(op),
    })
}

/// Validates, assembles and decomposes every member. Members run in
/// parallel; results keep the configured order.
pub fn simulate(config: &ExperimentConfig, keep_matrices: bool) -> Result<(Simulation, Vec<Option<OperatorMatrix>>)> {
    let start = Instant::now();
    let mut warnings = config.validate()?;
    let hash = config.hash();
    let members = config.members()?;
    let computed = members
        .par_iter()
        .map(|m| run_member(config, m, &hash, keep_matrices))
        .collect::<Result<Vec<_>>>()?;
    let mut results = Vec::with_capacity(computed.len());
    let mut matrices = Vec::with_capacity(computed.len());
    for c in computed {
        for w in &c.result.warnings {
            if !warnings.contains(w) {
                warnings.push(w.clone());
            }
        }
        results.push(c.result);
        matrices.push(c.matrix);
    }
    Ok((
        Simulation {
            name: config.name.clone(),
            config_hash: hash,
            members: results,
            warnings,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
        matrices,
    ))
}

/// Files written by [`run_simulate`].
#[derive(Debug, Clone)]
pub struct SimulateOutcome {
    pub simulation: Simulation,
    pub directory: PathBuf,
    pub files: Vec<PathBuf>,
}

fn write(dir: &Path, name: &str, contents: &[u8], files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    files.push(path);
    Ok(())
}

fn suffixed(stem: &str, ext: &str, label: &str, many: bool) -> String {
    if many {
        format!("{stem}_{label}.{ext}")
    } else {
        format!("{stem}.{ext}")
    }
}

/// Runs the experiment and writes spectra, fits, a plot and a manifest into
/// the configured output directory (below `root` when given).
pub fn run_simulate(config: &ExperimentConfig, root: Option<&Path>) -> Result<SimulateOutcome> {
    let (simulation, matrices) = simulate(config, config.write_matrix)?;
    let dir = config.output_dir(root);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let many = simulation.members.len() > 1;
    let mut files = Vec::new();
    write(&dir, "config.cfg", config.emit().as_bytes(), &mut files)?;
    for (m, op) in simulation.members.iter().zip(&matrices) {
        write(&dir, &suffixed("spectrum", "csv", &m.label, many), spectrum_csv(&m.report).as_bytes(), &mut files)?;
        if let Some(fits) = &m.fits {
            write(&dir, &suffixed("fit", "txt", &m.label, many), fits.to_text().as_bytes(), &mut files)?;
        }
        if let Some(op) = op {
            let path = dir.join(suffixed("matrix", "bin", &m.label, many));
            op.save_binary(&path)?;
            files.push(path);
        }
    }
    let series: Vec<PlotSeries<'_>> = simulation
        .members
        .iter()
        .map(|m| PlotSeries { label: &m.label, report: &m.report })
        .collect();
    write(&dir, "plot.svg", spectrum_svg(&simulation.name, &series).as_bytes(), &mut files)?;
    let manifest = manifest(config, &simulation, &files);
    write(&dir, "manifest.txt", manifest.as_bytes(), &mut files)?;
    Ok(SimulateOutcome { simulation, directory: dir, files })
}

fn manifest(config: &ExperimentConfig, sim: &Simulation, files: &[PathBuf]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "name={}", sim.name);
    let _ = writeln!(s, "config_hash={}", sim.config_hash);
    let _ = writeln!(s, "tool_version={}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "dimension={}", config.dimension);
    let _ = writeln!(s, "variant={}", config.variant.name());
    let _ = writeln!(s, "time_integration={}", config.resolved_time_integration().name());
    for m in &sim.members {
        let _ = writeln!(s, "member.{}.rows={}", m.label, m.rows);
        let _ = writeln!(s, "member.{}.columns={}", m.label, m.columns);
        let _ = writeln!(s, "member.{}.rank_estimate={}", m.label, m.report.rank_estimate());
    }
    let _ = writeln!(s, "wall_time_s={:.3}", sim.wall_time_s);
    for f in files {
        if let Some(name) = f.file_name() {
            let _ = writeln!(s, "file={}", name.to_string_lossy());
        }
    }
    let _ = writeln!(s, "file=manifest.txt");
    for w in &sim.warnings {
        let _ = writeln!(s, "warning={w}");
    }
    s
}

/// Cross-experiment comparison of every member of several configurations.
#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub comparison: ComparisonReport,
    /// Per configuration with at least two sizes: spectra ordered by diameter.
    pub diameter_checks: Vec<(String, bool)>,
    pub simulations: Vec<Simulation>,
    pub files: Vec<PathBuf>,
}

impl CompareOutcome {
    pub fn verdicts(&self) -> Vec<String> {
        let mut out = self.comparison.verdicts();
        for (name, ok) in &self.diameter_checks {
            out.push(format!(
                "{name}: spectra {} monotone in particle diameter over window {}",
                if *ok { "are" } else { "are not" },
                self.comparison.window
            ));
        }
        out
    }
}

/// Simulates each configuration, then compares all members in order.
/// Without a window the default window of the first member is used.
pub fn run_compare(
    configs: &[ExperimentConfig],
    window: Option<FitWindow>,
    normalization: Normalization,
    output: &Path,
) -> Result<CompareOutcome> {
    if configs.is_empty() {
        return Err(Error::Comparison("nothing to compare".into()));
    }
    let simulations = configs
        .iter()
        .map(|c| simulate(c, false).map(|(s, _)| s))
        .collect::<Result<Vec<_>>>()?;
    let multi = simulations.len() > 1;
    let mut reports = Vec::new();
    for sim in &simulations {
        for m in &sim.members {
            let mut r = m.report.clone();
            if multi {
                r.label = format!("{}/{}", sim.name, m.label);
            }
            reports.push(r);
        }
    }
    let window = match window {
        Some(w) => w,
        None => reports[0].default_window().map_err(|e| Error::Comparison(e.to_string()))?,
    };
    let comparison = compare(&reports, normalization, window)?;

    let mut diameter_checks = Vec::new();
    for sim in &simulations {
        let mut sized: Vec<&MemberResult> = sim.members.iter().filter(|m| m.diameter_nm.is_some()).collect();
        if sized.len() < 2 {
            continue;
        }
        sized.sort_by(|a, b| a.diameter_nm.partial_cmp(&b.diameter_nm).unwrap());
        let ordered: Vec<SpectrumReport> = sized.iter().map(|m| m.report.clone()).collect();
        diameter_checks.push((sim.name.clone(), compare(&ordered, normalization, window)?.ordered));
    }

    std::fs::create_dir_all(output).map_err(|e| Error::io(output, e))?;
    let mut files = Vec::new();
    let series: Vec<PlotSeries<'_>> = reports.iter().map(|r| PlotSeries { label: &r.label, report: r }).collect();
    write(output, "comparison.svg", spectrum_svg("comparison", &series).as_bytes(), &mut files)?;
    write(output, "ratios.csv", ratios_csv(&comparison).as_bytes(), &mut files)?;
    let mut outcome = CompareOutcome { comparison, diameter_checks, simulations, files };
    let mut text = String::new();
    for sim in &outcome.simulations {
        let _ = writeln!(text, "config.{}={}", sim.name, sim.config_hash);
    }
    let _ = writeln!(text, "window={}", outcome.comparison.window);
    for v in outcome.verdicts() {
        let _ = writeln!(text, "verdict={v}");
    }
    write(output, "comparison.txt", text.as_bytes(), &mut outcome.files)?;
    Ok(outcome)
}

fn ratios_csv(c: &ComparisonReport) -> String {
    let mut s = String::from("n");
    for label in &c.labels {
        let _ = write!(s, ",{label}");
    }
    s.push('\n');
    for (i, n) in c.window.indices().enumerate() {
        let _ = write!(s, "{n}");
        for r in &c.ratios {
            let _ = write!(s, ",{:e}", r[i]);
        }
        s.push('\n');
    }
    s
}
