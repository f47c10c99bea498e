//! Experiment configuration: a flat `key = value` text format with dotted
//! sections and unit-suffixed keys.
//!
//! Field strengths are written in `T/μ₀` and gradients in `T/m/μ₀`, so the
//! numbers match the usual tables; they are converted to A/m internally.
//! Numbers may be written as quotients such as `2.5e6/96/25/20`. A lone `-`
//! marks an unused drive axis.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::discretize::{AssemblyOptions, Containment, QuadratureSpec, SpatialGrid, TimeIntegration};
use crate::error::{Error, Result};
use crate::kernel::{default_regularization, Filter, KernelSpec, KernelVariant};
use crate::physics::{ParticleModel, BOLTZMANN, MU0};
use crate::sequence::{DriveField, ScanMode, ScannerSequence, SelectionField, Vec3, Waveform};

/// Tolerance of the `T·f₃ ≈ 1` check for 3D FFL sequences.
const PERIOD_TOLERANCE: f64 = 1e-3;

/// Every key the format accepts, in emission order.
pub const KEYS: &[&str] = &[
    "name",
    "grid.dimension",
    "grid.fov_min_mm",
    "grid.fov_max_mm",
    "grid.cell_size_mm",
    "grid.cell_count",
    "scanner.mode",
    "scanner.waveform",
    "scanner.gradient_diag_t_per_m_per_mu0",
    "scanner.drive_amplitude_t_per_mu0",
    "scanner.drive_frequency_hz",
    "scanner.rotation_frequency_hz",
    "scanner.measurement_time_s",
    "scanner.sample_interval_s",
    "scanner.receive_coils",
    "particle.diameters_nm",
    "particle.temperature_k",
    "particle.saturation_magnetization_j_per_m3_per_t",
    "model.variant",
    "model.filter_csv",
    "model.regularization_a_per_m",
    "quadrature.points_per_axis",
    "quadrature.gauss_order",
    "quadrature.halton_skip",
    "quadrature.time_integration",
    "assembly.containment",
    "assembly.parallel",
    "output.directory",
    "output.write_matrix",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellSpec {
    SizeMm,
    Count,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantKind {
    Equilibrium,
    Limit,
    Filtered,
}

impl VariantKind {
    pub fn name(&self) -> &'static str {
        match self {
            VariantKind::Equilibrium => "equilibrium",
            VariantKind::Limit => "limit",
            VariantKind::Filtered => "filtered",
        }
    }
}

/// `auto` picks the exact primitive for the limit kernel and Gauss
/// integration otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeIntegrationChoice {
    Auto,
    Fixed(TimeIntegration),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub dimension: usize,
    pub fov_min_mm: Vec<f64>,
    pub fov_max_mm: Vec<f64>,
    pub cell_spec: CellSpec,
    /// Cell sizes in mm or counts, depending on `cell_spec`.
    pub cells: Vec<f64>,
    pub mode: ScanMode,
    pub waveform: Waveform,
    pub gradient_diag: Vec<f64>,
    /// `None` marks a disabled axis.
    pub drive_amplitude: Vec<Option<f64>>,
    pub drive_frequency: Vec<Option<f64>>,
    pub rotation_frequency_hz: f64,
    pub measurement_time_s: f64,
    pub sample_interval_s: f64,
    pub receive_coils: usize,
    pub diameters_nm: Vec<f64>,
    pub temperature_k: f64,
    pub saturation_magnetization: f64,
    pub variant: VariantKind,
    pub filter_csv: Option<String>,
    pub regularization_a_per_m: Option<f64>,
    pub points_per_axis: usize,
    pub gauss_order: usize,
    pub halton_skip: u64,
    pub time_integration: TimeIntegrationChoice,
    pub containment: Containment,
    pub parallel: bool,
    pub output_directory: String,
    pub write_matrix: bool,
    /// Directory relative paths in the file are resolved against.
    pub base_dir: PathBuf,
}

impl Default for ExperimentConfig {
    /// Desk-scale 2D FFP with sinusoidal excitation.
    fn default() -> Self {
        Self {
            name: "ffp-2d".into(),
            dimension: 2,
            fov_min_mm: vec![-12.5, -12.5],
            fov_max_mm: vec![12.5, 12.5],
            cell_spec: CellSpec::SizeMm,
            cells: vec![1.0, 1.0],
            mode: ScanMode::Ffp,
            waveform: Waveform::Sinusoidal,
            gradient_diag: vec![-1.0, -1.0],
            drive_amplitude: vec![Some(0.012), Some(0.012)],
            drive_frequency: vec![Some(2.5e6 / 102.0), Some(2.5e6 / 96.0)],
            rotation_frequency_hz: 0.0,
            measurement_time_s: 0.653e-3,
            sample_interval_s: 0.5e-6,
            receive_coils: 2,
            diameters_nm: vec![30.0],
            temperature_k: 293.0,
            saturation_magnetization: 474_000.0,
            variant: VariantKind::Equilibrium,
            filter_csv: None,
            regularization_a_per_m: None,
            points_per_axis: 3,
            gauss_order: 4,
            halton_skip: 0,
            time_integration: TimeIntegrationChoice::Auto,
            containment: Containment::Enforce,
            parallel: true,
            output_directory: "out".into(),
            write_matrix: false,
            base_dir: PathBuf::from("."),
        }
    }
}

/// Evaluates `a`, `a/b/c` or `a*b`, left to right.
pub fn parse_number(text: &str) -> Result<f64> {
    let bad = || Error::Configuration(format!("`{}` is not a number", text.trim()));
    let mut value = 1.0;
    let mut op = '*';
    let mut rest = text.trim();
    loop {
        let (token, next) = match rest.find(['/', '*']) {
            Some(i) => (&rest[..i], Some((rest.as_bytes()[i] as char, &rest[i + 1..]))),
            None => (rest, None),
        };
        let v: f64 = token.trim().parse().map_err(|_| bad())?;
        value = if op == '/' { value / v } else { value * v };
        match next {
            Some((o, r)) => {
                op = o;
                rest = r;
            }
            None => break,
        }
    }
    if value.is_finite() {
        Ok(value)
    } else {
        Err(bad())
    }
}

fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',').map(parse_number).collect()
}

fn parse_optional_list(text: &str) -> Result<Vec<Option<f64>>> {
    text.split(',')
        .map(|t| if t.trim() == "-" { Ok(None) } else { parse_number(t).map(Some) })
        .collect()
}

fn parse_bool(text: &str) -> Result<bool> {
    match text.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::Configuration(format!("`{other}` is not a boolean"))),
    }
}

fn parse_integer(text: &str) -> Result<u64> {
    let v = parse_number(text)?;
    if v < 0.0 || v.fract() != 0.0 {
        return Err(Error::Configuration(format!("`{}` is not a nonnegative integer", text.trim())));
    }
    Ok(v as u64)
}

fn fmt_list(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", ")
}

fn fmt_optional_list(values: &[Option<f64>]) -> String {
    values
        .iter()
        .map(|v| v.map_or_else(|| "-".to_string(), |x| format!("{x:?}")))
        .collect::<Vec<_>>()
        .join(", ")
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::parse(&text)?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Ok(config)
    }

    /// Parses the text format. Unset keys keep their defaults; unknown or
    /// repeated keys and malformed values are all reported together.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut problems = Vec::new();
        for (number, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                problems.push(format!("line {}: expected `key = value`", number + 1));
                continue;
            };
            let key = key.trim().to_ascii_lowercase();
            if !KEYS.contains(&key.as_str()) {
                problems.push(format!("line {}: unknown key `{key}`", number + 1));
            } else if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                problems.push(format!("line {}: `{key}` set twice", number + 1));
            }
        }
        let mut c = Self::default();
        let mut cell_keys = 0;
        for (key, value) in &entries {
            if let Err(e) = c.apply(key, value, &mut cell_keys) {
                problems.push(format!("{key}: {}", strip(&e)));
            }
        }
        if cell_keys > 1 {
            problems.push("set only one of grid.cell_size_mm and grid.cell_count".into());
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok(c)
    }

    fn apply(&mut self, key: &str, value: &str, cell_keys: &mut usize) -> Result<()> {
        match key {
            "name" => self.name = value.to_string(),
            "grid.dimension" => self.dimension = parse_integer(value)? as usize,
            "grid.fov_min_mm" => self.fov_min_mm = parse_list(value)?,
            "grid.fov_max_mm" => self.fov_max_mm = parse_list(value)?,
            "grid.cell_size_mm" => {
                *cell_keys += 1;
                self.cell_spec = CellSpec::SizeMm;
                self.cells = parse_list(value)?;
            }
            "grid.cell_count" => {
                *cell_keys += 1;
                self.cell_spec = CellSpec::Count;
                self.cells = parse_list(value)?;
            }
            "scanner.mode" => {
                self.mode = match value.to_ascii_lowercase().as_str() {
                    "ffp" => ScanMode::Ffp,
                    "ffl" => ScanMode::Ffl,
                    other => return Err(Error::Configuration(format!("unknown mode `{other}`, expected ffp or ffl"))),
                }
            }
            "scanner.waveform" => {
                self.waveform = match value.to_ascii_lowercase().as_str() {
                    "sinusoidal" | "sin" => Waveform::Sinusoidal,
                    "triangular" | "tri" => Waveform::Triangular,
                    other => {
                        return Err(Error::Configuration(format!(
                            "unknown waveform `{other}`, expected sinusoidal or triangular"
                        )))
                    }
                }
            }
            "scanner.gradient_diag_t_per_m_per_mu0" => self.gradient_diag = parse_list(value)?,
            "scanner.drive_amplitude_t_per_mu0" => self.drive_amplitude = parse_optional_list(value)?,
            "scanner.drive_frequency_hz" => self.drive_frequency = parse_optional_list(value)?,
            "scanner.rotation_frequency_hz" => self.rotation_frequency_hz = parse_number(value)?,
            "scanner.measurement_time_s" => self.measurement_time_s = parse_number(value)?,
            "scanner.sample_interval_s" => self.sample_interval_s = parse_number(value)?,
            "scanner.receive_coils" => self.receive_coils = parse_integer(value)? as usize,
            "particle.diameters_nm" => {
                self.diameters_nm = if value.trim().is_empty() { Vec::new() } else { parse_list(value)? }
            }
            "particle.temperature_k" => self.temperature_k = parse_number(value)?,
            "particle.saturation_magnetization_j_per_m3_per_t" => self.saturation_magnetization = parse_number(value)?,
            "model.variant" => {
                self.variant = match value.to_ascii_lowercase().as_str() {
                    "equilibrium" => VariantKind::Equilibrium,
                    "limit" => VariantKind::Limit,
                    "filtered" => VariantKind::Filtered,
                    other => {
                        return Err(Error::Configuration(format!(
                            "unknown variant `{other}`, expected equilibrium, limit or filtered"
                        )))
                    }
                }
            }
            "model.filter_csv" => self.filter_csv = Some(value.to_string()).filter(|v| !v.is_empty()),
            "model.regularization_a_per_m" => {
                self.regularization_a_per_m = if value == "auto" { None } else { Some(parse_number(value)?) }
            }
            "quadrature.points_per_axis" => self.points_per_axis = parse_integer(value)? as usize,
            "quadrature.gauss_order" => self.gauss_order = parse_integer(value)? as usize,
            "quadrature.halton_skip" => self.halton_skip = parse_integer(value)?,
            "quadrature.time_integration" => {
                self.time_integration = if value == "auto" {
                    TimeIntegrationChoice::Auto
                } else {
                    TimeIntegrationChoice::Fixed(TimeIntegration::parse(value)?)
                }
            }
            "assembly.containment" => {
                self.containment = match value {
                    "enforce" => Containment::Enforce,
                    "warn" => Containment::Warn,
                    other => {
                        return Err(Error::Configuration(format!("unknown containment `{other}`, expected enforce or warn")))
                    }
                }
            }
            "assembly.parallel" => self.parallel = parse_bool(value)?,
            "output.directory" => self.output_directory = value.to_string(),
            "output.write_matrix" => self.write_matrix = parse_bool(value)?,
            _ => unreachable!("key list and parser disagree on `{key}`"),
        }
        Ok(())
    }

    /// Canonical text: every key in fixed order, shortest round-trip numbers.
    pub fn emit(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("name", self.name.clone());
        put("grid.dimension", self.dimension.to_string());
        put("grid.fov_min_mm", fmt_list(&self.fov_min_mm));
        put("grid.fov_max_mm", fmt_list(&self.fov_max_mm));
        match self.cell_spec {
            CellSpec::SizeMm => put("grid.cell_size_mm", fmt_list(&self.cells)),
            CellSpec::Count => put(
                "grid.cell_count",
                self.cells.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(", "),
            ),
        }
        put("scanner.mode", if self.mode == ScanMode::Ffp { "ffp" } else { "ffl" }.into());
        put(
            "scanner.waveform",
            if self.waveform == Waveform::Sinusoidal { "sinusoidal" } else { "triangular" }.into(),
        );
        put("scanner.gradient_diag_t_per_m_per_mu0", fmt_list(&self.gradient_diag));
        put("scanner.drive_amplitude_t_per_mu0", fmt_optional_list(&self.drive_amplitude));
        put("scanner.drive_frequency_hz", fmt_optional_list(&self.drive_frequency));
        put("scanner.rotation_frequency_hz", format!("{:?}", self.rotation_frequency_hz));
        put("scanner.measurement_time_s", format!("{:?}", self.measurement_time_s));
        put("scanner.sample_interval_s", format!("{:?}", self.sample_interval_s));
        put("scanner.receive_coils", self.receive_coils.to_string());
        put("particle.diameters_nm", fmt_list(&self.diameters_nm));
        put("particle.temperature_k", format!("{:?}", self.temperature_k));
        put(
            "particle.saturation_magnetization_j_per_m3_per_t",
            format!("{:?}", self.saturation_magnetization),
        );
        put("model.variant", self.variant.name().into());
        if let Some(f) = &self.filter_csv {
            put("model.filter_csv", f.clone());
        }
        put(
            "model.regularization_a_per_m",
            self.regularization_a_per_m.map_or_else(|| "auto".into(), |v| format!("{v:?}")),
        );
        put("quadrature.points_per_axis", self.points_per_axis.to_string());
        put("quadrature.gauss_order", self.gauss_order.to_string());
        put("quadrature.halton_skip", self.halton_skip.to_string());
        put(
            "quadrature.time_integration",
            match self.time_integration {
                TimeIntegrationChoice::Auto => "auto".into(),
                TimeIntegrationChoice::Fixed(t) => t.name().into(),
            },
        );
        put(
            "assembly.containment",
            if self.containment == Containment::Enforce { "enforce" } else { "warn" }.into(),
        );
        put("assembly.parallel", self.parallel.to_string());
        put("output.directory", self.output_directory.clone());
        put("output.write_matrix", self.write_matrix.to_string());
        s
    }

    /// SHA-256 of the physics-relevant canonical text and any filter data.
    /// Output settings and the parallel flag are excluded since they do not
    /// change results.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for line in self.emit().lines() {
            if line.starts_with("output.") || line.starts_with("assembly.parallel") || line.starts_with("name ") {
                continue;
            }
            hasher.update(line.as_bytes());
            hasher.update(b"\n");
        }
        if let Some(path) = self.filter_path() {
            if let Ok(bytes) = std::fs::read(&path) {
                hasher.update(&bytes);
            }
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn filter_path(&self) -> Option<PathBuf> {
        self.filter_csv.as_ref().map(|f| self.base_dir.join(f))
    }

    /// Output directory, under `root` when given.
    pub fn output_dir(&self, root: Option<&Path>) -> PathBuf {
        let dir = Path::new(&self.output_directory);
        match root {
            Some(r) if dir.is_relative() => r.join(dir),
            _ if dir.is_relative() => self.base_dir.join(dir),
            _ => dir.to_path_buf(),
        }
    }

    pub fn resolved_time_integration(&self) -> TimeIntegration {
        match self.time_integration {
            TimeIntegrationChoice::Fixed(t) => t,
            TimeIntegrationChoice::Auto if self.variant == VariantKind::Limit => TimeIntegration::Primitive,
            TimeIntegrationChoice::Auto => TimeIntegration::Interval,
        }
    }

    pub fn quadrature(&self) -> QuadratureSpec {
        QuadratureSpec {
            points_per_axis: self.points_per_axis,
            gauss_order: self.gauss_order,
            halton_skip: self.halton_skip,
            time_integration: self.resolved_time_integration(),
        }
    }

    pub fn assembly_options(&self) -> AssemblyOptions {
        AssemblyOptions {
            parallel: self.parallel,
            containment: self.containment,
        }
    }

    pub fn grid(&self) -> Result<SpatialGrid> {
        let lo: Vec<f64> = self.fov_min_mm.iter().map(|v| v * 1e-3).collect();
        let hi: Vec<f64> = self.fov_max_mm.iter().map(|v| v * 1e-3).collect();
        match self.cell_spec {
            CellSpec::SizeMm => {
                let size: Vec<f64> = self.cells.iter().map(|v| v * 1e-3).collect();
                SpatialGrid::from_cell_size(&lo, &hi, &size)
            }
            CellSpec::Count => {
                if let Some(v) = self.cells.iter().find(|v| v.fract() != 0.0 || **v < 1.0) {
                    return Err(Error::parameter("grid.cell_count", format!("{v} is not a positive integer")));
                }
                let counts: Vec<usize> = self.cells.iter().map(|&v| v as usize).collect();
                SpatialGrid::from_cell_count(&lo, &hi, &counts)
            }
        }
    }

    pub fn sequence(&self) -> Result<ScannerSequence> {
        let d = self.dimension;
        if self.gradient_diag.len() != d {
            return Err(Error::parameter("scanner.gradient_diag_t_per_m_per_mu0", format!("needs {d} entries")));
        }
        if self.drive_amplitude.len() != d || self.drive_frequency.len() != d {
            return Err(Error::parameter("scanner.drive", format!("amplitude and frequency lists need {d} entries")));
        }
        let diag: Vec<f64> = self.gradient_diag.iter().map(|g| g / MU0).collect();
        let selection = SelectionField::diagonal(self.mode, &diag, self.rotation_frequency_hz)?;
        let mut amps = Vec::with_capacity(d);
        let mut freqs = Vec::with_capacity(d);
        let mut disabled = Vec::new();
        for i in 0..d {
            match (self.drive_amplitude[i], self.drive_frequency[i]) {
                (Some(a), Some(f)) => {
                    amps.push(a / MU0);
                    freqs.push(f);
                }
                (None, None) => {
                    amps.push(1.0);
                    freqs.push(1.0);
                    disabled.push(i);
                }
                _ => {
                    return Err(Error::parameter(
                        "scanner.drive",
                        format!("axis {} has only one of amplitude and frequency", i + 1),
                    ))
                }
            }
        }
        let mut drive = DriveField::new(self.waveform, &amps, &freqs)?;
        for i in disabled {
            drive = drive.without_axis(i);
        }
        let coils = self.receive_coils;
        if coils == 0 || coils > d {
            return Err(Error::parameter("scanner.receive_coils", format!("must be in 1..={d}, got {coils}")));
        }
        let sensitivities = (0..coils)
            .map(|i| {
                let mut p = Vec3::zeros();
                p[i] = 1.0;
                p
            })
            .collect();
        ScannerSequence::with_coils(selection, drive, sensitivities, self.measurement_time_s, self.sample_interval_s)
    }

    fn particle(&self, diameter_nm: f64) -> Result<ParticleModel> {
        ParticleModel::new(self.temperature_k, self.saturation_magnetization, diameter_nm * 1e-9, BOLTZMANN, MU0)
    }

    pub fn kernel_variant(&self) -> Result<KernelVariant> {
        Ok(match self.variant {
            VariantKind::Equilibrium => KernelVariant::Equilibrium,
            VariantKind::Limit => KernelVariant::Limit,
            VariantKind::Filtered => {
                let path = self
                    .filter_path()
                    .ok_or_else(|| Error::Configuration("the filtered variant needs model.filter_csv".into()))?;
                KernelVariant::Filtered(Filter::load_csv(&path)?)
            }
        })
    }

    /// One entry per simulated particle size. The limit kernel does not
    /// depend on the diameter and yields a single member.
    pub fn members(&self) -> Result<Vec<Member>> {
        let grid = self.grid()?;
        let sequence = Arc::new(self.sequence()?);
        let variant = self.kernel_variant()?;
        let eps = self
            .regularization_a_per_m
            .unwrap_or_else(|| default_regularization(&sequence, grid.fov_diameter()));
        let diameters: Vec<Option<f64>> = match self.variant {
            VariantKind::Limit => vec![None],
            _ => self.diameters_nm.iter().copied().map(Some).collect(),
        };
        diameters
            .into_iter()
            .map(|d| {
                // the limit kernel ignores the particle, any valid one will do
                let particle = self.particle(d.unwrap_or(30.0))?;
                let specs = KernelSpec::for_all_coils(&particle, &sequence, &variant, eps)?;
                Ok(Member {
                    label: d.map_or_else(|| "limit".to_string(), |d| format!("d{}nm", trim_number(d))),
                    diameter_nm: d,
                    specs,
                })
            })
            .collect()
    }

    /// Checks every invariant and returns the warnings, or all violations.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut errors = Vec::new();
        let mut warnings = Vec::new();
        let d = self.dimension;
        if !(1..=3).contains(&d) {
            errors.push(format!("grid.dimension must be 1, 2 or 3, got {d}"));
        }
        if self.mode == ScanMode::Ffl && !(2..=3).contains(&d) {
            errors.push(format!("FFL scanning needs dimension 2 or 3, got {d}"));
        }
        for (key, len) in [
            ("grid.fov_min_mm", self.fov_min_mm.len()),
            ("grid.fov_max_mm", self.fov_max_mm.len()),
            ("grid cell list", self.cells.len()),
            ("scanner.gradient_diag_t_per_m_per_mu0", self.gradient_diag.len()),
            ("scanner.drive_amplitude_t_per_mu0", self.drive_amplitude.len()),
            ("scanner.drive_frequency_hz", self.drive_frequency.len()),
        ] {
            if len != d {
                errors.push(format!("{key} has {len} entries, dimension is {d}"));
            }
        }
        if self.variant != VariantKind::Limit {
            if self.diameters_nm.is_empty() {
                errors.push("particle.diameters_nm is empty".into());
            }
            if let Some(v) = self.diameters_nm.iter().find(|v| !(**v > 0.0)) {
                errors.push(format!("particle diameter {v} nm is not positive"));
            }
        }
        if self.variant == VariantKind::Filtered && self.filter_csv.is_none() {
            errors.push("model.variant = filtered needs model.filter_csv".into());
        }
        if self.variant != VariantKind::Filtered && self.filter_csv.is_some() {
            warnings.push(format!("model.filter_csv is ignored by the {} variant", self.variant.name()));
        }
        if self.variant == VariantKind::Limit
            && self.mode == ScanMode::Ffl
            && d == 2
            && self.resolved_time_integration() != TimeIntegration::Primitive
        {
            warnings.push(
                "2D FFL limit kernel with pointwise time evaluation misses the jump across the field-free line; use time_integration = primitive".into(),
            );
        }
        if !(self.temperature_k > 0.0) {
            errors.push(format!("particle.temperature_k must be positive, got {}", self.temperature_k));
        }
        if !(self.saturation_magnetization > 0.0) {
            errors.push(format!(
                "particle.saturation_magnetization_j_per_m3_per_t must be positive, got {}",
                self.saturation_magnetization
            ));
        }
        if let Err(e) = self.quadrature().validate() {
            errors.push(strip(&e));
        }
        if self.points_per_axis != 3 {
            warnings.push(format!("quadrature.points_per_axis = {} differs from the 3^d rule", self.points_per_axis));
        }
        if let Some(eps) = self.regularization_a_per_m {
            if !(eps > 0.0) {
                errors.push(format!("model.regularization_a_per_m must be positive, got {eps}"));
            }
        }
        if errors.is_empty() {
            let grid = self.grid().map_err(|e| errors.push(strip(&e))).ok();
            let sequence = self.sequence().map_err(|e| errors.push(strip(&e))).ok();
            if let Some(seq) = &sequence {
                if self.mode == ScanMode::Ffl && d == 3 {
                    if let Some(f3) = self.drive_frequency[2] {
                        let periods = self.measurement_time_s * f3;
                        if (periods - 1.0).abs() > PERIOD_TOLERANCE {
                            warnings.push(format!(
                                "T·f3 = {periods:.6}, expected 1 (one period of the slow axis over the measurement)"
                            ));
                        }
                    }
                }
                if let Some(grid) = &grid {
                    if let Some(v) = seq.containment_violation(grid.fov_min(), grid.fov_max()) {
                        match self.containment {
                            Containment::Enforce => errors.push(v),
                            Containment::Warn => warnings.push(v),
                        }
                    }
                }
            }
            if self.variant == VariantKind::Filtered && sequence.is_some() {
                if let Err(e) = self.members() {
                    errors.push(strip(&e));
                }
            }
        }
        if errors.is_empty() {
            Ok(warnings)
        } else {
            Err(Error::Validation(errors))
        }
    }
}

/// One particle size of an experiment with its per-coil kernels.
#[derive(Debug, Clone)]
pub struct Member {
    pub label: String,
    pub diameter_nm: Option<f64>,
    pub specs: Vec<KernelSpec>,
}

fn trim_number(v: f64) -> String {
    let s = format!("{v}");
    s.replace('.', "p")
}

/// Error text without the variant prefix, for validation lists.
fn strip(e: &Error) -> String {
    match e {
        Error::Configuration(m) => m.clone(),
        Error::Validation(list) => list.join("; "),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const FFL_3D: &str = "
        name = ffl-3d
        grid.dimension = 3
        grid.fov_min_mm = -12.5, -12.5, -6.5
        grid.fov_max_mm = 12.5, 12.5, 6.5
        grid.cell_count = 13, 13, 7
        scanner.mode = ffl
        scanner.gradient_diag_t_per_m_per_mu0 = 0, -1, 1
        scanner.drive_amplitude_t_per_mu0 = -, 0.012, 0.06
        scanner.drive_frequency_hz = -, 2.5e6/96, 2.5e6/96/25/20
        scanner.rotation_frequency_hz = 2604.17
        scanner.measurement_time_s = 19.2e-3
        scanner.sample_interval_s = 4.8e-6
        scanner.receive_coils = 3
        assembly.containment = warn
    ";

    #[test]
    fn quotients_evaluate_left_to_right() {
        assert_relative_eq!(parse_number("2.5e6/96/25/20").unwrap(), 2.5e6 / 96.0 / 25.0 / 20.0);
        assert_eq!(parse_number(" -1.5e-3 ").unwrap(), -1.5e-3);
        assert_eq!(parse_number("3*2/4").unwrap(), 1.5);
        assert!(parse_number("1/0").is_err());
        assert!(parse_number("abc").is_err());
        assert!(parse_number("").is_err());
    }

    #[test]
    fn emit_parse_round_trip() {
        let c = ExperimentConfig::parse(FFL_3D).unwrap();
        assert_eq!(c.drive_amplitude[0], None);
        let again = ExperimentConfig::parse(&c.emit()).unwrap();
        assert_eq!(again, c);
        let d = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&d.emit()).unwrap(), d);
    }

    #[test]
    fn hash_ignores_order_comments_and_output() {
        let c = ExperimentConfig::parse(FFL_3D).unwrap();
        let mut lines: Vec<&str> = FFL_3D.lines().collect();
        lines.reverse();
        let shuffled = lines.join("\n") + "\n# comment\noutput.directory = elsewhere\n";
        let s = ExperimentConfig::parse(&shuffled).unwrap();
        assert_eq!(c.hash(), s.hash());
        assert_eq!(c.hash().len(), 64);
        let mut changed = c.clone();
        changed.gauss_order = 5;
        assert_ne!(changed.hash(), c.hash());
    }

    #[test]
    fn unknown_duplicate_and_bad_values_are_all_reported() {
        let err = ExperimentConfig::parse("foo = 1\nscanner.mode = ffx\nname = a\nname = b\nquadrature.gauss_order = 2.5\n")
            .unwrap_err();
        let Error::Validation(list) = err else { panic!() };
        assert_eq!(list.len(), 4, "{list:?}");
    }

    #[test]
    fn one_dimensional_ffl_is_invalid() {
        let c = ExperimentConfig::parse(
            "grid.dimension = 1\ngrid.fov_min_mm = -12.5\ngrid.fov_max_mm = 12.5\ngrid.cell_size_mm = 0.5\n\
             scanner.mode = ffl\nscanner.gradient_diag_t_per_m_per_mu0 = 0\nscanner.drive_amplitude_t_per_mu0 = 0.012\n\
             scanner.drive_frequency_hz = 2.5e6/102\nscanner.receive_coils = 1\nparticle.diameters_nm = 0\n",
        )
        .unwrap();
        let Err(Error::Validation(list)) = c.validate() else { panic!() };
        assert!(list.iter().any(|m| m.contains("FFL scanning needs dimension 2 or 3")));
        assert!(list.iter().any(|m| m.contains("not positive")));
    }

    #[test]
    fn desk_defaults_validate_cleanly() {
        let c = ExperimentConfig::default();
        assert_eq!(c.validate().unwrap(), Vec::<String>::new());
        let seq = c.sequence().unwrap();
        assert_eq!(seq.sample_count(), 1306);
        assert_eq!(c.grid().unwrap().total_cells(), 625);
        let members = c.members().unwrap();
        assert_eq!(members.len(), 1);
        assert_eq!(members[0].label, "d30nm");
        assert_relative_eq!(members[0].specs[0].particle().beta(), 2.0816e-3, max_relative = 1e-4);
    }

    #[test]
    fn ffl_3d_period_and_containment() {
        let c = ExperimentConfig::parse(FFL_3D).unwrap();
        assert_relative_eq!(c.measurement_time_s * c.drive_frequency[2].unwrap(), 1.0, max_relative = 1e-12);
        let warnings = c.validate().unwrap();
        assert_eq!(warnings.len(), 1, "{warnings:?}");
        let mut strict = c.clone();
        strict.containment = Containment::Enforce;
        assert!(matches!(strict.validate(), Err(Error::Validation(_))));
        let mut off = c.clone();
        off.drive_frequency[2] = Some(60.0);
        assert!(off.validate().unwrap().iter().any(|w| w.contains("T·f3")));
    }

    #[test]
    fn limit_variant_is_one_member_and_uses_the_primitive() {
        let mut c = ExperimentConfig::default();
        c.variant = VariantKind::Limit;
        c.diameters_nm = vec![20.0, 30.0];
        assert_eq!(c.members().unwrap().len(), 1);
        assert_eq!(c.quadrature().time_integration, TimeIntegration::Primitive);
        c.mode = ScanMode::Ffl;
        c.gradient_diag = vec![0.0, -1.0];
        c.drive_amplitude[0] = None;
        c.drive_frequency[0] = None;
        c.rotation_frequency_hz = 2604.17;
        c.time_integration = TimeIntegrationChoice::Fixed(TimeIntegration::Interval);
        assert!(c.validate().unwrap().iter().any(|w| w.contains("primitive")));
    }

    #[test]
    fn filtered_variant_loads_and_checks_the_filter() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "time_offset_s,value\n0,1e6\n5e-7,1e6\n").unwrap();
        let path = dir.path().join("c.cfg");
        std::fs::write(&path, "model.variant = filtered\nmodel.filter_csv = a.csv\n").unwrap();
        let c = ExperimentConfig::load(&path).unwrap();
        assert!(c.validate().is_ok());
        assert!(matches!(c.members().unwrap()[0].specs[0].variant(), KernelVariant::Filtered(_)));
        std::fs::write(dir.path().join("a.csv"), "time_offset_s,value\n0,1e6\n4e-7,1e6\n").unwrap();
        assert!(matches!(c.validate(), Err(Error::Validation(_))));
        let mut missing = c.clone();
        missing.filter_csv = None;
        assert!(missing.validate().is_err());
    }

    #[test]
    fn output_root_override() {
        let c = ExperimentConfig::default();
        assert_eq!(c.output_dir(Some(Path::new("/tmp/r"))), PathBuf::from("/tmp/r/out"));
        assert_eq!(c.output_dir(None), PathBuf::from("./out"));
    }
}
