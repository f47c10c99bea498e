//! System function `κ_ℓ(x,t)` of the equilibrium model, its large-β limit
//! and a temporally filtered variant.
//!
//! Both pointwise kernels are evaluated as `κ_ℓ = μ₀m₀ p_ℓ·w(x,t)`, where
//! `w = d/dt[M(|H|)H]` is shared by every coil:
//!
//! * equilibrium: `w = N(|H|)(H·Ḣ)H + M(|H|)Ḣ` with `M = L_β(z)/z`, `N = M'(z)/z`;
//! * limit: `w = Ḣ/|H| - H(H·Ḣ)/|H|³`, with `|H|` clamped below at `ε_reg`.

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::physics::{Langevin, ParticleModel};
use crate::sequence::{ScannerSequence, Vec3};

/// Relative tolerance for the uniform-spacing check on filter samples.
const SPACING_TOL: f64 = 1e-9;

/// Filter `a(τ)` sampled on a uniform grid `τ_i = (first + i)·Δt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    first_index: i64,
    sample_interval: f64,
    values: Vec<f64>,
}

impl Filter {
    pub fn new(first_offset: f64, sample_interval: f64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Configuration("filter needs at least one sample".into()));
        }
        if !(sample_interval.is_finite() && sample_interval > 0.0) {
            return Err(Error::Configuration(format!("filter spacing must be positive, got {sample_interval}")));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Configuration(format!("filter sample {v} is not finite")));
        }
        let index = first_offset / sample_interval;
        let first_index = index.round();
        if (index - first_index).abs() > 1e-6 {
            return Err(Error::Configuration(format!(
                "filter offset {first_offset} s is not a multiple of its spacing {sample_interval} s"
            )));
        }
        Ok(Self {
            first_index: first_index as i64,
            sample_interval,
            values,
        })
    }

    /// `a = δ`, represented by one sample of height `1/Δt` at offset zero.
    pub fn impulse(sample_interval: f64) -> Result<Self> {
        Self::new(0.0, sample_interval, vec![1.0 / sample_interval])
    }

    /// Causal moving average over `width` samples.
    pub fn boxcar(width: usize, sample_interval: f64) -> Result<Self> {
        let height = 1.0 / (width as f64 * sample_interval);
        Self::new(0.0, sample_interval, vec![height; width])
    }

    /// Parses a two-column CSV `time_offset_s,value`. A non-numeric first row
    /// is taken as a header; blank lines and `#` comments are skipped.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 2 {
                return Err(Error::Configuration(format!(
                    "filter line {}: expected 2 columns, found {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            match (fields[0].parse::<f64>(), fields[1].parse::<f64>()) {
                (Ok(t), Ok(v)) => rows.push((t, v)),
                _ if rows.is_empty() && lineno == 0 => continue,
                _ => {
                    return Err(Error::Configuration(format!("filter line {}: not numeric: {line}", lineno + 1)));
                }
            }
        }
        if rows.is_empty() {
            return Err(Error::Configuration("filter file has no samples".into()));
        }
        let spacing = if rows.len() > 1 { rows[1].0 - rows[0].0 } else { f64::NAN };
        if rows.len() > 1 {
            for w in rows.windows(2) {
                let step = w[1].0 - w[0].0;
                if (step - spacing).abs() > SPACING_TOL * spacing.abs() + f64::EPSILON * w[1].0.abs() {
                    return Err(Error::Configuration(format!(
                        "filter offsets are not uniformly spaced: step {step} s after {} s (expected {spacing} s)",
                        w[0].0
                    )));
                }
            }
        }
        let values = rows.iter().map(|r| r.1).collect();
        if rows.len() == 1 {
            // A single sample carries no spacing; `bind` takes it from the time grid.
            if rows[0].0 != 0.0 {
                return Err(Error::Configuration("a single-sample filter must sit at offset 0".into()));
            }
            return Ok(Self {
                first_index: 0,
                sample_interval: f64::NAN,
                values,
            });
        }
        Self::new(rows[0].0, spacing, values)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text)
    }

    pub fn sample_interval(&self) -> f64 {
        self.sample_interval
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Offset of sample `i` in units of the spacing.
    fn offset_index(&self, i: usize) -> i64 {
        self.first_index + i as i64
    }

    /// Checks the filter against the time grid and fills in the spacing of
    /// single-sample filters.
    fn bind(mut self, sample_interval: f64, measurement_time: f64) -> Result<Self> {
        if self.sample_interval.is_nan() {
            self.sample_interval = sample_interval;
        }
        if (self.sample_interval - sample_interval).abs() > SPACING_TOL * sample_interval {
            return Err(Error::Configuration(format!(
                "filter spacing {} s does not match the sample interval {} s",
                self.sample_interval, sample_interval
            )));
        }
        let lo = self.first_index as f64 * sample_interval;
        let hi = self.offset_index(self.values.len() - 1) as f64 * sample_interval;
        let slack = 1e-9 * measurement_time;
        if lo < -measurement_time - slack || hi > measurement_time + slack {
            return Err(Error::Configuration(format!(
                "filter support [{lo}, {hi}] s exceeds [-T, T] with T = {measurement_time} s"
            )));
        }
        Ok(self)
    }

    /// `Σ_k Δt κ_k a((j-k)Δt)` over the samples `k = 0..n`. For a κ that is
    /// periodic over the measurement time the trapezoidal end weights merge,
    /// leaving the uniform weight Δt.
    pub fn convolve_at(&self, samples: &[f64], j: usize) -> f64 {
        let n = samples.len() as i64;
        let j = j as i64;
        let mut acc = 0.0;
        for (i, &a) in self.values.iter().enumerate() {
            let k = j - self.offset_index(i);
            if (0..n).contains(&k) {
                acc += samples[k as usize] * a;
            }
        }
        acc * self.sample_interval
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelVariant {
    Equilibrium,
    Limit,
    /// Equilibrium kernel convolved in time with the given filter.
    Filtered(Filter),
}

impl KernelVariant {
    pub fn name(&self) -> &'static str {
        match self {
            KernelVariant::Equilibrium => "equilibrium",
            KernelVariant::Limit => "limit",
            KernelVariant::Filtered(_) => "filtered",
        }
    }
}

/// Default clamp for the limit kernel: `1e-12·‖G‖·diam(FOV)`.
pub fn default_regularization(sequence: &ScannerSequence, fov_diameter: f64) -> f64 {
    1e-12 * sequence.selection().gradient().norm() * fov_diameter
}

/// Everything needed to evaluate the system function of one receive coil.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    particle: ParticleModel,
    langevin: Langevin,
    sequence: Arc<ScannerSequence>,
    coil_index: usize,
    variant: KernelVariant,
    regularization_epsilon: f64,
}

impl KernelSpec {
    pub fn new(
        particle: ParticleModel,
        sequence: Arc<ScannerSequence>,
        coil_index: usize,
        variant: KernelVariant,
        regularization_epsilon: f64,
    ) -> Result<Self> {
        if coil_index >= sequence.coil_sensitivities().len() {
            return Err(Error::Configuration(format!(
                "coil {coil_index} requested but the sequence has {} coils",
                sequence.coil_sensitivities().len()
            )));
        }
        if !(regularization_epsilon.is_finite() && regularization_epsilon > 0.0) {
            return Err(Error::parameter(
                "regularization_epsilon",
                format!("must be positive, got {regularization_epsilon}"),
            ));
        }
        let variant = match variant {
            KernelVariant::Filtered(f) => {
                KernelVariant::Filtered(f.bind(sequence.sample_interval(), sequence.measurement_time())?)
            }
            v => v,
        };
        Ok(Self {
            langevin: particle.langevin(),
            particle,
            sequence,
            coil_index,
            variant,
            regularization_epsilon,
        })
    }

    /// One spec per coil of the sequence.
    pub fn for_all_coils(
        particle: &ParticleModel,
        sequence: &Arc<ScannerSequence>,
        variant: &KernelVariant,
        regularization_epsilon: f64,
    ) -> Result<Vec<Self>> {
        (0..sequence.coil_sensitivities().len())
            .map(|l| Self::new(particle.clone(), Arc::clone(sequence), l, variant.clone(), regularization_epsilon))
            .collect()
    }

    pub fn particle(&self) -> &ParticleModel {
        &self.particle
    }
    pub fn sequence(&self) -> &Arc<ScannerSequence> {
        &self.sequence
    }
    pub fn coil_index(&self) -> usize {
        self.coil_index
    }
    pub fn coil(&self) -> &Vec3 {
        &self.sequence.coil_sensitivities()[self.coil_index]
    }
    pub fn variant(&self) -> &KernelVariant {
        &self.variant
    }
    pub fn regularization_epsilon(&self) -> f64 {
        self.regularization_epsilon
    }

    /// `w` for the equilibrium kernel, given `H` and `Ḣ`.
    #[inline]
    pub fn equilibrium_response(&self, h: &Vec3, h_dot: &Vec3) -> Vec3 {
        let magnitude = h.norm();
        let m = self.langevin.over_z(magnitude);
        let n = self.langevin.rate_factor(magnitude);
        h * (n * h.dot(h_dot)) + h_dot * m
    }

    /// `w` for the limit kernel, given `H` and `Ḣ`.
    #[inline]
    pub fn limit_response(&self, h: &Vec3, h_dot: &Vec3) -> Vec3 {
        let r = h.norm().max(self.regularization_epsilon);
        let inv = 1.0 / r;
        h_dot * inv - h * (h.dot(h_dot) * inv * inv * inv)
    }

    /// Time primitive of `w`: `M(|H|)H` for the equilibrium kernel and
    /// `H/|H|` for the limit kernel. Its jump across a codimension-one
    /// field-free line is part of the limit operator and is invisible to
    /// pointwise evaluation of `w`.
    #[inline]
    pub fn magnetization(&self, h: &Vec3) -> Vec3 {
        match self.variant {
            KernelVariant::Limit => h / h.norm().max(self.regularization_epsilon),
            _ => h * self.langevin.over_z(h.norm()),
        }
    }

    /// `w` of the pointwise kernel underlying this variant.
    #[inline]
    pub fn response(&self, h: &Vec3, h_dot: &Vec3) -> Vec3 {
        match self.variant {
            KernelVariant::Limit => self.limit_response(h, h_dot),
            _ => self.equilibrium_response(h, h_dot),
        }
    }

    fn check_point(&self, x: &Vec3) -> Result<()> {
        let d = self.sequence.dimension();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain {
                what: "x",
                value: f64::NAN,
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
            });
        }
        if let Some(i) = (d..3).find(|&i| x[i] != 0.0) {
            return Err(Error::Domain {
                what: "x component outside the domain dimension",
                value: x[i],
                lo: 0.0,
                hi: 0.0,
            });
        }
        Ok(())
    }

    pub fn kappa_equilibrium(&self, x: &Vec3, t: f64) -> Result<f64> {
        self.check_point(x)?;
        let (h, h_dot) = self.sequence.applied_field(x, t)?;
        Ok(self.particle.signal_scale() * self.coil().dot(&self.equilibrium_response(&h, &h_dot)))
    }

    pub fn kappa_limit(&self, x: &Vec3, t: f64) -> Result<f64> {
        self.check_point(x)?;
        let (h, h_dot) = self.sequence.applied_field(x, t)?;
        Ok(self.particle.signal_scale() * self.coil().dot(&self.limit_response(&h, &h_dot)))
    }

    /// Filtered kernel at the sample time `t_index·Δt`; requires the filtered variant.
    pub fn kappa_filtered(&self, x: &Vec3, t_index: usize) -> Result<f64> {
        let KernelVariant::Filtered(filter) = &self.variant else {
            return Err(Error::Configuration("kappa_filtered requires the filtered variant".into()));
        };
        self.check_point(x)?;
        let n = self.sequence.sample_count();
        if t_index >= n {
            return Err(Error::Domain {
                what: "t_index",
                value: t_index as f64,
                lo: 0.0,
                hi: (n - 1) as f64,
            });
        }
        let samples: Vec<f64> = (0..n)
            .map(|k| self.kappa_equilibrium(x, k as f64 * self.sequence.sample_interval()))
            .collect::<Result<_>>()?;
        Ok(filter.convolve_at(&samples, t_index))
    }
}
