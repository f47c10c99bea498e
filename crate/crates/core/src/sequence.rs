//! Applied magnetic field `H(x,t) = g(x,t) - h(t)` for FFP and rotated-FFL
//! scanner sequences.
//!
//! All vectors are carried as 3-vectors; for `d < 3` the trailing
//! components of positions, fields and coil sensitivities are zero and the
//! gradient is the leading `d×d` block. The drive is parametrized in the
//! selection-field frame, `h(t) = -P(t)ᵀ ĥ(t)` with `ĥ_i = A_i w(2π f_i t)`,
//! where `P ≡ I` for FFP sequences.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Relative tolerance used for structural checks on the gradient matrix.
const STRUCTURE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScanMode {
    Ffp,
    Ffl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Waveform {
    Sinusoidal,
    Triangular,
}

/// 2π-periodic triangle wave with `tri(0) = 0`, `tri(π/2) = 1`, `tri(3π/2) = -1`.
pub fn tri(z: f64) -> f64 {
    let theta = z.rem_euclid(TAU);
    if theta < FRAC_PI_2 {
        theta / FRAC_PI_2
    } else if theta < 1.5 * PI {
        2.0 - theta / FRAC_PI_2
    } else {
        -4.0 + theta / FRAC_PI_2
    }
}

/// Derivative of [`tri`]; the right limit at the kinks.
pub fn tri_slope(z: f64) -> f64 {
    let theta = z.rem_euclid(TAU);
    if (FRAC_PI_2..1.5 * PI).contains(&theta) {
        -2.0 / PI
    } else {
        2.0 / PI
    }
}

impl Waveform {
    fn value(self, phase: f64) -> f64 {
        match self {
            Waveform::Sinusoidal => phase.sin(),
            Waveform::Triangular => tri(phase),
        }
    }

    fn slope(self, phase: f64) -> f64 {
        match self {
            Waveform::Sinusoidal => phase.cos(),
            Waveform::Triangular => tri_slope(phase),
        }
    }
}

/// Linear selection field `g(x,t) = P(t)ᵀ G P(t) x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionField {
    dimension: usize,
    gradient: Mat3,
    mode: ScanMode,
    rotation_frequency: f64,
}

impl SelectionField {
    /// `gradient` is in A/m². Entries outside the leading `dimension×dimension`
    /// block must be zero.
    pub fn new(mode: ScanMode, dimension: usize, gradient: Mat3, rotation_frequency: f64) -> Result<Self> {
        if !(1..=3).contains(&dimension) {
            return Err(Error::parameter("dimension", format!("must be 1, 2 or 3, got {dimension}")));
        }
        if gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::parameter("gradient", "entries must be finite"));
        }
        for i in 0..3 {
            for j in 0..3 {
                if (i >= dimension || j >= dimension) && gradient[(i, j)] != 0.0 {
                    return Err(Error::parameter(
                        "gradient",
                        format!("entry ({}, {}) lies outside the {dimension}-dimensional block", i + 1, j + 1),
                    ));
                }
            }
        }
        let block = DMatrix::from_fn(dimension, dimension, |i, j| gradient[(i, j)]);
        let scale = block.amax();
        if scale == 0.0 {
            return Err(Error::parameter("gradient", "must not vanish"));
        }
        let svals = block.singular_values();
        let rank = svals.iter().filter(|&&s| s > STRUCTURE_TOL * svals[0]).count();
        match mode {
            ScanMode::Ffp => {
                if rank != dimension {
                    return Err(Error::parameter("gradient", "must be invertible for a field-free point"));
                }
                if dimension == 3 && gradient.trace().abs() > STRUCTURE_TOL * scale {
                    return Err(Error::parameter(
                        "gradient",
                        format!("must be trace-free in 3D, trace = {}", gradient.trace()),
                    ));
                }
                if rotation_frequency != 0.0 {
                    return Err(Error::parameter("rotation_frequency", "only applies to field-free lines"));
                }
            }
            ScanMode::Ffl => {
                if dimension < 2 {
                    return Err(Error::parameter("dimension", "a field-free line needs d = 2 or 3"));
                }
                if gradient[(0, 0)].abs() > STRUCTURE_TOL * scale {
                    return Err(Error::parameter("gradient", "G₁₁ must vanish so the line lies along e₁"));
                }
                if rank != dimension - 1 {
                    return Err(Error::parameter(
                        "gradient",
                        format!("must have rank {} for a field-free line, got {rank}", dimension - 1),
                    ));
                }
                if !(rotation_frequency.is_finite() && rotation_frequency >= 0.0) {
                    return Err(Error::parameter("rotation_frequency", "must be finite and non-negative"));
                }
            }
        }
        Ok(Self {
            dimension,
            gradient,
            mode,
            rotation_frequency,
        })
    }

    pub fn diagonal(mode: ScanMode, diagonal: &[f64], rotation_frequency: f64) -> Result<Self> {
        if diagonal.len() > 3 {
            return Err(Error::parameter("dimension", format!("must be at most 3, got {}", diagonal.len())));
        }
        let mut g = Mat3::zeros();
        for (i, &v) in diagonal.iter().enumerate() {
            g[(i, i)] = v;
        }
        Self::new(mode, diagonal.len(), g, rotation_frequency)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }
    pub fn gradient(&self) -> &Mat3 {
        &self.gradient
    }
    pub fn mode(&self) -> ScanMode {
        self.mode
    }
    pub fn rotation_frequency(&self) -> f64 {
        self.rotation_frequency
    }
}

/// Homogeneous drive field in the selection-field frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveField {
    /// A/m.
    pub amplitudes: [f64; 3],
    /// Hz.
    pub frequencies: [f64; 3],
    pub enabled: [bool; 3],
    pub waveform: Waveform,
}

impl DriveField {
    /// Drive on the first `amplitudes.len()` axes, all enabled.
    pub fn new(waveform: Waveform, amplitudes: &[f64], frequencies: &[f64]) -> Result<Self> {
        if amplitudes.len() != frequencies.len() || amplitudes.len() > 3 {
            return Err(Error::parameter("drive", "amplitude and frequency lists must match and have at most 3 entries"));
        }
        let mut drive = DriveField {
            amplitudes: [0.0; 3],
            frequencies: [0.0; 3],
            enabled: [false; 3],
            waveform,
        };
        for i in 0..amplitudes.len() {
            drive.amplitudes[i] = amplitudes[i];
            drive.frequencies[i] = frequencies[i];
            drive.enabled[i] = true;
        }
        drive.validate()?;
        Ok(drive)
    }

    /// Disables an axis; its amplitude and frequency are zeroed.
    pub fn without_axis(mut self, axis: usize) -> Self {
        if axis < 3 {
            self.enabled[axis] = false;
            self.amplitudes[axis] = 0.0;
            self.frequencies[axis] = 0.0;
        }
        self
    }

    fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if self.enabled[i] {
                let (a, f) = (self.amplitudes[i], self.frequencies[i]);
                if !(a.is_finite() && a > 0.0) {
                    return Err(Error::parameter("drive amplitude", format!("axis {} must be positive, got {a}", i + 1)));
                }
                if !(f.is_finite() && f > 0.0) {
                    return Err(Error::parameter("drive frequency", format!("axis {} must be positive, got {f}", i + 1)));
                }
            }
        }
        Ok(())
    }

    fn enabled_axes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..3).filter(move |&i| self.enabled[i])
    }

    /// `(ĥ(t), dĥ/dt)` in the selection-field frame.
    fn frame_value_and_rate(&self, t: f64) -> (Vec3, Vec3) {
        let mut value = Vec3::zeros();
        let mut rate = Vec3::zeros();
        for i in self.enabled_axes() {
            let omega = TAU * self.frequencies[i];
            let phase = omega * t;
            value[i] = self.amplitudes[i] * self.waveform.value(phase);
            rate[i] = self.amplitudes[i] * omega * self.waveform.slope(phase);
        }
        (value, rate)
    }
}

/// Selection field, drive and acquisition timing of one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScannerSequence {
    selection: SelectionField,
    drive: DriveField,
    coil_sensitivities: Vec<Vec3>,
    measurement_time: f64,
    sample_interval: f64,
    sample_count: usize,
}

/// `PᵀGP`, its time derivative and the drive at one instant, so that
/// `H = a·x - h` and `Ḣ = a_dot·x - h_dot`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldFrame {
    pub a: Mat3,
    pub a_dot: Mat3,
    pub h: Vec3,
    pub h_dot: Vec3,
}

impl FieldFrame {
    #[inline]
    pub fn field(&self, x: &Vec3) -> (Vec3, Vec3) {
        (self.a * x - self.h, self.a_dot * x - self.h_dot)
    }
}

impl ScannerSequence {
    /// One coil per axis with unit sensitivity `e_ℓ`.
    pub fn new(
        selection: SelectionField,
        drive: DriveField,
        measurement_time: f64,
        sample_interval: f64,
    ) -> Result<Self> {
        let coils = (0..selection.dimension()).map(unit_vector).collect();
        Self::with_coils(selection, drive, coils, measurement_time, sample_interval)
    }

    pub fn with_coils(
        selection: SelectionField,
        drive: DriveField,
        coil_sensitivities: Vec<Vec3>,
        measurement_time: f64,
        sample_interval: f64,
    ) -> Result<Self> {
        let d = selection.dimension();
        drive.validate()?;
        if let Some(axis) = drive.enabled_axes().find(|&i| i >= d) {
            return Err(Error::parameter(
                "drive",
                format!("axis {} is enabled but the sequence is {d}-dimensional", axis + 1),
            ));
        }
        if drive.enabled_axes().next().is_none() {
            return Err(Error::parameter("drive", "at least one axis must be enabled"));
        }
        if !(measurement_time.is_finite() && measurement_time > 0.0) {
            return Err(Error::parameter("measurement_time", format!("must be positive, got {measurement_time}")));
        }
        if !(sample_interval.is_finite() && sample_interval > 0.0) {
            return Err(Error::parameter("sample_interval", format!("must be positive, got {sample_interval}")));
        }
        let ratio = measurement_time / sample_interval;
        let sample_count = ratio.round();
        if (ratio - sample_count).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::parameter(
                "sample_interval",
                format!("measurement time / sample interval = {ratio} is not an integer"),
            ));
        }
        if sample_count < 2.0 {
            return Err(Error::parameter("sample_interval", "at least two samples are required"));
        }
        if coil_sensitivities.is_empty() {
            return Err(Error::parameter("coil_sensitivities", "at least one coil is required"));
        }
        for (l, p) in coil_sensitivities.iter().enumerate() {
            if p.iter().any(|v| !v.is_finite()) || p.norm() == 0.0 {
                return Err(Error::parameter("coil_sensitivities", format!("coil {} must be finite and nonzero", l + 1)));
            }
            if p.iter().skip(d).any(|&v| v != 0.0) {
                return Err(Error::parameter(
                    "coil_sensitivities",
                    format!("coil {} has components outside the {d}-dimensional domain", l + 1),
                ));
            }
        }
        Ok(Self {
            selection,
            drive,
            coil_sensitivities,
            measurement_time,
            sample_interval,
            sample_count: sample_count as usize,
        })
    }

    pub fn dimension(&self) -> usize {
        self.selection.dimension()
    }
    pub fn selection(&self) -> &SelectionField {
        &self.selection
    }
    pub fn drive(&self) -> &DriveField {
        &self.drive
    }
    pub fn mode(&self) -> ScanMode {
        self.selection.mode()
    }
    pub fn coil_sensitivities(&self) -> &[Vec3] {
        &self.coil_sensitivities
    }
    pub fn measurement_time(&self) -> f64 {
        self.measurement_time
    }
    pub fn sample_interval(&self) -> f64 {
        self.sample_interval
    }
    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        let slack = 1e-12 * self.measurement_time;
        if t.is_nan() || t < -slack || t > self.measurement_time + slack {
            return Err(Error::Domain {
                what: "t",
                value: t,
                lo: 0.0,
                hi: self.measurement_time,
            });
        }
        Ok(())
    }

    /// `P(t)`; the identity for FFP sequences.
    pub fn rotation(&self, t: f64) -> Mat3 {
        match self.mode() {
            ScanMode::Ffp => Mat3::identity(),
            ScanMode::Ffl => ffl_rotation(self.selection.rotation_frequency(), t),
        }
    }

    fn rotation_rate(&self, t: f64) -> Mat3 {
        match self.mode() {
            ScanMode::Ffp => Mat3::zeros(),
            ScanMode::Ffl => ffl_rotation_rate(self.selection.rotation_frequency(), t),
        }
    }

    /// Field geometry at time `t` without the domain check.
    pub fn frame(&self, t: f64) -> FieldFrame {
        let g = self.selection.gradient();
        let (h_frame, h_frame_rate) = self.drive.frame_value_and_rate(t);
        match self.mode() {
            ScanMode::Ffp => FieldFrame {
                a: *g,
                a_dot: Mat3::zeros(),
                h: -h_frame,
                h_dot: -h_frame_rate,
            },
            ScanMode::Ffl => {
                let p = self.rotation(t);
                let p_dot = self.rotation_rate(t);
                let gp = g * p;
                let a = p.transpose() * gp;
                let a_dot = p_dot.transpose() * gp + p.transpose() * g * p_dot;
                FieldFrame {
                    a,
                    a_dot,
                    h: -(p.transpose() * h_frame),
                    h_dot: -(p_dot.transpose() * h_frame + p.transpose() * h_frame_rate),
                }
            }
        }
    }

    /// Drive field `h(t)`, A/m.
    pub fn drive_value(&self, t: f64) -> Result<Vec3> {
        self.check_time(t)?;
        Ok(self.frame(t).h)
    }

    /// Exact derivative `ḣ(t)`, A/m/s; right limit at triangular kinks.
    pub fn drive_rate(&self, t: f64) -> Result<Vec3> {
        self.check_time(t)?;
        Ok(self.frame(t).h_dot)
    }

    /// `(H(x,t), Ḣ(x,t))`.
    pub fn applied_field(&self, x: &Vec3, t: f64) -> Result<(Vec3, Vec3)> {
        self.check_time(t)?;
        Ok(self.frame(t).field(x))
    }

    /// Times in `[start, end]` where `ḣ` is discontinuous, sorted, with
    /// coincident kinks of different axes merged.
    pub fn kink_times(&self, start: f64, end: f64) -> Vec<f64> {
        if self.drive.waveform == Waveform::Sinusoidal || !(end >= start) {
            return Vec::new();
        }
        let mut kinks: Vec<f64> = Vec::new();
        for i in self.drive.enabled_axes() {
            kinks.extend(triangle_kinks(self.drive.frequencies[i], start, end));
        }
        kinks.sort_by(f64::total_cmp);
        kinks.dedup_by(|b, a| (*b - *a).abs() <= 1e-15);
        kinks
    }

    /// Describes how the field-free region leaves the box `[fov_min, fov_max]`,
    /// or `None` if it stays inside for all `t`.
    pub fn containment_violation(&self, fov_min: &Vec3, fov_max: &Vec3) -> Option<String> {
        let d = self.dimension();
        let block = DMatrix::from_fn(d, d, |i, j| self.selection.gradient()[(i, j)]);
        let inverse = match self.mode() {
            ScanMode::Ffp => block.clone().try_inverse()?,
            ScanMode::Ffl => block.clone().pseudo_inverse(STRUCTURE_TOL * block.amax()).ok()?,
        };
        // Per-axis bound of |G⁺ĥ(t)| over t; attained for diagonal G.
        let bound: Vec<f64> = (0..d)
            .map(|i| {
                (0..d)
                    .map(|k| inverse[(i, k)].abs() * self.drive.amplitudes[k])
                    .sum()
            })
            .collect();
        let outside = |i: usize, r: f64| -r < fov_min[i] - 1e-12 * r || r > fov_max[i] + 1e-12 * r;
        match self.mode() {
            ScanMode::Ffp => {
                let axes: Vec<String> = (0..d)
                    .filter(|&i| outside(i, bound[i]))
                    .map(|i| format!("axis {} reaches ±{:.4} mm", i + 1, bound[i] * 1e3))
                    .collect();
                (!axes.is_empty()).then(|| format!("field-free point leaves the FOV: {}", axes.join(", ")))
            }
            ScanMode::Ffl => {
                // The in-plane offset rotates, so it must fit in every in-plane direction.
                let radius = bound[0].hypot(bound[1]);
                let mut axes = Vec::new();
                if outside(0, radius) || outside(1, radius) {
                    axes.push(format!("in-plane offset reaches {:.4} mm", radius * 1e3));
                }
                if d == 3 && outside(2, bound[2]) {
                    axes.push(format!("axis 3 offset reaches ±{:.4} mm", bound[2] * 1e3));
                }
                (!axes.is_empty()).then(|| format!("field-free line misses the FOV: {}", axes.join(", ")))
            }
        }
    }
}

fn unit_vector(i: usize) -> Vec3 {
    let mut v = Vec3::zeros();
    v[i] = 1.0;
    v
}

/// Kinks of `tri(2π f t)` in `[start, end]`: `f t = 1/4 + k/2`.
fn triangle_kinks(frequency: f64, start: f64, end: f64) -> impl Iterator<Item = f64> {
    let first = ((2.0 * frequency * start - 0.5).ceil()).max(0.0) as i64;
    let last = (2.0 * frequency * end - 0.5).floor() as i64;
    (first..=last)
        .map(move |k| (0.25 + 0.5 * k as f64) / frequency)
        .filter(move |&t| t >= start && t <= end)
}

/// Rotation of the selection field about e₃,
/// `P(t) = [[c, s, 0], [-s, c, 0], [0, 0, 1]]` with `c = cos(2π f_rot t)`.
pub fn ffl_rotation(rotation_frequency: f64, t: f64) -> Mat3 {
    let (s, c) = (TAU * rotation_frequency * t).sin_cos();
    Mat3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0)
}

fn ffl_rotation_rate(rotation_frequency: f64, t: f64) -> Mat3 {
    let omega = TAU * rotation_frequency;
    let (s, c) = (omega * t).sin_cos();
    omega * Mat3::new(-s, c, 0.0, -c, -s, 0.0, 0.0, 0.0, 0.0)
}

/// Rotated FFL drive written out componentwise,
/// `h = -ĥ₂(-sin ωt, cos ωt, 0) - ĥ₁(cos ωt, sin ωt, 0) - ĥ₃ e₃`,
/// together with its exact rate.
pub fn ffl_drive(seq: &ScannerSequence, t: f64) -> Result<(Vec3, Vec3)> {
    if seq.mode() != ScanMode::Ffl {
        return Err(Error::Configuration("ffl_drive requires a field-free-line sequence".into()));
    }
    seq.check_time(t)?;
    let omega = TAU * seq.selection().rotation_frequency();
    let (s, c) = (omega * t).sin_cos();
    let (hf, hf_rate) = seq.drive.frame_value_and_rate(t);
    let value = -Vec3::new(c * hf[0] - s * hf[1], s * hf[0] + c * hf[1], hf[2]);
    let rate = -Vec3::new(
        c * hf_rate[0] - s * hf_rate[1] - omega * (s * hf[0] + c * hf[1]),
        s * hf_rate[0] + c * hf_rate[1] + omega * (c * hf[0] - s * hf[1]),
        hf_rate[2],
    );
    Ok((value, rate))
}
