//! Particle parameters and the Langevin magnetization response.
//!
//! Field magnitudes are in A/m throughout (numerically, Table-style
//! "T/μ₀" values divided by μ₀), so `beta` carries m/A and `beta * z` is
//! dimensionless.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Magnetic permeability of vacuum, H/m.
pub const MU0: f64 = 4.0 * PI * 1e-7;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_648_52e-23;

/// Below this |βz| the Langevin function and `L/z` are evaluated by series.
pub const SERIES_SWITCH: f64 = 1e-2;
/// Below this |βz| the rate factor `M'(z)/z` is evaluated by series. The
/// direct form cancels three O(1/z) terms, so it needs a wider series branch.
pub const RATE_SERIES_SWITCH: f64 = 0.5;

/// Coefficients `c_n = 2^{2n} B_{2n} / (2n)!` of `coth(u) = 1/u + Σ c_n u^{2n-1}`.
const COTH_SERIES: [f64; 18] = [
    0.333_333_333_333_333_3,
    -0.022_222_222_222_222_223,
    0.002_116_402_116_402_116_5,
    -0.000_211_640_211_640_211_65,
    2.137_779_915_557_693_5e-5,
    -2.164_404_280_806_397_2e-6,
    2.192_594_785_187_377_8e-7,
    -2.221_460_878_997_967_8e-8,
    2.250_784_651_680_899_4e-9,
    -2.280_515_120_459_218_3e-10,
    2.310_643_259_900_262_4e-11,
    -2.341_170_681_982_488_2e-12,
    2.372_101_740_023_365_3e-13,
    -2.403_441_533_330_770_5e-14,
    2.435_195_402_918_336_7e-15,
    -2.467_368_804_517_207_5e-16,
    2.499_967_277_122_081e-17,
    -2.532_996_435_740_635e-18,
];

/// Number of coth series terms kept on the `L` / `L/z` branch (through u⁷).
const LANGEVIN_SERIES_TERMS: usize = 4;

/// `coth(a) - 1` and `csch²(a)` for `a > 0` without overflow.
fn coth_minus_one_and_csch2(a: f64) -> (f64, f64) {
    let e = (-2.0 * a).exp();
    let em1 = (-2.0 * a).exp_m1(); // e - 1 < 0
    (-2.0 * e / em1, 4.0 * e / (em1 * em1))
}

/// `L(u)/u` on the series branch.
fn reduced_series(u: f64) -> f64 {
    let u2 = u * u;
    COTH_SERIES[..LANGEVIN_SERIES_TERMS]
        .iter()
        .rev()
        .fold(0.0, |acc, c| acc * u2 + c)
}

/// `(d/du)(L(u)/u) / u` on the series branch.
fn rate_series(u: f64) -> f64 {
    let u2 = u * u;
    COTH_SERIES
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (i, c)| acc * u2 + c * (2 * i) as f64)
}

/// The unscaled Langevin function `coth(u) - 1/u`.
fn unit_langevin(u: f64) -> f64 {
    let a = u.abs();
    let value = if a < SERIES_SWITCH {
        a * reduced_series(a)
    } else {
        let (coth_m1, _) = coth_minus_one_and_csch2(a);
        (1.0 - 1.0 / a) + coth_m1
    };
    value.copysign(u)
}

/// Langevin response `L_β(z) = coth(βz) - 1/(βz)` with its removable
/// singularity resolved, plus the two smooth factors the system function
/// is written in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Langevin {
    beta: f64,
}

impl Langevin {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::parameter("beta", format!("must be positive and finite, got {beta}")));
        }
        Ok(Self { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `L_β(z)`, odd in `z`, strictly inside (-1, 1).
    pub fn value(&self, z: f64) -> f64 {
        unit_langevin(self.beta * z)
    }

    /// `M(z) = L_β(z)/z`, extended evenly with `M(0) = β/3`.
    pub fn over_z(&self, z: f64) -> f64 {
        let z = z.abs();
        let u = self.beta * z;
        if u < SERIES_SWITCH {
            self.beta * reduced_series(u)
        } else {
            unit_langevin(u) / z
        }
    }

    /// `N(z) = M'(z)/z`, extended evenly with `N(0) = -2β³/45`.
    pub fn rate_factor(&self, z: f64) -> f64 {
        let z = z.abs();
        let u = self.beta * z;
        if u < RATE_SERIES_SWITCH {
            self.beta.powi(3) * rate_series(u)
        } else {
            // u·L'(u) - L(u) = 2/u - coth(u) - u·csch²(u), and N = that / z³.
            let (coth_m1, csch2) = coth_minus_one_and_csch2(u);
            let numerator = (2.0 / u - 1.0) - coth_m1 - u * csch2;
            numerator / (z * z * z)
        }
    }
}

pub fn langevin(beta: f64, z: f64) -> Result<f64> {
    Ok(Langevin::new(beta)?.value(z))
}

pub fn langevin_over_z(beta: f64, z: f64) -> Result<f64> {
    Ok(Langevin::new(beta)?.over_z(z))
}

pub fn dlangevin_over_z_over_z(beta: f64, z: f64) -> Result<f64> {
    Ok(Langevin::new(beta)?.rate_factor(z))
}

/// Physical parameters of a single-core particle species.
///
/// `beta` always uses the physical moment `M_S·V_C`, even when the moment
/// used for signal scaling is overridden for simulation purposes.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleModel {
    temperature: f64,
    saturation_magnetization: f64,
    core_diameter: f64,
    core_volume: f64,
    magnetic_moment_m0: f64,
    beta: f64,
    boltzmann_constant: f64,
    magnetic_permeability_mu0: f64,
}

impl ParticleModel {
    /// Builds a particle model with the simulation moment set to `1/μ₀`.
    pub fn new(
        temperature: f64,
        saturation_magnetization: f64,
        core_diameter: f64,
        boltzmann_constant: f64,
        mu0: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("temperature", temperature),
            ("saturation_magnetization", saturation_magnetization),
            ("core_diameter", core_diameter),
            ("boltzmann_constant", boltzmann_constant),
            ("mu0", mu0),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::parameter(name, format!("must be positive and finite, got {v}")));
            }
        }
        let core_volume = PI * core_diameter.powi(3) / 6.0;
        let physical_moment = saturation_magnetization * core_volume;
        let beta = mu0 * physical_moment / (boltzmann_constant * temperature);
        Ok(Self {
            temperature,
            saturation_magnetization,
            core_diameter,
            core_volume,
            magnetic_moment_m0: 1.0 / mu0,
            beta,
            boltzmann_constant,
            magnetic_permeability_mu0: mu0,
        })
    }

    /// Magnetite at 293 K, `M_S = 474000 J/m³/T`.
    pub fn magnetite(core_diameter: f64) -> Result<Self> {
        Self::new(293.0, 474_000.0, core_diameter, BOLTZMANN, MU0)
    }

    /// Replaces the moment used to scale the signal; `beta` is unaffected.
    pub fn with_simulation_moment(mut self, m0: f64) -> Result<Self> {
        if !(m0.is_finite() && m0 > 0.0) {
            return Err(Error::parameter("magnetic_moment_m0", format!("must be positive, got {m0}")));
        }
        self.magnetic_moment_m0 = m0;
        Ok(self)
    }

    /// Uses the physical moment `M_S·V_C` for signal scaling.
    pub fn with_physical_moment(mut self) -> Self {
        self.magnetic_moment_m0 = self.physical_moment();
        self
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }
    pub fn saturation_magnetization(&self) -> f64 {
        self.saturation_magnetization
    }
    pub fn core_diameter(&self) -> f64 {
        self.core_diameter
    }
    pub fn core_volume(&self) -> f64 {
        self.core_volume
    }
    pub fn physical_moment(&self) -> f64 {
        self.saturation_magnetization * self.core_volume
    }
    pub fn magnetic_moment_m0(&self) -> f64 {
        self.magnetic_moment_m0
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn boltzmann_constant(&self) -> f64 {
        self.boltzmann_constant
    }
    pub fn mu0(&self) -> f64 {
        self.magnetic_permeability_mu0
    }

    /// The signal prefactor `μ₀·m₀`.
    pub fn signal_scale(&self) -> f64 {
        self.magnetic_permeability_mu0 * self.magnetic_moment_m0
    }

    pub fn langevin(&self) -> Langevin {
        Langevin { beta: self.beta }
    }
}
