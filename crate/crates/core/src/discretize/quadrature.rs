use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

use super::grid::{SpatialGrid, TimeGrid};
use crate::error::{Error, Result};
use crate::sequence::{ScannerSequence, Vec3};

/// Prime bases of the Halton sequence, one per dimension.
pub const HALTON_BASES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Kinks closer than this fraction of Δt to a panel boundary are not split on.
const KINK_MERGE_FRACTION: f64 = 1e-12;

/// Van der Corput radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv_base = 1.0 / base as f64;
    let mut scale = inv_base;
    let mut value = 0.0;
    while index > 0 {
        value += (index % base) as f64 * scale;
        index /= base;
        scale *= inv_base;
    }
    value
}

/// Point `index` of the Halton sequence in `[0,1)^dims`.
pub fn halton(index: u64, dims: usize) -> Result<Vec<f64>> {
    if dims == 0 || dims > HALTON_BASES.len() {
        return Err(Error::Configuration(format!(
            "Halton sequence supports 1..={} dimensions, got {dims}",
            HALTON_BASES.len()
        )));
    }
    Ok(HALTON_BASES[..dims].iter().map(|&b| radical_inverse(index, b)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimeIntegration {
    /// Gauss–Legendre integration over each sample interval.
    Interval,
    /// Point evaluation at `t_j = j·Δt`, weighted by Δt.
    Pointwise,
    /// Exact interval integral from the time primitive of the kernel,
    /// evaluated at the interval ends.
    Primitive,
}

impl TimeIntegration {
    pub fn name(&self) -> &'static str {
        match self {
            TimeIntegration::Interval => "interval",
            TimeIntegration::Pointwise => "pointwise",
            TimeIntegration::Primitive => "primitive",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text.trim() {
            "interval" => Ok(TimeIntegration::Interval),
            "pointwise" => Ok(TimeIntegration::Pointwise),
            "primitive" => Ok(TimeIntegration::Primitive),
            other => Err(Error::Configuration(format!(
                "unknown time integration `{other}`, expected interval, pointwise or primitive"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSpec {
    /// Spatial rule uses `points_per_axis^d` Halton points per cell.
    pub points_per_axis: usize,
    pub gauss_order: usize,
    pub halton_skip: u64,
    pub time_integration: TimeIntegration,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            points_per_axis: 3,
            gauss_order: 4,
            halton_skip: 0,
            time_integration: TimeIntegration::Interval,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.points_per_axis == 0 {
            return Err(Error::parameter("points_per_axis", "must be at least 1"));
        }
        if self.gauss_order < 2 {
            return Err(Error::parameter("gauss_order", format!("must be at least 2, got {}", self.gauss_order)));
        }
        Ok(())
    }

    pub fn spatial_points_per_cell(&self, dimension: usize) -> usize {
        self.points_per_axis.pow(dimension as u32)
    }
}

/// The shared Halton points in the unit cube and their common weight.
#[derive(Debug, Clone)]
pub(crate) struct UnitRule {
    pub points: Vec<Vec3>,
    pub weight: f64,
}

impl UnitRule {
    pub fn new(dimension: usize, qspec: &QuadratureSpec) -> Result<Self> {
        qspec.validate()?;
        let count = qspec.spatial_points_per_cell(dimension);
        let points = (0..count as u64)
            .map(|k| {
                let p = halton(qspec.halton_skip + k, dimension)?;
                let mut v = Vec3::zeros();
                v.as_mut_slice()[..dimension].copy_from_slice(&p);
                Ok(v)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            points,
            weight: 1.0 / count as f64,
        })
    }

    /// Maps the unit points into a cell with lower corner `origin`.
    #[inline]
    pub fn place(&self, origin: &Vec3, size: &Vec3) -> impl Iterator<Item = Vec3> + '_ {
        let (origin, size) = (*origin, *size);
        self.points.iter().map(move |u| origin + u.component_mul(&size))
    }
}

/// Quasi-Monte Carlo nodes and weights (m^d) for one cell.
pub fn cell_quadrature(grid: &SpatialGrid, cell_index: usize, qspec: &QuadratureSpec) -> Result<Vec<(Vec3, f64)>> {
    grid.check_cell(cell_index)?;
    let rule = UnitRule::new(grid.dimension(), qspec)?;
    let weight = rule.weight * grid.cell_volume();
    let origin = grid.cell_origin(cell_index);
    Ok(rule.place(&origin, grid.cell_size()).map(|x| (x, weight)).collect())
}

/// Gauss–Legendre rule on `[t_j, t_{j+1}]`, split at every interior kink
/// of the drive.
#[derive(Debug, Clone)]
pub(crate) struct TimeRule {
    reference: Vec<(f64, f64)>,
}

impl TimeRule {
    pub fn new(order: usize) -> Result<Self> {
        let order = NonZeroUsize::new(order)
            .filter(|n| n.get() >= 2)
            .ok_or_else(|| Error::parameter("gauss_order", "must be at least 2"))?;
        let rule = GaussLegendre::new(order);
        Ok(Self {
            reference: rule.as_node_weight_pairs().to_vec(),
        })
    }

    pub fn nodes(&self, sequence: &ScannerSequence, sample: usize) -> Vec<(f64, f64)> {
        let grid = TimeGrid::of(sequence);
        let (start, end) = grid.interval(sample);
        let guard = KINK_MERGE_FRACTION * grid.sample_interval;
        let mut breaks = vec![start];
        breaks.extend(
            sequence
                .kink_times(start, end)
                .into_iter()
                .filter(|&k| k - start > guard && end - k > guard),
        );
        breaks.push(end);
        let mut nodes = Vec::with_capacity((breaks.len() - 1) * self.reference.len());
        for panel in breaks.windows(2) {
            let (a, b) = (panel[0], panel[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (b + a);
            nodes.extend(self.reference.iter().map(|&(x, w)| (mid + half * x, half * w)));
        }
        nodes
    }
}

/// Time nodes and weights (s) for sample interval `sample_index`.
pub fn time_quadrature(sequence: &ScannerSequence, sample_index: usize, gauss_order: usize) -> Result<Vec<(f64, f64)>> {
    if sample_index >= sequence.sample_count() {
        return Err(Error::Domain {
            what: "sample index",
            value: sample_index as f64,
            lo: 0.0,
            hi: (sequence.sample_count() - 1) as f64,
        });
    }
    Ok(TimeRule::new(gauss_order)?.nodes(sequence, sample_index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::{DriveField, ScanMode, SelectionField, Waveform};
    use approx::assert_relative_eq;

    /// Digit reversal written out independently of `radical_inverse`.
    fn digit_reversal(index: u64, base: u64) -> f64 {
        let mut digits = Vec::new();
        let mut n = index;
        while n > 0 {
            digits.push(n % base);
            n /= base;
        }
        digits
            .iter()
            .enumerate()
            .map(|(k, &d)| d as f64 / (base as f64).powi(k as i32 + 1))
            .sum()
    }

    #[test]
    fn halton_anchor_values() {
        assert_eq!(halton(1, 1).unwrap(), vec![0.5]);
        assert_eq!(halton(3, 1).unwrap()[0], 0.75);
        // 5 = 12₃ reverses to 0.21₃ = 7/9
        assert_relative_eq!(halton(5, 2).unwrap()[1], 7.0 / 9.0, max_relative = 1e-15);
        for i in 0..500 {
            let p = halton(i, 8).unwrap();
            for (k, &b) in HALTON_BASES.iter().enumerate() {
                assert_relative_eq!(p[k], digit_reversal(i, b), max_relative = 1e-14);
                assert!((0.0..1.0).contains(&p[k]));
            }
        }
    }

    #[test]
    fn halton_dimension_limit() {
        assert!(matches!(halton(0, 9), Err(Error::Configuration(_))));
        assert!(halton(0, 0).is_err());
    }

    fn grid_2d() -> SpatialGrid {
        SpatialGrid::from_cell_count(&[-1.0, -2.0], &[1.0, 2.0], &[4, 5]).unwrap()
    }

    #[test]
    fn cell_weights_sum_to_volume() {
        let g = grid_2d();
        let q = QuadratureSpec::default();
        let nodes = cell_quadrature(&g, 7, &q).unwrap();
        assert_eq!(nodes.len(), 9);
        let total: f64 = nodes.iter().map(|n| n.1).sum();
        assert_relative_eq!(total, g.cell_volume(), max_relative = 1e-15);
        let c = 3.7;
        let integral: f64 = nodes.iter().map(|n| c * n.1).sum();
        assert_relative_eq!(integral, c * g.cell_volume(), max_relative = 1e-15);
        let origin = g.cell_origin(7);
        for (x, _) in &nodes {
            for i in 0..2 {
                assert!(x[i] >= origin[i] && x[i] <= origin[i] + g.cell_size()[i]);
            }
        }
        assert!(cell_quadrature(&g, 20, &q).is_err());
    }

    #[test]
    fn cells_share_the_unit_pattern() {
        let g = grid_2d();
        let q = QuadratureSpec::default();
        let a = cell_quadrature(&g, 0, &q).unwrap();
        let b = cell_quadrature(&g, 13, &q).unwrap();
        let shift = g.cell_origin(13) - g.cell_origin(0);
        for (p, r) in a.iter().zip(&b) {
            assert!((p.0 + shift - r.0).norm() < 1e-14);
        }
    }

    #[test]
    fn smooth_integrand_against_dense_monte_carlo() {
        // integrand varies on the FOV scale, cell is one of 25×25
        let g = SpatialGrid::from_cell_count(&[-12.5e-3, -12.5e-3], &[12.5e-3, 12.5e-3], &[25, 25]).unwrap();
        let q = QuadratureSpec::default();
        let f = |x: &Vec3| (60.0 * x[0]).exp() * (70.0 * x[1]).cos() + 1e4 * x[0] * x[1];
        let cell = 311;
        let qmc: f64 = cell_quadrature(&g, cell, &q).unwrap().iter().map(|(x, w)| f(x) * w).sum();

        let origin = g.cell_origin(cell);
        let size = g.cell_size();
        let mut state = 0x9e37_79b9_7f4a_7c15_u64;
        let mut uniform = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let n = 1_000_000;
        let mut mc = 0.0;
        for _ in 0..n {
            let x = Vec3::new(origin[0] + uniform() * size[0], origin[1] + uniform() * size[1], 0.0);
            mc += f(&x);
        }
        mc *= g.cell_volume() / n as f64;
        assert!((qmc - mc).abs() < 0.01 * mc.abs(), "qmc {qmc} mc {mc}");
    }

    #[test]
    fn unshifted_points_are_biased_toward_the_origin() {
        // first-order error of the 3² rule: its centroid is not the cell centre
        let rule = UnitRule::new(2, &QuadratureSpec::default()).unwrap();
        let centroid = rule.points.iter().fold(Vec3::zeros(), |a, p| a + p) * rule.weight;
        assert_relative_eq!(centroid[0], 3.5625 / 9.0, max_relative = 1e-15);
        assert_relative_eq!(centroid[1], 4.0 / 9.0, max_relative = 1e-15);
    }

    fn sequence(waveform: Waveform, f: f64, dt: f64) -> ScannerSequence {
        let selection = SelectionField::diagonal(ScanMode::Ffp, &[-1.0], 0.0).unwrap();
        let drive = DriveField::new(waveform, &[1.0], &[f]).unwrap();
        ScannerSequence::new(selection, drive, 1.0, dt).unwrap()
    }

    #[test]
    fn sinusoidal_sample_is_one_panel() {
        let seq = sequence(Waveform::Sinusoidal, 1.0, 0.125);
        let nodes = time_quadrature(&seq, 2, 4).unwrap();
        assert_eq!(nodes.len(), 4);
        assert_relative_eq!(nodes.iter().map(|n| n.1).sum::<f64>(), 0.125, max_relative = 1e-14);
        assert!(nodes.iter().all(|n| n.0 > 0.25 && n.0 < 0.375));
    }

    #[test]
    fn interior_kink_splits_the_panel() {
        // kink at t = 1/4 lies inside [0.2, 0.3]
        let seq = sequence(Waveform::Triangular, 1.0, 0.1);
        let nodes = time_quadrature(&seq, 2, 4).unwrap();
        assert_eq!(nodes.len(), 8);
        assert_relative_eq!(nodes.iter().map(|n| n.1).sum::<f64>(), 0.1, max_relative = 1e-13);
        assert!(nodes.iter().all(|n| (n.0 - 0.25).abs() > 1e-6));
        // kink on the boundary t = 0.25 of [0.125, 0.25]: no split
        let seq = sequence(Waveform::Triangular, 1.0, 0.125);
        assert_eq!(time_quadrature(&seq, 1, 4).unwrap().len(), 4);
    }

    #[test]
    fn polynomials_of_degree_2n_minus_1_are_exact() {
        let seq = sequence(Waveform::Triangular, 1.0, 0.1);
        for order in [2, 4, 6] {
            let degree = 2 * order - 1;
            for sample in [0, 2, 7] {
                let nodes = time_quadrature(&seq, sample, order).unwrap();
                let (a, b) = (sample as f64 * 0.1, (sample + 1) as f64 * 0.1);
                let quad: f64 = nodes.iter().map(|(t, w)| w * (t - 0.03).powi(degree as i32)).sum();
                let exact = ((b - 0.03).powi(degree as i32 + 1) - (a - 0.03).powi(degree as i32 + 1)) / (degree + 1) as f64;
                assert_relative_eq!(quad, exact, max_relative = 1e-12);
            }
        }
        assert!(time_quadrature(&seq, 10, 4).is_err());
        assert!(time_quadrature(&seq, 0, 1).is_err());
    }
}
