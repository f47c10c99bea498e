use crate::error::{Error, Result};
use crate::sequence::{ScannerSequence, Vec3};

/// Rectangular partition of the field of view into equal cells.
///
/// Cells are numbered lexicographically in their per-axis indices
/// `(i₁, …, i_d)`, so the last axis varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    dimension: usize,
    fov_min: Vec3,
    fov_max: Vec3,
    cell_size: Vec3,
    cell_count: [usize; 3],
}

impl SpatialGrid {
    pub fn from_cell_count(fov_min: &[f64], fov_max: &[f64], cell_count: &[usize]) -> Result<Self> {
        let d = Self::check_bounds(fov_min, fov_max)?;
        if cell_count.len() != d || cell_count.contains(&0) {
            return Err(Error::parameter("cell_count", format!("need {d} positive counts, got {cell_count:?}")));
        }
        let mut grid = Self::empty(d, fov_min, fov_max);
        for i in 0..d {
            grid.cell_count[i] = cell_count[i];
            grid.cell_size[i] = (grid.fov_max[i] - grid.fov_min[i]) / cell_count[i] as f64;
        }
        Ok(grid)
    }

    pub fn from_cell_size(fov_min: &[f64], fov_max: &[f64], cell_size: &[f64]) -> Result<Self> {
        let d = Self::check_bounds(fov_min, fov_max)?;
        if cell_size.len() != d || cell_size.iter().any(|&h| !(h.is_finite() && h > 0.0)) {
            return Err(Error::parameter("cell_size", format!("need {d} positive sizes, got {cell_size:?}")));
        }
        let mut counts = Vec::with_capacity(d);
        for i in 0..d {
            let ratio = (fov_max[i] - fov_min[i]) / cell_size[i];
            let n = ratio.round();
            if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio {
                return Err(Error::parameter(
                    "cell_size",
                    format!("axis {}: FOV width is {ratio} cells, not an integer", i + 1),
                ));
            }
            counts.push(n as usize);
        }
        Self::from_cell_count(fov_min, fov_max, &counts)
    }

    fn check_bounds(fov_min: &[f64], fov_max: &[f64]) -> Result<usize> {
        let d = fov_min.len();
        if !(1..=3).contains(&d) || fov_max.len() != d {
            return Err(Error::parameter("fov", "bounds must have matching length 1, 2 or 3"));
        }
        for i in 0..d {
            if !(fov_min[i].is_finite() && fov_max[i].is_finite() && fov_max[i] > fov_min[i]) {
                return Err(Error::parameter("fov", format!("axis {}: empty interval", i + 1)));
            }
        }
        Ok(d)
    }

    fn empty(d: usize, fov_min: &[f64], fov_max: &[f64]) -> Self {
        let mut lo = Vec3::zeros();
        let mut hi = Vec3::zeros();
        for i in 0..d {
            lo[i] = fov_min[i];
            hi[i] = fov_max[i];
        }
        Self {
            dimension: d,
            fov_min: lo,
            fov_max: hi,
            cell_size: Vec3::zeros(),
            cell_count: [1; 3],
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }
    pub fn fov_min(&self) -> &Vec3 {
        &self.fov_min
    }
    pub fn fov_max(&self) -> &Vec3 {
        &self.fov_max
    }
    pub fn cell_size(&self) -> &Vec3 {
        &self.cell_size
    }
    pub fn cell_count(&self) -> &[usize] {
        &self.cell_count[..self.dimension]
    }
    pub fn total_cells(&self) -> usize {
        self.cell_count().iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dimension).map(|i| self.cell_size[i]).product()
    }

    pub fn fov_diameter(&self) -> f64 {
        (self.fov_max - self.fov_min).norm()
    }

    /// Per-axis indices of a cell.
    pub fn cell_coordinates(&self, index: usize) -> [usize; 3] {
        let mut coords = [0; 3];
        let mut rest = index;
        for i in (0..self.dimension).rev() {
            coords[i] = rest % self.cell_count[i];
            rest /= self.cell_count[i];
        }
        coords
    }

    /// Lower corner of a cell. The upper corner of the last cell on each
    /// axis is `fov_max` up to rounding.
    pub fn cell_origin(&self, index: usize) -> Vec3 {
        let coords = self.cell_coordinates(index);
        let mut origin = Vec3::zeros();
        for i in 0..self.dimension {
            origin[i] = self.fov_min[i] + coords[i] as f64 * self.cell_size[i];
        }
        origin
    }

    pub fn cell_center(&self, index: usize) -> Vec3 {
        let mut c = self.cell_origin(index);
        for i in 0..self.dimension {
            c[i] += 0.5 * self.cell_size[i];
        }
        c
    }

    pub(crate) fn check_cell(&self, index: usize) -> Result<()> {
        if index >= self.total_cells() {
            return Err(Error::Domain {
                what: "cell index",
                value: index as f64,
                lo: 0.0,
                hi: (self.total_cells() - 1) as f64,
            });
        }
        Ok(())
    }
}

/// Uniform partition of the measurement interval into sample intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub measurement_time: f64,
    pub sample_interval: f64,
    pub sample_count: usize,
}

impl TimeGrid {
    pub fn of(sequence: &ScannerSequence) -> Self {
        Self {
            measurement_time: sequence.measurement_time(),
            sample_interval: sequence.sample_interval(),
            sample_count: sequence.sample_count(),
        }
    }

    /// `[t_j, t_{j+1}]`.
    pub fn interval(&self, sample: usize) -> (f64, f64) {
        let start = sample as f64 * self.sample_interval;
        let end = if sample + 1 == self.sample_count {
            self.measurement_time
        } else {
            (sample + 1) as f64 * self.sample_interval
        };
        (start, end)
    }
}
