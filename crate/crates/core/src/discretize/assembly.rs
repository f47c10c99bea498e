use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::grid::{SpatialGrid, TimeGrid};
use super::quadrature::{QuadratureSpec, TimeIntegration, TimeRule, UnitRule};
use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, KernelVariant};
use crate::sequence::{FieldFrame, ScannerSequence, Vec3};

const MAGIC: &[u8; 8] = b"MPISVOP1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Containment {
    /// A field-free region leaving the FOV aborts assembly.
    #[default]
    Enforce,
    /// The violation is recorded in the matrix warnings.
    Warn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssemblyOptions {
    pub parallel: bool,
    pub containment: Containment,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            parallel: true,
            containment: Containment::Enforce,
        }
    }
}

/// Dense Galerkin matrix. Rows are `coil * sample_count + sample`, columns
/// follow the lexicographic cell order of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub matrix: DMatrix<f64>,
    pub coil_count: usize,
    pub sample_count: usize,
    pub cell_count: usize,
    /// Every row is the time integral times `row_scale`.
    pub row_scale: f64,
    /// Every column is the space integral times `column_scale`.
    pub column_scale: f64,
    pub variant: String,
    pub config_hash: String,
    pub warnings: Vec<String>,
}

impl OperatorMatrix {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }
    pub fn columns(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn row_index(&self, coil: usize, sample: usize) -> usize {
        coil * self.sample_count + sample
    }

    fn header(&self) -> String {
        let mut h = String::new();
        let _ = writeln!(h, "rows={}", self.rows());
        let _ = writeln!(h, "columns={}", self.columns());
        let _ = writeln!(h, "coil_count={}", self.coil_count);
        let _ = writeln!(h, "sample_count={}", self.sample_count);
        let _ = writeln!(h, "cell_count={}", self.cell_count);
        let _ = writeln!(h, "row_order=coil_major_then_time");
        let _ = writeln!(h, "column_order=lexicographic_last_axis_fastest");
        let _ = writeln!(h, "row_scale={:e}", self.row_scale);
        let _ = writeln!(h, "column_scale={:e}", self.column_scale);
        let _ = writeln!(h, "variant={}", self.variant);
        let _ = writeln!(h, "config_hash={}", self.config_hash);
        let _ = writeln!(h, "layout=row_major_f64_le");
        h
    }

    /// Binary container: magic, `u32` header length, `key=value` header,
    /// then the entries row by row as little-endian `f64`.
    pub fn write_binary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header = self.header();
        out.write_all(MAGIC)?;
        out.write_all(&(header.len() as u32).to_le_bytes())?;
        out.write_all(header.as_bytes())?;
        let mut row = Vec::with_capacity(8 * self.columns());
        for r in 0..self.rows() {
            row.clear();
            for c in 0..self.columns() {
                row.extend_from_slice(&self.matrix[(r, c)].to_le_bytes());
            }
            out.write_all(&row)?;
        }
        out.flush()
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_binary(std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let bad = |msg: &str| Error::Input(format!("operator file: {msg}"));
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let mut len = [0u8; 4];
        input.read_exact(&mut len).map_err(|_| bad("truncated header length"))?;
        let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
        input.read_exact(&mut header).map_err(|_| bad("truncated header"))?;
        let header = String::from_utf8(header).map_err(|_| bad("header is not UTF-8"))?;
        let get = |key: &str| -> Result<&str> {
            header
                .lines()
                .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .ok_or_else(|| bad(&format!("missing `{key}`")))
        };
        let int = |key: &str| -> Result<usize> { get(key)?.parse().map_err(|_| bad(&format!("bad `{key}`"))) };
        let float = |key: &str| -> Result<f64> { get(key)?.parse().map_err(|_| bad(&format!("bad `{key}`"))) };
        let (rows, columns) = (int("rows")?, int("columns")?);
        let mut data = vec![0u8; 8 * rows * columns];
        input.read_exact(&mut data).map_err(|_| bad("truncated data"))?;
        let values = data.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap()));
        Ok(Self {
            matrix: DMatrix::from_row_iterator(rows, columns, values),
            coil_count: int("coil_count")?,
            sample_count: int("sample_count")?,
            cell_count: int("cell_count")?,
            row_scale: float("row_scale")?,
            column_scale: float("column_scale")?,
            variant: get("variant")?.to_string(),
            config_hash: get("config_hash")?.to_string(),
            warnings: Vec::new(),
        })
    }

    pub fn load_binary(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_binary(std::io::BufReader::new(file))
    }

    /// One line per row, shortest round-trip formatting.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for r in 0..self.rows() {
            for c in 0..self.columns() {
                if c > 0 {
                    s.push(',');
                }
                let _ = write!(s, "{:e}", self.matrix[(r, c)]);
            }
            s.push('\n');
        }
        s
    }
}

/// Pointwise response `w(H, Ḣ)` and its time primitive.
pub(crate) trait Response: Sync {
    fn rate(&self, h: &Vec3, h_dot: &Vec3) -> Vec3;
    fn primitive(&self, h: &Vec3) -> Vec3;
}

impl Response for KernelSpec {
    fn rate(&self, h: &Vec3, h_dot: &Vec3) -> Vec3 {
        self.response(h, h_dot)
    }
    fn primitive(&self, h: &Vec3) -> Vec3 {
        self.magnetization(h)
    }
}

/// Field frames at which the kernel is evaluated.
enum TimeNodes {
    /// Weighted nodes per sample interval.
    Quadrature(Vec<Vec<(f64, FieldFrame)>>),
    /// Frames at the `N_t + 1` interval ends.
    Boundaries(Vec<FieldFrame>),
}

fn time_nodes(sequence: &ScannerSequence, qspec: &QuadratureSpec) -> Result<TimeNodes> {
    let time = TimeGrid::of(sequence);
    let n = time.sample_count;
    let dt = time.sample_interval;
    let frames = |nodes: Vec<(f64, f64)>| -> Vec<(f64, FieldFrame)> {
        nodes.into_iter().map(|(t, w)| (w, sequence.frame(t))).collect()
    };
    Ok(match qspec.time_integration {
        TimeIntegration::Pointwise => TimeNodes::Quadrature((0..n).map(|j| frames(vec![(j as f64 * dt, dt)])).collect()),
        TimeIntegration::Interval => {
            let rule = TimeRule::new(qspec.gauss_order)?;
            TimeNodes::Quadrature((0..n).map(|j| frames(rule.nodes(sequence, j))).collect())
        }
        TimeIntegration::Primitive => TimeNodes::Boundaries(
            (0..=n)
                .map(|j| sequence.frame(if j == n { time.measurement_time } else { j as f64 * dt }))
                .collect(),
        ),
    })
}

fn check_finite(v: &Vec3, cell: usize, node: impl FnOnce() -> String) -> Result<()> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::Assembly {
            cell,
            node: node(),
            value: v.norm(),
        })
    }
}

/// Assembles the stacked operator of all coils in `specs`.
pub fn assemble(
    specs: &[KernelSpec],
    grid: &SpatialGrid,
    qspec: &QuadratureSpec,
    options: &AssemblyOptions,
) -> Result<OperatorMatrix> {
    let first = specs
        .first()
        .ok_or_else(|| Error::Configuration("assembly needs at least one coil".into()))?;
    assemble_with(specs, grid, qspec, options, first)
}

/// `assemble` with the response supplied by the caller.
pub(crate) fn assemble_with<R: Response>(
    specs: &[KernelSpec],
    grid: &SpatialGrid,
    qspec: &QuadratureSpec,
    options: &AssemblyOptions,
    response: &R,
) -> Result<OperatorMatrix> {
    let first = specs
        .first()
        .ok_or_else(|| Error::Configuration("assembly needs at least one coil".into()))?;
    let sequence = first.sequence();
    for spec in specs {
        if !std::sync::Arc::ptr_eq(spec.sequence(), sequence) && **spec.sequence() != **sequence {
            return Err(Error::Configuration("all coils must share one scanner sequence".into()));
        }
        if spec.variant() != first.variant()
            || spec.particle() != first.particle()
            || spec.regularization_epsilon() != first.regularization_epsilon()
        {
            return Err(Error::Configuration("all coils must share one kernel model".into()));
        }
    }
    if grid.dimension() != sequence.dimension() {
        return Err(Error::Configuration(format!(
            "grid is {}-dimensional but the sequence is {}-dimensional",
            grid.dimension(),
            sequence.dimension()
        )));
    }
    let mut warnings = Vec::new();
    if let Some(violation) = sequence.containment_violation(grid.fov_min(), grid.fov_max()) {
        match options.containment {
            Containment::Enforce => return Err(Error::Configuration(violation)),
            Containment::Warn => warnings.push(violation),
        }
    }

    let time = TimeGrid::of(sequence);
    let unit = UnitRule::new(grid.dimension(), qspec)?;
    let nodes = time_nodes(sequence, qspec)?;
    let coils: Vec<Vec3> = specs.iter().map(|s| *s.coil()).collect();
    let row_scale = 1.0 / time.sample_interval.sqrt();
    let column_scale = 1.0 / grid.cell_volume().sqrt();
    let entry_scale = first.particle().signal_scale() * row_scale * column_scale;
    let spatial_weight = unit.weight * grid.cell_volume();
    let filter = match first.variant() {
        KernelVariant::Filtered(f) => Some(f),
        _ => None,
    };

    let n_t = time.sample_count;
    let rows = coils.len() * n_t;
    let cells = grid.total_cells();

    let fill_column = |cell: usize, column: &mut [f64]| -> Result<()> {
        let origin = grid.cell_origin(cell);
        let points: Vec<Vec3> = unit.place(&origin, grid.cell_size()).collect();
        let mut integrated = vec![0.0; rows];
        let mut store = |j: usize, w: Vec3| {
            for (l, p) in coils.iter().enumerate() {
                integrated[l * n_t + j] = p.dot(&w);
            }
        };
        match &nodes {
            TimeNodes::Quadrature(samples) => {
                for (j, sample) in samples.iter().enumerate() {
                    let mut w_total = Vec3::zeros();
                    for (k, (wt, frame)) in sample.iter().enumerate() {
                        let mut w_space = Vec3::zeros();
                        for (q, x) in points.iter().enumerate() {
                            let (h, h_dot) = frame.field(x);
                            let w = response.rate(&h, &h_dot);
                            check_finite(&w, cell, || format!("sample {j}, time node {k}, space node {q}"))?;
                            w_space += w;
                        }
                        w_total += w_space * *wt;
                    }
                    store(j, w_total * spatial_weight);
                }
            }
            TimeNodes::Boundaries(frames) => {
                let mut previous = Vec3::zeros();
                for (j, frame) in frames.iter().enumerate() {
                    let mut m = Vec3::zeros();
                    for (q, x) in points.iter().enumerate() {
                        let (h, _) = frame.field(x);
                        let v = response.primitive(&h);
                        check_finite(&v, cell, || format!("interval end {j}, space node {q}"))?;
                        m += v;
                    }
                    m *= spatial_weight;
                    if j > 0 {
                        store(j - 1, m - previous);
                    }
                    previous = m;
                }
            }
        }
        match filter {
            None => {
                for (dst, v) in column.iter_mut().zip(&integrated) {
                    *dst = v * entry_scale;
                }
            }
            Some(f) => {
                for l in 0..coils.len() {
                    let block = &integrated[l * n_t..(l + 1) * n_t];
                    for j in 0..n_t {
                        column[l * n_t + j] = f.convolve_at(block, j) * entry_scale;
                    }
                }
            }
        }
        Ok(())
    };

    let mut data = vec![0.0; rows * cells];
    if options.parallel {
        data.par_chunks_mut(rows)
            .enumerate()
            .try_for_each(|(cell, column)| fill_column(cell, column))?;
    } else {
        data.chunks_mut(rows)
            .enumerate()
            .try_for_each(|(cell, column)| fill_column(cell, column))?;
    }

    Ok(OperatorMatrix {
        matrix: DMatrix::from_vec(rows, cells, data),
        coil_count: coils.len(),
        sample_count: n_t,
        cell_count: cells,
        row_scale,
        column_scale,
        variant: first.variant().name().to_string(),
        config_hash: String::new(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Filter;
    use crate::physics::{ParticleModel, MU0};
    use crate::sequence::{DriveField, ScanMode, SelectionField, Waveform};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn ffp_2d(dt: f64, samples: usize) -> Arc<ScannerSequence> {
        let selection = SelectionField::diagonal(ScanMode::Ffp, &[-1.0 / MU0, -1.0 / MU0], 0.0).unwrap();
        let t = dt * samples as f64;
        let drive = DriveField::new(Waveform::Sinusoidal, &[0.012 / MU0, 0.012 / MU0], &[3.0 / t, 2.0 / t]).unwrap();
        Arc::new(ScannerSequence::new(selection, drive, t, dt).unwrap())
    }

    fn specs(seq: &Arc<ScannerSequence>, variant: KernelVariant) -> Vec<KernelSpec> {
        let particle = ParticleModel::magnetite(30e-9).unwrap();
        KernelSpec::for_all_coils(&particle, seq, &variant, 1e-9).unwrap()
    }

    fn grid_3x3() -> SpatialGrid {
        SpatialGrid::from_cell_count(&[-12.5e-3, -12.5e-3], &[12.5e-3, 12.5e-3], &[3, 3]).unwrap()
    }

    #[test]
    fn dimensions_and_ordering() {
        let seq = ffp_2d(1e-5, 8);
        let op = assemble(&specs(&seq, KernelVariant::Equilibrium), &grid_3x3(), &QuadratureSpec::default(), &AssemblyOptions::default()).unwrap();
        assert_eq!((op.rows(), op.columns()), (16, 9));
        assert_eq!(op.row_index(1, 3), 11);
        assert!(op.matrix.iter().all(|v| v.is_finite()));
        for c in 0..9 {
            assert!(op.matrix.column(c).norm() > 0.0);
        }
    }

    /// Direct tensor-product integration of `κ` over one cell and interval.
    fn dense_entry(spec: &KernelSpec, grid: &SpatialGrid, cell: usize, sample: usize) -> f64 {
        let seq = spec.sequence();
        let dt = seq.sample_interval();
        let rule = TimeRule::new(8).unwrap();
        let origin = grid.cell_origin(cell);
        let size = grid.cell_size();
        let m = 100;
        let mut total = 0.0;
        for (t, wt) in rule.nodes(seq, sample) {
            let mut s = 0.0;
            for a in 0..m {
                for b in 0..m {
                    let x = Vec3::new(
                        origin[0] + (a as f64 + 0.5) / m as f64 * size[0],
                        origin[1] + (b as f64 + 0.5) / m as f64 * size[1],
                        0.0,
                    );
                    s += spec.kappa_equilibrium(&x, t).unwrap();
                }
            }
            total += wt * s * grid.cell_volume() / (m * m) as f64;
        }
        total / (dt * grid.cell_volume()).sqrt()
    }

    #[test]
    fn entries_match_dense_oracle() {
        let seq = ffp_2d(1e-5, 8);
        let grid = grid_3x3();
        // 10 nm keeps the magnetization peak wider than a cell, so a
        // 24² QMC rule resolves it
        let particle = ParticleModel::magnetite(10e-9).unwrap();
        let sp = KernelSpec::for_all_coils(&particle, &seq, &KernelVariant::Equilibrium, 1e-9).unwrap();
        let q = QuadratureSpec {
            points_per_axis: 24,
            gauss_order: 6,
            ..QuadratureSpec::default()
        };
        let op = assemble(&sp, &grid, &q, &AssemblyOptions::default()).unwrap();
        let scale = op.matrix.amax();
        let mut worst: f64 = 0.0;
        for (l, spec) in sp.iter().enumerate() {
            for cell in [0, 4, 7] {
                for j in [0, 3, 6] {
                    let oracle = dense_entry(spec, &grid, cell, j);
                    let got = op.matrix[(op.row_index(l, j), cell)];
                    worst = worst.max((got - oracle).abs() / oracle.abs().max(1e-3 * scale));
                }
            }
        }
        assert!(worst < 1e-3, "worst relative error {worst}");
    }

    /// `κ ≡ 1` for a coil along `e₁`.
    struct Unit;
    impl Response for Unit {
        fn rate(&self, _: &Vec3, _: &Vec3) -> Vec3 {
            Vec3::x()
        }
        fn primitive(&self, _: &Vec3) -> Vec3 {
            unreachable!()
        }
    }

    /// Same response at every point in space.
    struct Uniform;
    impl Response for Uniform {
        fn rate(&self, _: &Vec3, h_dot: &Vec3) -> Vec3 {
            // Ḣ = -ḣ does not depend on x for an FFP
            *h_dot
        }
        fn primitive(&self, _: &Vec3) -> Vec3 {
            unreachable!()
        }
    }

    struct Broken;
    impl Response for Broken {
        fn rate(&self, _: &Vec3, _: &Vec3) -> Vec3 {
            Vec3::new(f64::NAN, 0.0, 0.0)
        }
        fn primitive(&self, _: &Vec3) -> Vec3 {
            Vec3::new(f64::NAN, 0.0, 0.0)
        }
    }

    #[test]
    fn primitive_matches_gauss_for_smooth_kernels() {
        let seq = ffp_2d(1e-5, 8);
        let particle = ParticleModel::magnetite(10e-9).unwrap();
        let sp = KernelSpec::for_all_coils(&particle, &seq, &KernelVariant::Equilibrium, 1e-9).unwrap();
        let gauss = QuadratureSpec { gauss_order: 12, ..QuadratureSpec::default() };
        let exact = QuadratureSpec { time_integration: TimeIntegration::Primitive, ..QuadratureSpec::default() };
        let a = assemble(&sp, &grid_3x3(), &gauss, &AssemblyOptions::default()).unwrap();
        let b = assemble(&sp, &grid_3x3(), &exact, &AssemblyOptions::default()).unwrap();
        let scale = a.matrix.amax();
        for (x, y) in a.matrix.iter().zip(b.matrix.iter()) {
            assert!((x - y).abs() < 1e-6 * scale, "{x} vs {y}");
        }
        let err = assemble_with(&sp, &grid_3x3(), &exact, &AssemblyOptions::default(), &Broken).unwrap_err();
        assert!(matches!(err, Error::Assembly { .. }));
    }

    #[test]
    fn primitive_sees_the_jump_across_a_field_free_line() {
        // 2D FFL without rotation: H/|H| only flips sign when the line
        // crosses a point, so the pointwise limit kernel vanishes
        let selection = SelectionField::diagonal(ScanMode::Ffl, &[0.0, -1.0 / MU0], 0.0).unwrap();
        let drive = DriveField::new(Waveform::Sinusoidal, &[1.0, 0.012 / MU0], &[1.0, 1.0 / 8e-5]).unwrap().without_axis(0);
        let seq = Arc::new(ScannerSequence::new(selection, drive, 8e-5, 1e-5).unwrap());
        let sp = specs(&seq, KernelVariant::Limit);
        let grid = grid_3x3();
        let pointwise = assemble(&sp, &grid, &QuadratureSpec::default(), &AssemblyOptions::default()).unwrap();
        assert!(pointwise.matrix.amax() < 1e-12);
        let exact = QuadratureSpec { time_integration: TimeIntegration::Primitive, ..QuadratureSpec::default() };
        let op = assemble(&sp, &grid, &exact, &AssemblyOptions::default()).unwrap();
        assert!(op.matrix.amax() > 0.1 * op.column_scale * grid.cell_volume() * op.row_scale);
    }

    #[test]
    fn unit_kernel_gives_root_of_cell_and_interval() {
        let selection = SelectionField::diagonal(ScanMode::Ffp, &[-1.0], 0.0).unwrap();
        let drive = DriveField::new(Waveform::Sinusoidal, &[0.1], &[0.5]).unwrap();
        let seq = Arc::new(ScannerSequence::new(selection, drive, 0.5, 0.25).unwrap());
        let grid = SpatialGrid::from_cell_count(&[-0.3], &[0.4], &[1]).unwrap();
        let mut sp = specs(&seq, KernelVariant::Equilibrium);
        sp.truncate(1);
        let op = assemble_with(&sp, &grid, &QuadratureSpec::default(), &AssemblyOptions::default(), &Unit).unwrap();
        assert_eq!(op.matrix.shape(), (2, 1));
        assert_relative_eq!(op.matrix[(0, 0)], (0.25f64 * 0.7).sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn space_independent_kernel_gives_equal_columns() {
        let seq = ffp_2d(1e-5, 8);
        let grid = SpatialGrid::from_cell_count(&[-12.5e-3, -12.5e-3], &[12.5e-3, 12.5e-3], &[1, 2]).unwrap();
        let sp = specs(&seq, KernelVariant::Equilibrium);
        let op = assemble_with(&sp, &grid, &QuadratureSpec::default(), &AssemblyOptions::default(), &Uniform).unwrap();
        assert_eq!(op.matrix.column(0), op.matrix.column(1));
        let sv = op.matrix.singular_values();
        assert!(sv.min() <= 1e-12 * sv.max());
    }

    #[test]
    fn non_finite_response_names_the_node() {
        let seq = ffp_2d(1e-5, 8);
        let sp = specs(&seq, KernelVariant::Equilibrium);
        let err = assemble_with(&sp, &grid_3x3(), &QuadratureSpec::default(), &AssemblyOptions::default(), &Broken).unwrap_err();
        assert!(matches!(err, Error::Assembly { .. }));
        assert!(err.is_numerical());
    }

    #[test]
    fn parallel_matches_serial_bitwise() {
        let seq = ffp_2d(1e-5, 8);
        let sp = specs(&seq, KernelVariant::Equilibrium);
        let q = QuadratureSpec::default();
        let par = assemble(&sp, &grid_3x3(), &q, &AssemblyOptions::default()).unwrap();
        let ser = assemble(&sp, &grid_3x3(), &q, &AssemblyOptions { parallel: false, ..Default::default() }).unwrap();
        assert!(par.matrix.iter().zip(ser.matrix.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn coil_scaling_is_exact() {
        let seq = ffp_2d(1e-5, 8);
        let grid = grid_3x3();
        let q = QuadratureSpec::default();
        let base = assemble(&specs(&seq, KernelVariant::Equilibrium), &grid, &q, &AssemblyOptions::default()).unwrap();
        let scaled_seq = Arc::new(
            ScannerSequence::with_coils(
                seq.selection().clone(),
                seq.drive().clone(),
                vec![Vec3::new(4.0, 0.0, 0.0), Vec3::new(0.0, 4.0, 0.0)],
                seq.measurement_time(),
                seq.sample_interval(),
            )
            .unwrap(),
        );
        let scaled = assemble(&specs(&scaled_seq, KernelVariant::Equilibrium), &grid, &q, &AssemblyOptions::default()).unwrap();
        for (a, b) in base.matrix.iter().zip(scaled.matrix.iter()) {
            assert_eq!(4.0 * a, *b);
        }
    }

    #[test]
    fn impulse_filter_reproduces_equilibrium() {
        let seq = ffp_2d(1e-5, 8);
        let q = QuadratureSpec::default();
        let eq = assemble(&specs(&seq, KernelVariant::Equilibrium), &grid_3x3(), &q, &AssemblyOptions::default()).unwrap();
        let filt = KernelVariant::Filtered(Filter::impulse(1e-5).unwrap());
        let fi = assemble(&specs(&seq, filt), &grid_3x3(), &q, &AssemblyOptions::default()).unwrap();
        assert_eq!(fi.variant, "filtered");
        for (a, b) in eq.matrix.iter().zip(fi.matrix.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-300);
        }
    }

    #[test]
    fn containment_enforced_or_warned() {
        let selection = SelectionField::diagonal(ScanMode::Ffp, &[-1.0, -1.0], 0.0).unwrap();
        let drive = DriveField::new(Waveform::Sinusoidal, &[1.0, 1.0], &[3.0, 2.0]).unwrap();
        let seq = Arc::new(ScannerSequence::new(selection, drive, 1.0, 0.125).unwrap());
        let grid = SpatialGrid::from_cell_count(&[-0.5, -0.5], &[0.5, 0.5], &[2, 2]).unwrap();
        let sp = specs(&seq, KernelVariant::Limit);
        let q = QuadratureSpec::default();
        assert!(matches!(
            assemble(&sp, &grid, &q, &AssemblyOptions::default()),
            Err(Error::Configuration(_))
        ));
        let op = assemble(&sp, &grid, &q, &AssemblyOptions { containment: Containment::Warn, ..Default::default() }).unwrap();
        assert_eq!(op.warnings.len(), 1);
    }

    #[test]
    fn binary_round_trip() {
        let seq = ffp_2d(1e-5, 8);
        let mut op = assemble(&specs(&seq, KernelVariant::Limit), &grid_3x3(), &QuadratureSpec::default(), &AssemblyOptions::default()).unwrap();
        op.config_hash = "abc123".into();
        let mut buf = Vec::new();
        op.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        let back = OperatorMatrix::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, op);
        assert!(OperatorMatrix::read_binary(&buf[..buf.len() - 1]).is_err());
        let csv = op.to_csv();
        assert_eq!(csv.lines().count(), 16);
        let first: f64 = csv.lines().next().unwrap().split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(first, op.matrix[(0, 2)]);
    }
}
