//! Shared fixtures for the benchmarks in `benches/`.

use mpisv::config::{CellSpec, ExperimentConfig, VariantKind};
use mpisv::discretize::{assemble, OperatorMatrix};

/// Desk-scale 2D FFP configuration on a `cells × cells` grid.
pub fn ffp_2d(cells: usize, variant: VariantKind, parallel: bool) -> ExperimentConfig {
    ExperimentConfig {
        cell_spec: CellSpec::Count,
        cells: vec![cells as f64; 2],
        variant,
        parallel,
        ..ExperimentConfig::default()
    }
}

pub fn operator(config: &ExperimentConfig) -> OperatorMatrix {
    let specs = config.members().unwrap().remove(0).specs;
    assemble(&specs, &config.grid().unwrap(), &config.quadrature(), &config.assembly_options()).unwrap()
}
