//! Galerkin discretization of the forward operator with piecewise-constant
//! cells in space and sample-interval functionals in time.

mod assembly;
mod grid;
mod quadrature;

pub use assembly::{assemble, AssemblyOptions, Containment, OperatorMatrix};
pub use grid::{SpatialGrid, TimeGrid};
pub use quadrature::{cell_quadrature, halton, radical_inverse, time_quadrature, QuadratureSpec, TimeIntegration, HALTON_BASES};
