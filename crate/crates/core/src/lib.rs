//! Lower bounds on the decay rate of SIS epidemics over directed networks.
//!
//! - [`graph`]: contact networks, edge lists, connectivity, random families.
//! - [`spectral`]: sparse Metzler matrices, spectral abscissa, `e^{Mt}v`.
//! - [`bounds`]: the first-order bound `ρ₁` and the second-order bound `ρ₂`.
//! - [`exact`]: the exact decay rate from the `2ⁿ`-state Markov chain.
//! - [`simulator`]: Gillespie ensembles and log-linear decay fits.
//! - [`cli`]: the `sisbound` command-line tool.

pub mod bounds;
pub mod cli;
pub mod exact;
pub mod graph;
pub mod simulator;
pub mod spectral;

pub use bounds::{compute_bounds, BoundsReport, SecondOrder, SisParams};
pub use graph::{DiGraph, Family, GraphGenSpec};
pub use spectral::{EigOptions, EigResult, SparseMetzler};
