//! Ordering-rule symbol calculus on flat phase space and backward-Euler
//! time slicing of quantum evolution.
//!
//! Everything numeric is generic over the scalar (`f32` or `f64`); the
//! aliases below fix it to `f64`.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod classes;
pub mod coherent;
pub mod container;
pub mod error;
pub mod evolution;
pub mod fock;
pub mod linalg;
pub mod omega;
pub mod ordering;
pub mod phase_grid;
pub mod poly;
pub mod quantizer;
pub mod scalar;

pub use error::{OmegaError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use ordering::OrderingRule;

pub type Complex = scalar::C<f64>;
pub type PhasePoint = phase_grid::PhasePoint<f64>;
pub type PhaseGrid = phase_grid::PhaseGrid<f64>;
pub type Symbol = phase_grid::Symbol<f64>;
pub type CMatrix = linalg::CMatrix<f64>;
pub type MPoly = poly::MPoly<f64>;
pub type Basis = quantizer::Basis<f64>;
pub type OperatorMatrix = quantizer::OperatorMatrix<f64>;
pub type Partition = evolution::Partition<f64>;
pub type Hamiltonian = evolution::Hamiltonian<f64>;
pub type EvolutionSetup = evolution::EvolutionSetup<f64>;
pub type FockSpace = coherent::FockSpace<f64>;
pub type CoherentState = coherent::CoherentState<f64>;
pub type WickSymbol = coherent::WickSymbol<f64>;
