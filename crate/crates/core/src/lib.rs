//! Modelling and analysis of autonomous probabilistic finite-state machines.

pub mod analysis;
pub mod format;
pub mod microsim;
pub mod model;
pub mod montecarlo;
pub mod scalar;
pub mod scenario;
pub mod statespace;

pub use format::{load_model, print_model, Diagnostic};
pub use model::{Machine, Model, ModelError, Valuation};
pub use scalar::{Probability, Rational, Scalar};
pub use statespace::{build, BuildMode, BuildOptions, StateSpace};

/// Double precision state space.
pub type StateSpace64 = StateSpace<f64>;
/// Single precision state space.
pub type StateSpace32 = StateSpace<f32>;
/// State space with exact rational probabilities.
pub type ExactStateSpace = StateSpace<Rational>;
