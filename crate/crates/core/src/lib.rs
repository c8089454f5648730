//! Constrained adversarial generation of discrete structures.
//!
//! Propositional constraints ([`formula`]) are compiled into reduced ordered
//! decision diagrams ([`circuit`]) on which the probability of satisfying the
//! constraint under a factorized distribution is computed exactly, together
//! with its gradient. [`semloss`] turns that probability into a loss,
//! [`autodiff`] and [`trainer`] use it to penalize an adversarially trained
//! generator, and [`gridworld`] provides the tile-grid tasks and metrics.

pub mod autodiff;
pub mod circuit;
pub mod experiment;
pub mod formula;
pub mod scalar;
pub mod gridworld;
pub mod rng;
pub mod semloss;
pub mod trainer;

/// Default scalar. Training and the CLI run in double precision.
pub type Real = f64;
pub type Tensor = autodiff::Array<Real>;
pub type Weights = autodiff::WeightFile<Real>;
pub type TrainGraph = autodiff::Graph<Real>;
pub type Loss = semloss::LossValue<Real>;
pub type Gradient = circuit::WmcGradient<Real>;
