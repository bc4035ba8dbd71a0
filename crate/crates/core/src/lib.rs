//! Low-switching policy optimization on finite discounted MDPs.
//!
//! The crate covers the whole loop: an online sensitivity-sampled dataset that
//! changes rarely, width-based known sets and exploration bonuses, a natural
//! policy gradient inner loop whose critics are fitted from importance-weighted
//! Monte-Carlo returns, and exact dynamic-programming oracles for checking all
//! of it. Numeric code is generic over [`Scalar`] (`f32` / `f64`); the aliases
//! below fix it to `f64`.

// `!(x > 0)` is how NaN gets rejected along with the rest.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bonus;
pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod evaluation;
pub mod function_class;
pub mod mdp;
pub mod policy;
pub mod scalar;
pub mod sensitivity;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mdp = mdp::MdpSpec<f64>;
pub type Augmented = mdp::AugmentedMdp<f64>;
pub type Class = function_class::FunctionClass<f64>;
pub type Dataset = sensitivity::SensitivityDataset<f64>;
pub type Bonus = bonus::BonusOracle<f64>;
pub type Policy = policy::SoftmaxPolicy<f64>;
pub type Mixture = policy::MixturePolicy<f64>;
pub type Run = driver::RunOutput<f64>;
