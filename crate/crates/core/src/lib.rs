pub mod battery_model;
pub mod data;
pub mod error;
pub mod experiments;
pub mod frac_calc;
pub mod metrics;
pub mod nn;
pub mod pinn_loss;
pub mod training;

pub use error::{Error, Result};
