pub mod api;
pub mod baselines;
pub mod cohort;
pub mod error;
pub mod gp;
pub mod linalg;
pub mod moo;
pub mod pareto;
pub mod port;
pub mod protocol;
pub mod record;
pub mod seeds;
pub mod simuser;
pub mod sobol;
pub mod task;
pub mod wire;

pub use error::{Error, Result};
