pub mod autodiff;
pub mod data;
pub mod error;
pub mod eval;
pub mod mape;
pub mod net;
pub mod pretrain;
pub mod registry;
pub mod resample;
pub mod seed;
pub mod sitok;

pub use error::{AomError, Result};
