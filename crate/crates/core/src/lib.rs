pub mod arbitrage;
pub mod duality;
pub mod error;
pub mod exec;
pub mod fixtures;
pub mod generate;
pub mod lp;
pub mod model;
pub mod pricing;
pub mod risk;
pub mod settings;
pub mod tree;

pub use error::{Error, Result};
pub use settings::Settings;
