pub mod cli;
pub mod error;
pub mod correspondence;
pub mod geom;
pub mod io;
pub mod objective;
pub mod simulator;
pub mod units;

pub use error::{Error, Result};
