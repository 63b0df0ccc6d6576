pub mod basis;
pub mod bench;
pub mod closure;
pub mod collision;
pub mod eigen;
pub mod fvsolver;
pub mod pn;
pub mod error;
pub mod realizability;

pub use error::{Error, Result};
