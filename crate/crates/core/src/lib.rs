pub mod audio_io;
pub mod error;
mod fsutil;

pub use error::{Error, Result};
pub use fsutil::write_atomic;
pub mod lld;
pub mod functionals;
pub mod detect;
pub mod eval;
pub mod learn;
pub mod fixtures;

/// Library version, recorded in run logs.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
