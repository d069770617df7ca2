pub mod copula;
pub mod divergence;
pub mod error;
pub mod eval;
mod fft;
pub mod marginals;
pub mod nsst;
pub mod signatures;
pub mod store;
pub mod synth;
mod quad;
mod special;

pub use error::{Error, Result};
