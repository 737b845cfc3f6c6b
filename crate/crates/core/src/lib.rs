//! Detection-interval optimization for absorbing receivers in diffusive
//! molecular links with an interfering transmitter.

pub mod arrival;
pub mod ber;
pub mod channel;
pub mod detector;
pub mod error;
pub mod numerics;
pub mod optimizer;
pub mod sim;

pub use error::{Error, Result};
