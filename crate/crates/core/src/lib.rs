//! Multi-horizon power-demand forecasting.
//!
//! Four single-step forecasters (ARMA, ε-SVR, a one-hidden-layer NAR network
//! and an LSTM) are trained once per horizon offset under a direct
//! multi-step strategy ([`multistep`]), combined per step into a hybrid, and
//! scored per step by MAE and error variance ([`bench`]).

pub mod arma;
pub mod bench;
pub mod data;
pub mod error;
pub mod lstm;
pub mod multistep;
pub mod nar;
pub mod svr;
mod linalg;

pub use error::{Error, Result};
