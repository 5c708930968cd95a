//! Numerical tools for sharp constants in `L^p` inequalities between partial
//! derivatives: torus Fourier multipliers, homogeneous symbols, explicit
//! witnesses, Paley-Walsh martingales, extremizer search and transference
//! sweeps.

pub mod error;
pub mod estimator;
pub mod io;
pub mod martingale;
pub mod pde;
pub mod symbols;
pub mod witness;
pub mod torus;
pub mod transference;

pub use error::{Error, Result};
