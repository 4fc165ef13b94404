pub mod constants;
pub mod dynamics;
pub mod error;
pub mod functionals;
pub mod grid;
pub mod interp;
pub mod io;
pub mod linalg;
pub mod minimize;
pub mod mountainpass;
pub mod profiles;

pub use constants::{exponents, thresholds, Exponents, ProblemParams, QClass, Regime, SharpConstants, Thresholds};
pub use error::{Error, Result};
pub use grid::{GridSpec, Profile, RadialGrid};
