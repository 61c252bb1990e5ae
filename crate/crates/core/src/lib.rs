//! Numerical laboratory for smooth solitary waves of the b-family of
//! Camassa-Holm equations on a constant background.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod band;
pub mod conserved;
pub mod criterion;
pub mod error;
pub mod evolution;
pub mod fourier;
pub mod io;
pub mod numeric;
pub mod params;
pub mod spectral;
pub mod sweep;
pub mod verify;
pub mod wave;

pub use error::{Error, Result};
pub use params::{PhasePoint, WaveParams};
pub use wave::{build_profile, build_profile_with, Extent, ProfileOptions, WaveProfile};
