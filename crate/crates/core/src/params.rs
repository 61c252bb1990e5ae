use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The triple `(b, c, kappa)` selecting one smooth solitary wave.
///
/// Construction through [`WaveParams::new`] enforces the existence window
/// `0 < kappa < c / (b + 1)`, which also gives `c > kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveParams {
    pub b: f64,
    pub c: f64,
    pub kappa: f64,
}

impl WaveParams {
    pub fn new(b: f64, c: f64, kappa: f64) -> Result<Self> {
        let p = Self { b, c, kappa };
        p.validate()?;
        Ok(p)
    }

    /// Shorthand for the `b = 1` member of the family.
    pub fn ch(c: f64, kappa: f64) -> Result<Self> {
        Self::new(1.0, c, kappa)
    }

    pub fn validate(&self) -> Result<()> {
        let Self { b, c, kappa } = *self;
        if !(b.is_finite() && c.is_finite() && kappa.is_finite()) {
            return Err(Error::Inadmissible("parameters must be finite".into()));
        }
        if b <= 0.0 {
            return Err(Error::Inadmissible(format!("b > 0 violated (b = {b})")));
        }
        if c <= 0.0 {
            return Err(Error::Inadmissible(format!("c > 0 violated (c = {c})")));
        }
        if kappa <= 0.0 {
            return Err(Error::Inadmissible(format!(
                "kappa > 0 violated (kappa = {kappa})"
            )));
        }
        let edge = c / (b + 1.0);
        if kappa >= edge {
            return Err(Error::Inadmissible(format!(
                "kappa < c/(b+1) violated (kappa = {kappa}, c/(b+1) = {edge})"
            )));
        }
        Ok(())
    }

    /// `c - kappa`, the speed of the wave relative to the background.
    pub fn gamma(&self) -> f64 {
        self.c - self.kappa
    }

    pub fn is_ch(&self) -> bool {
        self.b == 1.0
    }

    pub(crate) fn require_ch(&self, what: &str) -> Result<()> {
        if self.is_ch() {
            Ok(())
        } else {
            Err(Error::Unsupported(format!("{what} is defined for b = 1 only (b = {})", self.b)))
        }
    }

    pub fn with_c(&self, c: f64) -> Result<Self> {
        Self::new(self.b, c, self.kappa)
    }

    pub fn with_kappa(&self, kappa: f64) -> Result<Self> {
        Self::new(self.b, self.c, kappa)
    }
}

/// A point `(phi, psi = phi_xi)` of the travelling-wave phase plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub phi: f64,
    pub psi: f64,
}

impl PhasePoint {
    pub fn new(phi: f64, psi: f64) -> Self {
        Self { phi, psi }
    }
}
