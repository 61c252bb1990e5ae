//! Run configuration: an optional JSON document overlaid by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::Context;
use bchlab::WaveParams;
use clap::Args;
use serde::{Deserialize, Serialize};

/// Flags shared by every subcommand. Anything left unset falls back to the
/// JSON config, then to the subcommand's default.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    #[arg(long = "b", global = true, allow_hyphen_values = true)]
    pub b: Option<f64>,
    #[arg(long = "c", global = true, allow_hyphen_values = true)]
    pub c: Option<f64>,
    #[arg(long = "kappa", global = true, allow_hyphen_values = true)]
    pub kappa: Option<f64>,
    /// Grid points.
    #[arg(long = "n", global = true)]
    pub n: Option<usize>,
    /// Total length of the computational window.
    #[arg(long, global = true)]
    pub domain_length: Option<f64>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true)]
    pub t_final: Option<f64>,
    /// H1 size of the initial perturbation (evolve).
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// Output directory; defaults to $BCHLAB_OUT, then `bchlab-out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Cheaper variant of the subcommand.
    #[arg(long, global = true)]
    pub fast: bool,
    /// JSON file with any of the flag names (snake_case) as keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

/// Keys accepted in the JSON config file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub kappa: Option<f64>,
    pub n: Option<usize>,
    pub domain_length: Option<f64>,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub epsilon: Option<f64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub fast: Option<bool>,
    pub snapshot_every: Option<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// Pass/fail thresholds used in `report.json`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Pointwise energy error along sampled orbits.
    pub orbit_energy: f64,
    /// Profile parity and crest placement.
    pub parity: f64,
    /// Relative drift of conserved quantities during evolution.
    pub drift: f64,
    /// Admissible `max orbital distance / epsilon`.
    pub orbital_ratio: f64,
    /// Relative mismatch between the two criterion routes.
    pub chain_rule: f64,
    /// `|lambda|` of the translation eigenvalue.
    pub zero_eigenvalue: f64,
    /// Minimum drop of the Lagrangian gradient at the wave when the grid is
    /// doubled (second order gives about 4).
    pub refinement_ratio: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            orbit_energy: 1e-10,
            parity: 1e-10,
            drift: 1e-6,
            orbital_ratio: 5.0,
            chain_rule: 1e-4,
            zero_eigenvalue: 1e-4,
            refinement_ratio: 3.5,
        }
    }
}

/// Fully resolved configuration, validated before any subcommand runs.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub params: WaveParams,
    pub n: Option<usize>,
    pub domain_length: Option<f64>,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub epsilon: Option<f64>,
    pub snapshot_every: Option<f64>,
    pub out: PathBuf,
    pub jobs: Option<usize>,
    pub seed: u64,
    pub fast: bool,
    pub tolerances: Tolerances,
}

/// A configuration problem; reported with exit status 2.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn read_file(path: &Path) -> anyhow::Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| Invalid(format!("config {}: {e}", path.display())).into())
}

impl RunConfig {
    /// Overlays `flags` on the config file and checks the result.
    pub fn resolve(flags: &Flags) -> anyhow::Result<Self> {
        let file = match &flags.config {
            Some(p) => read_file(p)?,
            None => FileConfig::default(),
        };
        let out = flags
            .out
            .clone()
            .or(file.out)
            .or_else(|| std::env::var_os("BCHLAB_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("bchlab-out"));
        let b = flags.b.or(file.b).unwrap_or(1.0);
        let c = flags.c.or(file.c).unwrap_or(2.0);
        let kappa = flags.kappa.or(file.kappa).unwrap_or(0.4);
        let params = WaveParams::new(b, c, kappa).map_err(|e| Invalid(e.to_string()))?;
        let cfg = Self {
            params,
            n: flags.n.or(file.n),
            domain_length: flags.domain_length.or(file.domain_length),
            dt: flags.dt.or(file.dt),
            t_final: flags.t_final.or(file.t_final),
            epsilon: flags.epsilon.or(file.epsilon),
            snapshot_every: file.snapshot_every,
            out,
            jobs: flags.jobs.or(file.jobs),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            fast: flags.fast || file.fast.unwrap_or(false),
            tolerances: file.tolerances,
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), Invalid> {
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => {
                Err(Invalid(format!("{name} > 0 violated ({name} = {x})")))
            }
            _ => Ok(()),
        };
        positive("domain_length", self.domain_length)?;
        positive("dt", self.dt)?;
        positive("snapshot_every", self.snapshot_every)?;
        if let Some(t) = self.t_final {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Invalid(format!("t_final >= 0 violated (t_final = {t})")));
            }
        }
        if let Some(e) = self.epsilon {
            if !(0.0..=0.1).contains(&e) {
                return Err(Invalid(format!("0 <= epsilon <= 0.1 violated (epsilon = {e})")));
            }
        }
        if self.jobs == Some(0) {
            return Err(Invalid("jobs >= 1 violated (jobs = 0)".into()));
        }
        Ok(())
    }

    /// Rejects commands whose theory exists only for `b = 1`.
    pub fn require_ch(&self, command: &str) -> Result<(), Invalid> {
        if self.params.b == 1.0 {
            Ok(())
        } else {
            Err(Invalid(format!("{command} requires b = 1 (b = {})", self.params.b)))
        }
    }

    /// Grid size, defaulting per command; must be a power of two.
    pub fn grid(&self, default: usize, min: usize) -> Result<usize, Invalid> {
        let n = self.n.unwrap_or(default);
        if n < min || !n.is_power_of_two() {
            return Err(Invalid(format!(
                "n >= {min} and n a power of two violated (n = {n})"
            )));
        }
        Ok(n)
    }
}
