//! Pseudo-spectral RK4 evolution of the b-family in momentum form,
//! `m_t + u m_x + b u_x m = 0`, `m = (1 - d^2/dx^2) u`, on a periodic domain.

use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conserved::{charge_q, conserved_family_bneq1, hamiltonian_h, q1, q2, Field};
use crate::error::{Error, Result};
use crate::fourier::Spectral;
use crate::io::write_columns;
use crate::params::WaveParams;
use crate::spectral::profile_on_window;
use crate::wave::WaveProfile;

/// Everything a run needs; serialised as the JSON config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub b: f64,
    pub c: f64,
    pub kappa: f64,
    /// Period of the domain.
    pub domain_length: f64,
    /// Grid points, a power of two.
    pub n_points: usize,
    /// Fixed step; `None` picks `0.5 dx / max|u|` from the initial data.
    #[serde(default)]
    pub dt: Option<f64>,
    pub t_final: f64,
    #[serde(default = "default_true")]
    pub dealias: bool,
    /// Interval between trace records.
    #[serde(default = "default_record")]
    pub record_every: f64,
    /// Interval between stored snapshots of `m`; none when absent.
    #[serde(default)]
    pub snapshot_every: Option<f64>,
    /// `H^1` size of the initial perturbation.
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

fn default_record() -> f64 {
    0.1
}

impl EvolutionConfig {
    pub fn new(params: WaveParams, domain_length: f64, n_points: usize, t_final: f64) -> Self {
        Self {
            b: params.b,
            c: params.c,
            kappa: params.kappa,
            domain_length,
            n_points,
            dt: None,
            t_final,
            dealias: true,
            record_every: default_record(),
            snapshot_every: None,
            epsilon: 0.0,
            seed: 0,
        }
    }

    pub fn params(&self) -> Result<WaveParams> {
        WaveParams::new(self.b, self.c, self.kappa)
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        let bad = |msg: String| Err(Error::Domain(msg));
        if !self.n_points.is_power_of_two() || self.n_points < 16 {
            return bad(format!("n_points must be a power of two >= 16, got {}", self.n_points));
        }
        if !(self.domain_length > 0.0) {
            return bad(format!("domain_length must be positive, got {}", self.domain_length));
        }
        if !(self.t_final >= 0.0) {
            return bad(format!("t_final must be non-negative, got {}", self.t_final));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return bad(format!("dt must be positive, got {dt}"));
            }
        }
        if !(self.record_every > 0.0) {
            return bad(format!("record_every must be positive, got {}", self.record_every));
        }
        if !(0.0..=0.1).contains(&self.epsilon) {
            return bad(format!("epsilon must lie in [0, 0.1], got {}", self.epsilon));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `(1 - d^2/dx^2)^{-1} v` on the periodic grid.
pub fn helmholtz_inverse(sp: &Spectral, v: &[f64]) -> Vec<f64> {
    sp.helmholtz_inverse(v)
}

/// Right-hand side `m_t` with spectral derivatives.
///
/// `b = 1` uses the conservative form `-(u m)_x`; other `b` the advective
/// form `-(u m_x + b m u_x)`. With `dealias`, products are filtered by the
/// two-thirds rule before differentiation.
pub fn rhs(sp: &Spectral, m: &[f64], b: f64, dealias: bool) -> Result<Vec<f64>> {
    if let Some(i) = m.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Positivity(format!("m > 0 violated at node {i} (m = {})", m[i])));
    }
    let filter = |v: Vec<f64>| if dealias { sp.dealias(&v) } else { v };
    let u = sp.helmholtz_inverse(m);
    if b == 1.0 {
        let um: Vec<f64> = u.iter().zip(m).map(|(a, b)| a * b).collect();
        Ok(sp.derivative(&filter(um)).into_iter().map(|v| -v).collect())
    } else {
        Ok(advective(sp, m, &u, b, dealias))
    }
}

fn advective(sp: &Spectral, m: &[f64], u: &[f64], b: f64, dealias: bool) -> Vec<f64> {
    let mx = sp.derivative(m);
    let ux = sp.derivative(u);
    let prod: Vec<f64> = (0..m.len()).map(|j| u[j] * mx[j] + b * m[j] * ux[j]).collect();
    let prod = if dealias { sp.dealias(&prod) } else { prod };
    prod.into_iter().map(|v| -v).collect()
}

/// Advective form for any `b`, used to cross-check the conservative one.
pub fn rhs_advective(sp: &Spectral, m: &[f64], b: f64) -> Vec<f64> {
    let u = sp.helmholtz_inverse(m);
    advective(sp, m, &u, b, false)
}

/// The three conserved quantities: `(H, Q1, Q2)` for `b = 1`, `(E, F1, F2)` otherwise.
pub fn invariants(field: &Field, b: f64) -> Result<[f64; 3]> {
    if b == 1.0 {
        Ok([hamiltonian_h(field)?, q1(field)?, q2(field)?])
    } else {
        let (e, f1, f2) = conserved_family_bneq1(field, b)?;
        Ok([e, f1, f2])
    }
}

pub fn invariant_names(b: f64) -> [&'static str; 3] {
    if b == 1.0 {
        ["H", "Q1", "Q2"]
    } else {
        ["E", "F1", "F2"]
    }
}

/// Discrete `H^1` norm `(dx sum v^2 + v_x^2)^{1/2}`, derivative spectral.
pub fn h1_norm(sp: &Spectral, v: &[f64]) -> f64 {
    let vx = sp.derivative(v);
    (sp.dx() * v.iter().zip(&vx).map(|(a, b)| a * a + b * b).sum::<f64>()).sqrt()
}

/// `v(x - s)` by Fourier interpolation.
pub fn shift(sp: &Spectral, v: &[f64], s: f64) -> Vec<f64> {
    sp.apply(v, |k, nyq| {
        if nyq {
            Complex64::new((k * s).cos(), 0.0)
        } else {
            Complex64::from_polar(1.0, -k * s)
        }
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct OrbitalFit {
    pub distance: f64,
    /// The minimising shift, in `[-L/2, L/2)`.
    pub shift: f64,
}

/// `min_s |m - mu(. - s)|_{H^1}`: best cyclic shift by FFT cross-correlation,
/// then Newton on the trigonometric correlation polynomial.
pub fn orbital_fit(sp: &Spectral, m: &[f64], mu: &[f64]) -> OrbitalFit {
    let n = m.len();
    let fm = sp.forward(m);
    let fmu = sp.forward(mu);
    let k = sp.wavenumbers();
    let nyquist = n / 2;
    // the mean and the Nyquist mode do not move under real shifts
    let weight = |j: usize| if j == 0 || j == nyquist { 0.0 } else { 1.0 + k[j] * k[j] };
    // correlation C(s) = sum_j w_j Re(fm_j conj(fmu_j) e^{i k_j s}), up to a constant
    let cross: Vec<Complex64> = (0..n).map(|j| fm[j] * fmu[j].conj() * weight(j)).collect();
    let mut spec = cross.clone();
    let plan = rustfft::FftPlanner::new().plan_fft_inverse(n);
    plan.process(&mut spec);
    let best = (0..n).max_by(|&a, &b| spec[a].re.total_cmp(&spec[b].re)).unwrap_or(0);
    let dx = sp.dx();
    let c_at = |i: usize| spec[i % n].re;
    let (cm, c0, cp) = (c_at(best + n - 1), c_at(best), c_at(best + 1));
    let curv = cm - 2.0 * c0 + cp;
    let mut s = best as f64 * dx + if curv < 0.0 { 0.5 * (cm - cp) / curv * dx } else { 0.0 };
    for _ in 0..20 {
        let (mut d1, mut d2) = (0.0, 0.0);
        for j in 0..n {
            let z = cross[j] * Complex64::from_polar(1.0, k[j] * s);
            d1 += -k[j] * z.im;
            d2 += -k[j] * k[j] * z.re;
        }
        if d2 >= 0.0 {
            break;
        }
        let step = d1 / d2;
        s -= step;
        if step.abs() < 1e-15 * sp.length() {
            break;
        }
    }
    let length = sp.length();
    let s = (s + 0.5 * length).rem_euclid(length) - 0.5 * length;
    let shifted = shift(sp, mu, s);
    let diff: Vec<f64> = m.iter().zip(&shifted).map(|(a, b)| a - b).collect();
    OrbitalFit {
        distance: h1_norm(sp, &diff),
        shift: s,
    }
}

/// Orbital `H^1` distance of `field` to the translates of the profile's `mu`,
/// which must sit on the same periodic grid.
pub fn orbital_distance(field: &Field, profile: &WaveProfile) -> Result<f64> {
    if field.len() != profile.len() || (field.dx() - profile.dxi).abs() > 1e-12 * profile.dxi {
        return Err(Error::Domain("profile and field grids differ".into()));
    }
    let sp = Spectral::new(field.len(), field.length());
    Ok(orbital_fit(&sp, &field.m, &profile.mu).distance)
}

#[derive(Debug, Clone, Serialize)]
pub struct Snapshot {
    pub t: f64,
    pub m: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolutionTrace {
    pub b: f64,
    pub dt: f64,
    pub steps: usize,
    pub times: Vec<f64>,
    /// One series per conserved quantity, named by [`invariant_names`].
    pub invariants: [Vec<f64>; 3],
    /// Present when a reference profile was supplied.
    pub orbital_distance: Option<Vec<f64>>,
    pub snapshots: Vec<Snapshot>,
    #[serde(skip)]
    pub x: Vec<f64>,
    #[serde(skip)]
    pub final_m: Vec<f64>,
    /// Why the run stopped early, if it did.
    pub failure: Option<String>,
}

impl EvolutionTrace {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    /// `max_t |X(t) - X(0)| / |X(0)|` per conserved quantity.
    pub fn relative_drifts(&self) -> [f64; 3] {
        let drift = |s: &Vec<f64>| {
            let x0 = s[0];
            let d = s.iter().map(|v| (v - x0).abs()).fold(0.0, f64::max);
            if x0 == 0.0 {
                d
            } else {
                d / x0.abs()
            }
        };
        [drift(&self.invariants[0]), drift(&self.invariants[1]), drift(&self.invariants[2])]
    }

    pub fn max_orbital_distance(&self) -> Option<f64> {
        self.orbital_distance.as_ref().map(|d| d.iter().copied().fold(0.0, f64::max))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let names = invariant_names(self.b);
        let od = self
            .orbital_distance
            .clone()
            .unwrap_or_else(|| vec![f64::NAN; self.times.len()]);
        write_columns(
            path,
            &["t", names[0], names[1], names[2], "orbital_distance"],
            &[&self.times, &self.invariants[0], &self.invariants[1], &self.invariants[2], &od],
        )
    }

    /// One `x,m` file per snapshot, named `snapshot_<index>.csv`.
    pub fn write_snapshots(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        let mut out = Vec::new();
        for (i, s) in self.snapshots.iter().enumerate() {
            let path = dir.join(format!("snapshot_{i:04}.csv"));
            write_columns(&path, &["x", "m"], &[&self.x, &s.m])?;
            out.push(path);
        }
        Ok(out)
    }
}

/// Largest `dt max|u| / dx` tolerated during a run.
const CFL_LIMIT: f64 = 1.0;
const BLOW_UP: f64 = 1e6;

/// Classic RK4 from `f0` to `cfg.t_final`. Positivity loss, blow-up and a
/// violated step budget stop the run and are reported in `failure`.
pub fn evolve(f0: &Field, cfg: &EvolutionConfig, reference: Option<&WaveProfile>) -> Result<EvolutionTrace> {
    cfg.validate()?;
    if f0.len() != cfg.n_points || (f0.length() - cfg.domain_length).abs() > 1e-9 * cfg.domain_length {
        return Err(Error::Domain("initial field does not match the configured grid".into()));
    }
    let sp = Spectral::new(cfg.n_points, cfg.domain_length);
    let dx = sp.dx();
    let max_u = |m: &[f64]| sp.helmholtz_inverse(m).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let dt_target = cfg.dt.unwrap_or_else(|| 0.5 * dx / max_u(&f0.m).max(1e-12));
    let steps = if cfg.t_final == 0.0 { 0 } else { (cfg.t_final / dt_target).ceil() as usize };
    let dt = if steps == 0 { dt_target } else { cfg.t_final / steps as f64 };
    let record_stride = ((cfg.record_every / dt).round() as usize).max(1);
    let snap_stride = cfg.snapshot_every.map(|s| ((s / dt).round() as usize).max(1));

    let field_of = |m: &[f64]| Field::new(f0.x[0], cfg.domain_length, m.to_vec(), cfg.kappa);
    let mut trace = EvolutionTrace {
        b: cfg.b,
        dt,
        steps: 0,
        times: Vec::new(),
        invariants: [Vec::new(), Vec::new(), Vec::new()],
        orbital_distance: reference.map(|_| Vec::new()),
        snapshots: Vec::new(),
        x: f0.x.clone(),
        final_m: Vec::new(),
        failure: None,
    };
    let record = |trace: &mut EvolutionTrace, t: f64, m: &[f64]| -> Result<()> {
        let inv = invariants(&field_of(m), cfg.b)?;
        trace.times.push(t);
        for (s, v) in trace.invariants.iter_mut().zip(inv) {
            s.push(v);
        }
        if let (Some(prof), Some(d)) = (reference, trace.orbital_distance.as_mut()) {
            d.push(orbital_fit(&sp, m, &prof.mu).distance);
        }
        Ok(())
    };

    let mut m = f0.m.clone();
    record(&mut trace, 0.0, &m)?;
    if snap_stride.is_some() {
        trace.snapshots.push(Snapshot { t: 0.0, m: m.clone() });
    }
    let axpy = |base: &[f64], k: &[f64], h: f64| -> Vec<f64> { base.iter().zip(k).map(|(a, b)| a + h * b).collect() };
    for step in 1..=steps {
        let stage = || -> Result<Vec<f64>> {
            let k1 = rhs(&sp, &m, cfg.b, cfg.dealias)?;
            let k2 = rhs(&sp, &axpy(&m, &k1, 0.5 * dt), cfg.b, cfg.dealias)?;
            let k3 = rhs(&sp, &axpy(&m, &k2, 0.5 * dt), cfg.b, cfg.dealias)?;
            let k4 = rhs(&sp, &axpy(&m, &k3, dt), cfg.b, cfg.dealias)?;
            Ok((0..m.len())
                .map(|j| m[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
                .collect())
        };
        let t = step as f64 * dt;
        let next = match stage() {
            Ok(v) => v,
            Err(e) => {
                trace.failure = Some(format!("t = {t}: {e}"));
                break;
            }
        };
        m = next;
        trace.steps = step;
        let peak = m.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if !peak.is_finite() || peak > BLOW_UP {
            trace.failure = Some(format!("t = {t}: blow-up, max|m| = {peak}"));
            break;
        }
        if let Some(i) = m.iter().position(|&v| !(v > 0.0)) {
            trace.failure = Some(format!("t = {t}: m > 0 violated at node {i}"));
            break;
        }
        let courant = dt * max_u(&m) / dx;
        if courant > CFL_LIMIT {
            trace.failure = Some(format!("t = {t}: step budget exceeded, dt max|u| / dx = {courant}"));
            break;
        }
        if step % record_stride == 0 || step == steps {
            record(&mut trace, t, &m)?;
        }
        if let Some(s) = snap_stride {
            if step % s == 0 || step == steps {
                trace.snapshots.push(Snapshot { t, m: m.clone() });
            }
        }
    }
    trace.final_m = m;
    Ok(trace)
}

/// Mean-zero Gaussian bump scaled to `H^1` norm `epsilon`; centre, width and
/// sign drawn from a ChaCha stream seeded with `seed`.
pub fn gaussian_perturbation(sp: &Spectral, x: &[f64], epsilon: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centre = rng.gen_range(-5.0..5.0);
    let width = rng.gen_range(0.5..2.0);
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let mut g: Vec<f64> = x.iter().map(|&x| (-(x - centre) * (x - centre) / (2.0 * width * width)).exp()).collect();
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    g.iter_mut().for_each(|v| *v -= mean);
    let norm = h1_norm(sp, &g);
    if epsilon == 0.0 || norm == 0.0 {
        return vec![0.0; g.len()];
    }
    g.into_iter().map(|v| sign * epsilon * v / norm).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub params: WaveParams,
    pub epsilon: f64,
    pub seed: u64,
    pub t_final: f64,
    pub n_points: usize,
    pub domain_length: f64,
    pub dt: f64,
    pub initial_distance: f64,
    pub max_distance: f64,
    /// Maximum distance over `[0, T/2]` and over `(T/2, T]`; a bounded orbit
    /// keeps the second no larger than the first.
    pub max_distance_halves: [f64; 2],
    /// `max_distance / epsilon`; absent for `epsilon = 0`.
    pub ratio: Option<f64>,
    pub relative_drifts: [f64; 3],
    pub failure: Option<String>,
    #[serde(skip)]
    pub trace: EvolutionTrace,
}

/// Perturbs the wave, evolves it and tracks the orbital distance.
pub fn stability_experiment(cfg: &EvolutionConfig) -> Result<StabilityReport> {
    cfg.validate()?;
    let params = cfg.params()?;
    let profile = profile_on_window(&params, cfg.n_points, cfg.domain_length)?;
    let sp = Spectral::new(cfg.n_points, cfg.domain_length);
    let bump = gaussian_perturbation(&sp, &profile.xi, cfg.epsilon, cfg.seed);
    let m0: Vec<f64> = profile.mu.iter().zip(&bump).map(|(a, b)| a + b).collect();
    let f0 = Field::new(profile.xi[0], cfg.domain_length, m0, cfg.kappa);
    let trace = evolve(&f0, cfg, Some(&profile))?;
    let dist = trace.orbital_distance.clone().unwrap_or_default();
    let max_distance = dist.iter().copied().fold(0.0, f64::max);
    let mut halves = [0.0_f64; 2];
    for (t, d) in trace.times.iter().zip(&dist) {
        let h = &mut halves[usize::from(*t > 0.5 * cfg.t_final)];
        *h = h.max(*d);
    }
    Ok(StabilityReport {
        params,
        epsilon: cfg.epsilon,
        seed: cfg.seed,
        t_final: cfg.t_final,
        n_points: cfg.n_points,
        domain_length: cfg.domain_length,
        dt: trace.dt,
        initial_distance: dist.first().copied().unwrap_or(f64::NAN),
        max_distance,
        max_distance_halves: halves,
        ratio: (cfg.epsilon > 0.0).then(|| max_distance / cfg.epsilon),
        relative_drifts: trace.relative_drifts(),
        failure: trace.failure.clone(),
        trace,
    })
}

/// Relative `H^1` mismatch between the evolved wave and the best translate of
/// the initial profile, and the shift error against `c t`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TravelCheck {
    pub relative_mismatch: f64,
    pub shift_error: f64,
}

pub fn travelling_check(profile: &WaveProfile, m: &[f64], t: f64) -> TravelCheck {
    let sp = Spectral::new(profile.len(), profile.dxi * profile.len() as f64);
    let fit = orbital_fit(&sp, m, &profile.mu);
    let dev: Vec<f64> = profile.mu.iter().map(|v| v - profile.params.kappa).collect();
    let length = sp.length();
    let expected = (profile.params.c * t + 0.5 * length).rem_euclid(length) - 0.5 * length;
    let mut err = (fit.shift - expected).abs();
    err = err.min(length - err);
    TravelCheck {
        relative_mismatch: fit.distance / h1_norm(&sp, &dev),
        shift_error: err,
    }
}

/// Charge of the field, for callers tracking the stability functional.
pub fn charge(field: &Field) -> Result<f64> {
    charge_q(field)
}
