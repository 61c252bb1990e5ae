//! Travelling solitary waves: phase plane, turning point and sampled profiles.
//!
//! For speed `c` and background `kappa` the wave shape `phi(xi)`, `xi = x - c t`,
//! solves `phi'' = phi - mu(phi)` with `mu(phi) = kappa (gamma / (c - phi))^b`
//! and `gamma = c - kappa`. The profile is the homoclinic orbit to the saddle
//! `(kappa, 0)`; its crest is the turning point `G`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_columns;
use crate::numeric::{binomial_defect_over_sq, bisect, pow1p_m1_over, pow1p_m1_over_z};
use crate::params::{PhasePoint, WaveParams};

/// Momentum density along the wave, `kappa (gamma / (c - phi))^b`.
pub fn mu_of_phi(params: &WaveParams, phi: f64) -> f64 {
    mu_from_gap(params, params.c - phi)
}

fn mu_from_gap(params: &WaveParams, c_minus_phi: f64) -> f64 {
    let ratio = params.gamma() / c_minus_phi;
    if params.b == 1.0 {
        params.kappa * ratio
    } else {
        params.kappa * ratio.powf(params.b)
    }
}

fn check_phi(params: &WaveParams, phi: f64) -> Result<()> {
    if !phi.is_finite() || phi >= params.c {
        return Err(Error::Domain(format!(
            "phi < c violated (phi = {phi}, c = {})",
            params.c
        )));
    }
    Ok(())
}

/// Potential with `phi'' = -V'(phi)`, normalised so that `1/2 psi^2 + V` is
/// the first integral for every `b`.
///
/// `b = 1`: `-phi^2/2 - kappa gamma ln(c - phi)`;
/// otherwise `-phi^2/2 + kappa gamma^b (c - phi)^(1-b) / (b - 1)`.
pub fn potential(params: &WaveParams, phi: f64) -> Result<f64> {
    check_phi(params, phi)?;
    let WaveParams { b, c, kappa } = *params;
    let gamma = params.gamma();
    let v = if b == 1.0 {
        -0.5 * phi * phi - kappa * gamma * (c - phi).ln()
    } else {
        -0.5 * phi * phi + kappa * gamma.powf(b) * (c - phi).powf(1.0 - b) / (b - 1.0)
    };
    Ok(v)
}

/// Right-hand side of the first-order travelling-wave system,
/// `(phi, psi)' = (psi, phi - mu(phi))`.
pub fn vector_field(p: PhasePoint, params: &WaveParams) -> Result<PhasePoint> {
    check_phi(params, p.phi)?;
    let rhs = if params.b == 1.0 {
        // phi - kappa gamma / (c - phi), factored so both fixed points are exact
        (p.phi - params.kappa) * (params.gamma() - p.phi) / (params.c - p.phi)
    } else {
        p.phi - mu_of_phi(params, p.phi)
    };
    Ok(PhasePoint::new(p.psi, rhs))
}

/// Total energy of a phase point.
///
/// For `b = 1` this is `1/2 psi^2 + V(phi)`. For `b != 1` the conventional
/// scaling `1/2 (b-1)(psi^2 - phi^2) + kappa gamma^b (c - phi)^(1-b)` is used,
/// which is `(b - 1)` times the normalised first integral.
pub fn energy(p: PhasePoint, params: &WaveParams) -> Result<f64> {
    let e = 0.5 * p.psi * p.psi + potential(params, p.phi)?;
    Ok(if params.b == 1.0 { e } else { (params.b - 1.0) * e })
}

/// Energy level of the homoclinic orbit, `energy((kappa, 0))`.
///
/// For `b = 1`: `-kappa^2/2 - kappa gamma ln(gamma)`; for `b != 1` it is
/// `c kappa - (b + 1) kappa^2 / 2`.
pub fn homoclinic_energy(params: &WaveParams) -> f64 {
    let WaveParams { b, c, kappa } = *params;
    if b == 1.0 {
        -0.5 * kappa * kappa - kappa * params.gamma() * params.gamma().ln()
    } else {
        c * kappa - 0.5 * (b + 1.0) * kappa * kappa
    }
}

/// The centre of the phase plane: the fixed point in `(kappa, c)`.
/// Equals `c - kappa` when `b = 1`.
pub fn center(params: &WaveParams) -> Result<f64> {
    if params.b == 1.0 {
        return Ok(params.gamma());
    }
    let WaveParams { b, c, kappa } = *params;
    let k = kappa * params.gamma().powf(b);
    // phi - mu(phi) is concave, zero at kappa and maximal where
    // (c - phi)^(b+1) = b K; the centre is the root to the right of that.
    let peak = c - (b * k).powf(1.0 / (b + 1.0));
    let h = |phi: f64| phi - mu_of_phi(params, phi);
    let hi = c - 1e-15 * c;
    bisect(h, peak.max(kappa), hi)
}

/// `E_hom - V(phi)` in normalised units, evaluated from the saddle so that it
/// stays accurate as `phi -> kappa`. Positive strictly between `kappa` and `G`.
pub fn homoclinic_gap(params: &WaveParams, phi: f64) -> f64 {
    let d = phi - params.kappa;
    tail_gap(params, d)
}

fn tail_gap(params: &WaveParams, d: f64) -> f64 {
    let gamma = params.gamma();
    let x = d / gamma;
    d * d * (0.5 + params.kappa / gamma * binomial_defect_over_sq(1.0 - params.b, x))
}

/// `E_hom - V(c - u)` written in terms of the clearance `u = c - phi`, which
/// keeps full precision when the crest sits very close to the singular line.
fn clearance_gap(params: &WaveParams, u: f64) -> f64 {
    let WaveParams { b, c, kappa } = *params;
    let gamma = params.gamma();
    let phi = c - u;
    let log_ratio = (u / gamma).ln();
    let a = 1.0 - b;
    let scaled = if a == 0.0 { log_ratio } else { (a * log_ratio).exp_m1() / a };
    0.5 * (phi - kappa) * (phi + kappa) + kappa * gamma * scaled
}

/// Clearance `c - G` of the crest from the singular line.
pub fn turning_clearance(params: &WaveParams) -> Result<f64> {
    params.validate()?;
    let hi = params.c - center(params)?;
    // Halve towards the singular line until the gap changes sign.
    let mut lo = hi;
    loop {
        lo *= 0.5;
        if clearance_gap(params, lo) < 0.0 {
            break;
        }
        if lo < 1e-300 {
            return Err(Error::Bracket(format!(
                "no turning point below c = {} for {params:?}",
                params.c
            )));
        }
    }
    bisect(|u| clearance_gap(params, u), lo, hi)
}

/// Turning point `G`: the crest of the wave, where the homoclinic orbit meets
/// the `phi`-axis to the right of the centre.
pub fn turning_point(params: &WaveParams) -> Result<f64> {
    Ok(params.c - turning_clearance(params)?)
}

/// `(dG/dc, dG/dkappa)` from the closed forms obtained by differentiating
/// `E(G, 0) = E_hom`. Only for `b = 1`.
pub fn turning_point_sensitivities(params: &WaveParams) -> Result<(f64, f64)> {
    params.require_ch("turning-point sensitivity")?;
    let g = turning_point(params)?;
    let WaveParams { c, kappa, .. } = *params;
    let gamma = params.gamma();
    let w = gamma / (c - g);
    let denom = (g - kappa) * (g - gamma);
    let dg_dc = kappa * (c - g) / denom * (w - w.ln() - 1.0);
    let dg_dkappa = -(c - 2.0 * kappa) * (c - g) / denom * w.ln();
    Ok((dg_dc, dg_dkappa))
}

/// Maximum of `mu` along the wave, `mu(G)`.
pub fn mu_max(params: &WaveParams) -> Result<f64> {
    Ok(mu_from_gap(params, turning_clearance(params)?))
}

/// The equivalent form `kappa exp((G^2 - kappa^2) / (2 kappa gamma))`, valid
/// for `b = 1`.
pub fn mu_max_exp_form(params: &WaveParams) -> Result<f64> {
    params.require_ch("exponential form of mu_max")?;
    let g = turning_point(params)?;
    let k = params.kappa;
    Ok(k * ((g * g - k * k) / (2.0 * k * params.gamma())).exp())
}

/// How far the sampled profile extends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extent {
    /// Choose the half-width so that `phi - kappa < tail_tol` at the edge.
    Auto { tail_tol: f64 },
    /// Sample `xi` in `[-half_width, half_width)`.
    HalfWidth(f64),
}

impl Extent {
    /// The wider of two fixed extents; `Auto` defers to the other side.
    pub fn max_with(self, other: Extent) -> Extent {
        match (self, other) {
            (Extent::HalfWidth(a), Extent::HalfWidth(b)) => Extent::HalfWidth(a.max(b)),
            (Extent::Auto { .. }, e) | (e, Extent::Auto { .. }) => e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileOptions {
    pub n_points: usize,
    pub extent: Extent,
    /// Upper bound on the integration substep; the crest scale may force a
    /// smaller one.
    pub max_substep: f64,
}

impl ProfileOptions {
    pub fn new(n_points: usize, extent: Extent) -> Self {
        Self {
            n_points,
            extent,
            max_substep: 0.004,
        }
    }
}

/// A solitary wave sampled on `xi_j = (j - N/2) dxi`, `j = 0..N`, with the
/// crest at `xi = 0`. The grid is also a periodic grid on `[-L, L)`.
#[derive(Debug, Clone)]
pub struct WaveProfile {
    pub params: WaveParams,
    pub xi: Vec<f64>,
    pub dxi: f64,
    pub phi: Vec<f64>,
    pub phi_xi: Vec<f64>,
    pub phi_xixi: Vec<f64>,
    pub mu: Vec<f64>,
    pub mu_xi: Vec<f64>,
    pub mu_xixi: Vec<f64>,
    /// `mu` at the midpoints `xi_j + dxi/2`.
    pub mu_half: Vec<f64>,
    /// `phi - kappa`, kept separately so tail values keep full relative precision.
    pub phi_minus_kappa: Vec<f64>,
    /// `c - phi`, accurate near the crest.
    pub c_minus_phi: Vec<f64>,
    /// Turning value `G` (crest of `phi`).
    pub turning: f64,
    /// Crest of `mu`.
    pub mu_max: f64,
}

impl WaveProfile {
    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    /// Half of the domain length.
    pub fn half_width(&self) -> f64 {
        0.5 * self.dxi * self.len() as f64
    }

    /// Writes `xi,phi,phi_xi,mu,mu_xi,mu_xixi`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_columns(
            path,
            &["xi", "phi", "phi_xi", "mu", "mu_xi", "mu_xixi"],
            &[&self.xi, &self.phi, &self.phi_xi, &self.mu, &self.mu_xi, &self.mu_xixi],
        )
    }
}

/// Length scale of `mu` at the crest, given the clearance `c - G`; steps
/// must resolve it.
pub fn crest_scale(params: &WaveParams, clearance: f64) -> f64 {
    let mu_g = mu_from_gap(params, clearance);
    (clearance / (mu_g - (params.c - clearance)).abs()).sqrt()
}

/// Sampled state on the half line `xi >= 0`.
#[derive(Debug, Clone, Copy)]
struct Sample {
    d: f64,
    c_minus_phi: f64,
    psi: f64,
}

/// Decreasing half of the homoclinic orbit as a scalar flow in `xi`.
///
/// Near the crest the state is `t` with `phi = G - t^2`, which removes the
/// square-root turning singularity. Once `phi - kappa` has fallen below half
/// of `G - kappa` the state becomes `d = phi - kappa` with `d' = -d rho(d)`.
struct HalfOrbit {
    params: WaveParams,
    g: f64,
    mu_g: f64,
    a: f64,
    c_minus_g: f64,
    switch_d: f64,
}

#[derive(Debug, Clone, Copy)]
enum State {
    Crest(f64),
    Tail(f64),
}

impl HalfOrbit {
    fn new(params: WaveParams, clearance: f64) -> Self {
        let g = params.c - clearance;
        Self {
            params,
            g,
            mu_g: mu_from_gap(&params, clearance),
            a: 1.0 - params.b,
            c_minus_g: clearance,
            switch_d: 0.5 * (g - params.kappa),
        }
    }

    /// `gap / s` for `s = G - phi`.
    fn crest_gap_over_s(&self, s: f64) -> f64 {
        let y = s / self.c_minus_g;
        -self.g + 0.5 * s + self.mu_g * pow1p_m1_over_z(self.a, y)
    }

    fn crest_rate(&self, t: f64) -> f64 {
        0.5 * (2.0 * self.crest_gap_over_s(t * t)).max(0.0).sqrt()
    }

    fn rho(&self, d: f64) -> f64 {
        let gamma = self.params.gamma();
        let b = binomial_defect_over_sq(self.a, d / gamma);
        (1.0 + 2.0 * self.params.kappa / gamma * b).max(0.0).sqrt()
    }

    fn tail_rate(&self, d: f64) -> f64 {
        -d * self.rho(d)
    }

    fn step(&self, state: State, h: f64) -> State {
        match state {
            State::Crest(t) => {
                let t = rk4(|t| self.crest_rate(t), t, h);
                let d = (self.g - self.params.kappa) - t * t;
                if d < self.switch_d {
                    State::Tail(d)
                } else {
                    State::Crest(t)
                }
            }
            State::Tail(d) => State::Tail(rk4(|d| self.tail_rate(d), d, h)),
        }
    }

    fn sample(&self, state: State) -> Sample {
        match state {
            State::Crest(t) => {
                let s = t * t;
                let gap = s * self.crest_gap_over_s(s);
                Sample {
                    d: (self.g - self.params.kappa) - s,
                    c_minus_phi: self.c_minus_g + s,
                    psi: -(2.0 * gap.max(0.0)).sqrt(),
                }
            }
            State::Tail(d) => Sample {
                d,
                c_minus_phi: self.params.gamma() - d,
                psi: -d * self.rho(d),
            },
        }
    }

    /// Distance from the crest at which `phi - kappa` first drops below `tail_tol`.
    fn tail_reach(&self, tail_tol: f64, h: f64) -> Result<f64> {
        if !(tail_tol > 0.0 && tail_tol <= 1e-6) {
            return Err(Error::Domain(format!(
                "tail_tol must lie in (0, 1e-6] (got {tail_tol})"
            )));
        }
        let mut state = State::Crest(0.0);
        let mut xi = 0.0;
        while self.d_of(state) >= tail_tol {
            state = self.step(state, h);
            xi += h;
            if xi > 1e4 {
                return Err(Error::NoConvergence(
                    "tail did not reach tail_tol within xi = 1e4".into(),
                ));
            }
        }
        Ok(xi)
    }

    fn d_of(&self, state: State) -> f64 {
        match state {
            State::Crest(t) => (self.g - self.params.kappa) - t * t,
            State::Tail(d) => d,
        }
    }
}

fn rk4<F: Fn(f64) -> f64>(f: F, y: f64, h: f64) -> f64 {
    let k1 = f(y);
    let k2 = f(y + 0.5 * h * k1);
    let k3 = f(y + 0.5 * h * k2);
    let k4 = f(y + h * k3);
    y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Half-width beyond which `phi - kappa < tail_tol`.
pub fn tail_half_width(params: &WaveParams, tail_tol: f64) -> Result<f64> {
    let clearance = turning_clearance(params)?;
    let orbit = HalfOrbit::new(*params, clearance);
    orbit.tail_reach(tail_tol, 0.004_f64.min(crest_scale(params, clearance) / 16.0))
}

/// Grid options that resolve both the tail (to `tail_tol`, plus `margin`
/// in `xi`) and the crest of `mu` (`dxi <= crest_scale / 8`). `N` is the
/// smallest power of two meeting both and `min_n`.
pub fn resolved_options(
    params: &WaveParams,
    tail_tol: f64,
    margin: f64,
    min_n: usize,
) -> Result<ProfileOptions> {
    let half_width = tail_half_width(params, tail_tol)? + margin;
    let scale = crest_scale(params, turning_clearance(params)?);
    let needed = (2.0 * half_width / (scale / 8.0)).ceil() as usize;
    let n = needed.max(min_n).max(64).next_power_of_two();
    Ok(ProfileOptions::new(n, Extent::HalfWidth(half_width)))
}

/// Profile on `n_points` nodes extending until `phi - kappa < tail_tol`.
pub fn build_profile(params: &WaveParams, n_points: usize, tail_tol: f64) -> Result<WaveProfile> {
    build_profile_with(params, &ProfileOptions::new(n_points, Extent::Auto { tail_tol }))
}

pub fn build_profile_with(params: &WaveParams, opts: &ProfileOptions) -> Result<WaveProfile> {
    params.validate()?;
    let n = opts.n_points;
    if n < 64 || !n.is_multiple_of(2) {
        return Err(Error::GridTooCoarse(format!(
            "n_points must be even and >= 64 (got {n})"
        )));
    }
    let clearance = turning_clearance(params)?;
    let g = params.c - clearance;
    let orbit = HalfOrbit::new(*params, clearance);
    let h_cap = opts.max_substep.min(crest_scale(params, clearance) / 16.0);

    let half_width = match opts.extent {
        Extent::HalfWidth(l) => {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Domain(format!("half-width must be positive (got {l})")));
            }
            l
        }
        Extent::Auto { tail_tol } => orbit.tail_reach(tail_tol, h_cap)?,
    };

    let dxi = 2.0 * half_width / n as f64;
    let fine_step = 0.5 * dxi;
    let substeps = (fine_step / h_cap).ceil().max(1.0) as usize;
    let h = fine_step / substeps as f64;

    // Samples at xi = k dxi / 2, k = 0..=n.
    let mut fine = Vec::with_capacity(n + 1);
    let mut state = State::Crest(0.0);
    fine.push(orbit.sample(state));
    for _ in 0..n {
        for _ in 0..substeps {
            state = orbit.step(state, h);
        }
        fine.push(orbit.sample(state));
    }

    let kappa = params.kappa;
    let b = params.b;
    let half = (n / 2) as isize;
    let mut out = WaveProfile {
        params: *params,
        xi: Vec::with_capacity(n),
        dxi,
        phi: Vec::with_capacity(n),
        phi_xi: Vec::with_capacity(n),
        phi_xixi: Vec::with_capacity(n),
        mu: Vec::with_capacity(n),
        mu_xi: Vec::with_capacity(n),
        mu_xixi: Vec::with_capacity(n),
        mu_half: Vec::with_capacity(n),
        phi_minus_kappa: Vec::with_capacity(n),
        c_minus_phi: Vec::with_capacity(n),
        turning: g,
        mu_max: orbit.mu_g,
    };
    for j in 0..n as isize {
        let offset = j - half;
        let s = fine[(2 * offset).unsigned_abs()];
        let sign = if offset < 0 { -1.0 } else { 1.0 };
        let phi = kappa + s.d;
        let psi = sign * s.psi;
        let mu = mu_from_gap(params, s.c_minus_phi);
        let mu_m_kappa = kappa * pow1p_m1_over(-b, -s.d / params.gamma()) * (-b);
        let phi_xixi = s.d - mu_m_kappa;
        let mu_xi = b * mu * psi / s.c_minus_phi;
        let mu_xixi = b * mu
            * ((b + 1.0) * psi * psi / (s.c_minus_phi * s.c_minus_phi)
                + phi_xixi / s.c_minus_phi);
        out.xi.push(offset as f64 * dxi);
        out.phi.push(phi);
        out.phi_xi.push(psi);
        out.phi_xixi.push(phi_xixi);
        out.mu.push(mu);
        out.mu_xi.push(mu_xi);
        out.mu_xixi.push(mu_xixi);
        out.phi_minus_kappa.push(s.d);
        out.c_minus_phi.push(s.c_minus_phi);
        let mid = fine[(2 * offset + 1).unsigned_abs()];
        out.mu_half.push(mu_from_gap(params, mid.c_minus_phi));
    }
    Ok(out)
}

/// One sampled level set of the energy: a closed loop (upper branch left to
/// right, then lower branch back) or a single point.
#[derive(Debug, Clone)]
pub struct Orbit {
    pub energy: f64,
    pub points: Vec<PhasePoint>,
}

impl Orbit {
    /// Writes `phi,psi`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let phi: Vec<f64> = self.points.iter().map(|p| p.phi).collect();
        let psi: Vec<f64> = self.points.iter().map(|p| p.psi).collect();
        write_columns(path, &["phi", "psi"], &[&phi, &psi])
    }
}

/// Level sets of [`energy`] for each requested value, sampled with
/// `n_per_branch` points per branch clustered at the turning points.
///
/// Levels above the homoclinic energy give open orbits; these are cut at
/// `phi = kappa - gamma`. Levels below the centre value give empty orbits.
pub fn phase_portrait(
    params: &WaveParams,
    energies: &[f64],
    n_per_branch: usize,
) -> Result<Vec<Orbit>> {
    params.validate()?;
    let scale = if params.b == 1.0 { 1.0 } else { params.b - 1.0 };
    let e_hom = homoclinic_energy(params) / scale;
    let center = center(params)?;
    let v_center = potential(params, center)?;
    let g = turning_point(params)?;
    let n = n_per_branch.max(2);
    let mut orbits = Vec::with_capacity(energies.len());
    for &e in energies {
        let level = e / scale;
        // Radicand e - V written as (e - E_hom) + gap to keep the saddle exact.
        let excess = level - e_hom;
        let radicand = |phi: f64| excess + homoclinic_gap(params, phi);
        let mut points = Vec::new();
        if level < v_center - 1e-14 * v_center.abs().max(1.0) {
            // empty
        } else if level <= v_center {
            points.push(PhasePoint::new(center, 0.0));
        } else {
            let right = if excess == 0.0 {
                g
            } else {
                bisect(radicand, center, params.c - 1e-15 * params.c)?
            };
            let left = if excess == 0.0 {
                params.kappa
            } else if excess < 0.0 {
                bisect(radicand, params.kappa, center)?
            } else {
                params.kappa - params.gamma()
            };
            let at = |k: usize| {
                let theta = std::f64::consts::PI * k as f64 / (n - 1) as f64;
                left + (right - left) * 0.5 * (1.0 - theta.cos())
            };
            for k in 0..n {
                let phi = at(k);
                points.push(PhasePoint::new(phi, (2.0 * radicand(phi).max(0.0)).sqrt()));
            }
            for k in (0..n).rev() {
                let phi = at(k);
                points.push(PhasePoint::new(phi, -(2.0 * radicand(phi).max(0.0)).sqrt()));
            }
        }
        orbits.push(Orbit { energy: e, points });
    }
    Ok(orbits)
}

/// The homoclinic loop through the saddle `(kappa, 0)` and the crest `(G, 0)`.
pub fn homoclinic_orbit(params: &WaveParams, n_per_branch: usize) -> Result<Orbit> {
    let e = homoclinic_energy(params);
    Ok(phase_portrait(params, &[e], n_per_branch)?.remove(0))
}
