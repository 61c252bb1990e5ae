//! Conserved functionals of the momentum density, the charge, its variational
//! derivative along the wave, and the travelling-wave Lagrangian.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fourier::Spectral;
use crate::numeric::{fd4_first, fd4_second, fit_slope, sup_norm};
use crate::params::WaveParams;
use crate::wave::WaveProfile;

/// Periodic sample of the momentum density `m` on `x_j = x0 + j dx`.
#[derive(Debug, Clone)]
pub struct Field {
    pub x: Vec<f64>,
    pub m: Vec<f64>,
    pub kappa: f64,
    /// Optional exact `m_x`; spectral differentiation is used otherwise.
    pub m_x: Option<Vec<f64>>,
}

impl Field {
    pub fn new(x0: f64, length: f64, m: Vec<f64>, kappa: f64) -> Self {
        let n = m.len();
        let dx = length / n as f64;
        let x = (0..n).map(|j| x0 + j as f64 * dx).collect();
        Self { x, m, kappa, m_x: None }
    }

    pub fn constant(n: usize, length: f64, kappa: f64) -> Self {
        Self::new(-0.5 * length, length, vec![kappa; n], kappa)
    }

    /// `mu` of a wave profile, with its analytic derivative.
    pub fn from_profile(profile: &WaveProfile) -> Self {
        Self {
            x: profile.xi.clone(),
            m: profile.mu.clone(),
            kappa: profile.params.kappa,
            m_x: Some(profile.mu_xi.clone()),
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn dx(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    pub fn length(&self) -> f64 {
        self.dx() * self.len() as f64
    }

    pub fn derivative(&self) -> Vec<f64> {
        match &self.m_x {
            Some(d) => d.clone(),
            None => Spectral::new(self.len(), self.length()).derivative(&self.m),
        }
    }

    fn check_positive(&self) -> Result<()> {
        match self.m.iter().position(|&v| !(v > 0.0)) {
            Some(i) => Err(Error::Domain(format!(
                "m > 0 violated at x = {} (m = {})",
                self.x[i], self.m[i]
            ))),
            None => Ok(()),
        }
    }
}

/// Rectangle sum over the periodic grid, which is the trapezoid rule for
/// periodic or flat-tailed integrands.
fn periodic_integral<I: Iterator<Item = f64>>(values: I, dx: f64) -> f64 {
    dx * values.sum::<f64>()
}

/// `integral m ln(m / kappa) - (m - kappa)`.
pub fn hamiltonian_h(f: &Field) -> Result<f64> {
    f.check_positive()?;
    let k = f.kappa;
    Ok(periodic_integral(
        f.m.iter().map(|&m| {
            let r = (m - k) / k;
            k * ((1.0 + r) * r.ln_1p() - r)
        }),
        f.dx(),
    ))
}

/// `integral m - kappa`.
pub fn q1(f: &Field) -> Result<f64> {
    f.check_positive()?;
    Ok(periodic_integral(f.m.iter().map(|&m| m - f.kappa), f.dx()))
}

/// `integral m^-3 (m^2 + m_x^2) - 1/kappa`.
pub fn q2(f: &Field) -> Result<f64> {
    f.check_positive()?;
    let mx = f.derivative();
    let k = f.kappa;
    Ok(periodic_integral(
        f.m.iter()
            .zip(&mx)
            .map(|(&m, &d)| (k - m) / (m * k) + d * d / (m * m * m)),
        f.dx(),
    ))
}

/// The charge `-q1 / (2 kappa) - kappa q2 / 2`.
pub fn charge_q(f: &Field) -> Result<f64> {
    Ok(-0.5 / f.kappa * q1(f)? - 0.5 * f.kappa * q2(f)?)
}

/// `(E, F1, F2)`, the conserved quantities of the `b != 1` members.
pub fn conserved_family_bneq1(f: &Field, b: f64) -> Result<(f64, f64, f64)> {
    if b == 1.0 {
        return Err(Error::Domain(
            "b != 1 required; use hamiltonian_h, q1 and q2 for b = 1".into(),
        ));
    }
    f.check_positive()?;
    let mx = f.derivative();
    let k = f.kappa;
    let dx = f.dx();
    let inv = 1.0 / (b - 1.0);
    let e = inv * periodic_integral(f.m.iter().map(|&m| m - k), dx);
    let f1 = inv
        * periodic_integral(
            f.m.iter().map(|&m| k.powf(1.0 / b) * ((m / k).ln() / b).exp_m1()),
            dx,
        );
    let f2 = inv
        * periodic_integral(
            f.m.iter().zip(&mx).map(|(&m, &d)| {
                let base = k.powf(-1.0 / b) * (-(m / k).ln() / b).exp_m1();
                base + d * d / (b * b * m * m) * m.powf(-1.0 / b)
            }),
            dx,
        );
    Ok((e, f1, f2))
}

/// Variational derivative of the charge along the wave.
#[derive(Debug, Clone)]
pub struct PsiQ {
    /// `ln((c - phi) / gamma) / gamma`.
    pub closed: Vec<f64>,
    /// `-kappa/2 (-mu^-2 + 3 mu^-4 mu_xi^2 - 2 mu^-3 mu_xixi) - 1/(2 kappa)`,
    /// with fourth-order finite-difference derivatives of `mu`.
    pub mu_form: Vec<f64>,
    /// Sup-norm difference of the two.
    pub mismatch: f64,
}

/// Pointwise `delta charge / delta m` from `m` and its derivatives.
pub fn charge_gradient(kappa: f64, m: f64, m_x: f64, m_xx: f64) -> f64 {
    let m2 = m * m;
    -0.5 * kappa * (-1.0 / m2 + 3.0 * m_x * m_x / (m2 * m2) - 2.0 * m_xx / (m2 * m)) - 0.5 / kappa
}

pub fn psi_q(profile: &WaveProfile) -> Result<PsiQ> {
    profile.params.require_ch("the charge gradient")?;
    let gamma = profile.params.gamma();
    let kappa = profile.params.kappa;
    let closed: Vec<f64> = profile
        .c_minus_phi
        .iter()
        .zip(&profile.phi_minus_kappa)
        .map(|(&cp, &d)| {
            let log = if d < 0.5 * gamma { (-d / gamma).ln_1p() } else { (cp / gamma).ln() };
            log / gamma
        })
        .collect();
    let d1 = fd4_first(&profile.mu, profile.dxi);
    let d2 = fd4_second(&profile.mu, profile.dxi);
    let mu_form: Vec<f64> = (0..profile.len())
        .map(|j| charge_gradient(kappa, profile.mu[j], d1[j], d2[j]))
        .collect();
    let mismatch = closed
        .iter()
        .zip(&mu_form)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(PsiQ { closed, mu_form, mismatch })
}

/// Pointwise gradient of `Lambda = -H - gamma Q`:
/// `ln kappa - ln m + gamma/(2 kappa) + gamma kappa/2 (-m^-2 + 3 m^-4 m_x^2 - 2 m^-3 m_xx)`.
pub fn lagrangian_gradient_at(kappa: f64, gamma: f64, m: f64, m_x: f64, m_xx: f64) -> f64 {
    -(m / kappa).ln() - gamma * charge_gradient(kappa, m, m_x, m_xx)
}

/// `delta Lambda / delta m` along `mu`, with fourth-order finite differences.
/// Vanishes up to discretisation error because the wave is a critical point.
pub fn lagrangian_gradient(profile: &WaveProfile) -> Result<Vec<f64>> {
    lagrangian_gradient_of(profile, &profile.mu)
}

/// `delta Lambda / delta m` at an arbitrary positive `m` on the profile grid.
pub fn lagrangian_gradient_of(profile: &WaveProfile, m: &[f64]) -> Result<Vec<f64>> {
    profile.params.require_ch("the Lagrangian")?;
    let kappa = profile.params.kappa;
    let gamma = profile.params.gamma();
    let d1 = fd4_first(m, profile.dxi);
    let d2 = fd4_second(m, profile.dxi);
    Ok((0..m.len())
        .map(|j| lagrangian_gradient_at(kappa, gamma, m[j], d1[j], d2[j]))
        .collect())
}

/// Discrete Lagrangian `dx sum lambda(m_j, (D m)_j)` with `D` the spectral
/// derivative on the periodic profile grid, plus its exact first and second
/// variations.
struct DiscreteLagrangian {
    kappa: f64,
    gamma: f64,
    dx: f64,
    spectral: Spectral,
}

impl DiscreteLagrangian {
    fn new(profile: &WaveProfile) -> Self {
        let n = profile.len();
        Self {
            kappa: profile.params.kappa,
            gamma: profile.params.gamma(),
            dx: profile.dxi,
            spectral: Spectral::new(n, profile.dxi * n as f64),
        }
    }

    fn density(&self, m: f64, p: f64) -> f64 {
        let (k, g) = (self.kappa, self.gamma);
        let r = (m - k) / k;
        let h = k * ((1.0 + r) * r.ln_1p() - r);
        let q = -0.5 / k * (m - k) - 0.5 * k * ((k - m) / (m * k) + p * p / (m * m * m));
        -h - g * q
    }

    /// `R(eps) = Lambda(m + eps h) - Lambda(m) - eps <grad, h> - eps^2/2 <Hess h, h>`.
    fn remainder(&self, m: &[f64], h: &[f64], eps: f64) -> f64 {
        let (k, g) = (self.kappa, self.gamma);
        let p = self.spectral.derivative(m);
        let dh = self.spectral.derivative(h);
        let mut total = 0.0;
        for j in 0..m.len() {
            let (mj, pj, hj, qj) = (m[j], p[j], h[j], dh[j]);
            let m2 = mj * mj;
            let lm = -(mj / k).ln() + 0.5 * g / k + 0.5 * g * k * (-1.0 / m2 - 3.0 * pj * pj / (m2 * m2));
            let lp = g * k * pj / (m2 * mj);
            let lmm = -1.0 / mj + 0.5 * g * k * (2.0 / (m2 * mj) + 12.0 * pj * pj / (m2 * m2 * mj));
            let lmp = -3.0 * g * k * pj / (m2 * m2);
            let lpp = g * k / (m2 * mj);
            let shifted = self.density(mj + eps * hj, pj + eps * qj) - self.density(mj, pj);
            let linear = eps * (lm * hj + lp * qj);
            let quadratic = 0.5 * eps * eps * (lmm * hj * hj + 2.0 * lmp * hj * qj + lpp * qj * qj);
            total += shifted - linear - quadratic;
        }
        self.dx * total
    }
}

/// Remainder of the second-order expansion of the Lagrangian about `mu` in
/// the direction `h`, for each `eps`.
pub fn expansion_remainders(profile: &WaveProfile, h: &[f64], eps_list: &[f64]) -> Result<Vec<f64>> {
    profile.params.require_ch("the Lagrangian expansion")?;
    if h.len() != profile.len() {
        return Err(Error::Domain("direction must live on the profile grid".into()));
    }
    let lag = DiscreteLagrangian::new(profile);
    eps_list
        .iter()
        .map(|&eps| {
            let m: Vec<f64> = profile.mu.iter().zip(h).map(|(a, b)| a + eps * b).collect();
            if m.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Positivity(format!(
                    "mu + eps h is not positive for eps = {eps}; shrink the range"
                )));
            }
            Ok(lag.remainder(&profile.mu, h, eps))
        })
        .collect()
}

/// Default step sizes for [`remainder_scaling`].
pub fn default_eps_list() -> Vec<f64> {
    (0..9).map(|i| 10f64.powf(-3.0 + 0.25 * i as f64)).collect()
}

/// Log-log slope of `|R(eps)|`; the expansion is cubic so this is close to 3.
/// Returns `None` when `R` vanishes identically (e.g. `h = 0`).
pub fn remainder_scaling(profile: &WaveProfile, h: &[f64], eps_list: &[f64]) -> Result<Option<f64>> {
    let r = expansion_remainders(profile, h, eps_list)?;
    if r.iter().all(|&v| v == 0.0) {
        return Ok(None);
    }
    let x: Vec<f64> = eps_list.iter().map(|e| e.ln()).collect();
    let y: Vec<f64> = r.iter().map(|v| v.abs().ln()).collect();
    Ok(Some(fit_slope(&x, &y)))
}

/// Grid metadata attached to emitted records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridInfo {
    pub n: usize,
    pub dx: f64,
    pub length: f64,
}

impl GridInfo {
    pub fn of(f: &Field) -> Self {
        Self { n: f.len(), dx: f.dx(), length: f.length() }
    }
}

/// One functional value as emitted to JSON.
#[derive(Debug, Clone, Serialize)]
pub struct FunctionalRecord {
    pub name: String,
    pub value: f64,
    pub params: Option<WaveParams>,
    pub grid: GridInfo,
}

/// All `b = 1` functionals of a field as JSON-ready records.
pub fn functional_records(f: &Field, params: Option<WaveParams>) -> Result<Vec<FunctionalRecord>> {
    let grid = GridInfo::of(f);
    let rec = |name: &str, value: f64| FunctionalRecord {
        name: name.to_string(),
        value,
        params,
        grid,
    };
    Ok(vec![
        rec("H", hamiltonian_h(f)?),
        rec("Q1", q1(f)?),
        rec("Q2", q2(f)?),
        rec("charge", charge_q(f)?),
    ])
}

/// Sup-norm of the Lagrangian gradient along the wave.
pub fn critical_point_residual(profile: &WaveProfile) -> Result<f64> {
    Ok(sup_norm(&lagrangian_gradient(profile)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::inner;
    use crate::wave::{build_profile_with, Extent, ProfileOptions};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn profile(n: usize, half: f64) -> WaveProfile {
        let p = WaveParams::ch(2.0, 0.4).unwrap();
        build_profile_with(&p, &ProfileOptions::new(n, Extent::HalfWidth(half))).unwrap()
    }

    #[test]
    fn background_has_zero_functionals() {
        let f = Field::constant(128, 20.0, 0.4);
        assert_eq!(hamiltonian_h(&f).unwrap(), 0.0);
        assert_eq!(q1(&f).unwrap(), 0.0);
        assert_eq!(q2(&f).unwrap(), 0.0);
        assert_eq!(charge_q(&f).unwrap(), 0.0);
        let (e, f1, f2) = conserved_family_bneq1(&f, 1.4).unwrap();
        assert_eq!((e, f1, f2), (0.0, 0.0, 0.0));
        assert!(conserved_family_bneq1(&f, 1.0).is_err());
    }

    #[test]
    fn nonpositive_density_is_rejected() {
        let mut f = Field::constant(64, 10.0, 0.4);
        f.m[3] = -0.1;
        assert!(hamiltonian_h(&f).is_err());
        assert!(q1(&f).is_err());
        assert!(q2(&f).is_err());
    }

    #[test]
    fn wave_functionals_have_expected_signs() {
        let prof = profile(4096, 30.0);
        let f = Field::from_profile(&prof);
        assert!(hamiltonian_h(&f).unwrap() > 0.0);
        assert!(q1(&f).unwrap() > 0.0);
        // spectral and analytic derivatives give the same q2
        let mut g = f.clone();
        g.m_x = None;
        assert_relative_eq!(q2(&f).unwrap(), q2(&g).unwrap(), max_relative = 1e-8);
    }

    #[test]
    fn hamiltonian_converges_under_refinement() {
        let h1 = hamiltonian_h(&Field::from_profile(&profile(1024, 30.0))).unwrap();
        let h2 = hamiltonian_h(&Field::from_profile(&profile(2048, 30.0))).unwrap();
        let h4 = hamiltonian_h(&Field::from_profile(&profile(4096, 30.0))).unwrap();
        // trapezoid on a decaying smooth integrand: already far below dxi^2
        let dxi2 = (60.0_f64 / 1024.0).powi(2);
        assert!((h1 - h2).abs() < 1e-3 * dxi2 * h1);
        assert!((h2 - h4).abs() < 1e-3 * dxi2 / 4.0 * h1);
    }

    #[test]
    fn charge_decreases_in_speed() {
        let q: Vec<f64> = [1.5, 2.0, 2.5]
            .iter()
            .map(|&c| {
                let p = WaveParams::ch(c, 0.4).unwrap();
                let prof =
                    build_profile_with(&p, &ProfileOptions::new(4096, Extent::HalfWidth(40.0)))
                        .unwrap();
                charge_q(&Field::from_profile(&prof)).unwrap()
            })
            .collect();
        assert!(q[0] > q[1] && q[1] > q[2], "{q:?}");
    }

    #[test]
    fn psi_q_properties() {
        let prof = profile(2048, 30.0);
        let psi = psi_q(&prof).unwrap();
        assert!(psi.closed[0].abs() < 1e-9);
        for (j, v) in psi.closed.iter().enumerate() {
            if prof.phi_minus_kappa[j] > 0.0 {
                assert!(*v < 0.0);
            }
        }
        assert!(inner(&psi.closed, &prof.mu_xi, prof.dxi).abs() < 1e-8);
        let coarse = psi_q(&profile(1024, 30.0)).unwrap().mismatch;
        let fine = psi_q(&profile(4096, 30.0)).unwrap().mismatch;
        assert!(coarse / psi.mismatch > 4.0 && psi.mismatch / fine > 4.0);
    }

    #[test]
    fn lagrangian_gradient_vanishes_on_the_wave() {
        let r1 = critical_point_residual(&profile(1024, 30.0)).unwrap();
        let r2 = critical_point_residual(&profile(2048, 30.0)).unwrap();
        let r4 = critical_point_residual(&profile(4096, 30.0)).unwrap();
        assert!(r1 / r2 > 4.0 && r2 / r4 > 4.0, "{r1} {r2} {r4}");
        assert!(r4 < 1e-4);
        assert_eq!(lagrangian_gradient_at(0.4, 7.3, 0.4, 0.0, 0.0), 0.0);
        let prof = profile(1024, 30.0);
        let bumped: Vec<f64> = prof
            .mu
            .iter()
            .zip(&prof.xi)
            .map(|(m, x)| m + 1e-2 * (-(x - 1.0) * (x - 1.0)).exp())
            .collect();
        let g = lagrangian_gradient_of(&prof, &bumped).unwrap();
        assert!(sup_norm(&g) > 1e-4);
    }

    #[test]
    fn remainder_is_cubic() {
        let prof = profile(2048, 30.0);
        let bump: Vec<f64> = prof.xi.iter().map(|x| (-(x - 0.7) * (x - 0.7)).exp()).collect();
        let eps = default_eps_list();
        let slope = remainder_scaling(&prof, &bump, &eps).unwrap().unwrap();
        assert!((slope - 3.0).abs() < 0.2, "{slope}");
        let sech: Vec<f64> = prof.xi.iter().map(|x| 1.0 / ((x + 1.3) / 0.8).cosh().powi(2)).collect();
        let slope = remainder_scaling(&prof, &sech, &eps).unwrap().unwrap();
        assert!((slope - 3.0).abs() < 0.2, "{slope}");
        // An odd direction against the even wave has no cubic term either.
        let odd: Vec<f64> = prof.xi.iter().map(|x| x / (1.0 + x * x).powi(2)).collect();
        let slope = remainder_scaling(&prof, &odd, &eps).unwrap().unwrap();
        assert!((slope - 4.0).abs() < 0.2, "{slope}");
        // Along the translation mode the cubic term cancels: differentiating
        // Lambda(mu(. + s)) three times at s = 0 leaves only the third
        // variation in the direction mu_xi, so it must vanish.
        let slope = remainder_scaling(&prof, &prof.mu_xi, &eps).unwrap().unwrap();
        assert!((slope - 4.0).abs() < 0.2, "{slope}");
        let zero = vec![0.0; prof.len()];
        assert_eq!(remainder_scaling(&prof, &zero, &eps).unwrap(), None);
    }

    #[test]
    fn bneq1_limit_reproduces_m_ln_m() {
        let m: f64 = 1.7;
        for &b in &[1.0 + 1e-4, 1.0 - 1e-4] {
            let val = (m - m.powf(1.0 / b)) / (b - 1.0);
            assert_relative_eq!(val, m * m.ln(), max_relative = 1e-3);
        }
    }

    #[test]
    fn records_serialise() {
        let f = Field::constant(64, 10.0, 0.4);
        let recs = functional_records(&f, WaveParams::ch(2.0, 0.4).ok()).unwrap();
        let json = serde_json::to_string(&recs).unwrap();
        assert!(json.contains("\"name\":\"H\"") && json.contains("\"grid\""));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn hamiltonian_is_positive_off_background(
            amp in -0.3_f64..1.0, width in 0.3_f64..3.0, shift in -5.0_f64..5.0
        ) {
            prop_assume!(amp.abs() > 1e-3);
            let n = 256;
            let length = 40.0;
            let mut f = Field::constant(n, length, 0.4);
            for (m, x) in f.m.iter_mut().zip(f.x.clone()) {
                *m += amp * 0.4 * (-((x - shift) / width).powi(2)).exp();
            }
            prop_assert!(hamiltonian_h(&f).unwrap() > 0.0);
        }
    }
}
