//! The stability criterion `dQ/dc > 0` for `b = 1`, checked two ways.
//!
//! Route A differentiates `Q(phi, c) = integral w ln w - w + 1`,
//! `w = gamma / (c - phi)`, over rebuilt profiles. Route B rescales the wave
//! onto the level curve `P(phi) - psibar^2 = h`, `P(phi) = phi^2 / (-phi - ln(1 - phi))`,
//! `h = 2 kappa / gamma`, where `Q` becomes a single integral in `h` whose
//! derivative has a sign-definite integrand.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{write_columns, write_json};
use crate::numeric::{bisect, clenshaw_curtis, log_defect};
use crate::params::WaveParams;
use crate::sweep;
use crate::wave::{build_profile_with, resolved_options, WaveProfile};

/// `Q(phi, c)` by the trapezoid rule on the profile grid.
pub fn q_functional(profile: &WaveProfile) -> Result<f64> {
    profile.params.require_ch("Q(phi, c)")?;
    let sum: f64 = profile
        .phi_minus_kappa
        .iter()
        .zip(&profile.c_minus_phi)
        .map(|(&d, &cp)| {
            let e = d / cp; // w - 1
            (1.0 + e) * e.ln_1p() - e
        })
        .sum();
    Ok(sum * profile.dxi)
}

/// `h = 2 kappa / (c - kappa)`, in `(0, 2)` on the existence window.
pub fn h_of_params(params: &WaveParams) -> Result<f64> {
    params.validate()?;
    params.require_ch("h")?;
    Ok(2.0 * params.kappa / params.gamma())
}

/// `dh/dc = -2 kappa / gamma^2`.
pub fn dh_dc(params: &WaveParams) -> f64 {
    -2.0 * params.kappa / (params.gamma() * params.gamma())
}

/// Tail tolerance and margin used for route A grids.
const ROUTE_A_TAIL_TOL: f64 = 1e-9;
const ROUTE_A_MARGIN: f64 = 2.0;
const ROUTE_A_MIN_N: usize = 2048;

/// Central difference of [`q_functional`] in `c` with step `1e-4 c`.
///
/// Both profiles share one grid, wide enough for the tail and fine enough for
/// the crest of `w` at `c + delta`.
pub fn dq_dc(params: &WaveParams) -> Result<f64> {
    dq_dc_with_step(params, 1e-4 * params.c)
}

pub fn dq_dc_with_step(params: &WaveParams, delta: f64) -> Result<f64> {
    params.require_ch("dQ/dc")?;
    let hi = params.with_c(params.c + delta)?;
    let lo = params.with_c(params.c - delta)?;
    let opts_hi = resolved_options(&hi, ROUTE_A_TAIL_TOL, ROUTE_A_MARGIN, ROUTE_A_MIN_N)?;
    let opts_lo = resolved_options(&lo, ROUTE_A_TAIL_TOL, ROUTE_A_MARGIN, ROUTE_A_MIN_N)?;
    let mut opts = opts_hi;
    opts.n_points = opts_hi.n_points.max(opts_lo.n_points);
    opts.extent = opts_hi.extent.max_with(opts_lo.extent);
    let q_hi = q_functional(&build_profile_with(&hi, &opts)?)?;
    let q_lo = q_functional(&build_profile_with(&lo, &opts)?)?;
    Ok((q_hi - q_lo) / (2.0 * delta))
}

/// `Q(phi, c)` on a grid resolving tail and crest.
pub fn q_of_params(params: &WaveParams) -> Result<f64> {
    let opts = resolved_options(params, ROUTE_A_TAIL_TOL, ROUTE_A_MARGIN, ROUTE_A_MIN_N)?;
    q_functional(&build_profile_with(params, &opts)?)
}

/// `P(phi) = phi^2 / L(phi)` with `L = -phi - ln(1 - phi)`; `P(0) = 2`.
pub fn curve_function(phi: f64) -> f64 {
    if phi == 0.0 {
        2.0
    } else {
        1.0 / normalized_l(phi)
    }
}

/// `L(phi) / phi^2`.
fn normalized_l(phi: f64) -> f64 {
    if phi < 0.1 {
        // sum_{n>=2} phi^(n-2) / n
        let mut sum = 0.0;
        let mut p = 1.0;
        for n in 2..200 {
            let term = p / n as f64;
            sum += term;
            if term < 1e-18 * sum {
                break;
            }
            p *= phi;
        }
        sum
    } else {
        log_defect(phi) / (phi * phi)
    }
}

/// `f(phi) / phi^3` with `f = phi + (1 - phi)(phi + 2 ln(1 - phi))`.
fn normalized_f(phi: f64) -> f64 {
    if phi < 0.1 {
        // f = 2 sum_{n>=3} phi^n / (n (n - 1))
        let mut sum = 0.0;
        let mut p = 1.0;
        for n in 3..200 {
            let nf = n as f64;
            let term = 2.0 * p / (nf * (nf - 1.0));
            sum += term;
            if term < 1e-18 * sum {
                break;
            }
            p *= phi;
        }
        sum
    } else {
        (phi * phi - 2.0 * (1.0 - phi) * log_defect(phi)) / (phi * phi * phi)
    }
}

/// `F(phi) / phi^4` with `F = 4 (phi^2 - (1 - phi) ln^2(1 - phi))`.
fn normalized_big_f(phi: f64) -> f64 {
    if phi < 0.1 {
        // F = 8 sum_{n>=4} (H_{n-2} - 1) phi^n / (n (n - 1))
        let mut sum = 0.0;
        let mut p = 1.0;
        let mut harmonic = 1.5; // H_2
        for n in 4..200 {
            let nf = n as f64;
            let term = 8.0 * (harmonic - 1.0) * p / (nf * (nf - 1.0));
            sum += term;
            if term < 1e-18 * sum {
                break;
            }
            p *= phi;
            harmonic += 1.0 / (nf - 1.0);
        }
        sum
    } else {
        let l = (-phi).ln_1p();
        4.0 * (phi * phi - (1.0 - phi) * l * l) / (phi * phi * phi * phi)
    }
}

/// The auxiliary functions of the transformed criterion at one `phi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpecialFunctions {
    pub f: f64,
    pub g: f64,
    pub gfun: f64,
    pub big_f: f64,
    /// `Gfun * F`, finite as `phi -> 0` (limit `9 / 2^(5/2)`).
    pub gfun_big_f: f64,
}

fn check_unit(phi: f64) -> Result<()> {
    if !(phi > 0.0 && phi < 1.0) {
        return Err(Error::Domain(format!("phi in (0, 1) violated (phi = {phi})")));
    }
    Ok(())
}

/// `f`, `g = L^(5/2) / (phi f)`, `Gfun = L^(5/2) / f^3` and `F`.
pub fn special_functions(phi: f64) -> Result<SpecialFunctions> {
    check_unit(phi)?;
    Ok(special_functions_unchecked(phi))
}

fn special_functions_unchecked(phi: f64) -> SpecialFunctions {
    let ln = normalized_l(phi);
    let fnorm = normalized_f(phi);
    let bigf = normalized_big_f(phi);
    let l52 = ln.powf(2.5);
    let p2 = phi * phi;
    SpecialFunctions {
        f: fnorm * p2 * phi,
        g: phi * l52 / fnorm,
        gfun: l52 / (fnorm * fnorm * fnorm * p2 * p2),
        big_f: bigf * p2 * p2,
        gfun_big_f: l52 * bigf / (fnorm * fnorm * fnorm),
    }
}

/// `f'(phi) = 2 L(phi)`.
pub fn f_prime(phi: f64) -> Result<f64> {
    check_unit(phi)?;
    Ok(2.0 * log_defect(phi))
}

/// `(F', F'')` with `F' = 8 phi + 4 ln(1 - phi)(2 + ln(1 - phi))` and
/// `F'' = 8 L / (1 - phi)`.
pub fn big_f_derivatives(phi: f64) -> Result<(f64, f64)> {
    check_unit(phi)?;
    let l = log_defect(phi);
    let first = if phi < 0.1 {
        // 8 sum_{n>=3} (H_{n-1} - 1) phi^n / n
        let mut sum = 0.0;
        let mut p = phi * phi * phi;
        let mut harmonic = 1.5;
        for n in 3..400 {
            let term = 8.0 * (harmonic - 1.0) * p / n as f64;
            sum += term;
            if term < 1e-18 * sum {
                break;
            }
            p *= phi;
            harmonic += 1.0 / n as f64;
        }
        sum
    } else {
        let ln = (-phi).ln_1p();
        8.0 * phi + 4.0 * ln * (2.0 + ln)
    };
    Ok((first, 8.0 * l / (1.0 - phi)))
}

/// The upper branch of the level curve `P(phi) - psibar^2 = h`, sampled at
/// Clenshaw-Curtis nodes in `psibar` on `[0, a]`, `a = sqrt(2 - h)`.
#[derive(Debug, Clone)]
pub struct GammaCurve {
    pub h: f64,
    pub phi0: f64,
    pub a: f64,
    pub psi_bar: Vec<f64>,
    pub phi: Vec<f64>,
    /// Quadrature weights for `integral_0^a d psibar`.
    pub weights: Vec<f64>,
}

fn check_h(h: f64) -> Result<()> {
    if !(h > 0.0 && h < 2.0) {
        return Err(Error::Domain(format!("h in (0, 2) violated (h = {h})")));
    }
    Ok(())
}

/// Solves `P(phi) = target` for `target in (0, 2]`.
fn invert_curve(target: f64) -> Result<f64> {
    if target >= 2.0 {
        return Ok(0.0);
    }
    bisect(|phi| curve_function(phi) - target, 0.0, 1.0 - f64::EPSILON)
}

/// Turning value `phi0` with `P(phi0) = h`.
pub fn curve_turning_value(h: f64) -> Result<f64> {
    check_h(h)?;
    invert_curve(h)
}

pub fn build_gamma(h: f64, n: usize) -> Result<GammaCurve> {
    check_h(h)?;
    if n < 2 {
        return Err(Error::GridTooCoarse(format!("need n >= 2 nodes (got {n})")));
    }
    let a = (2.0 - h).sqrt();
    let (psi_bar, weights) = clenshaw_curtis(n, 0.0, a);
    let phi = psi_bar
        .iter()
        .map(|&s| if s == a { Ok(0.0) } else { invert_curve(h + s * s) })
        .collect::<Result<Vec<_>>>()?;
    Ok(GammaCurve { h, phi0: phi[0], a, psi_bar, phi, weights })
}

impl GammaCurve {
    /// Largest `|P(phi) - psibar^2 - h|` over the samples.
    pub fn level_residual(&self) -> f64 {
        self.phi
            .iter()
            .zip(&self.psi_bar)
            .map(|(&p, &s)| (curve_function(p) - s * s - self.h).abs())
            .fold(0.0, f64::max)
    }

    fn integrate<F: Fn(&SpecialFunctions) -> f64>(&self, f: F, at_zero: f64) -> f64 {
        self.phi
            .iter()
            .zip(&self.weights)
            .map(|(&p, &w)| {
                let v = if p == 0.0 { at_zero } else { f(&special_functions_unchecked(p)) };
                w * v
            })
            .sum()
    }
}

/// Default number of Clenshaw-Curtis panels on `[0, a]`.
pub const GAMMA_NODES: usize = 256;

/// The transformed charge `4 integral_0^a g(phi(psibar)) d psibar`, equal to
/// `Q(phi, c)` at `h = 2 kappa / gamma`.
pub fn transformed_q(h: f64) -> Result<f64> {
    transformed_q_with(h, GAMMA_NODES)
}

pub fn transformed_q_with(h: f64, n: usize) -> Result<f64> {
    let curve = build_gamma(h, n)?;
    Ok(4.0 * curve.integrate(|s| s.g, 0.0))
}

/// `-(2/h) integral_0^a Gfun(phi) F(phi) d psibar`; negative on `(0, 2)`.
pub fn transformed_dq_dh(h: f64) -> Result<f64> {
    transformed_dq_dh_with(h, GAMMA_NODES)
}

pub fn transformed_dq_dh_with(h: f64, n: usize) -> Result<f64> {
    let curve = build_gamma(h, n)?;
    let limit = 9.0 / 2f64.powf(2.5);
    Ok(-2.0 / h * curve.integrate(|s| s.gfun_big_f, limit))
}

/// Route B value of `dQ/dc` through `h(c)`.
pub fn dq_dc_transformed(params: &WaveParams) -> Result<f64> {
    let h = h_of_params(params)?;
    Ok(transformed_dq_dh(h)? * dh_dc(params))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub h: f64,
    pub q: f64,
    pub dq_dh: f64,
}

/// `(h, Q(h), Q'(h))` on the given `h` values.
pub fn h_sweep(hs: &[f64]) -> Result<Vec<SweepRow>> {
    sweep::map(hs, |&h| {
        Ok(SweepRow { h, q: transformed_q(h)?, dq_dh: transformed_dq_dh(h)? })
    })
    .into_iter()
    .collect()
}

/// `h = 0.1, 0.2, ..., 1.9`.
pub fn default_h_grid() -> Vec<f64> {
    (1..20).map(|i| 0.1 * i as f64).collect()
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let h: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let q: Vec<f64> = rows.iter().map(|r| r.q).collect();
    let d: Vec<f64> = rows.iter().map(|r| r.dq_dh).collect();
    write_columns(path, &["h", "Qcal", "dQcal_dh"], &[&h, &q, &d])
}

/// Route A on a `(c, kappa/c)` grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RouteAPoint {
    pub c: f64,
    pub kappa: f64,
    pub dq_dc: f64,
    pub dq_dc_transformed: f64,
}

pub fn route_a_grid(cs: &[f64], ratios: &[f64]) -> Result<Vec<RouteAPoint>> {
    let pts: Vec<(f64, f64)> =
        cs.iter().flat_map(|&c| ratios.iter().map(move |&r| (c, r * c))).collect();
    sweep::map(&pts, |&(c, kappa)| {
        let p = WaveParams::ch(c, kappa)?;
        Ok(RouteAPoint {
            c,
            kappa,
            dq_dc: dq_dc(&p)?,
            dq_dc_transformed: dq_dc_transformed(&p)?,
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    pub chain_rule_relative: f64,
    pub level_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub criterion_holds: bool,
    pub grid: Vec<f64>,
    pub tolerances: Tolerances,
}

pub fn verdict(rows: &[SweepRow]) -> Verdict {
    Verdict {
        criterion_holds: rows.iter().all(|r| r.dq_dh < 0.0),
        grid: rows.iter().map(|r| r.h).collect(),
        tolerances: Tolerances { chain_rule_relative: 1e-4, level_residual: 1e-10 },
    }
}

pub fn write_verdict(path: &Path, v: &Verdict) -> Result<()> {
    write_json(path, v)
}
