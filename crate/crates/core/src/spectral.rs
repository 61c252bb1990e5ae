//! The second variation of the travelling-wave Lagrangian at the wave, its
//! spectrum, the Poisson operator `J_m`, and the constrained coercivity checks.
//!
//! The operator is
//! `L v = -s kappa (mu^-3 v')' + (s kappa (mu^-3 - 6 mu^-5 mu_xi^2 + 3 mu^-4 mu_xixi) - 1/mu) v`
//! with `s` the speed entering the Lagrangian. The frame speed `s = c - kappa`
//! is the one whose Lagrangian is critical at the wave; `s = c` is available
//! for comparison.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::band::{lowest_eigenvalues, BandLu, SymBand};
use crate::conserved::{charge_q, psi_q, Field};
use crate::error::{Error, Result};
use crate::fourier::Spectral;
use crate::io::{write_columns, write_json};
use crate::params::WaveParams;
use crate::sweep;
use crate::wave::{build_profile_with, Extent, ProfileOptions, WaveProfile};

/// Smallest grid the assembler accepts.
pub const MIN_POINTS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StencilOrder {
    /// Three-point divergence form `(a_{j+1/2}(v_{j+1} - v_j) - a_{j-1/2}(v_j - v_{j-1})) / dxi^2`.
    Second,
    /// Staggered fourth-order difference `D` with `D^T diag(a) D`; bandwidth 3.
    Fourth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Closure {
    Dirichlet,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeedConvention {
    /// `s = c - kappa`.
    Frame,
    /// `s = c`.
    Absolute,
}

impl SpeedConvention {
    pub fn speed(self, params: &WaveParams) -> f64 {
        match self {
            SpeedConvention::Frame => params.gamma(),
            SpeedConvention::Absolute => params.c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatorOptions {
    pub order: StencilOrder,
    pub closure: Closure,
    pub speed: SpeedConvention,
}

impl Default for OperatorOptions {
    fn default() -> Self {
        Self {
            order: StencilOrder::Fourth,
            closure: Closure::Dirichlet,
            speed: SpeedConvention::Frame,
        }
    }
}

impl OperatorOptions {
    pub fn with_order(mut self, order: StencilOrder) -> Self {
        self.order = order;
        self
    }

    pub fn with_closure(mut self, closure: Closure) -> Self {
        self.closure = closure;
        self
    }

    pub fn with_speed(mut self, speed: SpeedConvention) -> Self {
        self.speed = speed;
        self
    }
}

/// Difference stencil from nodes to the midpoint `i + 1/2`: `(offset, weight * dxi)`.
fn stencil(order: StencilOrder) -> &'static [(isize, f64)] {
    match order {
        StencilOrder::Second => &[(0, -1.0), (1, 1.0)],
        StencilOrder::Fourth => &[
            (-1, 1.0 / 24.0),
            (0, -27.0 / 24.0),
            (1, 27.0 / 24.0),
            (2, -1.0 / 24.0),
        ],
    }
}

/// Coefficients of the discretised operator: diffusion `a = s kappa mu^-3` at
/// midpoints and the potential `W` at nodes.
#[derive(Debug, Clone)]
pub struct SecondVariation {
    pub options: OperatorOptions,
    pub dxi: f64,
    /// `a` at `xi_j + dxi/2`, `j = 0..N`.
    pub a_half: Vec<f64>,
    /// Value of `a` outside the sampled window.
    pub a_background: f64,
    pub potential: Vec<f64>,
}

impl SecondVariation {
    pub fn new(profile: &WaveProfile, options: OperatorOptions) -> Result<Self> {
        Self::from_samples(
            &profile.params,
            options,
            profile.dxi,
            &profile.mu,
            &profile.mu_xi,
            &profile.mu_xixi,
            &profile.mu_half,
        )
    }

    /// Builds the coefficients from samples of `mu`, its derivatives and its
    /// midpoint values.
    pub fn from_samples(
        params: &WaveParams,
        options: OperatorOptions,
        dxi: f64,
        mu: &[f64],
        mu_xi: &[f64],
        mu_xixi: &[f64],
        mu_half: &[f64],
    ) -> Result<Self> {
        let n = mu.len();
        if n < MIN_POINTS {
            return Err(Error::GridTooCoarse(format!(
                "the second variation needs at least {MIN_POINTS} points, got {n}"
            )));
        }
        if mu_xi.len() != n || mu_xixi.len() != n || mu_half.len() != n {
            return Err(Error::Domain("sample arrays differ in length".into()));
        }
        let s = options.speed.speed(params);
        let k = params.kappa;
        let a_half = mu_half.iter().map(|&m| s * k / (m * m * m)).collect();
        let potential = (0..n)
            .map(|j| {
                let m = mu[j];
                let (m2, m3) = (m * m, m * m * m);
                s * k * (1.0 / m3 - 6.0 * mu_xi[j] * mu_xi[j] / (m3 * m2) + 3.0 * mu_xixi[j] / (m2 * m2))
                    - 1.0 / m
            })
            .collect();
        Ok(Self {
            options,
            dxi,
            a_half,
            a_background: s / (k * k),
            potential,
        })
    }

    pub fn len(&self) -> usize {
        self.potential.len()
    }

    pub fn is_empty(&self) -> bool {
        self.potential.is_empty()
    }

    pub fn bandwidth(&self) -> usize {
        match self.options.order {
            StencilOrder::Second => 1,
            StencilOrder::Fourth => 3,
        }
    }

    /// Midpoints whose stencil touches the grid, with their coefficient.
    fn midpoints(&self) -> Vec<(isize, f64)> {
        let n = self.len() as isize;
        let st = stencil(self.options.order);
        match self.options.closure {
            Closure::Periodic => (0..n).map(|i| (i, self.a_half[i as usize])).collect(),
            Closure::Dirichlet => {
                let lo = -st.last().unwrap().0;
                let hi = n - 1 - st[0].0;
                (lo..=hi)
                    .map(|i| {
                        let a = if (0..n).contains(&i) { self.a_half[i as usize] } else { self.a_background };
                        (i, a)
                    })
                    .collect()
            }
        }
    }

    /// Calls `f(row, col, value)` for every contribution to the matrix.
    fn for_each_entry(&self, mut f: impl FnMut(usize, usize, f64)) {
        let n = self.len() as isize;
        let st = stencil(self.options.order);
        let scale = 1.0 / (self.dxi * self.dxi);
        let node = |i: isize| -> Option<usize> {
            match self.options.closure {
                Closure::Periodic => Some(i.rem_euclid(n) as usize),
                Closure::Dirichlet => (0..n).contains(&i).then_some(i as usize),
            }
        };
        for (i, a) in self.midpoints() {
            for &(p, wp) in st {
                let Some(r) = node(i + p) else { continue };
                for &(q, wq) in st {
                    let Some(c) = node(i + q) else { continue };
                    f(r, c, a * (wp * wq) * scale);
                }
            }
        }
        for (j, &w) in self.potential.iter().enumerate() {
            f(j, j, w);
        }
    }

    /// Dirichlet matrix in band storage.
    pub fn to_band(&self) -> Result<SymBand> {
        if self.options.closure != Closure::Dirichlet {
            return Err(Error::Unsupported("band storage needs the Dirichlet closure".into()));
        }
        let mut m = SymBand::zeros(self.len(), self.bandwidth());
        self.for_each_entry(|r, c, v| {
            if r >= c {
                m.add(r, c, v);
            }
        });
        Ok(m)
    }

    /// Dense matrix for either closure.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        self.for_each_entry(|r, c, v| m[(r, c)] += v);
        m
    }

    /// `L v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.for_each_entry(|r, c, a| out[r] += a * v[c]);
        out
    }

    /// Multiplier on `e^{i k xi}` for constant `mu = kappa`, including the
    /// stencil's modified wavenumber.
    pub fn constant_symbol(&self, params: &WaveParams, k: f64) -> f64 {
        let h = self.dxi;
        let kt = match self.options.order {
            StencilOrder::Second => 2.0 * (0.5 * k * h).sin() / h,
            StencilOrder::Fourth => (27.0 * (0.5 * k * h).sin() - (1.5 * k * h).sin()) / (12.0 * h),
        };
        let s = self.options.speed.speed(params);
        s / (params.kappa * params.kappa) * (kt * kt + 1.0 - params.kappa / s)
    }
}

/// Assembles the Dirichlet band matrix of the second variation.
pub fn assemble_l(profile: &WaveProfile, options: OperatorOptions) -> Result<SymBand> {
    SecondVariation::new(profile, options.with_closure(Closure::Dirichlet))?.to_band()
}

/// Strict sign changes among entries with `|v| > floor * max|v|`.
pub fn sign_changes(v: &[f64], floor: f64) -> usize {
    let cut = floor * v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let mut last = 0.0_f64;
    let mut count = 0;
    for &x in v.iter().filter(|x| x.abs() > cut) {
        if last != 0.0 && (x > 0.0) != (last > 0.0) {
            count += 1;
        }
        last = x;
    }
    count
}

pub const NODE_FLOOR: f64 = 1e-9;

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = dot(v, v).sqrt();
    v.iter().map(|x| x / n).collect()
}

fn overlap(u: &[f64], v: &[f64]) -> f64 {
    (dot(u, v) / (dot(u, u) * dot(v, v)).sqrt()).abs()
}

#[derive(Debug, Clone, Serialize)]
pub struct Eigenmode {
    pub index: usize,
    pub value: f64,
    pub sign_changes: usize,
    /// `|<v, mu_xi>| / (|v| |mu_xi|)`.
    pub overlap_with_translation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumGrid {
    pub n_points: usize,
    pub dxi: f64,
    pub half_width: f64,
    pub options: OperatorOptions,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub params: WaveParams,
    pub grid: SpectrumGrid,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Negative eigenvalues other than the zero candidate.
    pub negative_count: usize,
    pub ground_state: Eigenmode,
    pub zero_candidate: Eigenmode,
    /// `(c - kappa) / kappa^2`.
    pub essential_edge: f64,
    /// Bottom of the constant-coefficient symbol of the assembled operator,
    /// `(s - kappa) / kappa^2`.
    pub operator_edge: f64,
    /// Smallest eigenvalue, above ground state and zero candidate, whose
    /// eigenvector carries at least 10% of its mass in `|xi| > L/2`.
    pub observed_edge: Option<f64>,
    /// Eigenvalues strictly between the zero candidate and the observed edge.
    pub positive_point_eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    pub report: SpectrumReport,
    pub xi: Vec<f64>,
    /// Ground state, unit Euclidean norm, positive at the crest.
    pub psi0: Vec<f64>,
    /// Eigenvector of the zero candidate, sign aligned with `mu_xi`.
    pub psi_zero: Vec<f64>,
}

impl Spectrum {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_json(path, &self.report)
    }

    pub fn write_eigenfunctions(&self, path: &Path) -> Result<()> {
        write_columns(path, &["xi", "psi0", "psi_zero"], &[&self.xi, &self.psi0, &self.psi_zero])
    }
}

const EDGE_MASS: f64 = 0.1;
const EDGE_SEARCH: usize = 64;
const ZERO_SEARCH: usize = 6;

/// Eigenvalues and the eigenvector oracle for one closure.
enum Eigen {
    Band(SymBand, Vec<f64>),
    Dense(Vec<f64>, DMatrix<f64>),
}

impl Eigen {
    fn values(&self) -> &[f64] {
        match self {
            Eigen::Band(_, v) | Eigen::Dense(v, _) => v,
        }
    }

    fn vectors(&self, indices: &[usize]) -> Result<Vec<Vec<f64>>> {
        match self {
            Eigen::Band(a, vals) => sweep::map(indices, |&i| crate::band::eigenvector(a, vals[i]))
                .into_iter()
                .collect(),
            Eigen::Dense(_, vecs) => Ok(indices.iter().map(|&i| vecs.column(i).iter().copied().collect()).collect()),
        }
    }
}

fn solve_eigen(op: &SecondVariation) -> Result<Eigen> {
    match op.options.closure {
        Closure::Dirichlet => {
            let a = op.to_band()?;
            let (d, e) = a.tridiagonalize();
            let vals = lowest_eigenvalues(&d, &e, a.n());
            Ok(Eigen::Band(a, vals))
        }
        Closure::Periodic => {
            let eig = SymmetricEigen::try_new(op.to_dense(), f64::EPSILON, 0)
                .ok_or_else(|| Error::NoConvergence("dense symmetric eigensolver".into()))?;
            let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
            order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
            let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
            let vecs = DMatrix::from_fn(op.len(), op.len(), |r, c| eig.eigenvectors[(r, order[c])]);
            Ok(Eigen::Dense(vals, vecs))
        }
    }
}

/// Full spectrum of the second variation with the mode classification.
pub fn spectrum(profile: &WaveProfile, options: OperatorOptions) -> Result<Spectrum> {
    let op = SecondVariation::new(profile, options)?;
    let eig = solve_eigen(&op)?;
    let values = eig.values().to_vec();
    let n = values.len();

    let low: Vec<usize> = (0..ZERO_SEARCH.min(n)).collect();
    let low_vecs = eig.vectors(&low)?;
    let (zero_idx, zero_overlap) = low_vecs
        .iter()
        .map(|v| overlap(v, &profile.mu_xi))
        .enumerate()
        .fold((0, -1.0), |best, (i, o)| if o > best.1 { (i, o) } else { best });

    let mode = |i: usize, v: &[f64]| Eigenmode {
        index: i,
        value: values[i],
        sign_changes: sign_changes(v, NODE_FLOOR),
        overlap_with_translation: overlap(v, &profile.mu_xi),
    };
    let ground_idx = if zero_idx == 0 { 1 } else { 0 };
    let ground_state = mode(ground_idx, &low_vecs[ground_idx]);
    let zero_candidate = Eigenmode {
        overlap_with_translation: zero_overlap,
        ..mode(zero_idx, &low_vecs[zero_idx])
    };
    let negative_count = values
        .iter()
        .enumerate()
        .filter(|&(i, &v)| v < 0.0 && i != zero_idx)
        .count();

    // Observed bottom of the delocalised cluster.
    let outer: Vec<bool> = profile.xi.iter().map(|x| x.abs() > 0.5 * profile.half_width()).collect();
    let outer_mass = |v: &[f64]| {
        let total = dot(v, v);
        v.iter().zip(&outer).filter(|(_, &o)| o).map(|(x, _)| x * x).sum::<f64>() / total
    };
    let mut observed_edge = None;
    let mut start = low.len();
    for (i, v) in low_vecs.iter().enumerate() {
        if i != zero_idx && i != ground_idx && outer_mass(v) >= EDGE_MASS {
            observed_edge = Some(values[i]);
            break;
        }
    }
    while observed_edge.is_none() && start < EDGE_SEARCH.min(n) {
        let batch: Vec<usize> = (start..(start + 8).min(n)).collect();
        for (i, v) in batch.iter().zip(eig.vectors(&batch)?) {
            if outer_mass(&v) >= EDGE_MASS {
                observed_edge = Some(values[*i]);
                break;
            }
        }
        start += batch.len();
    }
    let zero_value = values[zero_idx];
    let positive_point_eigenvalues = values
        .iter()
        .enumerate()
        .filter(|&(i, &v)| i != zero_idx && v > zero_value.max(0.0) && observed_edge.is_none_or(|e| v < e))
        .map(|(_, &v)| v)
        .collect();

    let mut psi0 = unit(&low_vecs[ground_idx]);
    let crest = profile.len() / 2;
    if psi0[crest] < 0.0 {
        psi0.iter_mut().for_each(|x| *x = -*x);
    }
    let mut psi_zero = unit(&low_vecs[zero_idx]);
    if dot(&psi_zero, &profile.mu_xi) < 0.0 {
        psi_zero.iter_mut().for_each(|x| *x = -*x);
    }

    let p = profile.params;
    let s = options.speed.speed(&p);
    let report = SpectrumReport {
        params: p,
        grid: SpectrumGrid {
            n_points: profile.len(),
            dxi: profile.dxi,
            half_width: profile.half_width(),
            options,
        },
        eigenvalues: values,
        negative_count,
        ground_state,
        zero_candidate,
        essential_edge: (p.c - p.kappa) / (p.kappa * p.kappa),
        operator_edge: (s - p.kappa) / (p.kappa * p.kappa),
        observed_edge,
        positive_point_eigenvalues,
    };
    Ok(Spectrum {
        report,
        xi: profile.xi.clone(),
        psi0,
        psi_zero,
    })
}

/// Profile on `n_points` nodes covering `xi` in `[-length/2, length/2)`.
pub fn profile_on_window(params: &WaveParams, n_points: usize, length: f64) -> Result<WaveProfile> {
    build_profile_with(params, &ProfileOptions::new(n_points, Extent::HalfWidth(0.5 * length)))
}

/// `J_m psi = -d/dx (m K d^{-1}(m dpsi/dx))` with `K = (1 - d^2/dx^2)^{-1}` and
/// the zero-mean antiderivative, all as Fourier multipliers on the field's
/// periodic grid.
pub fn apply_jm(field: &Field, psi: &[f64]) -> Vec<f64> {
    let sp = Spectral::new(field.len(), field.length());
    apply_jm_with(&sp, &field.m, psi)
}

pub fn apply_jm_with(sp: &Spectral, m: &[f64], psi: &[f64]) -> Vec<f64> {
    let dpsi = sp.derivative(psi);
    let inner: Vec<f64> = m.iter().zip(&dpsi).map(|(a, b)| a * b).collect();
    let k = sp.helmholtz_inverse(&sp.antiderivative(&inner));
    let outer: Vec<f64> = m.iter().zip(&k).map(|(a, b)| a * b).collect();
    sp.derivative(&outer).into_iter().map(|v| -v).collect()
}

/// Kernel-deflated solve of `L u = rhs` on the Dirichlet grid: the component
/// of `rhs` along the numerical near-kernel vector `z` is removed before the
/// solve and from the result.
fn deflated_solve(a: &SymBand, z: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let lu = BandLu::new(a, 0.0)?;
    let zr = dot(z, rhs);
    let r: Vec<f64> = rhs.iter().zip(z).map(|(r, z)| r - zr * z).collect();
    let mut u = lu.solve(&r);
    let zu = dot(z, &u);
    u.iter_mut().zip(z).for_each(|(u, z)| *u -= zu * z);
    Ok(u)
}

#[derive(Debug, Clone, Serialize)]
pub struct CoercivityIdentity {
    /// `<L_0^{-1} psi_Q, psi_Q>`.
    pub g0: f64,
    /// Central difference of the charge of `mu` in `c`.
    pub dq_dc: f64,
    /// `<d mu / dc, psi_Q>` with `d mu / dc` from profile differences.
    pub via_profile_derivative: f64,
    /// `|g0 - dq_dc| / |dq_dc|`.
    pub mismatch: f64,
}

/// Solves `L_0 u = psi_Q` and compares `<u, psi_Q>` with the speed derivative
/// of the charge along the wave family (fixed background, same grid).
pub fn coercivity_identity(profile: &WaveProfile, options: OperatorOptions) -> Result<CoercivityIdentity> {
    let p = profile.params;
    p.require_ch("the coercivity identity")?;
    let op = SecondVariation::new(profile, options.with_closure(Closure::Dirichlet))?;
    let a = op.to_band()?;
    let z = near_kernel(&a, &profile.mu_xi)?;
    let psi = psi_q(profile)?.closed;
    let u = deflated_solve(&a, &z, &psi)?;
    let g0 = profile.dxi * dot(&u, &psi);

    let delta = 1e-4 * p.c;
    let opts = ProfileOptions::new(profile.len(), Extent::HalfWidth(profile.half_width()));
    let hi = build_profile_with(&p.with_c(p.c + delta)?, &opts)?;
    let lo = build_profile_with(&p.with_c(p.c - delta)?, &opts)?;
    let dq_dc = (charge_q(&Field::from_profile(&hi))? - charge_q(&Field::from_profile(&lo))?) / (2.0 * delta);
    let dmu: Vec<f64> = hi.mu.iter().zip(&lo.mu).map(|(h, l)| (h - l) / (2.0 * delta)).collect();
    let via_profile_derivative = profile.dxi * dot(&dmu, &psi);
    Ok(CoercivityIdentity {
        g0,
        dq_dc,
        via_profile_derivative,
        mismatch: (g0 - dq_dc).abs() / dq_dc.abs(),
    })
}

/// Unit eigenvector of the eigenvalue closest to zero among the lowest few,
/// chosen by overlap with `translation`.
fn near_kernel(a: &SymBand, translation: &[f64]) -> Result<Vec<f64>> {
    let (d, e) = a.tridiagonalize();
    let vals = lowest_eigenvalues(&d, &e, ZERO_SEARCH.min(a.n()));
    let vecs: Vec<Vec<f64>> = sweep::map(&vals, |&l| crate::band::eigenvector(a, l))
        .into_iter()
        .collect::<Result<_>>()?;
    let best = vecs
        .into_iter()
        .max_by(|u, v| overlap(u, translation).total_cmp(&overlap(v, translation)))
        .ok_or_else(|| Error::NoConvergence("no eigenvectors".into()))?;
    Ok(unit(&best))
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstrainedMinimum {
    /// Minimum Rayleigh quotient on the constrained subspace.
    pub alpha0: f64,
    /// Bottom eigenvalue of the unconstrained operator.
    pub lambda0: f64,
    pub iterations: usize,
}

const RAYLEIGH_TOL: f64 = 1e-12;
const MAX_ITER: usize = 5000;

/// Smallest Rayleigh quotient of `L` over vectors orthogonal to every column
/// of `constraints`, by inverse iteration on the bordered system
/// `[[L - sigma, C], [C^T, 0]]` with `sigma` below the spectrum.
pub fn constrained_min_eig_with(a: &SymBand, constraints: &[Vec<f64>]) -> Result<ConstrainedMinimum> {
    let n = a.n();
    let (d, e) = a.tridiagonalize();
    let lambda0 = lowest_eigenvalues(&d, &e, 1)[0];
    let sigma = lambda0 - 1.0;
    let lu = BandLu::new(a, sigma)?;
    let z: Vec<Vec<f64>> = constraints.iter().map(|c| lu.solve(c)).collect();
    let k = constraints.len();
    // S = C^T Z
    let s = DMatrix::from_fn(k, k, |i, j| dot(&constraints[i], &z[j]));
    let s_lu = s.lu();
    let project = |y: Vec<f64>| -> Result<Vec<f64>> {
        if k == 0 {
            return Ok(y);
        }
        let cty = nalgebra::DVector::from_iterator(k, constraints.iter().map(|c| dot(c, &y)));
        let coef = s_lu
            .solve(&cty)
            .ok_or_else(|| Error::NoConvergence("singular constraint matrix".into()))?;
        let mut x = y;
        for (zj, cj) in z.iter().zip(coef.iter()) {
            x.iter_mut().zip(zj).for_each(|(x, z)| *x -= cj * z);
        }
        Ok(x)
    };
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.3 * (i as f64 * 0.618).sin()).collect();
    x = project(lu.solve(&x))?;
    let mut rq = f64::INFINITY;
    for it in 1..=MAX_ITER {
        x = unit(&x);
        let y = project(lu.solve(&x))?;
        x = unit(&y);
        let next = dot(&x, &a.matvec(&x));
        if (next - rq).abs() < RAYLEIGH_TOL * next.abs().max(1.0) {
            return Ok(ConstrainedMinimum { alpha0: next, lambda0, iterations: it });
        }
        rq = next;
    }
    Err(Error::NoConvergence(format!("constrained inverse iteration stalled at {rq}")))
}

/// `alpha0` with constraints `mu_xi` and `psi_Q`.
pub fn constrained_min_eig(profile: &WaveProfile, options: OperatorOptions) -> Result<ConstrainedMinimum> {
    let a = assemble_l(profile, options)?;
    let psi = psi_q(profile)?.closed;
    constrained_min_eig_with(&a, &[profile.mu_xi.clone(), psi])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::sup_norm;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn base() -> WaveParams {
        WaveParams::ch(2.0, 0.4).unwrap()
    }

    fn residual_of_translation(n: usize, order: StencilOrder) -> f64 {
        let prof = profile_on_window(&base(), n, 60.0).unwrap();
        let op = SecondVariation::new(&prof, OperatorOptions::default().with_order(order)).unwrap();
        sup_norm(&op.apply(&prof.mu_xi))
    }

    #[test]
    fn translation_mode_residual_is_second_order() {
        let r: Vec<f64> = [1024, 2048, 4096]
            .iter()
            .map(|&n| residual_of_translation(n, StencilOrder::Second))
            .collect();
        for w in r.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio} from {r:?}");
        }
        let r4: Vec<f64> = [1024, 2048]
            .iter()
            .map(|&n| residual_of_translation(n, StencilOrder::Fourth))
            .collect();
        assert!(r4[0] / r4[1] > 12.0, "fourth order {r4:?}");
    }

    #[test]
    fn refuses_coarse_grids() {
        let prof = profile_on_window(&base(), 128, 60.0).unwrap();
        assert!(matches!(
            assemble_l(&prof, OperatorOptions::default()),
            Err(Error::GridTooCoarse(_))
        ));
    }

    fn constant_operator(options: OperatorOptions, n: usize, length: f64) -> (SecondVariation, WaveParams) {
        let p = base();
        let k = p.kappa;
        let op = SecondVariation::from_samples(
            &p,
            options,
            length / n as f64,
            &vec![k; n],
            &vec![0.0; n],
            &vec![0.0; n],
            &vec![k; n],
        )
        .unwrap();
        (op, p)
    }

    #[test]
    fn constant_coefficient_symbol() {
        let (n, length) = (256, 40.0);
        for order in [StencilOrder::Second, StencilOrder::Fourth] {
            for speed in [SpeedConvention::Absolute, SpeedConvention::Frame] {
                let opts = OperatorOptions::default()
                    .with_order(order)
                    .with_speed(speed)
                    .with_closure(Closure::Periodic);
                let (op, p) = constant_operator(opts, n, length);
                for mode in [0usize, 1, 5, 17] {
                    let k = 2.0 * PI * mode as f64 / length;
                    let v: Vec<f64> = (0..n).map(|j| (k * j as f64 * op.dxi).cos()).collect();
                    let lv = op.apply(&v);
                    let sym = op.constant_symbol(&p, k);
                    for (a, b) in lv.iter().zip(&v) {
                        assert!((a - sym * b).abs() < 1e-9 * sym.abs().max(1.0));
                    }
                }
                // the discrete symbol tends to the continuous one
                let k = 2.0 * PI * 3.0 / length;
                let s = speed.speed(&p);
                let cont = s / (p.kappa * p.kappa) * (k * k + 1.0 - p.kappa / s);
                assert!((op.constant_symbol(&p, k) - cont).abs() < 1e-3 * cont);
            }
        }
        let (op, p) = constant_operator(
            OperatorOptions::default().with_speed(SpeedConvention::Absolute).with_closure(Closure::Periodic),
            n,
            length,
        );
        assert!((op.constant_symbol(&p, 0.0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn matrix_is_exactly_symmetric() {
        let prof = profile_on_window(&base(), 512, 60.0).unwrap();
        for order in [StencilOrder::Second, StencilOrder::Fourth] {
            for closure in [Closure::Dirichlet, Closure::Periodic] {
                let op = SecondVariation::new(&prof, OperatorOptions::default().with_order(order).with_closure(closure))
                    .unwrap();
                let m = op.to_dense();
                assert_eq!((&m - m.transpose()).amax(), 0.0);
            }
        }
        let band = assemble_l(&prof, OperatorOptions::default()).unwrap();
        let dense = SecondVariation::new(&prof, OperatorOptions::default()).unwrap().to_dense();
        for i in 0..band.n() {
            for j in i.saturating_sub(3)..(i + 4).min(band.n()) {
                assert_eq!(band.get(i, j), dense[(i, j)]);
            }
        }
    }

    #[test]
    fn spectrum_at_reference_point() {
        let prof = profile_on_window(&base(), 2048, 60.0).unwrap();
        let sp = spectrum(&prof, OperatorOptions::default()).unwrap();
        let r = &sp.report;
        assert_eq!(r.negative_count, 1);
        assert!(r.ground_state.value < 0.0);
        assert_eq!(r.ground_state.sign_changes, 0);
        assert_eq!(r.zero_candidate.sign_changes, 1);
        assert!(r.zero_candidate.value.abs() < 1e-4, "{}", r.zero_candidate.value);
        assert!(r.zero_candidate.overlap_with_translation > 0.999);
        assert!((r.operator_edge - 7.5).abs() < 1e-12);
        assert!((r.essential_edge - 10.0).abs() < 1e-12);
        let edge = r.observed_edge.unwrap();
        assert!(edge > r.operator_edge && edge < r.operator_edge * 1.05, "edge {edge}");
        assert!(r.positive_point_eigenvalues.iter().all(|&v| v > 0.0 && v < r.operator_edge));
        assert!(r.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn zero_eigenvalue_converges_at_second_order() {
        let z: Vec<f64> = [1024, 2048, 4096]
            .iter()
            .map(|&n| {
                let prof = profile_on_window(&base(), n, 60.0).unwrap();
                let opts = OperatorOptions::default().with_order(StencilOrder::Second);
                spectrum(&prof, opts).unwrap().report.zero_candidate.value.abs()
            })
            .collect();
        for w in z.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 4.0).abs() < 0.4, "{z:?}");
        }
    }

    fn low_counts(n: usize, length: f64) -> (usize, usize) {
        let prof = profile_on_window(&base(), n, length).unwrap();
        let r = spectrum(&prof, OperatorOptions::default()).unwrap().report;
        // point eigenvalues clearly below the edge
        let below = r.eigenvalues.iter().filter(|&&v| v < 0.8 * r.operator_edge).count();
        (r.negative_count, below)
    }

    #[test]
    fn counts_stable_under_refinement_and_widening() {
        let reference = low_counts(2048, 60.0);
        assert_eq!(low_counts(4096, 60.0), reference);
        assert_eq!(low_counts(3072, 90.0), reference);
    }

    #[test]
    fn dirichlet_and_periodic_closures_agree() {
        let prof = profile_on_window(&base(), 1024, 60.0).unwrap();
        let d = spectrum(&prof, OperatorOptions::default()).unwrap().report;
        let p = spectrum(&prof, OperatorOptions::default().with_closure(Closure::Periodic))
            .unwrap()
            .report;
        for (a, b) in d.eigenvalues.iter().zip(&p.eigenvalues).take(3) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn observed_edge_approaches_operator_edge() {
        let edge = |length: f64| {
            let prof = profile_on_window(&base(), (length * 34.0) as usize / 2 * 2, length).unwrap();
            spectrum(&prof, OperatorOptions::default()).unwrap().report.observed_edge.unwrap()
        };
        let (e1, e2) = (edge(60.0), edge(120.0));
        assert!((e2 - 7.5).abs() < (e1 - 7.5).abs(), "{e1} {e2}");
    }

    #[test]
    fn sign_change_counter() {
        assert_eq!(sign_changes(&[1.0, 2.0, -1.0, 1e-12, -2.0, 3.0], 1e-9), 2);
        assert_eq!(sign_changes(&[-1e-12, 1.0, 1e-12], 1e-9), 0);
    }

    #[test]
    fn translation_is_orthogonal_to_charge_gradient() {
        let prof = profile_on_window(&base(), 2048, 60.0).unwrap();
        let psi = psi_q(&prof).unwrap().closed;
        assert!((prof.dxi * dot(&psi, &prof.mu_xi)).abs() < 1e-8);
    }

    fn random_periodic(n: usize, seed: u64) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn jm_is_skew() {
        let n = 256;
        let length = 30.0;
        let m: Vec<f64> = (0..n)
            .map(|j| 0.4 + 0.3 * (-(j as f64 * length / n as f64 - 15.0).powi(2)).exp())
            .collect();
        let field = Field::new(-15.0, length, m, 0.4);
        for seed in 0..20 {
            let u = random_periodic(n, 2 * seed);
            let v = random_periodic(n, 2 * seed + 1);
            let ju = apply_jm(&field, &u);
            let jv = apply_jm(&field, &v);
            let s = dot(&ju, &v) + dot(&u, &jv);
            assert!(s.abs() / (dot(&u, &u) * dot(&v, &v)).sqrt() < 1e-10);
        }
    }

    #[test]
    fn jm_constant_background_multiplier() {
        let (n, length, kappa) = (128, 20.0, 0.4);
        let field = Field::constant(n, length, kappa);
        let k = 2.0 * PI / length;
        let psi: Vec<f64> = field.x.iter().map(|x| (k * x).sin()).collect();
        let j = apply_jm(&field, &psi);
        // -d/dx kappa K d^{-1} kappa d/dx sin = -kappa^2 k cos / (1 + k^2)
        for (jv, x) in j.iter().zip(&field.x) {
            let exact = -kappa * kappa * k * (k * x).cos() / (1.0 + k * k);
            assert!((jv - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn jm_maps_charge_gradient_to_translation() {
        // The zero-mean antiderivative differs from the one anchored at the
        // left end by a constant C, which adds C mu_xi to J psi_Q. Undoing
        // that shift recovers the relation on the line; C itself is O(1/L).
        let shift = |length: f64| {
            let prof = profile_on_window(&base(), (length * 51.2) as usize, length).unwrap();
            let psi = psi_q(&prof).unwrap().closed;
            let field = Field::from_profile(&prof);
            let sp = Spectral::new(field.len(), field.length());
            let dpsi = sp.derivative(&psi);
            let f: Vec<f64> = prof.mu.iter().zip(&dpsi).map(|(a, b)| a * b).collect();
            let c = -sp.antiderivative(&f)[0];
            let j = apply_jm(&field, &psi);
            let err = j
                .iter()
                .zip(&prof.mu_xi)
                .map(|(a, b)| (a - (1.0 + c) * b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-6 * sup_norm(&prof.mu_xi), "err {err}");
            c
        };
        let (c1, c2) = (shift(80.0), shift(160.0));
        assert!((c1 / c2 - 2.0).abs() < 0.05, "{c1} {c2}");
    }

    #[test]
    fn coercivity_identity_at_reference_point() {
        let prof = profile_on_window(&base(), 2048, 60.0).unwrap();
        let ci = coercivity_identity(&prof, OperatorOptions::default()).unwrap();
        assert!(ci.g0 < 0.0);
        assert!(ci.mismatch < 1e-3, "{ci:?}");
        assert!((ci.via_profile_derivative - ci.g0).abs() < 1e-3 * ci.g0.abs(), "{ci:?}");
    }

    #[test]
    fn constrained_minimum_is_positive() {
        let prof = profile_on_window(&base(), 2048, 60.0).unwrap();
        let cm = constrained_min_eig(&prof, OperatorOptions::default()).unwrap();
        assert!(cm.alpha0 > 0.0);
        assert!(cm.lambda0 < cm.alpha0);
        let a = assemble_l(&prof, OperatorOptions::default()).unwrap();
        let only_translation = constrained_min_eig_with(&a, std::slice::from_ref(&prof.mu_xi)).unwrap();
        assert!((only_translation.alpha0 - cm.lambda0).abs() < 1e-8 * cm.lambda0.abs().max(1.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn jm_skew_for_random_backgrounds(seed in 0u64..10_000, amp in 0.0_f64..2.0) {
            let n = 128;
            let length = 25.0;
            let m: Vec<f64> = (0..n).map(|j| 0.5 + amp * (2.0 * PI * j as f64 / n as f64).sin().powi(2)).collect();
            let field = Field::new(0.0, length, m, 0.5);
            let u = random_periodic(n, seed);
            let v = random_periodic(n, seed + 77);
            let s = dot(&apply_jm(&field, &u), &v) + dot(&u, &apply_jm(&field, &v));
            prop_assert!(s.abs() / (dot(&u, &u) * dot(&v, &v)).sqrt() < 1e-10);
        }
    }
}
