//! The nine acceptance checks, shared by the test suite and `verify-all`.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::conserved::{default_eps_list, remainder_scaling};
use crate::criterion::{
    big_f_derivatives, default_h_grid, dh_dc, h_sweep, route_a_grid, special_functions, transformed_dq_dh,
};
use crate::error::Result;
use crate::evolution::{stability_experiment, travelling_check, EvolutionConfig};
use crate::fourier::Spectral;
use crate::numeric::{bisect, fd2_second};
use crate::params::{PhasePoint, WaveParams};
use crate::spectral::{
    apply_jm_with, coercivity_identity, constrained_min_eig, profile_on_window, spectrum, OperatorOptions,
};
use crate::sweep;
use crate::wave::{
    build_profile_with, center, energy, homoclinic_energy, turning_point, vector_field, Extent, ProfileOptions,
};

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub id: u8,
    pub name: &'static str,
    /// What the check is about, in words.
    pub reference: &'static str,
    pub passed: bool,
    /// Violated sub-checks, empty on success.
    pub failures: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
    pub elapsed_s: f64,
    pub time_limit_s: f64,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        let mut s = format!("{status} [{}] {} ({:.2} s)", self.id, self.name, self.elapsed_s);
        if !self.passed {
            s.push_str(&format!(": {} [{}]", self.failures.join("; "), self.reference));
        }
        s
    }
}

/// Collects metrics and failed sub-checks for one criterion.
struct Recorder {
    metrics: BTreeMap<String, f64>,
    failures: Vec<String>,
}

impl Recorder {
    fn new() -> Self {
        Self { metrics: BTreeMap::new(), failures: Vec::new() }
    }

    fn metric(&mut self, key: &str, v: f64) {
        self.metrics.insert(key.to_string(), v);
    }

    fn require(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }
}

struct Meta {
    id: u8,
    name: &'static str,
    reference: &'static str,
    time_limit_s: f64,
}

fn run(meta: Meta, body: impl FnOnce(&mut Recorder) -> Result<()>) -> CheckOutcome {
    let start = Instant::now();
    let mut rec = Recorder::new();
    if let Err(e) = body(&mut rec) {
        rec.failures.push(format!("error: {e}"));
    }
    let elapsed_s = start.elapsed().as_secs_f64();
    rec.metric("elapsed_s", elapsed_s);
    rec.require(
        elapsed_s < meta.time_limit_s,
        format!("runtime {elapsed_s:.2} s exceeds {} s", meta.time_limit_s),
    );
    CheckOutcome {
        id: meta.id,
        name: meta.name,
        reference: meta.reference,
        passed: rec.failures.is_empty(),
        failures: rec.failures,
        metrics: rec.metrics,
        elapsed_s,
        time_limit_s: meta.time_limit_s,
    }
}

fn reference() -> WaveParams {
    WaveParams::ch(2.0, 0.4).expect("reference parameters are admissible")
}

pub fn check_existence() -> CheckOutcome {
    let meta = Meta {
        id: 1,
        name: "fixed points and turning point",
        reference: "saddle at the background, centre at c - kappa, crest G(2, 0.4) = 1.888",
        time_limit_s: 1.0,
    };
    run(meta, |r| {
        let p = reference();
        let saddle = vector_field(PhasePoint { phi: p.kappa, psi: 0.0 }, &p)?;
        let centre_pt = vector_field(PhasePoint { phi: p.c - p.kappa, psi: 0.0 }, &p)?;
        r.require(saddle.phi == 0.0 && saddle.psi == 0.0, format!("field at saddle = {saddle:?}"));
        r.require(centre_pt.phi == 0.0 && centre_pt.psi == 0.0, format!("field at centre = {centre_pt:?}"));
        let ctr = center(&p)?;
        r.metric("centre", ctr);
        r.require((ctr - 1.6).abs() < 1e-12, format!("centre {ctr} != 1.6"));
        let g = turning_point(&p)?;
        // independent oracle: plain bisection of the energy level in phi
        let e_hom = homoclinic_energy(&p);
        let oracle = bisect(
            |phi| energy(PhasePoint { phi, psi: 0.0 }, &p).map(|e| e - e_hom).unwrap_or(f64::NAN),
            ctr,
            p.c - 1e-12,
        )?;
        r.metric("turning_point", g);
        r.metric("oracle", oracle);
        r.require((g - 1.888).abs() < 1e-3, format!("G = {g}, expected 1.888 +- 1e-3"));
        r.require((g - oracle).abs() < 1e-3, format!("G = {g} vs oracle {oracle}"));
        Ok(())
    })
}

pub fn check_mu_consistency() -> CheckOutcome {
    let meta = Meta {
        id: 2,
        name: "momentum consistency at second order",
        reference: "mu = (1 - d^2/dxi^2) phi along the wave",
        time_limit_s: 5.0,
    };
    run(meta, |r| {
        let p = reference();
        let ns = [1024usize, 2048, 4096];
        let errs: Vec<f64> = sweep::map(&ns, |&n| {
            let prof = build_profile_with(&p, &ProfileOptions::new(n, Extent::HalfWidth(30.0)))?;
            let d2 = fd2_second(&prof.phi, prof.dxi);
            Ok::<_, crate::Error>((0..n).map(|j| (prof.phi[j] - d2[j] - prof.mu[j]).abs()).fold(0.0, f64::max))
        })
        .into_iter()
        .collect::<Result<_>>()?;
        for (n, e) in ns.iter().zip(&errs) {
            r.metric(&format!("max_error_n{n}"), *e);
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            r.require((ratio - 4.0).abs() < 0.5, format!("refinement ratio {ratio}, expected about 4"));
        }
        Ok(())
    })
}

pub fn check_criterion() -> CheckOutcome {
    let meta = Meta {
        id: 3,
        name: "stability criterion by both routes",
        reference: "charge decreasing in the speed; transformed integral decreasing in h",
        time_limit_s: 30.0,
    };
    run(meta, |r| {
        let pts = route_a_grid(&[1.0, 2.0, 4.0], &[0.05, 0.2, 0.45])?;
        for pt in &pts {
            r.require(pt.dq_dc > 0.0, format!("dQ/dc = {} at (c, kappa) = ({}, {})", pt.dq_dc, pt.c, pt.kappa));
            let p = WaveParams::ch(pt.c, pt.kappa)?;
            let h = 2.0 * p.kappa / p.gamma();
            let chained = transformed_dq_dh(h)? * dh_dc(&p);
            let rel = (chained - pt.dq_dc).abs() / pt.dq_dc.abs();
            r.metric(&format!("chain_rel_c{}_k{}", pt.c, pt.kappa), rel);
            r.require(rel < 1e-4, format!("routes differ by {rel:.2e} at (c, kappa) = ({}, {})", pt.c, pt.kappa));
        }
        let rows = h_sweep(&default_h_grid())?;
        for row in &rows {
            r.require(row.dq_dh < 0.0, format!("transformed derivative {} at h = {}", row.dq_dh, row.h));
        }
        r.metric("route_a_points", pts.len() as f64);
        r.metric("route_b_points", rows.len() as f64);
        Ok(())
    })
}

pub fn check_f_positivity() -> CheckOutcome {
    let meta = Meta {
        id: 4,
        name: "positivity of F and its derivatives",
        reference: "sign-definite integrand of the transformed derivative",
        time_limit_s: 1.0,
    };
    run(meta, |r| {
        let n = 10_000;
        let mut bad = 0;
        for i in 1..=n {
            let phi = (1.0 - 1e-6) * i as f64 / (n + 1) as f64;
            let s = special_functions(phi)?;
            let (d1, d2) = big_f_derivatives(phi)?;
            if !(s.big_f > 0.0 && d1 > 0.0 && d2 > 0.0) {
                bad += 1;
            }
        }
        r.metric("nonpositive_samples", bad as f64);
        r.require(bad == 0, format!("{bad} samples with F, F' or F'' <= 0"));
        let f_half = special_functions(0.5)?.big_f;
        r.metric("F(0.5)", f_half);
        r.require((f_half - 0.039094).abs() < 1e-6, format!("F(0.5) = {f_half}"));
        Ok(())
    })
}

/// Grid of the spectral checks: 2048 nodes on a window of total length 60.
pub const SPECTRUM_N: usize = 2048;
pub const SPECTRUM_LENGTH: f64 = 60.0;

pub fn check_spectrum() -> CheckOutcome {
    let meta = Meta {
        id: 5,
        name: "spectrum of the second variation",
        reference: "one simple negative eigenvalue, translation kernel, essential spectrum from the background",
        time_limit_s: 60.0,
    };
    run(meta, |r| {
        let prof = profile_on_window(&reference(), SPECTRUM_N, SPECTRUM_LENGTH)?;
        let rep = spectrum(&prof, OperatorOptions::default())?.report;
        r.metric("negative_count", rep.negative_count as f64);
        r.metric("lambda0", rep.ground_state.value);
        r.metric("zero_value", rep.zero_candidate.value);
        r.metric("zero_overlap", rep.zero_candidate.overlap_with_translation);
        r.metric("essential_edge", rep.essential_edge);
        r.metric("operator_edge", rep.operator_edge);
        r.require(rep.negative_count == 1, format!("{} negative eigenvalues", rep.negative_count));
        r.require(
            rep.ground_state.sign_changes == 0,
            format!("ground state has {} sign changes", rep.ground_state.sign_changes),
        );
        r.require(
            rep.zero_candidate.value.abs() < 1e-4,
            format!("near-zero eigenvalue {:.3e}", rep.zero_candidate.value),
        );
        r.require(
            rep.zero_candidate.overlap_with_translation > 0.999,
            format!("overlap with mu_xi {}", rep.zero_candidate.overlap_with_translation),
        );
        match rep.observed_edge {
            Some(edge) => {
                r.metric("observed_edge", edge);
                let rel = (edge - rep.essential_edge).abs() / rep.essential_edge;
                r.require(
                    rel < 0.02,
                    format!(
                        "cluster edge {edge:.4} is {:.1}% from (c - kappa)/kappa^2 = {}",
                        100.0 * rel,
                        rep.essential_edge
                    ),
                );
            }
            None => r.require(false, "no delocalised cluster found"),
        }
        Ok(())
    })
}

pub fn check_coercivity() -> CheckOutcome {
    let meta = Meta {
        id: 6,
        name: "coercivity identity and constrained minimum",
        reference: "g(0) equals the speed derivative of the charge; positive constrained minimum",
        time_limit_s: 60.0,
    };
    run(meta, |r| {
        let prof = profile_on_window(&reference(), SPECTRUM_N, SPECTRUM_LENGTH)?;
        let ci = coercivity_identity(&prof, OperatorOptions::default())?;
        r.metric("g0", ci.g0);
        r.metric("dQ_dc", ci.dq_dc);
        r.metric("mismatch", ci.mismatch);
        r.require(ci.g0 < 0.0, format!("g0 = {}", ci.g0));
        r.require(ci.mismatch < 1e-3, format!("g0 vs dQ/dc relative mismatch {:.2e}", ci.mismatch));
        let cm = constrained_min_eig(&prof, OperatorOptions::default())?;
        r.metric("alpha0", cm.alpha0);
        r.metric("lambda0", cm.lambda0);
        r.require(cm.alpha0 > 0.0, format!("alpha0 = {}", cm.alpha0));
        r.require(cm.lambda0 < cm.alpha0, format!("lambda0 {} >= alpha0 {}", cm.lambda0, cm.alpha0));
        Ok(())
    })
}

pub fn check_skew(seed: u64) -> CheckOutcome {
    let meta = Meta {
        id: 7,
        name: "skew-symmetry of the Poisson operator",
        reference: "J_m skew-symmetric in L^2",
        time_limit_s: 5.0,
    };
    run(meta, |r| {
        let prof = profile_on_window(&reference(), 1024, SPECTRUM_LENGTH)?;
        let sp = Spectral::new(prof.len(), SPECTRUM_LENGTH);
        let seeds: Vec<u64> = (0..100).map(|i| seed.wrapping_add(i)).collect();
        let worst = sweep::map(&seeds, |&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let u: Vec<f64> = (0..prof.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..prof.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            let s = dot(&apply_jm_with(&sp, &prof.mu, &u), &v) + dot(&u, &apply_jm_with(&sp, &prof.mu, &v));
            s.abs() / (dot(&u, &u) * dot(&v, &v)).sqrt()
        })
        .into_iter()
        .fold(0.0, f64::max);
        r.metric("worst_relative", worst);
        r.metric("seed", seed as f64);
        r.require(worst < 1e-10, format!("worst |<Ju,v> + <u,Jv>| / |u||v| = {worst:.2e}"));
        Ok(())
    })
}

/// Grids and steps of the evolution runs, per parameter point. The
/// near-peaked `b = 0.7` wave needs a finer grid and a shorter step.
pub fn stability_configs(seed: u64) -> Vec<EvolutionConfig> {
    let mk = |b: f64, kappa: f64, length: f64, n: usize, dt: f64| {
        let mut cfg = EvolutionConfig::new(WaveParams::new(b, 2.0, kappa).expect("admissible"), length, n, 20.0);
        cfg.dt = Some(dt);
        cfg.epsilon = 1e-2;
        cfg.seed = seed;
        cfg.record_every = 0.1;
        cfg
    };
    vec![
        mk(1.0, 0.4, 80.0, 4096, 2e-3),
        mk(0.7, 0.5, 40.0, 8192, 6e-4),
        mk(1.4, 0.5, 80.0, 4096, 2e-3),
    ]
}

pub fn check_evolution(seed: u64) -> CheckOutcome {
    let meta = Meta {
        id: 8,
        name: "evolution: travelling wave, conservation, orbital stability",
        reference: "waves on a constant background are orbitally stable",
        time_limit_s: 600.0,
    };
    run(meta, |r| {
        let p = reference();
        let mut travel = EvolutionConfig::new(p, 80.0, 4096, 5.0);
        travel.dt = Some(2e-3);
        travel.record_every = 0.5;
        let mut jobs: Vec<EvolutionConfig> = vec![travel];
        jobs.extend(stability_configs(seed));
        let reports = sweep::map(&jobs, stability_experiment);
        let mut reports = reports.into_iter();
        let tr = reports.next().expect("travel run")?;
        let prof = profile_on_window(&p, 4096, 80.0)?;
        let tc = travelling_check(&prof, &tr.trace.final_m, 5.0);
        r.metric("travel_mismatch", tc.relative_mismatch);
        r.metric("travel_shift_error", tc.shift_error);
        r.require(tr.failure.is_none(), format!("travel run stopped: {:?}", tr.failure));
        r.require(
            tc.relative_mismatch < 1e-4,
            format!("shifted-profile mismatch {:.2e} at T = 5", tc.relative_mismatch),
        );
        for (name, d) in ["H", "Q1", "Q2"].iter().zip(tr.relative_drifts) {
            r.metric(&format!("travel_drift_{name}"), d);
            r.require(d < 1e-6, format!("relative drift of {name} = {d:.2e}"));
        }
        for rep in reports {
            let rep = rep?;
            let tag = format!("b{}_k{}", rep.params.b, rep.params.kappa);
            r.metric(&format!("max_distance_{tag}"), rep.max_distance);
            r.metric(&format!("ratio_{tag}"), rep.ratio.unwrap_or(f64::NAN));
            r.require(rep.failure.is_none(), format!("{tag} stopped: {:?}", rep.failure));
            r.require(
                rep.max_distance < 5.0 * rep.epsilon,
                format!(
                    "orbital distance {:.3e} = {:.1} eps at (b, c, kappa) = ({}, {}, {})",
                    rep.max_distance,
                    rep.max_distance / rep.epsilon,
                    rep.params.b,
                    rep.params.c,
                    rep.params.kappa
                ),
            );
            for (i, d) in rep.relative_drifts.iter().enumerate() {
                r.metric(&format!("drift{i}_{tag}"), *d);
            }
        }
        r.metric("seed", seed as f64);
        Ok(())
    })
}

pub fn check_remainder() -> CheckOutcome {
    let meta = Meta {
        id: 9,
        name: "cubic remainder of the Lagrangian expansion",
        reference: "the wave is a critical point with second variation L",
        time_limit_s: 10.0,
    };
    run(meta, |r| {
        let prof = build_profile_with(&reference(), &ProfileOptions::new(2048, Extent::HalfWidth(30.0)))?;
        let eps = default_eps_list();
        let gauss: Vec<f64> = prof.xi.iter().map(|x| (-(x - 0.7) * (x - 0.7)).exp()).collect();
        let sech: Vec<f64> = prof.xi.iter().map(|x| 1.0 / ((x + 1.3) / 0.8).cosh().powi(2)).collect();
        for (name, h) in [("gaussian", gauss), ("sech2", sech)] {
            match remainder_scaling(&prof, &h, &eps)? {
                Some(slope) => {
                    r.metric(&format!("slope_{name}"), slope);
                    r.require((slope - 3.0).abs() < 0.2, format!("{name} slope {slope:.3}"));
                }
                None => r.require(false, format!("{name} remainder vanished")),
            }
        }
        Ok(())
    })
}

/// Checks run by `verify-all --fast`: those with budgets of 10 s or less.
pub const FAST_IDS: [u8; 5] = [1, 2, 4, 7, 9];

pub fn run_check(id: u8, seed: u64) -> Option<CheckOutcome> {
    Some(match id {
        1 => check_existence(),
        2 => check_mu_consistency(),
        3 => check_criterion(),
        4 => check_f_positivity(),
        5 => check_spectrum(),
        6 => check_coercivity(),
        7 => check_skew(seed),
        8 => check_evolution(seed),
        9 => check_remainder(),
        _ => return None,
    })
}

/// Runs the checks in order; `fast` restricts to [`FAST_IDS`].
pub fn run_all(fast: bool, seed: u64) -> Vec<CheckOutcome> {
    let ids: Vec<u8> = if fast { FAST_IDS.to_vec() } else { (1..=9).collect() };
    ids.into_iter().filter_map(|id| run_check(id, seed)).collect()
}
