use anyhow::Context;
use bchlab::conserved::{conserved_family_bneq1, critical_point_residual, functional_records, Field};
use bchlab::criterion::{
    default_h_grid, dq_dc, dq_dc_transformed, h_sweep, verdict, write_sweep_csv, write_verdict,
};
use bchlab::evolution::{stability_experiment, travelling_check, EvolutionConfig};
use bchlab::io::write_json;
use bchlab::spectral::{
    coercivity_identity, constrained_min_eig, profile_on_window, spectrum, OperatorOptions,
};
use bchlab::verify;
use bchlab::wave::{center, energy, homoclinic_energy, homoclinic_orbit, phase_portrait, turning_point};
use bchlab::{build_profile_with, Extent, PhasePoint, ProfileOptions};
use serde_json::json;

use crate::config::RunConfig;
use crate::report::Report;

const TAIL_TOL: f64 = 1e-10;
const DEFAULT_DT: f64 = 2e-3;
const DEFAULT_DX: f64 = 80.0 / 4096.0;

pub fn profile(cfg: &RunConfig) -> anyhow::Result<Report> {
    let p = cfg.params;
    let n = cfg.grid(4096, 64)?;
    let extent = match cfg.domain_length {
        Some(l) => Extent::HalfWidth(0.5 * l),
        None => Extent::Auto { tail_tol: TAIL_TOL },
    };
    let prof = build_profile_with(&p, &ProfileOptions::new(n, extent))?;
    let mut rep = Report::new("profile", cfg);
    let tol = cfg.tolerances.parity;

    let path = cfg.out.join("profile.csv");
    prof.write_csv(&path)?;
    rep.file(&path);

    let mid = n / 2;
    let g = turning_point(&p)?;
    rep.below("crest at xi = 0", "phi(0) = G", (prof.phi[mid] - g).abs(), tol * g.max(1.0));
    rep.below("flat crest", "phi_xi(0) = 0", prof.phi_xi[mid].abs(), tol);

    let in_phi = prof.phi.iter().all(|&v| v > p.kappa && v <= g * (1.0 + 1e-14));
    let in_mu = prof.mu.iter().all(|&v| v > p.kappa && v <= prof.mu_max * (1.0 + 1e-14));
    rep.holds("range of phi", "kappa < phi <= G", in_phi, g);
    rep.holds("range of mu", "kappa < mu <= M", in_mu, prof.mu_max);

    let parity = (1..n).map(|j| (prof.phi[j] - prof.phi[n - j]).abs()).fold(0.0, f64::max);
    rep.below("even profile", "phi(xi) = phi(-xi)", parity, tol);

    let field = Field::from_profile(&prof);
    let mut residuals = None;
    let functionals = if p.b == 1.0 {
        // The residual is pure discretisation error, so it must shrink under
        // refinement; its size on one grid says little.
        let residual = critical_point_residual(&prof)?;
        let fine = build_profile_with(&p, &ProfileOptions::new(2 * n, extent))?;
        let residual_fine = critical_point_residual(&fine)?;
        let ratio = residual / residual_fine;
        rep.holds(
            "critical point",
            "Lagrangian gradient at the wave vanishes under grid refinement",
            ratio > cfg.tolerances.refinement_ratio || residual_fine < 1e-10,
            ratio,
        );
        residuals = Some([residual, residual_fine]);
        serde_json::to_value(functional_records(&field, Some(p))?)?
    } else {
        let (e, f1, f2) = conserved_family_bneq1(&field, p.b)?;
        json!([{ "name": "E", "value": e }, { "name": "F1", "value": f1 }, { "name": "F2", "value": f2 }])
    };
    let fpath = cfg.out.join("functionals.json");
    write_json(&fpath, &functionals)?;
    rep.file(&fpath);

    rep.results = json!({
        "n_points": n,
        "dxi": prof.dxi,
        "half_width": prof.half_width(),
        "turning_point": prof.turning,
        "mu_max": prof.mu_max,
        "critical_point_residual": residuals,
        "functionals": functionals,
    });
    Ok(rep)
}

pub fn portrait(cfg: &RunConfig) -> anyhow::Result<Report> {
    let p = cfg.params;
    let per_branch = if cfg.fast { 200 } else { 1000 };
    let e_hom = homoclinic_energy(&p);
    let centre = center(&p)?;
    let e_centre = energy(PhasePoint::new(centre, 0.0), &p)?;
    // Centre, four closed orbits inside the loop, the loop itself and one open orbit.
    let mut levels: Vec<f64> =
        (0..5).map(|k| e_centre + 0.2 * k as f64 * (e_hom - e_centre)).collect();
    levels.push(e_hom);
    levels.push(e_hom + 0.2 * (e_hom - e_centre).abs());
    let orbits = phase_portrait(&p, &levels, per_branch)?;
    let mut rep = Report::new("portrait", cfg);

    let mut worst = 0.0_f64;
    for (i, orbit) in orbits.iter().enumerate() {
        let path = cfg.out.join(format!("orbit_{i:02}.csv"));
        orbit.write_csv(&path)?;
        rep.file(&path);
        let scale = orbit.energy.abs().max(1.0);
        for q in &orbit.points {
            worst = worst.max((energy(*q, &p)? - orbit.energy).abs() / scale);
        }
    }
    rep.below("energy on level sets", "energy(p) = e along each orbit", worst, cfg.tolerances.orbit_energy);

    let hom = homoclinic_orbit(&p, per_branch)?;
    let path = cfg.out.join("homoclinic.csv");
    hom.write_csv(&path)?;
    rep.file(&path);
    let g = turning_point(&p)?;
    let phis = hom.points.iter().map(|q| q.phi);
    let lo = phis.clone().fold(f64::INFINITY, f64::min);
    let hi = phis.fold(f64::NEG_INFINITY, f64::max);
    rep.below("loop leaves the saddle", "homoclinic orbit reaches (kappa, 0)", (lo - p.kappa).abs(), 1e-12);
    rep.below("loop reaches the crest", "homoclinic orbit reaches (G, 0)", (hi - g).abs(), 1e-12);
    let single = orbits[0].points.len() == 1 && (orbits[0].points[0].phi - centre).abs() < 1e-12;
    rep.holds("centre level", "energy at the centre is a single point", single, centre);

    rep.results = json!({
        "saddle": [p.kappa, 0.0],
        "centre": [centre, 0.0],
        "turning_point": g,
        "homoclinic_energy": e_hom,
        "levels": levels,
    });
    Ok(rep)
}

pub fn criterion(cfg: &RunConfig, sweep: bool) -> anyhow::Result<Report> {
    cfg.require_ch("criterion")?;
    let mut rep = Report::new("criterion", cfg);
    if sweep {
        let rows = h_sweep(&default_h_grid())?;
        let path = cfg.out.join("sweep.csv");
        write_sweep_csv(&path, &rows)?;
        rep.file(&path);
        let v = verdict(&rows);
        let vpath = cfg.out.join("verdict.json");
        write_verdict(&vpath, &v)?;
        rep.file(&vpath);
        let worst = rows.iter().map(|r| r.dq_dh).fold(f64::NEG_INFINITY, f64::max);
        rep.holds("transformed charge decreases", "dQcal/dh < 0 on every row", v.criterion_holds, worst);
        rep.results = serde_json::to_value(&v)?;
    } else {
        let p = cfg.params;
        let a = dq_dc(&p)?;
        let b = dq_dc_transformed(&p)?;
        let mismatch = (a - b).abs() / a.abs();
        rep.holds("stability sign", "dQ/dc > 0", a > 0.0, a);
        rep.below("routes agree", "chain rule between direct and transformed dQ/dc", mismatch, cfg.tolerances.chain_rule);
        let result = json!({ "params": p, "dq_dc": a, "dq_dc_transformed": b, "relative_mismatch": mismatch });
        let path = cfg.out.join("criterion.json");
        write_json(&path, &result)?;
        rep.file(&path);
        rep.results = result;
    }
    Ok(rep)
}

pub fn spectrum_cmd(cfg: &RunConfig) -> anyhow::Result<Report> {
    cfg.require_ch("spectrum")?;
    let n = cfg.grid(2048, 256)?;
    let length = cfg.domain_length.unwrap_or(60.0);
    let prof = profile_on_window(&cfg.params, n, length)?;
    let opts = OperatorOptions::default();
    let computed = spectrum(&prof, opts)?;
    let mut rep = Report::new("spectrum", cfg);

    let path = cfg.out.join("spectrum.json");
    computed.write_json(&path)?;
    rep.file(&path);
    let epath = cfg.out.join("eigenfunctions.csv");
    computed.write_eigenfunctions(&epath)?;
    rep.file(&epath);

    let r = &computed.report;
    rep.holds("one negative direction", "exactly one negative eigenvalue", r.negative_count == 1, r.negative_count as f64);
    rep.holds("ground state has no nodes", "ground state does not change sign", r.ground_state.sign_changes == 0, r.ground_state.sign_changes as f64);
    rep.below("translation eigenvalue", "|lambda| of the mode along mu_xi", r.zero_candidate.value.abs(), cfg.tolerances.zero_eigenvalue);
    rep.holds(
        "translation mode",
        "zero mode is parallel to mu_xi",
        r.zero_candidate.overlap_with_translation > 0.999,
        r.zero_candidate.overlap_with_translation,
    );
    match r.observed_edge {
        Some(edge) => rep.below(
            "continuous spectrum",
            "observed cluster edge near the operator symbol minimum",
            (edge - r.operator_edge).abs() / r.operator_edge,
            0.02,
        ),
        None => rep.holds("continuous spectrum", "a delocalised eigenvalue exists", false, f64::NAN),
    }

    let mut results = serde_json::to_value(r)?;
    if !cfg.fast {
        let ci = coercivity_identity(&prof, opts)?;
        rep.holds("negative projection", "<L^-1 psi_Q, psi_Q> < 0", ci.g0 < 0.0, ci.g0);
        rep.below("coercivity identity", "<L^-1 psi_Q, psi_Q> = dQ/dc", ci.mismatch, 1e-3);
        let cm = constrained_min_eig(&prof, opts)?;
        rep.holds("constrained coercivity", "minimum on the constrained subspace > 0", cm.alpha0 > 0.0, cm.alpha0);
        let cpath = cfg.out.join("coercivity.json");
        write_json(&cpath, &json!({ "identity": ci, "constrained_minimum": cm }))?;
        rep.file(&cpath);
        results["coercivity"] = serde_json::to_value(ci)?;
        results["constrained_minimum"] = serde_json::to_value(cm)?;
    }
    rep.results = results;
    Ok(rep)
}

pub fn evolve(cfg: &RunConfig) -> anyhow::Result<Report> {
    let p = cfg.params;
    let n = cfg.grid(4096, 16)?;
    let mut ec = EvolutionConfig::new(p, cfg.domain_length.unwrap_or(80.0), n, cfg.t_final.unwrap_or(20.0));
    // 2e-3 on the default grid keeps conserved drifts near 1e-7 over T = 20;
    // finer grids scale it with dx.
    ec.dt = Some(cfg.dt.unwrap_or(DEFAULT_DT * (ec.domain_length / n as f64) / DEFAULT_DX));
    ec.epsilon = cfg.epsilon.unwrap_or(0.0);
    ec.seed = cfg.seed;
    ec.snapshot_every = cfg.snapshot_every;
    ec.validate().map_err(|e| crate::config::Invalid(e.to_string()))?;

    let mut rep = Report::new("evolve", cfg);
    let cpath = cfg.out.join("config.json");
    write_json(&cpath, &ec)?;
    rep.file(&cpath);

    let st = stability_experiment(&ec)?;
    let tpath = cfg.out.join("trace.csv");
    st.trace.write_csv(&tpath)?;
    rep.file(&tpath);
    if !st.trace.snapshots.is_empty() {
        let dir = cfg.out.join("snapshots");
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for path in st.trace.write_snapshots(&dir)? {
            rep.file(&path);
        }
    }
    let spath = cfg.out.join("stability.json");
    write_json(&spath, &st)?;
    rep.file(&spath);

    rep.holds(
        "run completed",
        "positivity and step bound kept",
        st.failure.is_none(),
        st.trace.times.last().copied().unwrap_or(0.0),
    );
    let drift = st.relative_drifts.iter().copied().fold(0.0, f64::max);
    rep.below("conservation", "relative drift of conserved quantities", drift, cfg.tolerances.drift);
    match st.ratio {
        Some(ratio) => rep.below(
            "orbital stability",
            "max orbital distance / epsilon",
            ratio,
            cfg.tolerances.orbital_ratio,
        ),
        None if st.failure.is_none() => {
            let prof = profile_on_window(&p, n, ec.domain_length)?;
            let tc = travelling_check(&prof, &st.trace.final_m, ec.t_final);
            rep.below("travelling wave", "relative H1 mismatch to the translated profile", tc.relative_mismatch, 1e-3);
        }
        None => {}
    }
    rep.results = serde_json::to_value(&st)?;
    Ok(rep)
}

pub fn verify_all(cfg: &RunConfig) -> anyhow::Result<Report> {
    let outcomes = verify::run_all(cfg.fast, cfg.seed);
    let mut rep = Report::new("verify-all", cfg);
    for o in &outcomes {
        println!("{}", o.line());
        rep.holds(o.name, o.reference, o.passed, o.elapsed_s);
        if !o.passed {
            if let Some(c) = rep.checks.last_mut() {
                c.detail = o.failures.join("; ");
            }
        }
    }
    rep.results = serde_json::to_value(&outcomes)?;
    Ok(rep)
}
