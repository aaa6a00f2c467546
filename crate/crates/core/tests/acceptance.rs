//! Acceptance gate: ten independent criteria, one test each, every test
//! printing a single pass/fail line (visible under --nocapture; cargo also
//! echoes the line for any failing criterion).

use shortfall_core::espmap::{map_from_effective, map_to_effective};
use shortfall_core::finite_lab::{optimize_es_lp, replica_vs_mc, LabError, SampleSet};
use shortfall_core::gaussx::{big_w, norm_cdf, norm_pdf, psi};
use shortfall_core::portfolio_stats::{estimation_error, sample_weights, weight_distribution};
use shortfall_core::replica_core::{
    saddle_residuals, MarketModel, Regularizer, ReplicaSolution, SigmaGroup,
};
use shortfall_core::saddle_solver::{solve_saddle, trace_boundary, SolveConfig, SolveError};

fn report(num: u32, label: &str, outcome: Result<String, String>) {
    match outcome {
        Ok(detail) => println!("criterion {num:02} PASS {label}: {detail}"),
        Err(why) => {
            println!("criterion {num:02} FAIL {label}: {why}");
            panic!("criterion {num:02} {label}: {why}");
        }
    }
}

fn cfg() -> SolveConfig {
    SolveConfig::default()
}

/// Adaptive Simpson with Richardson correction, for the quadrature checks.
fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64, fm: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(f, a, fa, m, fm, flm);
        let right = simpson(f, m, fm, b, fb, frm);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, fa, m, fm, flm, left, 0.5 * tol, depth - 1)
                + rec(f, m, fm, b, fb, frm, right, 0.5 * tol, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = simpson(f, a, fa, b, fb, fm);
    rec(f, a, fa, b, fb, fm, whole, tol, 48)
}

fn check(ok: bool, why: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(why)
    }
}

// 1. Gaussian-family identities and quadrature of the defining integrals.

fn gaussian_family_identities() -> Result<String, String> {
    let mut worst = 0.0_f64;
    for i in 0..1000 {
        let x = -10.0 + 20.0 * i as f64 / 999.0;
        let reflect_cdf = (norm_cdf(x) + norm_cdf(-x) - 1.0).abs();
        let reflect_psi = (psi(x) - psi(-x) - x).abs();
        let reflect_w = (big_w(x) + big_w(-x) - 0.5 * (x * x + 1.0)).abs();
        let w_id = (big_w(x) - 0.5 * (x * psi(x) + norm_cdf(x))).abs();
        let e = reflect_cdf.max(reflect_psi).max(reflect_w).max(w_id);
        worst = worst.max(e);
        check(e <= 1e-12, format!("identity residual {e:.3e} at x = {x}"))?;
    }
    // Defining integrals, built from the density alone: the cdf is its
    // integral, and the first/second antiderivatives take the moment forms
    // int (x-t) pdf(t) dt and (1/2) int (x-t)^2 pdf(t) dt.
    let mut worst_q = 0.0_f64;
    for &x in &[-3.0, -1.0, 0.0, 0.7, 2.5] {
        let lo = -12.0;
        let cdf_q = integrate(&norm_pdf, lo, x, 1e-15);
        let psi_q = integrate(&|t: f64| (x - t) * norm_pdf(t), lo, x, 1e-15);
        let w_q = integrate(&|t: f64| 0.5 * (x - t) * (x - t) * norm_pdf(t), lo, x, 1e-15);
        let e = (cdf_q - norm_cdf(x))
            .abs()
            .max((psi_q - psi(x)).abs())
            .max((w_q - big_w(x)).abs());
        worst_q = worst_q.max(e);
        check(e <= 1e-12, format!("quadrature mismatch {e:.3e} at x = {x}"))?;
    }
    Ok(format!(
        "identities to {worst:.2e} on [-10, 10], quadrature to {worst_q:.2e}"
    ))
}

#[test]
fn criterion_01_gaussian_family() {
    report(1, "gaussian family identities", gaussian_family_identities());
}

// 2. Complete-information limit of the saddle point.

fn complete_information_limit() -> Result<String, String> {
    let m = MarketModel::unit(0.975, 1e-4).map_err(|e| e.to_string())?;
    let sol = solve_saddle(&m, &Regularizer::none(), None, &cfg()).map_err(|e| e.to_string())?;
    let quantile_ratio = sol.params.epsilon / sol.params.q0.sqrt();
    check(
        (quantile_ratio / 1.95996 - 1.0).abs() <= 0.01,
        format!("epsilon/sqrt(q0) = {quantile_ratio} not within 1% of 1.95996"),
    )?;
    check(
        (sol.es_in / 2.3378 - 1.0).abs() <= 0.005,
        format!("es_in = {} not within 0.5% of 2.3378", sol.es_in),
    )?;
    Ok(format!(
        "epsilon/sqrt(q0) = {quantile_ratio:.6}, es_in = {:.6}",
        sol.es_in
    ))
}

#[test]
fn criterion_02_complete_information() {
    report(2, "complete-information limit", complete_information_limit());
}

// 3. Unregularized critical ratio with diverging overlap and vanishing
//    chemical potential.

fn unregularized_critical_point() -> Result<String, String> {
    let pts = trace_boundary(&Regularizer::none(), &[0.975], &cfg());
    let rc = pts[0].r_boundary.clone().map_err(|e| e.to_string())?;
    check(rc > 0.48 && rc < 0.50, format!("r_c = {rc} outside (0.48, 0.50)"))?;
    let reg = Regularizer::none();
    let solve_at = |r: f64| -> Result<ReplicaSolution, String> {
        let m = MarketModel::unit(0.975, r).map_err(|e| e.to_string())?;
        solve_saddle(&m, &reg, None, &cfg()).map_err(|e| e.to_string())
    };
    let far = solve_at(rc * (1.0 - 1e-2))?;
    let near = solve_at(rc * (1.0 - 1e-4))?;
    let (inv_far, inv_near) = (1.0 / far.params.q0, 1.0 / near.params.q0);
    // The overlap has a simple pole at r_c (1/q0 vanishes linearly), the
    // chemical potential vanishes like its square root.
    check(
        inv_near <= 2e-4 && inv_near * 50.0 <= inv_far,
        format!("1/q0 not vanishing: {inv_far:.3e} -> {inv_near:.3e} approaching r_c"),
    )?;
    check(
        near.params.lambda <= 0.05 && near.params.lambda * 5.0 <= far.params.lambda,
        format!(
            "lambda not vanishing: {:.3e} -> {:.3e} approaching r_c",
            far.params.lambda, near.params.lambda
        ),
    )?;
    Ok(format!(
        "r_c = {rc:.6}; at r_c(1 - 1e-4): 1/q0 = {inv_near:.2e}, lambda = {:.2e}",
        near.params.lambda
    ))
}

#[test]
fn criterion_03_critical_ratio() {
    report(3, "unregularized critical ratio", unregularized_critical_point());
}

// 4. No-short endpoint: lambda hits zero near r = 1 with q0 = pi and
//    condensate exactly one half.

fn no_short_endpoint() -> Result<String, String> {
    let reg = Regularizer::no_short(0.0).unwrap();
    let pts = trace_boundary(&reg, &[0.975], &cfg());
    let rb = pts[0].r_boundary.clone().map_err(|e| e.to_string())?;
    check((rb - 1.0).abs() <= 0.05, format!("lambda -> 0 at r = {rb}, not 1.0 +- 0.05"))?;
    let m = MarketModel::unit(0.975, rb).map_err(|e| e.to_string())?;
    let sol = solve_saddle(&m, &reg, None, &cfg()).map_err(|e| e.to_string())?;
    check(
        (sol.params.q0 - core::f64::consts::PI).abs() <= 1e-2,
        format!("q0 = {} not pi +- 1e-2", sol.params.q0),
    )?;
    check((sol.n0 - 0.5).abs() <= 1e-3, format!("n0 = {} not 1/2 +- 1e-3", sol.n0))?;
    Ok(format!(
        "endpoint r = {rb:.6}, q0 = {:.6} (pi = {:.6}), n0 = {:.6}",
        sol.params.q0,
        core::f64::consts::PI,
        sol.n0
    ))
}

#[test]
fn criterion_04_no_short_endpoint() {
    report(4, "no-short endpoint", no_short_endpoint());
}

// Shared grid for criteria 5 and 7.

fn grid_regularizers() -> Vec<Regularizer> {
    vec![
        Regularizer::new(0.0, 0.01).unwrap(),
        Regularizer::new(0.0, 0.05).unwrap(),
        Regularizer::new(0.0, 0.5).unwrap(),
        Regularizer::no_short(0.0).unwrap(),
    ]
}

/// Physical solutions on the alpha x r x eta grid; unreachable (unphysical)
/// corners are skipped, any other failure is an error.
fn grid_solutions() -> Result<Vec<ReplicaSolution>, String> {
    let mut out = Vec::new();
    for &alpha in &[0.8, 0.9, 0.975] {
        for &r in &[0.1, 0.3, 0.6] {
            for reg in grid_regularizers() {
                let m = MarketModel::unit(alpha, r).map_err(|e| e.to_string())?;
                match solve_saddle(&m, &reg, None, &cfg()) {
                    Ok(sol) if sol.physical => out.push(sol),
                    Ok(_) => {}
                    Err(SolveError::LeftPhysicalRegion { .. }) => {}
                    Err(e) => {
                        return Err(format!(
                            "solve failed at alpha {alpha}, r {r}, reg {reg:?}: {e}"
                        ))
                    }
                }
            }
        }
    }
    if out.is_empty() {
        return Err("no physical grid points".into());
    }
    Ok(out)
}

// 5. Order-parameter map: forward residuals at the effective ratio and
//    lossless round-trips.

fn mapping_soundness() -> Result<String, String> {
    let sols = grid_solutions()?;
    let mut worst_fwd = 0.0_f64;
    let mut worst_rt = 0.0_f64;
    for sol in &sols {
        let (eff, r_eff) = map_to_effective(sol).map_err(|e| format!("{e:?}"))?;
        let stated = (1.0 - sol.n0) * sol.model.r();
        check(
            (r_eff - stated).abs() <= 1e-10 * stated,
            format!("mapped ratio {r_eff} disagrees with (1 - n0) r = {stated}"),
        )?;
        let m_eff = MarketModel::unit(sol.model.alpha(), stated).map_err(|e| e.to_string())?;
        let res = saddle_residuals(&eff, &m_eff, &Regularizer::none())
            .map_err(|e| e.to_string())?;
        let norm = res.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        worst_fwd = worst_fwd.max(norm);
        check(
            norm <= 1e-8,
            format!(
                "effective residuals {norm:.3e} at alpha {}, r {}, reg {:?}",
                sol.model.alpha(),
                sol.model.r(),
                sol.regularizer
            ),
        )?;
        let eff_sol = ReplicaSolution::from_params(m_eff, Regularizer::none(), eff)
            .map_err(|e| e.to_string())?;
        let back = map_from_effective(&eff_sol, &sol.regularizer, sol.model.r())
            .map_err(|e| format!("{e:?}"))?;
        let p = sol.params;
        let pairs = [
            (back.lambda, p.lambda),
            (back.epsilon, p.epsilon),
            (back.q0, p.q0),
            (back.delta, p.delta),
            (back.q0hat, p.q0hat),
            (back.deltahat, p.deltahat),
        ];
        for (got, want) in pairs {
            let rel = (got - want).abs() / want.abs().max(1e-12);
            worst_rt = worst_rt.max(rel);
            check(
                rel <= 1e-8,
                format!(
                    "round trip off by {rel:.3e} ({got} vs {want}) at alpha {}, r {}, reg {:?}",
                    sol.model.alpha(),
                    sol.model.r(),
                    sol.regularizer
                ),
            )?;
        }
    }
    Ok(format!(
        "{} physical points; forward residuals <= {worst_fwd:.2e}, round trip <= {worst_rt:.2e}",
        sols.len()
    ))
}

#[test]
fn criterion_05_mapping_soundness() {
    report(5, "order-parameter map", mapping_soundness());
}

// 6. Phase-diagram structure: the no-short line doubles the critical line,
//    and the eta-minus line maps onto it through the surviving fraction.

fn phase_diagram_factor() -> Result<String, String> {
    // The boundary solves sit where the system is at its worst conditioned;
    // a tolerance of 1e-9 on O(1) residuals is far below the 1e-3 the
    // line comparisons need.
    let cfg = SolveConfig { tol: 1e-9, ..SolveConfig::default() };
    let alphas: Vec<f64> = (0..20).map(|i| 0.8 + (0.99 - 0.8) * i as f64 / 19.0).collect();
    let crit = trace_boundary(&Regularizer::none(), &alphas, &cfg);
    let ns = trace_boundary(&Regularizer::no_short(0.0).unwrap(), &alphas, &cfg);
    let reg5 = Regularizer::new(0.0, 0.05).unwrap();
    let soft = trace_boundary(&reg5, &alphas, &cfg);
    let mut worst_ns = 0.0_f64;
    let mut worst_soft = 0.0_f64;
    for i in 0..alphas.len() {
        let rc = crit[i].r_boundary.clone().map_err(|e| e.to_string())?;
        let rn = ns[i].r_boundary.clone().map_err(|e| e.to_string())?;
        let rs = soft[i].r_boundary.clone().map_err(|e| e.to_string())?;
        let dev_ns = (rn / (2.0 * rc) - 1.0).abs();
        worst_ns = worst_ns.max(dev_ns);
        check(
            dev_ns <= 1e-3,
            format!("alpha {}: no-short line {rn} vs 2 r_c = {}", alphas[i], 2.0 * rc),
        )?;
        let m = MarketModel::unit(alphas[i], rs).map_err(|e| e.to_string())?;
        let sol = solve_saddle(&m, &reg5, None, &cfg).map_err(|e| e.to_string())?;
        let dev_soft = (rs * (1.0 - sol.n0) / rc - 1.0).abs();
        worst_soft = worst_soft.max(dev_soft);
        check(
            dev_soft <= 1e-3,
            format!(
                "alpha {}: eta-minus line {rs} times (1 - n0) = {} vs r_c = {rc}",
                alphas[i],
                rs * (1.0 - sol.n0)
            ),
        )?;
    }
    Ok(format!(
        "20 alphas in [0.8, 0.99]: doubling to {worst_ns:.2e}, surviving-fraction image to {worst_soft:.2e}"
    ))
}

#[test]
fn criterion_06_phase_diagram_factor() {
    report(6, "phase-diagram factor", phase_diagram_factor());
}

// 7. Weight-distribution identities by quadrature, and the sampler's
//    condensate frequency.

fn weight_distribution_identities() -> Result<String, String> {
    let sols = grid_solutions()?;
    let mut worst = 0.0_f64;
    let mut worst_z = 0.0_f64;
    for (k, sol) in sols.iter().enumerate() {
        let wd = weight_distribution(&sol.params, &sol.model, &sol.regularizer);
        let mut mass = wd.n0;
        let mut mean = 0.0;
        let mut second = 0.0;
        for c in &wd.components {
            // Positive side: the w > 0 part of the component Gaussian.
            let lo = (c.center_pos - 14.0 * c.width).max(0.0);
            let hi = c.center_pos + 14.0 * c.width;
            if hi > 0.0 {
                let g = |w: f64| {
                    let z = (w - c.center_pos) / c.width;
                    c.fraction * (-0.5 * z * z).exp()
                        / (c.width * (2.0 * core::f64::consts::PI).sqrt())
                };
                mass += integrate(&g, lo, hi, 1e-13);
                mean += integrate(&|w: f64| w * g(w), lo, hi, 1e-13);
                second +=
                    c.sigma * c.sigma * integrate(&|w: f64| w * w * g(w), lo, hi, 1e-13);
            }
            // Negative side: the spill of a positive-centered Gaussian
            // below zero.
            if let Some(cn) = c.center_neg {
                let lo = cn - 14.0 * c.width;
                if lo < 0.0 {
                    let g = |w: f64| {
                        let z = (w - cn) / c.width;
                        c.fraction * (-0.5 * z * z).exp()
                            / (c.width * (2.0 * core::f64::consts::PI).sqrt())
                    };
                    mass += integrate(&g, lo, 0.0, 1e-13);
                    mean += integrate(&|w: f64| w * g(w), lo, 0.0, 1e-13);
                    second +=
                        c.sigma * c.sigma * integrate(&|w: f64| w * w * g(w), lo, 0.0, 1e-13);
                }
            }
        }
        let e = (mass - 1.0)
            .abs()
            .max((mean - 1.0).abs())
            .max((second - sol.params.q0).abs() / sol.params.q0);
        worst = worst.max(e);
        check(
            e <= 1e-8,
            format!(
                "moment residual {e:.3e} at alpha {}, r {}, reg {:?} (mass {mass}, mean {mean}, second {second} vs q0 {})",
                sol.model.alpha(),
                sol.model.r(),
                sol.regularizer,
                sol.params.q0
            ),
        )?;

        const DRAWS: usize = 1_000_000;
        let ws = sample_weights(
            &sol.params,
            &sol.model,
            &sol.regularizer,
            DRAWS,
            0x57A7_0000 + k as u64,
        );
        let hits = ws.iter().filter(|w| **w == 0.0).count() as f64;
        let n0_hat = hits / DRAWS as f64;
        let se = (sol.n0 * (1.0 - sol.n0) / DRAWS as f64).sqrt();
        let z = (n0_hat - sol.n0).abs() / se;
        worst_z = worst_z.max(z);
        check(
            z <= 3.0,
            format!(
                "sampler condensate {n0_hat} vs {} is {z:.2} standard errors at alpha {}, r {}, reg {:?}",
                sol.n0,
                sol.model.alpha(),
                sol.model.r(),
                sol.regularizer
            ),
        )?;
    }
    Ok(format!(
        "{} grid points: moments to {worst:.2e}, sampler within {worst_z:.2} standard errors",
        sols.len()
    ))
}

#[test]
fn criterion_07_weight_distribution() {
    report(7, "weight-distribution identities", weight_distribution_identities());
}

// 8. Estimation-error anchor.

fn estimation_error_anchor() -> Result<String, String> {
    let m = MarketModel::unit(0.975, 0.1).map_err(|e| e.to_string())?;
    let sol = solve_saddle(&m, &Regularizer::none(), None, &cfg()).map_err(|e| e.to_string())?;
    let (_, ratio) = estimation_error(&sol, &m);
    let err = ratio - 1.0;
    check(
        (err - 0.20).abs() <= 0.05,
        format!("sqrt(q0_tilde) - 1 = {err:.5}, not 0.20 +- 0.05"),
    )?;
    Ok(format!("sqrt(q0_tilde) - 1 = {err:.5}"))
}

#[test]
fn criterion_08_estimation_error_anchor() {
    report(8, "estimation-error anchor", estimation_error_anchor());
}

// 9. Monte-Carlo agreement at N = 200, T = 400 over 100 seeds.

fn monte_carlo_agreement() -> Result<String, String> {
    let m = MarketModel::unit(0.975, 0.5).map_err(|e| e.to_string())?;
    let reg = Regularizer::no_short(0.0).unwrap();
    let report = replica_vs_mc(&m, &reg, 200, 400, 100, 0xE5CA_11, &cfg())
        .map_err(|e| e.to_string())?;
    check(
        report.solved_samples == 100 && report.unbounded_samples == 0,
        format!("{} of 100 samples solved", report.solved_samples),
    )?;
    check(
        report.certified_samples == report.solved_samples,
        format!(
            "{} of {} optimality certificates held",
            report.certified_samples, report.solved_samples
        ),
    )?;
    let q0_dev = (report.q0.mean / report.q0.predicted - 1.0).abs();
    let n0_dev = (report.n0.mean - report.n0.predicted).abs();
    let es_dev = (report.es_in.mean / report.es_in.predicted - 1.0).abs();
    check(
        q0_dev <= 0.05,
        format!("q0 mean {} vs {} ({q0_dev:.4} relative)", report.q0.mean, report.q0.predicted),
    )?;
    check(
        n0_dev <= 0.05,
        format!("n0 mean {} vs {} ({n0_dev:.4} absolute)", report.n0.mean, report.n0.predicted),
    )?;
    check(
        es_dev <= 0.05,
        format!(
            "es_in mean {} vs {} ({es_dev:.4} relative)",
            report.es_in.mean, report.es_in.predicted
        ),
    )?;
    Ok(format!(
        "100 certified samples: q0 {q0_dev:.4}, n0 {n0_dev:.4}, es_in {es_dev:.4} off prediction"
    ))
}

#[test]
fn criterion_09_monte_carlo_agreement() {
    report(9, "finite-sample agreement", monte_carlo_agreement());
}

// 10. Runaway reproduction: a dominant asset is unbounded exactly until the
//     short-selling ban arrests it.

fn dominant_asset_instability() -> Result<String, String> {
    let m = MarketModel::new(0.9, 2.0 / 3.0, vec![SigmaGroup { sigma: 1.0, fraction: 1.0 }])
        .map_err(|e| e.to_string())?;
    let rows = vec![vec![0.3, 0.1, 0.2], vec![0.1, -0.1, 0.05]];
    let panel = SampleSet::from_matrix(&rows, &m).map_err(|e| e.to_string())?;
    match optimize_es_lp(&panel, 0.9, &Regularizer::none()) {
        Err(LabError::Unbounded) => {}
        other => return Err(format!("unregularized: expected Unbounded, got {other:?}")),
    }
    let lp = optimize_es_lp(&panel, 0.9, &Regularizer::no_short(0.0).unwrap())
        .map_err(|e| e.to_string())?;
    check(
        lp.certificate.holds(1e-7),
        format!("banned instance certificate {:?}", lp.certificate),
    )?;
    Ok(format!(
        "unbounded without the ban; bounded with it (weights {:?})",
        lp.weights
    ))
}

#[test]
fn criterion_10_dominant_asset() {
    report(10, "dominant-asset instability", dominant_asset_instability());
}
