//! End-to-end acceptance report: one PASS/FAIL line per criterion.
//!
//! Lines are written straight to the process's stdout so they appear in the
//! `cargo test` log even though libtest captures `println!`.  The test reports by
//! default; set `ACCEPTANCE_STRICT=1` to make any failing criterion fail the test.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use subsidy_core::bifurcation::{critical_threshold, stability_coefficient, threshold_crossing};
use subsidy_core::complementarity::ComplementaritySpec;
use subsidy_core::config::JobConfig;
use subsidy_core::job::{run_job, RunManifest};
use subsidy_core::model::ModelParams;
use subsidy_core::selfcheck::{
    comparative_statics_check, contraction_check, degenerate_check, monotonicity_shift_check, preset_config,
};
use subsidy_core::signaling::{separating_threshold, TypeSpace};
use subsidy_core::simulate::{deviation_experiment, simulate_stream, SimulationConfig};
use subsidy_core::solver::{
    bellman_entrant, bellman_incumbent, foc_crosscheck, solve_mpe, subsidization_diagnostics, EquilibriumSolution,
};
use subsidy_core::welfare::{cap_comparative_static, cournot_outcome, involution_outcome, social_optimum};

struct Line {
    id: usize,
    name: &'static str,
    passed: bool,
}

fn emit(text: &str) {
    let mut out = std::io::stdout();
    let _ = out.write_all(text.as_bytes());
    let _ = out.flush();
}

fn record(lines: &mut Vec<Line>, id: usize, name: &'static str, passed: bool, detail: String) {
    emit(&format!("criterion {id:>2} [{}] {name}: {detail}\n", if passed { "PASS" } else { "FAIL" }));
    lines.push(Line { id, name, passed });
}

fn preset(name: &str) -> JobConfig {
    preset_config(name).expect("shipped preset parses")
}

/// Bytes of every file a run listed in its manifest, keyed by relative path.
fn listed_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let manifest: RunManifest = serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    manifest.files.iter().map(|f| (f.path.clone(), fs::read(dir.join(&f.path)).unwrap())).collect()
}

fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|k| f(a + h * k as f64)).sum();
    h * (0.5 * f(a) + inner + 0.5 * f(b))
}

fn solution_distance(a: &EquilibriumSolution, b: &EquilibriumSolution) -> f64 {
    let d = |x: &[f64], y: &[f64]| x.iter().zip(y).fold(0.0_f64, |m, (p, q)| m.max((p - q).abs()));
    d(&a.v_i, &b.v_i).max(d(&a.v_e, &b.v_e)).max(d(&a.s_i, &b.s_i)).max(d(&a.s_e, &b.s_e))
}

/// Steady share of each diagram row, keyed by the parameter's bit pattern.
fn diagram_shares(path: &Path) -> HashMap<u64, f64> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse::<f64>().unwrap().to_bits(), r[1].parse::<f64>().unwrap_or(f64::NAN))
        })
        .collect()
}

/// Whether `ψ(1 − m)` lies above `ψ*`, judged from the threshold root alone.
fn above_threshold(spec: &ComplementaritySpec, params: &ModelParams, m: f64) -> bool {
    let tc = threshold_crossing(spec, params).unwrap();
    match tc.q_tilde {
        _ if tc.always_above => true,
        Some(q) => 1.0 - m >= q,
        None => false,
    }
}

#[test]
fn acceptance() {
    let mut lines = Vec::new();
    let cal = preset("calibration");
    let (p, spec, cfg) = (cal.params, cal.spec.clone(), cal.solver);
    emit("\n=== acceptance report ===\n");

    // 1. Contraction of the Bellman operators.
    let t = Instant::now();
    let c = contraction_check(&p, &spec, &cfg).unwrap();
    let secs = t.elapsed().as_secs_f64();
    record(&mut lines, 1, "contraction", c.passed && secs < 10.0, format!("{}; {secs:.2}s (limit 10s)", c.detail));

    // 2. Monotonicity and constant-shift discounting.
    let c = monotonicity_shift_check(&p, &spec, &cfg, 20).unwrap();
    record(&mut lines, 2, "monotonicity and discounting", c.passed, c.detail);

    // 3. Degenerate game: zero ecosystem value and no standalone synergy.
    let c = degenerate_check(&p, &cfg).unwrap();
    let base = ModelParams { incumbent_synergy: 0.0, ..p };
    let zeros = vec![0.0; cfg.grid_n];
    let (ti, _) = bellman_incumbent(&base, &ComplementaritySpec::Zero, &zeros, &zeros, &cfg).unwrap();
    let (te, _) = bellman_entrant(&base, &ComplementaritySpec::Zero, &zeros, &zeros, &cfg).unwrap();
    let substituted = ti.iter().chain(&te).all(|&x| x.abs() <= 1e-8);
    record(
        &mut lines,
        3,
        "degenerate game",
        c.passed && substituted,
        format!("{}; zero values are a fixed point of both operators: {substituted}", c.detail),
    );

    // 4. Subsidization on the interior and negative primary profits at the steady state.
    let t = Instant::now();
    let sol = solve_mpe(&p, &spec, &cfg).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let interior: Vec<usize> =
        (0..sol.grid.len()).filter(|&k| sol.grid[k] > p.m_min && sol.grid[k] < 1.0 - p.m_min).collect();
    let positive = interior.iter().filter(|&&k| sol.s_i[k] > 0.0 && sol.s_e[k] > 0.0).count();
    let sub = subsidization_diagnostics(&sol, &p);
    let negative = sub.as_ref().map(|r| r.profits_negative).unwrap_or(false);
    record(
        &mut lines,
        4,
        "subsidization equilibrium",
        positive == interior.len() && negative && secs < 30.0,
        format!(
            "both policies > 0 at {positive}/{} interior points; m* = {:?}; primary profits negative: {negative}; \
             converged {} (residual {:.2e}); {secs:.2}s (limit 30s)",
            interior.len(),
            sol.m_star,
            sol.converged,
            sol.final_residual
        ),
    );

    // 5. First-order-condition cross-check.
    let foc = foc_crosscheck(&sol, &p, &spec);
    record(
        &mut lines,
        5,
        "first-order conditions",
        foc.agreement_fraction >= 0.95 && foc.lower_bound_violations.is_empty(),
        format!(
            "agreement {:.3} over {} comparisons (need 0.95); lower-bound violations {}/{}",
            foc.agreement_fraction,
            foc.compared_i + foc.compared_e,
            foc.lower_bound_violations.len(),
            foc.lower_bound_checked
        ),
    );

    // 6. Critical threshold against exact rational arithmetic: (1 − 0.95)/(0.95·0.36) = 25/171.
    let psi_star = critical_threshold(&p);
    let exact = 25.0 / 171.0;
    let at = |delta: f64, gamma: f64| critical_threshold(&ModelParams { delta, gamma, ..p });
    let dec_delta = at(0.96, 0.6) < psi_star && psi_star < at(0.94, 0.6);
    let dec_gamma = at(0.95, 0.61) < psi_star && psi_star < at(0.95, 0.59);
    record(
        &mut lines,
        6,
        "critical threshold",
        (psi_star - 0.146199).abs() <= 1e-6 && (psi_star - exact).abs() <= 1e-12 && dec_delta && dec_gamma,
        format!("psi* = {psi_star:.12} vs 25/171 = {exact:.12}; decreasing in delta {dec_delta}, in gamma {dec_gamma}"),
    );

    // 7. Bifurcation sweep on the figure2 preset (its output is reused for criterion 15).
    let fig2 = preset("figure2");
    let tmp = tempfile::tempdir().unwrap();
    let t = Instant::now();
    run_job(&fig2, &tmp.path().join("figure2_a")).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let jumps: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("figure2_a/jumps.json")).unwrap()).unwrap();
    let mut n_jumps = 0;
    let mut bracketing = Vec::new();
    let mut crossings = Vec::new();
    let mut validated = true;
    for run in jumps["runs"].as_array().unwrap() {
        let direction = run["direction"].as_str().unwrap();
        let shares = diagram_shares(&tmp.path().join(format!("figure2_a/diagram_{direction}.csv")));
        let cross: Vec<(f64, f64)> = run["psi_crossings"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| (c[0].as_f64().unwrap(), c[1].as_f64().unwrap()))
            .collect();
        for j in run["jumps"].as_array().unwrap() {
            n_jumps += 1;
            let (from, to) = (j["from"].as_f64().unwrap(), j["to"].as_f64().unwrap());
            let (lo, hi) = (from.min(to), from.max(to));
            if cross.iter().any(|&(a, b)| a >= lo && b <= hi) {
                bracketing.push((from, to));
                // Cross-validation with the threshold root of each endpoint's scaled spec.
                let side = |x: f64| above_threshold(&fig2.spec.scaled(x), &fig2.params, shares[&x.to_bits()]);
                validated &= side(from) != side(to);
            }
        }
        crossings.extend(cross);
    }
    record(
        &mut lines,
        7,
        "bifurcation jump at the threshold",
        n_jumps > 0 && !bracketing.is_empty() && validated && secs < 300.0,
        format!(
            "{n_jumps} jumps above 10x median increment; psi-gap sign changes in {crossings:?}; \
             jumps bracketing a sign change: {bracketing:?}; {secs:.1}s (limit 300s)"
        ),
    );

    // 8. Local stability: |ρ| < 1 and the noiseless simulated contraction rate.
    let rho = stability_coefficient(&sol, &p).map(|s| s.rho);
    let (rate, rho_ok, rate_ok) = match (&rho, sol.m_star) {
        (Ok(rho), Some(m_star)) => {
            let quiet = ModelParams { sigma: 0.0, ..p };
            let sim = SimulationConfig { horizon: 12, m0: (m_star + 0.01).min(1.0 - p.m_min - 1e-6), seed: 0, shock_window: None };
            let path = simulate_stream(&sol, &quiet, &spec, &sim, 0).unwrap();
            let ratios: Vec<f64> = path
                .m
                .windows(2)
                .filter(|w| (w[0] - m_star).abs() < 0.05 && (w[0] - m_star).abs() > 1e-9)
                .map(|w| (w[1] - m_star) / (w[0] - m_star))
                .collect();
            let rate = ratios.first().copied();
            let ok = rate.is_some_and(|r| ((r - rho) / rho).abs() <= 0.10);
            (rate, rho.abs() < 1.0, ok)
        }
        _ => (None, false, false),
    };
    record(
        &mut lines,
        8,
        "linear stability",
        rho_ok && rate_ok,
        format!("rho = {:?}; one-step simulated rate from m* + 0.01 = {rate:?} (need within 10%)", rho.map_err(|e| e.to_string())),
    );

    // 9. Fifty-period simulation over 100 seeded paths.
    let fig3 = preset("figure3");
    let t = Instant::now();
    let sol3 = solve_mpe(&fig3.params, &fig3.spec, &fig3.solver).unwrap();
    let sim = fig3.simulation.config();
    let paths: Vec<_> =
        (0..fig3.simulation.paths as u64).map(|k| simulate_stream(&sol3, &fig3.params, &fig3.spec, &sim, k).unwrap()).collect();
    let secs = t.elapsed().as_secs_f64();
    let tail: Vec<f64> = paths.iter().flat_map(|pa| pa.t.iter().zip(&pa.m).filter(|(t, _)| **t >= 25).map(|(_, m)| *m)).collect();
    let tail_mean = tail.iter().sum::<f64>() / tail.len().max(1) as f64;
    let exits = paths.iter().filter(|pa| pa.exit_period.is_some()).count();
    let losses = paths.iter().all(|pa| pa.s_i.iter().zip(&pa.profit_i).all(|(s, pr)| *s <= 0.0 || *pr < 0.0));
    let diverged = paths.iter().filter(|pa| pa.len() == 50 && pa.cum_e[49] > pa.cum_i[49]).count();
    record(
        &mut lines,
        9,
        "fifty-period simulation",
        !tail.is_empty() && (0.5..=0.7).contains(&tail_mean) && losses && diverged == paths.len() && secs < 30.0,
        format!(
            "mean share over periods 25-49 = {tail_mean:.4} (need [0.5, 0.7]); incumbent loses whenever subsidizing: {losses}; \
             challenger ahead in cumulative value at period 50 on {diverged}/{} paths; {exits} exits; {secs:.2}s (limit 30s)",
            paths.len()
        ),
    );

    // 10. One-shot deviation at the steady state.
    let dev = deviation_experiment(&sol, &p, &cal.simulation.config()).unwrap();
    let exact_dm = dev.delta_m == -p.gamma * dev.s_e;
    record(
        &mut lines,
        10,
        "deviation unprofitable",
        dev.at_steady_state && exact_dm && dev.unprofitable,
        format!(
            "at m = {:.4} (steady state {}): delta_m = {:.6} = -gamma*s_E exactly {exact_dm}; saving {:.6} vs loss {:.6}",
            dev.m, dev.at_steady_state, dev.delta_m, dev.one_shot_saving, dev.continuation_loss
        ),
    );

    // 11. Welfare geometry; overconsumption loss by numerical integration of MC − WTP.
    let fig4 = preset("figure4");
    let market = fig4.welfare.market;
    let cournot = cournot_outcome(&market, 2).unwrap();
    let opt = social_optimum(&market).unwrap();
    let inv = involution_outcome(&market, 10.0).unwrap();
    let oracle = trapezoid(|q| market.mc - market.price(q), opt.q, inv.outcome.q, 10_000);
    let ok = (cournot.q - 53.333_333_333_333).abs() < 1e-9
        && (cournot.p - 46.666_666_666_667).abs() < 1e-9
        && cournot.q.round() == 53.0
        && cournot.p.round() == 47.0
        && opt.q == 80.0
        && opt.p == 20.0
        && inv.outcome.q == 90.0
        && (inv.outcome.loss - 50.0).abs() < 1e-9
        && (oracle - inv.outcome.loss).abs() < 1e-9;
    record(
        &mut lines,
        11,
        "welfare geometry",
        ok,
        format!(
            "cournot ({:.9}, {:.9}); optimum ({}, {}); involution Q = {}; loss {} vs integral {oracle:.12}",
            cournot.q, cournot.p, opt.q, opt.p, inv.outcome.q, inv.outcome.loss
        ),
    );

    // 12. Comparative statics in the ecosystem scale.
    let c = comparative_statics_check(&p, &spec, &cfg, &[1.0, 1.2, 1.5]).unwrap();
    record(&mut lines, 12, "comparative statics", c.passed, c.detail);

    // 13. Cap sweep: Ψ ≤ 0.4 on [0, 1], so a cap of 1 never binds.
    let caps = [0.0, 0.1, 0.2, 0.3, 1.0];
    let table = cap_comparative_static(&spec, &caps, &p, &cfg).unwrap();
    let zero = solve_mpe(&p, &ComplementaritySpec::Zero, &cfg).unwrap();
    let capped = |cap: f64| ComplementaritySpec::Capped { inner: Box::new(spec.clone()), cap };
    let at_zero = solve_mpe(&p, &capped(0.0), &cfg).unwrap();
    let at_loose = solve_mpe(&p, &capped(1.0), &cfg).unwrap();
    let d0 = solution_distance(&at_zero, &zero);
    let d1 = solution_distance(&at_loose, &sol);
    let s_e: Vec<f64> = table.rows.iter().map(|r| r.s_e_star).collect();
    record(
        &mut lines,
        13,
        "cap comparative static",
        table.monotone && d0 <= 1e-8 && d1 <= 1e-8,
        format!("caps {caps:?} -> steady s_E {s_e:?}; monotone {}; |cap 0 - zero spec| {d0:e}; |cap 1 - uncapped| {d1:e}", table.monotone),
    );

    // 14. Separating signal.
    let strong = TypeSpace { spec_low: ComplementaritySpec::Zero, spec_high: spec.clone(), mu0: 0.5 };
    let same = TypeSpace { spec_low: spec.clone(), spec_high: spec.clone(), mu0: 0.5 };
    let (o, _, _) = separating_threshold(&strong, &p, Some(0.5), &cfg).unwrap();
    let (o_same, _, _) = separating_threshold(&same, &p, Some(0.5), &cfg).unwrap();
    let ok = o.separating
        && o.ic_slack_low >= -1e-8
        && o.ic_slack_high >= -1e-8
        && o.s_low < o.threshold
        && o.threshold <= o.s_high
        && !o_same.separating;
    record(
        &mut lines,
        14,
        "separating signal",
        ok,
        format!(
            "distinct types: separating {}, s_low {:.4} < threshold {:.6} <= s_high {:.4}, IC slacks ({:.3e}, {:.3e}); \
             identical types separating {}",
            o.separating, o.s_low, o.threshold, o.s_high, o.ic_slack_low, o.ic_slack_high, o_same.separating
        ),
    );

    // 15. Determinism of every preset's output files.
    let mut mismatched = Vec::new();
    let mut compared = 0;
    for name in ["calibration", "figure2", "figure3", "figure4"] {
        let job = preset(name);
        let a = tmp.path().join(format!("{name}_a"));
        let b = tmp.path().join(format!("{name}_b"));
        if name != "figure2" {
            run_job(&job, &a).unwrap();
        }
        run_job(&job, &b).unwrap();
        let (fa, fb) = (listed_files(&a), listed_files(&b));
        compared += fa.len();
        if fa != fb {
            mismatched.push(name);
        }
    }
    record(
        &mut lines,
        15,
        "determinism",
        mismatched.is_empty() && compared > 0,
        format!("{compared} files compared byte for byte across two runs of 4 presets; mismatched presets {mismatched:?}"),
    );

    let failed: Vec<String> = lines.iter().filter(|l| !l.passed).map(|l| format!("{} ({})", l.id, l.name)).collect();
    emit(&format!("=== {}/{} criteria pass; failing: {failed:?} ===\n", lines.len() - failed.len(), lines.len()));
    assert_eq!(lines.len(), 15);
    if std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        assert!(failed.is_empty(), "failing criteria: {failed:?}");
    }
}
