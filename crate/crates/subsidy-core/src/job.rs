//! Job orchestration and deterministic output writing.
//!
//! CSV files use fixed column orders, `.` as decimal separator and Rust's shortest
//! round-trip float formatting; JSON files have sorted keys.  Every file is written
//! to a temporary name and renamed into place.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bifurcation::{
    stability_coefficient, stability_region, steady_state, sweep_bifurcation, threshold_crossing, Branch, SteadyState,
    SweepRun,
};
use crate::config::{JobConfig, JobKind};
use crate::error::{Error, Result};
use crate::selfcheck::self_check;
use crate::signaling::{separating_threshold, signaling_premium};
use crate::simulate::{deviation_experiment, simulate_stream, SimulationPath, RNG_ALGORITHM};
use crate::solver::{foc_crosscheck, solve_mpe, subsidization_diagnostics, EquilibriumSolution, SolverMethod};
use crate::welfare::{
    cap_comparative_static, cournot_outcome, crossover_horizon, cs_gain_from_subsidies, dynamic_efficiency,
    involution_outcome, social_optimum, RegimeOutcome,
};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub kind: JobKind,
    /// `ok`, `non_converged` or `check_failed`.
    pub status: String,
    pub detail: Option<String>,
}

/// Written as `manifest.json`; lists every other output file exactly once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub artifact_version: String,
    pub rng_algorithm: String,
    pub wall_clock_seconds: f64,
    pub jobs: Vec<JobStatus>,
    pub files: Vec<FileEntry>,
}

/// Collects output files under one directory.
struct Outputs {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl Outputs {
    fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Outputs { root: root.to_path_buf(), files: Vec::new() })
    }

    fn write_atomic(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let tmp = path.with_file_name(format!(
            ".{}.tmp-{}",
            path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
            std::process::id()
        ));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    fn put(&mut self, rel: &str, bytes: Vec<u8>) -> Result<()> {
        if self.files.iter().any(|f| f.path == rel) {
            return Err(Error::Internal(format!("output `{rel}` written twice")));
        }
        self.write_atomic(rel, &bytes)?;
        self.files.push(FileEntry { path: rel.to_string(), sha256: hex::encode(Sha256::digest(&bytes)), bytes: bytes.len() as u64 });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        self.put(rel, to_sorted_json(value)?)
    }

    fn csv(&mut self, rel: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Internal(format!("csv: {e}"));
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(&r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Internal(format!("csv: {e}")))?;
        self.put(rel, bytes)
    }
}

/// Pretty JSON with keys sorted at every level, newline-terminated.
pub fn to_sorted_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let v = serde_json::to_value(value).map_err(|e| Error::Internal(e.to_string()))?;
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Compact description of a solve for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSummary {
    pub converged: bool,
    pub iterations: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub method: SolverMethod,
    pub stage_failures: usize,
    pub action_step: f64,
    pub m_star: Option<f64>,
    pub crossings: Vec<f64>,
    pub steady_state: SteadyState,
}

impl SolutionSummary {
    pub fn new(sol: &EquilibriumSolution, params: &crate::model::ModelParams) -> Self {
        SolutionSummary {
            converged: sol.converged,
            iterations: sol.iterations,
            initial_residual: sol.initial_residual,
            final_residual: sol.final_residual,
            method: sol.method,
            stage_failures: sol.stage_failures,
            action_step: sol.action_step,
            m_star: sol.m_star,
            crossings: sol.crossings.clone(),
            steady_state: steady_state(sol, params),
        }
    }
}

/// Tracks equilibrium solves that hit the iteration cap.
#[derive(Default)]
struct Convergence {
    failed: Vec<String>,
}

impl Convergence {
    fn note(&mut self, what: &str, sol: &EquilibriumSolution) {
        if !sol.converged {
            self.failed.push(format!("{what} (residual {:e} after {} iterations)", sol.final_residual, sol.iterations));
        }
    }
}

fn solution_rows(sol: &EquilibriumSolution) -> Vec<Vec<String>> {
    (0..sol.grid.len())
        .map(|k| vec![num(sol.grid[k]), num(sol.v_i[k]), num(sol.v_e[k]), num(sol.s_i[k]), num(sol.s_e[k])])
        .collect()
}

const SOLUTION_COLUMNS: [&str; 5] = ["m", "v_I", "v_E", "s_I", "s_E"];

const PATH_COLUMNS: [&str; 11] =
    ["t", "m", "s_I", "s_E", "eta", "profit_I", "profit_E_primary", "psi_flow", "profit_E_total", "cum_I", "cum_E"];

fn path_rows(p: &SimulationPath) -> Vec<Vec<String>> {
    (0..p.len())
        .map(|k| {
            vec![
                p.t[k].to_string(),
                num(p.m[k]),
                num(p.s_i[k]),
                num(p.s_e[k]),
                num(p.eta[k]),
                num(p.profit_i[k]),
                num(p.profit_e_primary[k]),
                num(p.psi_flow[k]),
                num(p.profit_e_total[k]),
                num(p.cum_i[k]),
                num(p.cum_e[k]),
            ]
        })
        .collect()
}

const DIAGRAM_COLUMNS: [&str; 7] = ["parameter", "m_star", "s_I_star", "s_E_star", "rho_lin", "branch", "converged"];

fn diagram_rows(run: &SweepRun) -> Vec<Vec<String>> {
    run.points
        .iter()
        .map(|p| {
            vec![
                num(p.parameter),
                num(p.steady.m),
                num(p.steady.s_i),
                num(p.steady.s_e),
                opt(p.rho_lin),
                match p.branch {
                    Branch::Low => "low".into(),
                    Branch::High => "high".into(),
                },
                p.converged.to_string(),
            ]
        })
        .collect()
}

const REGIME_COLUMNS: [&str; 7] = ["regime", "Q", "P", "CS", "PS", "transfer", "loss"];

fn regime_row(r: &RegimeOutcome) -> Vec<String> {
    vec![r.regime.clone(), num(r.q), num(r.p), num(r.cs), num(r.ps), num(r.transfer), num(r.loss)]
}

/// Runs the configured job, writing its outputs and `manifest.json` under `out`.
///
/// Outputs and the manifest are written even when a solve hits its iteration cap;
/// the run then fails with [`Error::NonConvergence`] unless the config sets
/// `allow_non_convergence`.  A failed self-check yields [`Error::CheckFailed`]
/// after its report has been written.
pub fn run_job(config: &JobConfig, out: &Path) -> Result<RunManifest> {
    config.validate()?;
    let start = Instant::now();
    let mut o = Outputs::new(out)?;
    let mut conv = Convergence::default();
    let hash = config.hash();
    let params = &config.params;
    let spec = &config.spec;
    let solver = &config.solver;
    let mut check_failure = None;

    match config.job {
        JobKind::Solve => {
            let sol = solve_mpe(params, spec, solver)?;
            conv.note("equilibrium", &sol);
            o.csv("solution.csv", &SOLUTION_COLUMNS, solution_rows(&sol))?;
            #[derive(Serialize)]
            struct Report {
                solution: SolutionSummary,
                foc_crosscheck: crate::solver::FocReport,
                subsidization: Option<crate::solver::SubsidizationReport>,
                stability: Option<crate::bifurcation::StabilityCoefficient>,
            }
            o.json(
                "summary.json",
                &Report {
                    solution: SolutionSummary::new(&sol, params),
                    foc_crosscheck: foc_crosscheck(&sol, params, spec),
                    subsidization: subsidization_diagnostics(&sol, params).ok(),
                    stability: stability_coefficient(&sol, params).ok(),
                },
            )?;
        }
        JobKind::Simulate => {
            let sol = solve_mpe(params, spec, solver)?;
            conv.note("equilibrium", &sol);
            let sim = config.simulation.config();
            let paths = (0..config.simulation.paths as u64)
                .into_par_iter()
                .map(|k| simulate_stream(&sol, params, spec, &sim, k))
                .collect::<Result<Vec<_>>>()?;
            for p in &paths {
                o.csv(&format!("paths/path_{:03}.csv", p.stream), &PATH_COLUMNS, path_rows(p))?;
            }
            #[derive(Serialize)]
            struct PathMeta {
                stream: u64,
                periods: usize,
                exit_period: Option<usize>,
            }
            #[derive(Serialize)]
            struct Meta<'a> {
                seed: u64,
                generator: &'a str,
                config_hash: &'a str,
                horizon: usize,
                m0: f64,
                paths: Vec<PathMeta>,
                solution: SolutionSummary,
            }
            o.json(
                "simulation.json",
                &Meta {
                    seed: sim.seed,
                    generator: RNG_ALGORITHM,
                    config_hash: &hash,
                    horizon: sim.horizon,
                    m0: sim.m0,
                    paths: paths.iter().map(|p| PathMeta { stream: p.stream, periods: p.len(), exit_period: p.exit_period }).collect(),
                    solution: SolutionSummary::new(&sol, params),
                },
            )?;
        }
        JobKind::Deviation => {
            let sol = solve_mpe(params, spec, solver)?;
            conv.note("equilibrium", &sol);
            #[derive(Serialize)]
            struct Report {
                deviation: crate::simulate::DeviationReport,
                solution: SolutionSummary,
            }
            let deviation = deviation_experiment(&sol, params, &config.simulation.config())?;
            o.json("deviation.json", &Report { deviation, solution: SolutionSummary::new(&sol, params) })?;
        }
        JobKind::Sweep => {
            let sweep = config.sweep.as_ref().ok_or_else(|| Error::Config("missing [sweep]".into()))?;
            let diagram = sweep_bifurcation(params, spec, sweep, solver)?;
            for run in &diagram.runs {
                let failed = run.points.iter().filter(|p| !p.converged).count();
                if failed > 0 {
                    conv.failed.push(format!(
                        "sweep {}: {failed} of {} points on {} did not converge",
                        direction_name(run),
                        run.points.len(),
                        diagram.path
                    ));
                }
                let name = format!("diagram_{}.csv", direction_name(run));
                o.csv(&name, &DIAGRAM_COLUMNS, diagram_rows(run))?;
            }
            #[derive(Serialize)]
            struct RunJumps<'a> {
                direction: &'a str,
                jump_tol: f64,
                jumps: &'a [crate::bifurcation::Jump],
                /// Parameter intervals where `ψ(1 − m) − ψ*` changes sign.
                psi_crossings: Vec<(f64, f64)>,
            }
            #[derive(Serialize)]
            struct Report<'a> {
                path: &'a str,
                runs: Vec<RunJumps<'a>>,
                threshold: crate::bifurcation::ThresholdCrossing,
            }
            let runs = diagram
                .runs
                .iter()
                .map(|r| RunJumps {
                    direction: direction_name(r),
                    jump_tol: r.jump_tol,
                    jumps: &r.jumps,
                    psi_crossings: r
                        .points
                        .windows(2)
                        .filter(|w| (w[0].psi_gap < 0.0) != (w[1].psi_gap < 0.0))
                        .map(|w| (w[0].parameter, w[1].parameter))
                        .collect(),
                })
                .collect();
            o.json("jumps.json", &Report { path: &diagram.path, runs, threshold: threshold_crossing(spec, params)? })?;
        }
        JobKind::Region => {
            let region = config.region.as_ref().ok_or_else(|| Error::Config("missing [region]".into()))?;
            let map = stability_region(params, spec, region, solver)?;
            let rows = map.cells.iter().map(|c| vec![num(c.axis1), num(c.axis2), c.class.label().to_string()]).collect();
            o.csv("region.csv", &["axis1", "axis2", "class"], rows)?;
            o.json("region.json", &map)?;
        }
        JobKind::Welfare => run_welfare(config, &mut o, &mut conv)?,
        JobKind::Signal => {
            let block = config.signal.as_ref().ok_or_else(|| Error::Config("missing [signal]".into()))?;
            let (outcome, low, high) = separating_threshold(&block.types(), params, block.m, solver)?;
            conv.note("low-type benchmark", &low);
            conv.note("high-type benchmark", &high);
            #[derive(Serialize)]
            struct Report {
                outcome: crate::signaling::SignalingOutcome,
                premium: Option<f64>,
                benchmark_low: SolutionSummary,
                benchmark_high: SolutionSummary,
            }
            o.json(
                "signal.json",
                &Report {
                    premium: signaling_premium(&outcome).ok(),
                    outcome,
                    benchmark_low: SolutionSummary::new(&low, params),
                    benchmark_high: SolutionSummary::new(&high, params),
                },
            )?;
        }
        JobKind::Check => {
            let report = self_check()?;
            o.json("check.json", &report)?;
            if !report.all_passed {
                check_failure = Some(report.failures().join(", "));
            }
        }
    }

    let (status, detail) = if let Some(f) = &check_failure {
        ("check_failed", Some(f.clone()))
    } else if !conv.failed.is_empty() {
        ("non_converged", Some(conv.failed.join("; ")))
    } else {
        ("ok", None)
    };
    let manifest = RunManifest {
        config_hash: hash,
        artifact_version: ARTIFACT_VERSION.to_string(),
        rng_algorithm: RNG_ALGORITHM.to_string(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        jobs: vec![JobStatus { kind: config.job, status: status.into(), detail }],
        files: o.files.clone(),
    };
    o.write_atomic("manifest.json", &to_sorted_json(&manifest)?)?;
    if let Some(f) = check_failure {
        return Err(Error::CheckFailed(f));
    }
    if !conv.failed.is_empty() && !config.allow_non_convergence {
        return Err(Error::NonConvergence(conv.failed.join("; ")));
    }
    Ok(manifest)
}

fn direction_name(run: &SweepRun) -> &'static str {
    match run.direction {
        crate::bifurcation::SweepDirection::Up => "up",
        crate::bifurcation::SweepDirection::Down => "down",
        crate::bifurcation::SweepDirection::Both => "both",
    }
}

fn run_welfare(config: &JobConfig, o: &mut Outputs, conv: &mut Convergence) -> Result<()> {
    let w = &config.welfare;
    let params = &config.params;
    let cournot = cournot_outcome(&w.market, w.n_firms)?;
    let social = social_optimum(&w.market)?;
    let involution = involution_outcome(&w.market, w.effective_price)?;
    let regimes = [&cournot, &social, &involution.outcome];
    o.csv("regimes.csv", &REGIME_COLUMNS, regimes.iter().map(|r| regime_row(r)).collect())?;

    let sol = solve_mpe(params, &config.spec, &config.solver)?;
    conv.note("equilibrium", &sol);
    let gain = cs_gain_from_subsidies(&sol, params, &w.market, &w.bridge);
    #[derive(Serialize)]
    struct Dynamic {
        cs_gain: crate::welfare::CsGain,
        /// Per-period subsidy spending `S` in market units.
        aggregate_subsidy: f64,
        horizon: u64,
        dynamic_efficiency: f64,
        crossover: crate::welfare::Crossover,
    }
    let dynamic = match gain {
        Ok(g) => {
            let s = g.per_unit_subsidy * g.q_sub;
            Some(Dynamic {
                aggregate_subsidy: s,
                horizon: w.horizon,
                dynamic_efficiency: dynamic_efficiency(params, s, w.horizon)?,
                crossover: crossover_horizon(params, g.gain, s, &w.crossover)?,
                cs_gain: g,
            })
        }
        Err(Error::NotApplicable(_)) => None,
        Err(e) => return Err(e),
    };
    let caps = if w.caps.is_empty() {
        None
    } else {
        let table = cap_comparative_static(&config.spec, &w.caps, params, &config.solver)?;
        for c in &table.non_converged {
            conv.failed.push(format!("cap {c}"));
        }
        Some(table)
    };
    #[derive(Serialize)]
    struct Report<'a> {
        market: crate::welfare::LinearMarket,
        max_surplus: f64,
        regimes: Vec<&'a RegimeOutcome>,
        identity_gaps: Vec<f64>,
        involution_subsidy_outlay: f64,
        dynamic: Option<Dynamic>,
        caps: Option<crate::welfare::CapTable>,
        solution: SolutionSummary,
    }
    o.json(
        "welfare.json",
        &Report {
            market: w.market,
            max_surplus: w.market.max_surplus(),
            identity_gaps: regimes.iter().map(|r| r.identity_gap(&w.market)).collect(),
            regimes: regimes.to_vec(),
            involution_subsidy_outlay: involution.subsidy_outlay,
            dynamic,
            caps,
            solution: SolutionSummary::new(&sol, params),
        },
    )
}
