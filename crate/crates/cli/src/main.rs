//! `shortfall`: command-line front end for the replica solver of
//! l1-regularized Expected Shortfall portfolios.
//!
//! Subcommands: `solve` (one record), `sweep` (aspect-ratio grid), `phase`
//! (feasibility boundary r(alpha)), `map` (regularized <-> unregularized
//! round trip), `weights` (optimal-weight density table), `simulate`
//! (exact LP solutions of finite panels versus the prediction).
//!
//! Output is CSV (default) or JSON, to stdout or `--out`, floats at 17
//! significant digits. Identical configuration and seed produce
//! byte-identical output; tables are ordered by grid index.
//!
//! Exit codes: 0 success, 1 invalid configuration (the message names the
//! field), 2 no convergence, 3 result outside the physical region, 4 LP
//! unbounded on a majority of panels.

mod emit;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use emit::{f17, j17, Record, StageRow, MAP_HEADER, RECORD_HEADER};
use shortfall_core::espmap::{map_from_effective, map_to_effective, MapError};
use shortfall_core::finite_lab::{
    empirical_order_params, optimize_es_lp, replica_vs_mc, LabError, McStat, SampleSet,
};
use shortfall_core::portfolio_stats::weight_distribution;
use shortfall_core::replica_core::{
    MarketModel, Regularizer, ReplicaSolution, SigmaGroup,
};
use shortfall_core::saddle_solver::{
    solve_saddle, sweep, trace_boundary, SolveConfig, SolveError, SweepPath, SweepTermination,
};

const EXIT_CONFIG: u8 = 1;
const EXIT_NO_CONVERGENCE: u8 = 2;
const EXIT_UNPHYSICAL: u8 = 3;
const EXIT_UNBOUNDED: u8 = 4;

#[derive(Parser)]
#[command(
    name = "shortfall",
    version,
    about = "Replica saddle-point solver for l1-regularized Expected Shortfall portfolios"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one operating point and print a single record.
    Solve(PointArgs),
    /// Sweep the aspect ratio at fixed alpha, warm-starting each point.
    Sweep(SweepArgs),
    /// Trace the feasibility boundary r(alpha) for the regularizer.
    Phase(PhaseArgs),
    /// Map a solution to its unregularized image at r_eff and back.
    Map(PointArgs),
    /// Tabulate the optimal-weight density and the zero-weight mass n0.
    Weights(WeightsArgs),
    /// Solve finite return panels exactly by LP and compare against the
    /// replica prediction.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct RegArgs {
    /// Penalty slope on long positions.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    eta_plus: f64,
    /// Penalty slope on short positions (0 when omitted).
    #[arg(long, conflicts_with = "no_short", allow_negative_numbers = true)]
    eta_minus: Option<f64>,
    /// Ban short positions outright (the eta-minus -> infinity limit).
    #[arg(long)]
    no_short: bool,
}

#[derive(Args)]
struct CommonArgs {
    /// Volatility groups as SIGMA:FRACTION, repeatable; fractions sum to 1.
    #[arg(long, value_name = "SIGMA:FRACTION", default_value = "1.0:1.0")]
    sigma: Vec<String>,
    /// Residual tolerance of the Newton solver.
    #[arg(long, default_value_t = 1e-10, allow_negative_numbers = true)]
    tol: f64,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write to PATH instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PointArgs {
    /// Tail confidence level, in (0.5, 1).
    #[arg(long, allow_negative_numbers = true)]
    alpha: f64,
    /// Aspect ratio N/T.
    #[arg(long, allow_negative_numbers = true)]
    r: f64,
    #[command(flatten)]
    reg: RegArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Tail confidence level, in (0.5, 1).
    #[arg(long, allow_negative_numbers = true)]
    alpha: f64,
    /// First aspect ratio of the grid.
    #[arg(long, allow_negative_numbers = true)]
    r_min: f64,
    /// Last aspect ratio of the grid.
    #[arg(long, allow_negative_numbers = true)]
    r_max: f64,
    /// Number of grid points.
    #[arg(long, default_value_t = 20)]
    steps: usize,
    #[command(flatten)]
    reg: RegArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct PhaseArgs {
    /// First confidence level of the grid, in (0.5, 0.999].
    #[arg(long, allow_negative_numbers = true)]
    alpha_min: f64,
    /// Last confidence level of the grid, in (0.5, 0.999].
    #[arg(long, allow_negative_numbers = true)]
    alpha_max: f64,
    /// Number of grid points.
    #[arg(long, default_value_t = 20)]
    steps: usize,
    #[command(flatten)]
    reg: RegArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct WeightsArgs {
    /// Tail confidence level, in (0.5, 1).
    #[arg(long, allow_negative_numbers = true)]
    alpha: f64,
    /// Aspect ratio N/T.
    #[arg(long, allow_negative_numbers = true)]
    r: f64,
    /// Number of density samples across the support.
    #[arg(long, default_value_t = 200)]
    points: usize,
    #[command(flatten)]
    reg: RegArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// Tail confidence level, in (0.5, 1).
    #[arg(long, allow_negative_numbers = true)]
    alpha: f64,
    /// Aspect ratio; defaults to n/t (or the input panel's shape).
    #[arg(long, allow_negative_numbers = true)]
    r: Option<f64>,
    /// Assets per generated panel.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Observations per generated panel.
    #[arg(long, default_value_t = 200)]
    t: usize,
    /// Number of independent panels.
    #[arg(long, default_value_t = 20)]
    samples: usize,
    /// Seed of the panel generator.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Returns matrix (CSV, rows = assets); replaces the generator.
    #[arg(long, value_name = "PATH")]
    input: Option<PathBuf>,
    #[command(flatten)]
    reg: RegArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        // Flag-level failures are configuration errors: exit 1, message
        // naming the offending flag.
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let code = match &cli.cmd {
        Cmd::Solve(a) => cmd_solve(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Phase(a) => cmd_phase(a),
        Cmd::Map(a) => cmd_map(a),
        Cmd::Weights(a) => cmd_weights(a),
        Cmd::Simulate(a) => cmd_simulate(a),
    };
    ExitCode::from(code)
}

/// Configuration failure: print the field-naming message, exit code 1.
fn config_fail(msg: impl std::fmt::Display) -> u8 {
    eprintln!("error: {msg}");
    EXIT_CONFIG
}

/// Solver failure: NoConvergence and friends map to 2, leaving the
/// physical region to 3.
fn solve_fail(e: &SolveError) -> u8 {
    eprintln!("error: {e}");
    match e {
        SolveError::LeftPhysicalRegion { .. } => EXIT_UNPHYSICAL,
        _ => EXIT_NO_CONVERGENCE,
    }
}

fn map_fail(e: &MapError) -> u8 {
    eprintln!("error: {e}");
    match e {
        // On or beyond the image of the critical point: unphysical target.
        MapError::NonPositiveDiscriminant(_) => EXIT_UNPHYSICAL,
        _ => EXIT_NO_CONVERGENCE,
    }
}

fn parse_sigma_groups(specs: &[String]) -> Result<Vec<SigmaGroup>, String> {
    let mut groups = Vec::with_capacity(specs.len());
    for spec in specs {
        let (s, f) = spec
            .split_once(':')
            .ok_or_else(|| format!("sigma must be SIGMA:FRACTION, got {spec:?}"))?;
        let sigma: f64 = s
            .trim()
            .parse()
            .map_err(|_| format!("sigma value {s:?} is not a number"))?;
        let fraction: f64 = f
            .trim()
            .parse()
            .map_err(|_| format!("sigma fraction {f:?} is not a number"))?;
        groups.push(SigmaGroup { sigma, fraction });
    }
    Ok(groups)
}

fn build_model(alpha: f64, r: f64, sigma: &[String]) -> Result<MarketModel, String> {
    let groups = parse_sigma_groups(sigma)?;
    MarketModel::new(alpha, r, groups).map_err(|e| e.to_string())
}

fn build_reg(a: &RegArgs) -> Result<Regularizer, String> {
    if a.no_short {
        Regularizer::no_short(a.eta_plus)
    } else {
        Regularizer::new(a.eta_plus, a.eta_minus.unwrap_or(0.0))
    }
    .map_err(|e| e.to_string())
}

fn build_cfg(tol: f64) -> Result<SolveConfig, String> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(format!("tol must be positive and finite, got {tol}"));
    }
    Ok(SolveConfig { tol, ..SolveConfig::default() })
}

/// Write the finished table; I/O failures are reported as configuration
/// errors on `--out`.
fn write_out(path: Option<&Path>, body: &str) -> u8 {
    let res = emit::sink(path).and_then(|mut w| {
        w.write_all(body.as_bytes())?;
        w.flush()
    });
    match res {
        Ok(()) => 0,
        Err(e) => config_fail(format!("out: {e}")),
    }
}

fn setup_point(a: &PointArgs) -> Result<(MarketModel, Regularizer, SolveConfig), String> {
    Ok((
        build_model(a.alpha, a.r, &a.common.sigma)?,
        build_reg(&a.reg)?,
        build_cfg(a.common.tol)?,
    ))
}

fn cmd_solve(a: &PointArgs) -> u8 {
    let (model, reg, cfg) = match setup_point(a) {
        Ok(v) => v,
        Err(m) => return config_fail(m),
    };
    let sol = match solve_saddle(&model, &reg, None, &cfg) {
        Ok(s) => s,
        Err(e) => return solve_fail(&e),
    };
    let rec = Record::from_solution(&sol);
    let body = match a.common.format {
        Format::Csv => format!("{RECORD_HEADER}\n{}\n", rec.csv()),
        Format::Json => format!("{}\n", rec.json()),
    };
    write_out(a.common.out.as_deref(), &body)
}

fn cmd_sweep(a: &SweepArgs) -> u8 {
    let reg = match build_reg(&a.reg) {
        Ok(v) => v,
        Err(m) => return config_fail(m),
    };
    let cfg = match build_cfg(a.common.tol) {
        Ok(v) => v,
        Err(m) => return config_fail(m),
    };
    if a.steps < 1 {
        return config_fail("steps must be at least 1");
    }
    if !(a.r_min > 0.0 && a.r_min.is_finite()) {
        return config_fail(format!("r-min must be finite and > 0, got {}", a.r_min));
    }
    if !(a.r_max >= a.r_min && a.r_max.is_finite()) {
        return config_fail(format!("r-max must be finite and >= r-min, got {}", a.r_max));
    }
    if a.steps > 1 && a.r_max == a.r_min {
        return config_fail("steps: a degenerate r range requires steps = 1");
    }
    let model = match build_model(a.alpha, a.r_min, &a.common.sigma) {
        Ok(v) => v,
        Err(m) => return config_fail(m),
    };
    let path = SweepPath::AspectRatio { start: a.r_min, end: a.r_max };
    let res = sweep(&model, &reg, path, a.steps, &cfg);
    let recs: Vec<Record> = res.solutions.iter().map(Record::from_solution).collect();
    // A partial table is still emitted, with a trailing status record.
    let (status, code) = match res.termination {
        SweepTermination::Completed => (None, 0),
        SweepTermination::HitPhysicalBoundary { index } => (
            Some(format!("stopped physical-boundary at index {index}")),
            EXIT_UNPHYSICAL,
        ),
        SweepTermination::Q0Divergence { index } => (
            Some(format!("stopped q0-divergence at index {index}")),
            EXIT_UNPHYSICAL,
        ),
        SweepTermination::ConvergenceFailure { index } => (
            Some(format!("stopped convergence-failure at index {index}")),
            EXIT_NO_CONVERGENCE,
        ),
    };
    let body = match a.common.format {
        Format::Csv => {
            let mut b = String::from(RECORD_HEADER);
            b.push('\n');
            for r in &recs {
                b.push_str(&r.csv());
                b.push('\n');
            }
            if let Some(s) = &status {
                b.push_str(&format!("# status: {s}\n"));
            }
            b
        }
        Format::Json => {
            let rows: Vec<String> = recs.iter().map(Record::json).collect();
            let st = match &status {
                None => "\"completed\"".to_string(),
                Some(s) => format!("\"{s}\""),
            };
            format!("{{\"records\":[{}],\"status\":{st}}}\n", rows.join(","))
        }
    };
    let w = write_out(a.common.out.as_deref(), &body);
    if w != 0 {
        return w;
    }
    code
}

fn cmd_phase(a: &PhaseArgs) -> u8 {
    let reg = match build_reg(&a.reg) {
        Ok(v) => v,
        Err(m) => return config_fail(m),
    };
    let cfg = match build_cfg(a.common.tol) {
        Ok(v) => v,
        Err(m) => return config_fail(m),
    };
    // Boundary tracing is defined on the homogeneous unit-volatility model.
    match parse_sigma_groups(&a.common.sigma) {
        Ok(g) => {
            if g.len() != 1 || g[0].sigma != 1.0 || (g[0].fraction - 1.0).abs() > 1e-12 {
                return config_fail("sigma: boundary tracing supports only the unit profile 1.0:1.0");
            }
        }
        Err(m) => return config_fail(m),
    }
    if a.steps < 1 {
        return config_fail("steps must be at least 1");
    }
    for (name, v) in [("alpha-min", a.alpha_min), ("alpha-max", a.alpha_max)] {
        if !(v > 0.5 && v <= 0.999) {
            return config_fail(format!("{name} must lie in (0.5, 0.999], got {v}"));
        }
    }
    if a.alpha_max < a.alpha_min {
        return config_fail(format!(
            "alpha-max must be >= alpha-min, got {} < {}",
            a.alpha_max, a.alpha_min
        ));
    }
    if a.steps > 1 && a.alpha_max == a.alpha_min {
        return config_fail("steps: a degenerate alpha range requires steps = 1");
    }
    let grid: Vec<f64> = if a.steps == 1 {
        vec![a.alpha_min]
    } else {
        (0..a.steps)
            .map(|i| {
                a.alpha_min + (a.alpha_max - a.alpha_min) * i as f64 / (a.steps - 1) as f64
            })
            .collect()
    };
    let points = trace_boundary(&reg, &grid, &cfg);
    let failures = points.iter().filter(|p| p.r_boundary.is_err()).count();
    let body = match a.common.format {
        Format::Csv => {
            let mut b = String::from("alpha,r_boundary\n");
            for p in &points {
                let r = match &p.r_boundary {
                    Ok(r) => f17(*r),
                    Err(_) => "nan".to_string(),
                };
                b.push_str(&format!("{},{r}\n", f17(p.alpha)));
            }
            if failures > 0 {
                b.push_str(&format!(
                    "# status: {failures} of {} boundary points failed\n",
                    points.len()
                ));
            }
            b
        }
        Format::Json => {
            let rows: Vec<String> = points
                .iter()
                .map(|p| match &p.r_boundary {
                    Ok(r) => format!("{{\"alpha\":{},\"r_boundary\":{}}}", j17(p.alpha), j17(*r)),
                    Err(e) => format!("{{\"alpha\":{},\"error\":\"{e}\"}}", j17(p.alpha)),
                })
                .collect();
            let st = if failures == 0 {
                "\"completed\"".to_string()
            } else {
                format!("\"{failures} of {} boundary points failed\"", points.len())
            };
            format!("{{\"points\":[{}],\"status\":{st}}}\n", rows.join(","))
        }
    };
    let w = write_out(a.common.out.as_deref(), &body);
    if w != 0 {
        return w;
    }
    if failures > 0 {
        EXIT_NO_CONVERGENCE
    } else {
        0
    }
}

fn cmd_map(a: &PointArgs) -> u8 {
    let (model, reg, cfg) = match setup_point(a) {
        Ok(v) => v,
        Err(m) => return config_fail(m),
    };
    if !model.is_unit_sigma() {
        return config_fail("sigma: the order-parameter map requires the unit profile 1.0:1.0");
    }
    let sol = match solve_saddle(&model, &reg, None, &cfg) {
        Ok(s) => s,
        Err(e) => return solve_fail(&e),
    };
    let (eff_params, r_eff) = match map_to_effective(&sol) {
        Ok(v) => v,
        Err(e) => return map_fail(&e),
    };
    let eff_model = match model.with_r(r_eff) {
        Ok(m) => m,
        Err(e) => return config_fail(format!("effective aspect ratio rejected: {e}")),
    };
    // from_params recomputes the residual norm, so each row certifies the
    // system it claims to solve.
    let eff_sol = match ReplicaSolution::from_params(eff_model, Regularizer::none(), eff_params) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: effective parameters left the domain: {e}");
            return EXIT_NO_CONVERGENCE;
        }
    };
    let back = match map_from_effective(&eff_sol, &reg, model.r()) {
        Ok(p) => p,
        Err(e) => return map_fail(&e),
    };
    let rt_sol = match ReplicaSolution::from_params(model.clone(), reg, back) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: round-trip parameters left the domain: {e}");
            return EXIT_NO_CONVERGENCE;
        }
    };
    let em = emit::eta_minus_opt(&reg);
    let rows = [
        StageRow {
            stage: "original",
            alpha: model.alpha(),
            r: model.r(),
            eta_plus: reg.eta_plus(),
            eta_minus: em,
            params: sol.params,
            residual_norm: sol.residual_norm,
        },
        StageRow {
            stage: "effective",
            alpha: model.alpha(),
            r: r_eff,
            eta_plus: 0.0,
            eta_minus: Some(0.0),
            params: eff_params,
            residual_norm: eff_sol.residual_norm,
        },
        StageRow {
            stage: "round_trip",
            alpha: model.alpha(),
            r: model.r(),
            eta_plus: reg.eta_plus(),
            eta_minus: em,
            params: rt_sol.params,
            residual_norm: rt_sol.residual_norm,
        },
    ];
    let body = match a.common.format {
        Format::Csv => {
            let mut b = String::from(MAP_HEADER);
            b.push('\n');
            for r in &rows {
                b.push_str(&r.csv());
                b.push('\n');
            }
            b
        }
        Format::Json => format!(
            "{{\"original\":{},\"effective\":{},\"round_trip\":{}}}\n",
            rows[0].json(),
            rows[1].json(),
            rows[2].json()
        ),
    };
    write_out(a.common.out.as_deref(), &body)
}

fn cmd_weights(a: &WeightsArgs) -> u8 {
    let (model, reg, cfg) = {
        let model = match build_model(a.alpha, a.r, &a.common.sigma) {
            Ok(v) => v,
            Err(m) => return config_fail(m),
        };
        let reg = match build_reg(&a.reg) {
            Ok(v) => v,
            Err(m) => return config_fail(m),
        };
        let cfg = match build_cfg(a.common.tol) {
            Ok(v) => v,
            Err(m) => return config_fail(m),
        };
        (model, reg, cfg)
    };
    if a.points < 2 {
        return config_fail("points must be at least 2");
    }
    let sol = match solve_saddle(&model, &reg, None, &cfg) {
        Ok(s) => s,
        Err(e) => return solve_fail(&e),
    };
    let dist = weight_distribution(&sol.params, &sol.model, &sol.regularizer);
    // Eight widths past the farthest center bounds the density by ~1e-15.
    let mut hi = 0.0_f64;
    let mut lo = 0.0_f64;
    for c in &dist.components {
        hi = hi.max(c.center_pos + 8.0 * c.width);
        if let Some(cn) = c.center_neg {
            lo = lo.min(cn - 8.0 * c.width);
        }
    }
    // The continuous part opens at 0+ (the atom sits exactly at 0): with no
    // negative support, start the grid just above zero so the first sample
    // carries the limit density.
    if lo == 0.0 {
        lo = hi * 1e-9;
    }
    let k = a.points;
    let grid: Vec<f64> = (0..k)
        .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
        .collect();
    let body = match a.common.format {
        Format::Csv => {
            let mut b = format!("# n0: {}\nw,density\n", f17(dist.n0));
            for &w in &grid {
                b.push_str(&format!("{},{}\n", f17(w), f17(dist.density(w))));
            }
            b
        }
        Format::Json => {
            let rows: Vec<String> = grid
                .iter()
                .map(|&w| format!("[{},{}]", j17(w), j17(dist.density(w))))
                .collect();
            format!("{{\"n0\":{},\"points\":[{}]}}\n", j17(dist.n0), rows.join(","))
        }
    };
    write_out(a.common.out.as_deref(), &body)
}

/// Per-observable comparison cells of the simulate report.
struct SimReport {
    alpha: f64,
    r: f64,
    eta_plus: f64,
    eta_minus: Option<f64>,
    n: usize,
    t: usize,
    samples: usize,
    solved: usize,
    unbounded: usize,
    certified: usize,
    q0: McStat,
    n0: McStat,
    es_in: McStat,
}

const SIM_HEADER: &str = "alpha,r,eta_plus,eta_minus,n,t,samples,solved,unbounded,certified,\
q0_predicted,q0_mean,q0_std_error,q0_z,n0_predicted,n0_mean,n0_std_error,n0_z,\
es_in_predicted,es_in_mean,es_in_std_error,es_in_z";

fn stat_csv(s: &McStat) -> String {
    format!("{},{},{},{}", f17(s.predicted), f17(s.mean), f17(s.std_error), f17(s.z_score))
}

fn stat_json(s: &McStat) -> String {
    format!(
        "{{\"predicted\":{},\"mean\":{},\"std_error\":{},\"z_score\":{}}}",
        j17(s.predicted),
        j17(s.mean),
        j17(s.std_error),
        j17(s.z_score)
    )
}

fn sim_body(rep: &SimReport, format: Format) -> String {
    match format {
        Format::Csv => {
            let em = match rep.eta_minus {
                Some(v) => f17(v),
                None => "inf".to_string(),
            };
            format!(
                "{SIM_HEADER}\n{},{},{},{em},{},{},{},{},{},{},{},{},{}\n",
                f17(rep.alpha),
                f17(rep.r),
                f17(rep.eta_plus),
                rep.n,
                rep.t,
                rep.samples,
                rep.solved,
                rep.unbounded,
                rep.certified,
                stat_csv(&rep.q0),
                stat_csv(&rep.n0),
                stat_csv(&rep.es_in)
            )
        }
        Format::Json => {
            let em = match rep.eta_minus {
                Some(v) => j17(v),
                None => "\"inf\"".to_string(),
            };
            format!(
                "{{\"alpha\":{},\"r\":{},\"eta_plus\":{},\"eta_minus\":{em},\"n\":{},\"t\":{},\
                 \"samples\":{},\"solved\":{},\"unbounded\":{},\"certified\":{},\
                 \"q0\":{},\"n0\":{},\"es_in\":{}}}\n",
                j17(rep.alpha),
                j17(rep.r),
                j17(rep.eta_plus),
                rep.n,
                rep.t,
                rep.samples,
                rep.solved,
                rep.unbounded,
                rep.certified,
                stat_json(&rep.q0),
                stat_json(&rep.n0),
                stat_json(&rep.es_in)
            )
        }
    }
}

fn cmd_simulate(a: &SimulateArgs) -> u8 {
    let reg = match build_reg(&a.reg) {
        Ok(v) => v,
        Err(m) => return config_fail(m),
    };
    let cfg = match build_cfg(a.common.tol) {
        Ok(v) => v,
        Err(m) => return config_fail(m),
    };
    match &a.input {
        Some(path) => simulate_input(a, path, &reg, &cfg),
        None => simulate_generated(a, &reg, &cfg),
    }
}

fn simulate_generated(a: &SimulateArgs, reg: &Regularizer, cfg: &SolveConfig) -> u8 {
    for (name, v) in [("n", a.n), ("t", a.t), ("samples", a.samples)] {
        if v == 0 {
            return config_fail(format!("{name} must be at least 1"));
        }
    }
    let shape_r = a.n as f64 / a.t as f64;
    let r = match a.r {
        Some(r) => {
            // The panel shape fixes the aspect ratio; an explicit r may only
            // restate it.
            if (r - shape_r).abs() > 0.5 / a.t as f64 {
                return config_fail(format!("r must match n/t = {shape_r}, got {r}"));
            }
            r
        }
        None => shape_r,
    };
    let model = match build_model(a.alpha, r, &a.common.sigma) {
        Ok(v) => v,
        Err(m) => return config_fail(m),
    };
    let rep = match replica_vs_mc(&model, reg, a.n, a.t, a.samples, a.seed, cfg) {
        Ok(r) => r,
        Err(e) => return solve_fail(&e),
    };
    let body = sim_body(
        &SimReport {
            alpha: model.alpha(),
            r: model.r(),
            eta_plus: reg.eta_plus(),
            eta_minus: emit::eta_minus_opt(reg),
            n: a.n,
            t: a.t,
            samples: rep.n_samples,
            solved: rep.solved_samples,
            unbounded: rep.unbounded_samples,
            certified: rep.certified_samples,
            q0: rep.q0,
            n0: rep.n0,
            es_in: rep.es_in,
        },
        a.common.format,
    );
    let w = write_out(a.common.out.as_deref(), &body);
    if w != 0 {
        return w;
    }
    if 2 * rep.unbounded_samples > rep.n_samples {
        eprintln!(
            "error: {} of {} panels were unbounded; the point sits beyond the finite-sample feasibility boundary",
            rep.unbounded_samples, rep.n_samples
        );
        return EXIT_UNBOUNDED;
    }
    0
}

/// Read a returns matrix: rows = assets, columns = observations. A leading
/// non-numeric row is treated as a header and skipped; blank rows are
/// ignored.
fn read_returns_csv(path: &Path) -> Result<Vec<Vec<f64>>, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| e.to_string())?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let mut row = Vec::with_capacity(rec.len());
        let mut numeric = true;
        for field in rec.iter() {
            match field.parse::<f64>() {
                Ok(v) => row.push(v),
                Err(_) => {
                    numeric = false;
                    break;
                }
            }
        }
        if !numeric {
            if i == 0 && rows.is_empty() {
                continue;
            }
            return Err(format!("row {} holds a non-numeric field", i + 1));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err("no data rows".to_string());
    }
    Ok(rows)
}

fn simulate_input(a: &SimulateArgs, path: &Path, reg: &Regularizer, cfg: &SolveConfig) -> u8 {
    let rows = match read_returns_csv(path) {
        Ok(r) => r,
        Err(m) => return config_fail(format!("input: {m}")),
    };
    let n = rows.len();
    let t = rows[0].len();
    let shape_r = n as f64 / t as f64;
    if let Some(r) = a.r {
        if (r - shape_r).abs() > 0.5 / t as f64 {
            return config_fail(format!("r must match the panel shape n/t = {shape_r}, got {r}"));
        }
    }
    let model = match build_model(a.alpha, shape_r, &a.common.sigma) {
        Ok(v) => v,
        Err(m) => return config_fail(m),
    };
    let sample = match SampleSet::from_matrix(&rows, &model) {
        Ok(s) => s,
        Err(e) => return config_fail(format!("input: {e}")),
    };
    let replica = match solve_saddle(&model, reg, None, cfg) {
        Ok(s) => s,
        Err(e) => return solve_fail(&e),
    };
    let lp = match optimize_es_lp(&sample, model.alpha(), reg) {
        Ok(lp) => lp,
        Err(LabError::Unbounded) => {
            eprintln!("error: the panel's shortfall program is unbounded");
            return EXIT_UNBOUNDED;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_NO_CONVERGENCE;
        }
    };
    let (q0e, n0e, ese) = empirical_order_params(&lp, &sample);
    // One panel: the mean is the observation itself and the standard error
    // degenerates to 0 (z prints inf).
    let one = |predicted: f64, mean: f64| McStat {
        predicted,
        mean,
        std_error: 0.0,
        z_score: (mean - predicted) / 0.0,
    };
    let body = sim_body(
        &SimReport {
            alpha: model.alpha(),
            r: model.r(),
            eta_plus: reg.eta_plus(),
            eta_minus: emit::eta_minus_opt(reg),
            n,
            t,
            samples: 1,
            solved: 1,
            unbounded: 0,
            certified: usize::from(lp.certificate.holds(1e-7)),
            q0: one(replica.params.q0, q0e),
            n0: one(replica.n0, n0e),
            es_in: one(replica.es_in, ese),
        },
        a.common.format,
    );
    write_out(a.common.out.as_deref(), &body)
}
