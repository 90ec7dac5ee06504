//! `bellbound`: build states and inequalities, compute classical values and
//! lower/upper bounds on quantum violations, and reproduce reference tables.
//!
//! Exit codes: 0 on success, 2 on invalid input, 3 on solver failure.

mod input;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Result};
use bellbound::bell::{classical_optimum, cglmp_to_i22nn, i22nn, AnyInequality, MeasurementFile};
use bellbound::lb::{horodecki_values, seesaw, seesaw_correlation, InitMode, SeesawConfig};
use bellbound::nonstandard::{
    apply_filter, cglmp_me_value, i22dd_isotropic_threshold, i22dd_me_value, me_ch_value, ncopy_pure_ch_value,
};
use bellbound::qcore::DensityMatrix;
use bellbound::states::{thresholds, Family, StateFile};
use bellbound::ub::{
    chsh_semianalytic, isotropic_chsh_threshold_semianalytic, isotropic_chsh_threshold_ub, ub_enumerate_profiles,
    ub_state_independent, QcqpInstance, UbResult,
};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::input::{parse_filter, parse_inequality, parse_state};
use crate::output::{emit, to_value, Format};

/// Environment variable replacing the default tolerance.
const TOL_ENV: &str = "BELLBOUND_TOL_OVERRIDE";

/// Slack used when comparing bounds with the classical bound.
const VERDICT_SLACK: f64 = 1e-8;

#[derive(Parser, Debug)]
#[command(name = "bellbound", version, about = "Bounds on Bell-inequality violations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Write the report to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,
    /// Maximum number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(clap::Args, Debug, Clone)]
struct LbArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    /// Convergence tolerance of the see-saw iteration.
    #[arg(long)]
    tol: Option<f64>,
    /// Use projective instead of generic initial measurements.
    #[arg(long)]
    projective_init: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Mode {
    Lb,
    UbSi,
    UbFt,
    UbSemi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TableName {
    IsotropicChsh,
    PureCh,
    I22dd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConvertTarget {
    Cglmp,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Emit a state as a JSON state file.
    State {
        #[arg(long)]
        state: String,
    },
    /// Emit an inequality as a JSON inequality file.
    Inequality {
        #[arg(long)]
        ineq: String,
    },
    /// Classical bound and a maximizing deterministic strategy.
    ClassicalBound {
        #[arg(long)]
        ineq: String,
    },
    /// See-saw lower bound.
    Lb {
        #[arg(long)]
        state: String,
        #[arg(long)]
        ineq: String,
        #[command(flatten)]
        lb: LbArgs,
    },
    /// Lagrange-dual upper bound.
    Ub {
        #[arg(long)]
        state: String,
        #[arg(long)]
        ineq: String,
        #[arg(long, value_enum, default_values_t = [Mode::UbFt])]
        mode: Vec<Mode>,
    },
    /// Lower and upper bounds together, with a verdict.
    Bound {
        #[arg(long)]
        state: String,
        #[arg(long)]
        ineq: String,
        #[arg(long, value_enum, default_values_t = [Mode::Lb, Mode::UbFt])]
        mode: Vec<Mode>,
        #[command(flatten)]
        lb: LbArgs,
    },
    /// Maximal CH and CHSH values of a two-qubit state.
    Horodecki {
        #[arg(long)]
        state: String,
    },
    /// Apply local filters (`identity`, `gisin:theta=…`, `project2`); each
    /// `--filter` adds one term of the map.
    Filter {
        #[arg(long)]
        state: String,
        #[arg(long, required = true)]
        filter: Vec<String>,
    },
    /// Rewrite an inequality into another form.
    Convert {
        #[arg(value_enum)]
        target: ConvertTarget,
        #[arg(long)]
        n: usize,
    },
    /// Reproduce a reference table.
    Table {
        #[arg(value_enum)]
        name: TableName,
        /// Largest dimension listed.
        #[arg(long)]
        dmax: Option<usize>,
        /// Largest dimension for which the enumerated upper bound is computed.
        #[arg(long, default_value_t = 4)]
        numeric_dmax: usize,
        /// Bisection tolerance for thresholds.
        #[arg(long)]
        tol: Option<f64>,
    },
}

/// Input errors (exit code 2) as opposed to solver failures (exit code 3).
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<bellbound::Error>() {
        Some(e) if e.is_solver() => 3,
        _ => 2,
    }
}

fn tolerance(explicit: Option<f64>, default: f64) -> Result<f64> {
    let tol = match (explicit, std::env::var(TOL_ENV)) {
        (Some(t), _) => t,
        (None, Ok(s)) => s.trim().parse().map_err(|_| anyhow::anyhow!("{TOL_ENV}={s} is not a number"))?,
        (None, Err(_)) => default,
    };
    if !(tol.is_finite() && tol > 0.0 && tol < 1.0) {
        bail!("tolerance {tol} must lie in (0, 1)");
    }
    Ok(tol)
}

#[derive(Serialize)]
struct Instance {
    state: String,
    split: (usize, usize),
    inequality: String,
}

#[derive(Serialize)]
struct LbReport {
    value: f64,
    restarts: usize,
    seed: u64,
    best_restart: usize,
    sweeps: usize,
    measurements: MeasurementFile,
}

#[derive(Serialize)]
struct UbReport {
    mode: Mode,
    value: f64,
    status: bellbound::sdp::SdpStatus,
    iterations: usize,
    best_profile: Option<Vec<i64>>,
    profiles_solved: usize,
    pruned: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
enum Verdict {
    Violates,
    NoViolationCertified,
    Undecided,
}

#[derive(Serialize, Default)]
struct Timings {
    lb_seconds: Option<f64>,
    ub_seconds: Option<f64>,
}

#[derive(Serialize)]
struct BoundReport {
    instance: Instance,
    classical_bound: f64,
    lb: Option<LbReport>,
    ub: Vec<UbReport>,
    verdict: Verdict,
    flags: Vec<String>,
    timings: Timings,
}

fn verdict(classical: f64, lb: Option<f64>, ubs: &[f64]) -> Verdict {
    if lb.is_some_and(|v| v > classical + VERDICT_SLACK) {
        Verdict::Violates
    } else if ubs.iter().any(|&u| u <= classical + VERDICT_SLACK) {
        Verdict::NoViolationCertified
    } else {
        Verdict::Undecided
    }
}

fn run_lb(rho: &DensityMatrix, ineq: &AnyInequality, args: &LbArgs) -> Result<LbReport> {
    if args.restarts == 0 {
        bail!("--restarts must be positive");
    }
    let cfg = SeesawConfig {
        restarts: args.restarts,
        rng_seed: args.seed,
        convergence_tol: tolerance(args.tol, 1e-9)?,
        init_mode: if args.projective_init { InitMode::Projective { ranks: None } } else { InitMode::GenericPovm },
        ..SeesawConfig::default()
    };
    let r = match ineq {
        AnyInequality::Probability(b) => seesaw(rho, b, &cfg)?,
        AnyInequality::Correlation(b) => seesaw_correlation(rho, b, &cfg)?,
        AnyInequality::Multipartite(_) => bail!("lower bounds need a bipartite inequality"),
    };
    Ok(LbReport {
        value: r.value,
        restarts: cfg.restarts,
        seed: cfg.rng_seed,
        best_restart: r.best_restart,
        sweeps: r.sweeps,
        measurements: MeasurementFile::from_assignment(&r.measurements),
    })
}

fn run_ub(rho: &DensityMatrix, ineq: &AnyInequality, mode: Mode) -> Result<UbResult> {
    if mode == Mode::UbSemi {
        match ineq {
            AnyInequality::Correlation(b) if b.name == "chsh" => return Ok(chsh_semianalytic(rho)?),
            _ => bail!("ub-semi applies to chsh only"),
        }
    }
    let inst = match ineq {
        AnyInequality::Probability(b) => QcqpInstance::probability(b, rho)?,
        AnyInequality::Correlation(b) => QcqpInstance::correlation(b, rho)?,
        AnyInequality::Multipartite(_) => bail!("upper bounds need a bipartite inequality"),
    };
    Ok(match mode {
        Mode::UbSi => ub_state_independent(&inst)?,
        _ => ub_enumerate_profiles(&inst)?,
    })
}

fn cmd_bound(state: &str, ineq_spec: &str, modes: &[Mode], lb_args: &LbArgs) -> Result<Value> {
    let loaded = parse_state(state)?;
    let ineq = parse_inequality(ineq_spec)?;
    let classical = ineq.classical_bound()?;
    let mut flags = loaded.flags;
    let mut timings = Timings::default();

    let lb = if modes.contains(&Mode::Lb) {
        let t = Instant::now();
        let r = run_lb(&loaded.rho, &ineq, lb_args)?;
        timings.lb_seconds = Some(t.elapsed().as_secs_f64());
        Some(r)
    } else {
        None
    };

    let mut ub = Vec::new();
    let t = Instant::now();
    let mut seen = Vec::new();
    for &mode in modes.iter().filter(|m| **m != Mode::Lb) {
        if seen.contains(&mode) {
            continue;
        }
        seen.push(mode);
        let r = match run_ub(&loaded.rho, &ineq, mode) {
            Ok(r) => r,
            // An inapplicable upper bound does not void the lower bound.
            Err(e) if lb.is_some() && exit_code(&e) == 2 => {
                flags.push(format!("{mode:?} skipped: {e}"));
                continue;
            }
            Err(e) => return Err(e),
        };
        if r.status != bellbound::sdp::SdpStatus::Optimal {
            flags.push(format!("{mode:?} solver finished with status {:?}", r.status));
        }
        ub.push(UbReport {
            mode,
            value: r.value,
            status: r.status,
            iterations: r.iterations,
            best_profile: r.best_profile.map(|p| p.z),
            profiles_solved: r.profiles.len(),
            pruned: r.pruned,
        });
    }
    if !ub.is_empty() {
        timings.ub_seconds = Some(t.elapsed().as_secs_f64());
    }

    let lb_value = lb.as_ref().map(|l| l.value);
    let ub_values: Vec<f64> = ub.iter().map(|u| u.value).collect();
    if let (Some(l), Some(u)) = (lb_value, ub_values.iter().copied().reduce(f64::min)) {
        if l > u + 1e-6 {
            flags.push(format!("lower bound {l} exceeds upper bound {u}"));
        }
    }
    let report = BoundReport {
        instance: Instance { state: state.into(), split: loaded.rho.split(), inequality: ineq.name().into() },
        classical_bound: classical,
        verdict: verdict(classical, lb_value, &ub_values),
        lb,
        ub,
        flags,
        timings,
    };
    to_value(&report)
}

fn cmd_inequality(spec: &str) -> Result<Value> {
    let file = match parse_inequality(spec)? {
        AnyInequality::Probability(b) => b.to_file(),
        AnyInequality::Correlation(b) => b.to_probability()?.to_file(),
        AnyInequality::Multipartite(_) => bail!("multipartite inequalities have no bipartite file form"),
    };
    Ok(serde_json::to_value(file)?)
}

fn cmd_classical(spec: &str) -> Result<Value> {
    let ineq = parse_inequality(spec)?;
    let strategy = match &ineq {
        AnyInequality::Probability(b) => {
            let (_, s) = classical_optimum(b)?;
            json!({"alice": s.a, "bob": s.b})
        }
        AnyInequality::Correlation(b) => {
            let (_, a, bs) = b.classical_optimum()?;
            json!({"alice": a, "bob": bs})
        }
        AnyInequality::Multipartite(_) => Value::Null,
    };
    to_value(&json!({"inequality": ineq.name(), "classical_bound": ineq.classical_bound()?, "strategy": strategy}))
}

fn cmd_horodecki(state: &str) -> Result<Value> {
    let loaded = parse_state(state)?;
    to_value(&json!({"state": state, "horodecki": horodecki_values(&loaded.rho)?, "flags": loaded.flags}))
}

fn cmd_filter(state: &str, filters: &[String]) -> Result<Value> {
    let loaded = parse_state(state)?;
    let split = loaded.rho.split();
    let pairs = filters.iter().map(|f| parse_filter(f, split)).collect::<Result<Vec<_>>>()?;
    let (out, p_suc) = apply_filter(&loaded.rho, &pairs)?;
    let two_qubit = |r: &DensityMatrix| (r.split() == (2, 2)).then(|| horodecki_values(r)).transpose();
    let before = two_qubit(&loaded.rho)?;
    let after = two_qubit(&out)?;
    let mut v = to_value(&json!({
        "state": state,
        "filters": filters,
        "success_probability": p_suc,
        "horodecki_before": before,
        "horodecki_after": after,
    }))?;
    v["filtered_state"] = serde_json::to_value(StateFile::from_state(&out))?;
    Ok(v)
}

fn cmd_convert(n: usize) -> Result<Value> {
    let conv = cglmp_to_i22nn(n)?;
    let last = conv.stages.last().expect("conversion has stages");
    let target = i22nn(n)?.scaled(conv.scale);
    to_value(&json!({
        "n": n,
        "scale": conv.scale,
        "residual": conv.residual,
        "moves": conv.moves,
        "transformed": last.to_matrix(true),
        "scaled_i22nn": target.to_matrix(true),
    }))
}

const I22DD_ROWS: [usize; 8] = [2, 3, 4, 5, 8, 10, 100, 1000];

fn table_isotropic(dmax: usize, numeric_dmax: usize, tol: f64) -> Result<Value> {
    if dmax < 2 {
        bail!("--dmax must be at least 2");
    }
    let mut rows = Vec::new();
    for d in 2..=dmax {
        let th = thresholds(Family::Isotropic, d)?;
        let numerical = if d <= numeric_dmax { Some(isotropic_chsh_threshold_ub(d, tol)?) } else { None };
        rows.push(json!([
            d,
            th.p_sep,
            isotropic_chsh_threshold_semianalytic(d, tol)?,
            numerical,
            th.p_proj_lhv,
            th.p_povm_lhv
        ]));
    }
    Ok(json!({
        "table": "isotropic-chsh",
        "columns": ["d", "p_sep", "p_ub_semianalytic", "p_ub_numerical", "p_lhv_projective", "p_lhv_povm"],
        "rows": rows,
    }))
}

fn copies_value(raw: &[f64], n: usize) -> Result<Option<f64>> {
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    let c: Vec<f64> = raw.iter().map(|x| x / norm).collect();
    if raw.iter().all(|&x| x == raw[0]) {
        return Ok(raw.len().checked_pow(n as u32).map(me_ch_value).transpose()?);
    }
    match ncopy_pure_ch_value(&c, n) {
        Ok(v) => Ok(Some(v)),
        Err(bellbound::Error::Range(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn table_pure_ch() -> Result<Value> {
    let states: [&[f64]; 6] =
        [&[2.0, 1.0], &[1.0, 1.0, 1.0], &[3.0, 2.0, 1.0], &[4.0, 3.0, 2.0, 1.0], &[3.0, 3.0, 2.0, 1.0], &[1.0; 5]];
    let mut columns = vec!["copies".to_string()];
    columns.extend(states.iter().map(|s| {
        let label: Vec<String> = s.iter().map(|x| format!("{x}")).collect();
        format!("phi_{}", label.join(":"))
    }));
    let mut rows = Vec::new();
    for n in [1, 2, 3, 4, 5, 10] {
        let mut row = vec![json!(n)];
        for s in states {
            row.push(json!(copies_value(s, n)?));
        }
        rows.push(Value::Array(row));
    }
    Ok(json!({"table": "pure-ch", "columns": columns, "rows": rows}))
}

fn table_i22dd(dmax: Option<usize>) -> Result<Value> {
    let mut rows = Vec::new();
    for d in I22DD_ROWS.into_iter().filter(|&d| dmax.is_none_or(|m| d <= m)) {
        rows.push(json!([d, cglmp_me_value(d)?, i22dd_me_value(d)?, i22dd_isotropic_threshold(d)?]));
    }
    Ok(json!({"table": "i22dd", "columns": ["d", "cglmp_me", "i22dd_me", "p_d"], "rows": rows}))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let value = match &cli.command {
        Command::State { state } => {
            let loaded = parse_state(state)?;
            for f in &loaded.flags {
                eprintln!("note: {f}");
            }
            serde_json::to_value(StateFile::from_state(&loaded.rho))?
        }
        Command::Inequality { ineq } => cmd_inequality(ineq)?,
        Command::ClassicalBound { ineq } => cmd_classical(ineq)?,
        Command::Lb { state, ineq, lb } => cmd_bound(state, ineq, &[Mode::Lb], lb)?,
        Command::Ub { state, ineq, mode } => {
            if mode.contains(&Mode::Lb) {
                bail!("use `lb` or `bound` for lower bounds");
            }
            let unused = LbArgs { seed: 0, restarts: 1, tol: None, projective_init: false };
            cmd_bound(state, ineq, mode, &unused)?
        }
        Command::Bound { state, ineq, mode, lb } => cmd_bound(state, ineq, mode, lb)?,
        Command::Horodecki { state } => cmd_horodecki(state)?,
        Command::Filter { state, filter } => cmd_filter(state, filter)?,
        Command::Convert { target: ConvertTarget::Cglmp, n } => cmd_convert(*n)?,
        Command::Table { name, dmax, numeric_dmax, tol } => {
            let tol = tolerance(*tol, 1e-7)?;
            to_value(&match name {
                TableName::IsotropicChsh => table_isotropic(dmax.unwrap_or(5), *numeric_dmax, tol)?,
                TableName::PureCh => table_pure_ch()?,
                TableName::I22dd => table_i22dd(*dmax)?,
            })?
        }
    };
    emit(&value, cli.format, cli.out.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
