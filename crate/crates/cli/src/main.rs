//! `cfpower`: scenario generation, single solves and the three studies.

mod output;
mod spec;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cfpower::experiments::{self, median};
use cfpower::oracle::max_min_sinr;
use cfpower::statistics::effective_statistics;
use cfpower::{assemble, penalty_minimize, EffectiveStatistics, PowerParams, ProblemData, Scenario};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use output::{opt, write_json, write_text, Csv};
use spec::{ExperimentSpec, Kind, Resolved};

pub const OUT_DIR_ENV: &str = "CFPOWER_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "cfpower", version, about = "PA-aware power allocation for cell-free massive MIMO")]
struct Cli {
    /// Experiment spec (JSON). Flags override its fields.
    #[arg(long, global = true, value_name = "FILE")]
    spec: Option<PathBuf>,

    /// Output directory [env: CFPOWER_OUT_DIR; default: out].
    #[arg(long, short, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a deployment and its effective statistics.
    Scenario(Flags),
    /// Solve one instance; exits 2 when the result is infeasible.
    Solve(Flags),
    /// Solve time against the number of APs.
    SweepRuntime(Flags),
    /// Relative saving against the load fraction of the max-min SE.
    SweepSavings(Flags),
    /// Per-AP transmit power under both PA models.
    Sparsity(Flags),
    /// Max-min SE by bisection.
    Maxmin(Flags),
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// Load a saved scenario instead of generating one.
    #[arg(long, value_name = "FILE")]
    scenario_file: Option<PathBuf>,
    /// Start from saved effective statistics.
    #[arg(long, value_name = "FILE")]
    statistics_file: Option<PathBuf>,
    /// Number of APs (L).
    #[arg(long)]
    num_aps: Option<usize>,
    /// Number of users (K).
    #[arg(long)]
    num_users: Option<usize>,
    /// Antennas per AP (N).
    #[arg(long)]
    antennas: Option<usize>,
    /// Side of the deployment area in meters.
    #[arg(long)]
    area_side: Option<f64>,
    /// Monte-Carlo realizations for the statistics.
    #[arg(long)]
    mc_realizations: Option<usize>,
    /// Scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// AP counts of a sweep, comma-separated.
    #[arg(long, value_delimiter = ',')]
    aps: Option<Vec<usize>>,
    /// Load fractions, comma-separated.
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    /// Seeds of a sweep, comma-separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "num_seeds")]
    seeds: Option<Vec<u64>>,
    /// Use seeds 0..n.
    #[arg(long)]
    num_seeds: Option<u64>,
    /// Common SE target in bits/s/Hz.
    #[arg(long, conflicts_with = "sinr_target")]
    se_target: Option<f64>,
    /// Common linear SINR target.
    #[arg(long)]
    sinr_target: Option<f64>,
    /// PA model of the objective.
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Bisection tolerance of the max-min SE.
    #[arg(long)]
    bisection_tol: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    eps_feas: Option<f64>,
    #[arg(long)]
    max_penalty_iters: Option<usize>,
    #[arg(long)]
    max_apg_iters: Option<usize>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum ModelArg {
    Ideal,
    Nonlinear,
}

impl Flags {
    fn into_spec(self, kind: Kind) -> ExperimentSpec {
        let mut scenario = Map::new();
        let put = |map: &mut Map<String, Value>, key: &str, v: Option<Value>| {
            if let Some(v) = v {
                map.insert(key.into(), v);
            }
        };
        put(&mut scenario, "num_aps", self.num_aps.map(Value::from));
        put(&mut scenario, "num_users", self.num_users.map(Value::from));
        put(&mut scenario, "antennas", self.antennas.map(Value::from));
        put(&mut scenario, "area_side", self.area_side.map(Value::from));
        put(&mut scenario, "mc_realizations", self.mc_realizations.map(Value::from));
        put(&mut scenario, "seed", self.seed.map(Value::from));
        let mut solver = Map::new();
        let model = self.model.map(|m| match m {
            ModelArg::Ideal => json!("ideal"),
            ModelArg::Nonlinear => json!("non-linear"),
        });
        put(&mut solver, "model", model);
        put(&mut solver, "epsilon", self.epsilon.map(Value::from));
        put(&mut solver, "eps_feas", self.eps_feas.map(Value::from));
        put(&mut solver, "max_penalty_iters", self.max_penalty_iters.map(Value::from));
        put(&mut solver, "max_apg_iters", self.max_apg_iters.map(Value::from));
        let seeds = self.seeds.or_else(|| self.num_seeds.map(|n| (0..n).collect()));
        ExperimentSpec {
            kind: Some(kind),
            scenario: (!scenario.is_empty()).then_some(scenario),
            scenario_file: self.scenario_file,
            statistics_file: self.statistics_file,
            solver: (!solver.is_empty()).then_some(solver),
            aps: self.aps,
            fractions: self.fractions,
            seeds,
            se_target: self.se_target,
            sinr_target: self.sinr_target,
            bisection_tol: self.bisection_tol,
            output_dir: None,
        }
    }
}

fn resolve(cli: Cli) -> Result<Resolved> {
    let mut spec = match &cli.spec {
        Some(path) => ExperimentSpec::load(path)?,
        None => ExperimentSpec::default(),
    };
    if let Some(cmd) = cli.command {
        let (kind, flags) = match cmd {
            Command::Scenario(f) => (Kind::Scenario, f),
            Command::Solve(f) => (Kind::Solve, f),
            Command::SweepRuntime(f) => (Kind::SweepRuntime, f),
            Command::SweepSavings(f) => (Kind::SweepSavings, f),
            Command::Sparsity(f) => (Kind::Sparsity, f),
            Command::Maxmin(f) => (Kind::Maxmin, f),
        };
        spec = spec.merge(flags.into_spec(kind));
    } else if cli.spec.is_none() {
        bail!("give a subcommand or --spec FILE");
    }
    let env_out = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    if let Some(dir) = cli.out.or(env_out) {
        spec.output_dir = Some(dir);
    }
    Resolved::new(spec)
}

/// Problem data from a statistics file, a scenario file or a fresh scenario,
/// in that order of preference.
fn load_problem(r: &Resolved) -> Result<ProblemData> {
    if let Some(path) = &r.statistics_file {
        let text = read(path)?;
        let stats = EffectiveStatistics::from_json(&text)
            .with_context(|| format!("in statistics file {}", path.display()))?;
        let targets = r.targets.for_users(stats.num_users);
        let data = assemble(&stats, &targets, PowerParams::from(&r.scenario))?;
        return Ok(data);
    }
    let scenario = match &r.scenario_file {
        Some(path) => Scenario::from_json(&read(path)?)
            .with_context(|| format!("in scenario file {}", path.display()))?,
        None => Scenario::generate(&r.scenario)?,
    };
    let stats = effective_statistics(&scenario)?;
    let targets = r.targets.for_users(scenario.num_users());
    let data = assemble(&stats, &targets, PowerParams::from(&scenario.config))?;
    Ok(data)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn cmd_scenario(r: &Resolved, out: &Path) -> Result<ExitCode> {
    let scenario = match &r.scenario_file {
        Some(path) => Scenario::from_json(&read(path)?)?,
        None => Scenario::generate(&r.scenario)?,
    };
    let stats = effective_statistics(&scenario)?;
    write_text(&out.join("scenario.json"), &(scenario.to_json()? + "\n"))?;
    write_text(&out.join("statistics.json"), &(stats.to_json()? + "\n"))?;
    println!(
        "scenario L={} K={} seed={} written to {}",
        scenario.num_aps(),
        scenario.num_users(),
        scenario.config.seed,
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_solve(r: &Resolved, out: &Path, hash: &str) -> Result<ExitCode> {
    let data = load_problem(r)?;
    let result = penalty_minimize(&data, &r.solver)?;
    write_json(&out.join("result.json"), &result)?;
    let mut trace = format!("# config-hash: {hash}\n");
    trace.push_str(&result.trace_csv());
    write_text(&out.join("trace.csv"), &trace)?;
    println!(
        "feasible={} consumed_ideal_W={} consumed_nonlinear_W={} penalty_iters={} apg_iters={}",
        result.feasible,
        result.consumed_ideal,
        result.consumed_nonlinear,
        result.penalty_iterations,
        result.apg_iterations
    );
    Ok(if result.feasible { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn cmd_maxmin(r: &Resolved, out: &Path) -> Result<ExitCode> {
    let data = load_problem(r)?;
    let report = max_min_sinr(&data, r.bisection_tol, &r.solver)?;
    write_json(&out.join("maxmin.json"), &report)?;
    match report.se_mm {
        Some(se) => println!("se_mm={se} bracket=[{}, {}] probes={}", report.se_low, report.se_high, report.probes),
        None => println!(
            "max-min inconclusive, bracket=[{}, {}] probes={}",
            report.se_low, report.se_high, report.probes
        ),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep_runtime(r: &Resolved, out: &Path, hash: &str) -> Result<ExitCode> {
    let study = experiments::sweep_runtime(&r.scenario, &r.aps, &r.seeds, r.targets.se(), &r.solver)?;
    let mut csv = Csv::new(hash, &["L", "seed", "wall_ms", "I_penalty", "I_APG_total", "objective_W", "feasible"]);
    for row in &study.rows {
        csv.row(&[
            &row.num_aps,
            &row.seed,
            &row.wall_ms,
            &row.penalty_iters,
            &row.apg_iters,
            &row.objective_w,
            &row.feasible,
        ]);
    }
    csv.write(&out.join("runtime.csv"))?;
    let mut summary = Csv::new(hash, &["record", "L", "value"]);
    for &(l, m) in &study.medians {
        summary.row(&[&"median_wall_ms", &l, &m]);
    }
    summary.row(&[&"slope", &"", &opt(study.slope)]);
    summary.write(&out.join("runtime_summary.csv"))?;
    println!("medians (L, ms): {:?}  slope: {}", study.medians, opt(study.slope));
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep_savings(r: &Resolved, out: &Path, hash: &str) -> Result<ExitCode> {
    let study = experiments::sweep_savings(&r.scenario, &r.aps, &r.seeds, &r.fractions, &r.solver, r.bisection_tol)?;
    let mut csv = Csv::new(
        hash,
        &[
            "L",
            "seed",
            "fraction",
            "se_target",
            "P_nl_of_ideal_opt",
            "P_nl_of_nl_opt",
            "saving",
            "se_mm",
            "bisection_tol",
        ],
    );
    for row in &study.rows {
        csv.row(&[
            &row.num_aps,
            &row.seed,
            &row.fraction,
            &row.se_target,
            &row.p_nl_of_ideal_opt,
            &row.p_nl_of_nl_opt,
            &opt(row.saving),
            &row.se_mm,
            &r.bisection_tol,
        ]);
    }
    csv.write(&out.join("savings.csv"))?;
    for &l in &r.aps {
        for &f in &r.fractions {
            let s: Vec<f64> = study
                .rows
                .iter()
                .filter(|row| row.num_aps == l && row.fraction == f)
                .filter_map(|row| row.saving)
                .collect();
            println!("L={l} fraction={f} median saving={}", opt(median(&s)));
        }
    }
    for (l, seed, reason) in &study.aborted {
        eprintln!("aborted L={l} seed={seed}: {reason}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sparsity(r: &Resolved, out: &Path, hash: &str) -> Result<ExitCode> {
    let study = experiments::sparsity_study(&r.scenario, &r.seeds, r.targets.se(), &r.solver)?;
    let mut csv = Csv::new(hash, &["seed", "ap_index", "ptx_ideal_W", "ptx_nl_W"]);
    for row in &study.rows {
        csv.row(&[&row.seed, &row.ap_index, &row.ptx_ideal_w, &row.ptx_nl_w]);
    }
    csv.write(&out.join("sparsity.csv"))?;
    let mut counts = Csv::new(hash, &["seed", "off_ideal", "off_nl"]);
    for c in &study.counts {
        counts.row(&[&c.seed, &c.off_ideal, &c.off_nl]);
    }
    counts.write(&out.join("sparsity_counts.csv"))?;
    let ideal: Vec<f64> = study.counts.iter().map(|c| c.off_ideal as f64).collect();
    let nl: Vec<f64> = study.counts.iter().map(|c| c.off_nl as f64).collect();
    println!(
        "{} seeds solved, {} skipped; median off APs ideal={} nonlinear={}",
        study.counts.len(),
        study.skipped.len(),
        opt(median(&ideal)),
        opt(median(&nl))
    );
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let r = resolve(cli)?;
    let out = r.output_dir.clone();
    std::fs::create_dir_all(&out).with_context(|| format!("cannot create output directory {}", out.display()))?;
    let hash = r.config_hash()?;
    log::info!("{:?} config-hash {hash}", r.kind);
    if r.kind != Kind::Solve && r.kind != Kind::Maxmin && r.statistics_file.is_some() {
        log::warn!("statistics_file is only used by solve and maxmin");
    }
    match r.kind {
        Kind::Scenario => cmd_scenario(&r, &out),
        Kind::Solve => cmd_solve(&r, &out, &hash),
        Kind::Maxmin => cmd_maxmin(&r, &out),
        Kind::SweepRuntime => cmd_sweep_runtime(&r, &out, &hash),
        Kind::SweepSavings => cmd_sweep_savings(&r, &out, &hash),
        Kind::Sparsity => cmd_sparsity(&r, &out, &hash),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
