//! Command-line front end.
//!
//! Every command reads a flat configuration file, runs, and writes its
//! outputs only after all of them have been computed. Files go through a
//! temporary file in the destination directory, so a failed run leaves no
//! partial output behind.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use serde::Serialize;

use crate::config::{parse_config, Command, EnvKind, ExperimentConfig, ProbeKind};
use crate::env::{
    default_density_grid, margin_probe, tail_exponent_probe, ConstraintCheck, HardInstance,
    SimRng,
};
use crate::experiment::{build_hard_instance, RunOutcome, Scenario};
use crate::simulate::{fit_regret_exponent, trial_seed};

#[derive(Debug, Parser)]
#[command(name = "knn-ucb", version, about = "Nearest-neighbor UCB contextual bandit simulations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Run one experiment and write its regret curve.
    Run(RunArgs),
    /// Run one experiment per horizon in `sweep.horizons` and fit the regret exponent.
    Sweep(RunArgs),
    /// Estimate the density tail or the margin of the configured environment.
    Probe(CommonArgs),
    /// Generate a lower-bound instance and check its constraints.
    HardInstance(CommonArgs),
    /// Run the digit-classification bandit on IDX files.
    Mnist(RunArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output file (a directory for `sweep`).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Worker threads for trials; 0 uses every core. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Also write every trial's trace next to the aggregate.
    #[arg(long)]
    pub per_trial: bool,
}

/// Parses the process arguments and runs the chosen command.
pub fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        CliCommand::Run(a) => cmd_run(a, Command::Run),
        CliCommand::Mnist(a) => cmd_run(a, Command::Mnist),
        CliCommand::Sweep(a) => cmd_sweep(a),
        CliCommand::Probe(a) => cmd_probe(a),
        CliCommand::HardInstance(a) => cmd_hard_instance(a),
    }
}

fn load(path: &Path, command: Command) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text, command).with_context(|| format!("in {}", path.display()))
}

/// Writes every `(path, contents)` pair or none of them.
pub fn write_all(files: &[(PathBuf, String)]) -> Result<()> {
    let mut staged = Vec::with_capacity(files.len());
    for (path, contents) in files {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)
            .with_context(|| format!("creating a temporary file in {}", dir.display()))?;
        std::io::Write::write_all(&mut tmp, contents.as_bytes())
            .with_context(|| format!("writing {}", path.display()))?;
        staged.push((tmp, path));
    }
    let mut done: Vec<&PathBuf> = Vec::new();
    for (tmp, path) in staged {
        if let Err(e) = tmp.persist(path) {
            for p in done {
                let _ = std::fs::remove_file(p);
            }
            return Err(e.error).with_context(|| format!("writing {}", path.display()));
        }
        done.push(path);
    }
    Ok(())
}

/// Aggregate regret CSV with the configuration header.
pub fn aggregate_csv(cfg: &ExperimentConfig, out: &RunOutcome) -> String {
    let mut s = cfg.header();
    if let Some(b) = out.bins {
        let _ = writeln!(s, "# best_bins: {b}");
        for (bins, m) in &out.candidates {
            let _ = writeln!(s, "# bins_{bins}_final_mean: {m}");
        }
    }
    s.push_str("t,mean_cum_regret,std_cum_regret,n_trials\n");
    let a = &out.aggregate;
    for (t, (m, sd)) in a.mean.iter().zip(&a.std).enumerate() {
        let _ = writeln!(s, "{},{},{},{}", t + 1, m, sd, a.trials);
    }
    s
}

/// Per-trial trace CSV with the configuration header.
pub fn per_trial_csv(cfg: &ExperimentConfig, out: &RunOutcome) -> String {
    let mut s = cfg.header();
    s.push_str("trial,t,action,inst_regret,cum_regret\n");
    for (i, tr) in out.traces.iter().enumerate() {
        for t in 0..tr.inst.len() {
            let _ = writeln!(s, "{},{},{},{},{}", i, t + 1, tr.actions[t], tr.inst[t], tr.cum[t]);
        }
    }
    s
}

/// `results.csv` becomes `results.trials.csv`.
pub fn per_trial_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.trials.csv"))
}

fn cmd_run(args: &RunArgs, command: Command) -> Result<()> {
    let cfg = load(&args.common.config, command)?;
    let sc = Scenario::new(&cfg)?;
    let out = sc.run(args.threads)?;
    let resolved = sc.config();
    let mut files = vec![(args.common.out.clone(), aggregate_csv(resolved, &out))];
    if args.per_trial {
        files.push((per_trial_path(&args.common.out), per_trial_csv(resolved, &out)));
    }
    write_all(&files)?;
    println!(
        "{}: final mean cumulative regret {:.4} (se {:.4}, {} trials) -> {}",
        resolved.policy.kind,
        out.aggregate.final_mean(),
        out.aggregate.final_se(),
        out.aggregate.trials,
        args.common.out.display()
    );
    Ok(())
}

fn cmd_sweep(args: &RunArgs) -> Result<()> {
    let cfg = load(&args.common.config, Command::Sweep)?;
    let dir = &args.common.out;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let k_default = cfg.policy.k.is_none();
    let mut files = Vec::new();
    let mut points = Vec::new();
    let mut rows = String::new();
    for &h in &cfg.sweep.horizons {
        let sc = Scenario::new(&cfg.with_horizon(h, k_default))?;
        let out = sc.run(args.threads)?;
        let a = &out.aggregate;
        points.push((h, a.final_mean()));
        let _ = writeln!(rows, "{},{},{},{}", h, a.final_mean(), a.final_std(), a.trials);
        let path = dir.join(format!("T{h}.csv"));
        if args.per_trial {
            files.push((per_trial_path(&path), per_trial_csv(sc.config(), &out)));
        }
        files.push((path, aggregate_csv(sc.config(), &out)));
    }
    let slope = fit_regret_exponent(&points)?;
    let mut summary = cfg.header();
    let _ = writeln!(summary, "# slope: {slope}");
    summary.push_str("T,final_mean_cum_regret,final_std_cum_regret,n_trials\n");
    summary.push_str(&rows);
    files.push((dir.join("summary.csv"), summary));
    write_all(&files)?;
    println!("fitted regret exponent {slope:.4} over {} horizons -> {}", points.len(), dir.display());
    Ok(())
}

fn cmd_probe(args: &CommonArgs) -> Result<()> {
    let cfg = load(&args.config, Command::Probe)?;
    let sc = Scenario::new(&cfg)?;
    let dist = sc.context_distribution()?;
    let mut rng = SimRng::seed_from_u64(trial_seed(cfg.run.seed, 0));
    let n = cfg.probe.samples;
    let result = match cfg.probe.kind {
        ProbeKind::Tail => {
            let grid = cfg
                .probe
                .grid
                .clone()
                .unwrap_or_else(|| default_density_grid(dist.peak_density()));
            tail_exponent_probe(&dist, &grid, n, &mut rng)?
        }
        ProbeKind::Margin => {
            let family = sc.reward_family()?;
            let grid = match (&cfg.probe.grid, family.max_gap()) {
                (Some(g), _) => g.clone(),
                (None, Some(m)) => default_density_grid(10.0 * m),
                (None, None) => default_density_grid(10.0),
            };
            margin_probe(&family, &dist, cfg.probe.action, &grid, n, &mut rng)?
        }
    };
    let resolved = sc.config();
    let mut s = resolved.header();
    match result.slope {
        Some(v) => {
            let _ = writeln!(s, "# slope: {v}");
        }
        None => s.push_str("# slope: none\n"),
    }
    s.push_str("u,estimate\n");
    for (u, p) in result.u_grid.iter().zip(&result.estimates) {
        let _ = writeln!(s, "{u},{p}");
    }
    write_all(&[(args.out.clone(), s)])?;
    match result.slope {
        Some(v) => println!("{} probe slope {v:.4} -> {}", cfg.probe.kind, args.out.display()),
        None => println!("{} probe: fewer than two nonzero estimates -> {}", cfg.probe.kind, args.out.display()),
    }
    Ok(())
}

#[derive(Serialize)]
struct HardInstanceFile<'a> {
    config: Vec<String>,
    instance: &'a HardInstance,
    constraints: Vec<ConstraintCheck>,
}

/// `instance.json` becomes `instance.constraints.csv`.
pub fn constraints_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.constraints.csv"))
}

fn cmd_hard_instance(args: &CommonArgs) -> Result<()> {
    let mut cfg = load(&args.config, Command::HardInstance)?;
    cfg.env.kind = EnvKind::Hard;
    let inst = build_hard_instance(&cfg)?;
    let resolved = cfg.resolve(None);
    let constraints = inst.constraints();
    let file = HardInstanceFile {
        config: resolved.to_lines(),
        instance: &inst,
        constraints: constraints.clone(),
    };
    let json = serde_json::to_string_pretty(&file)? + "\n";
    let mut report = resolved.header();
    report.push_str("constraint,lhs,rhs,satisfied\n");
    for c in &constraints {
        let _ = writeln!(report, "\"{}\",{},{},{}", c.name, c.lhs, c.rhs, c.satisfied);
    }
    write_all(&[(args.out.clone(), json), (constraints_path(&args.out), report)])?;
    println!(
        "{:?} instance: h = {:.6}, K = {}, B = {}, all constraints satisfied: {}",
        inst.variant,
        inst.radius,
        inst.num_margin_balls,
        inst.num_balls,
        constraints.iter().all(|c| c.satisfied)
    );
    Ok(())
}
