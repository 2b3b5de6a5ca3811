use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{Environment, ExperimentConfig};
use crate::experiments::{
    build_family, diagnose, hmm_sweep, ptum_sweep, sequential_sweep, uniform_queries, TaskRow,
};
use crate::output::{write_csv, write_file, Summary};
use crate::HarnessError;

/// Environment variable capping the worker pool.
pub const THREADS_VAR: &str = "SEQTRANSFER_THREADS";

#[derive(Debug, Parser)]
#[command(name = "seqtransfer", version, about = "Model identification and sequential transfer experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Overrides `output.dir` of the config.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Single-task identification sweep over seeds.
    RunPtum { config: PathBuf },
    /// Sequence of tasks with spectral re-estimation.
    RunSequential {
        config: PathBuf,
        /// Disable pre-elimination of candidate models.
        #[arg(long = "static")]
        static_transfer: bool,
    },
    /// Spectral recovery benchmark on a synthetic HMM.
    LearnHmm { config: PathBuf },
    /// Models to rule out, gaps and the worst-case query bound per target.
    Diagnose { config: PathBuf },
    /// Writes the task family as JSON.
    ExportEnv { config: PathBuf },
}

fn scenario(env: &Environment) -> &'static str {
    match env {
        Environment::TwoRooms { .. } => "two-rooms",
        Environment::MultiGoal { .. } => "multi-goal",
        Environment::Objectworld { .. } => "objectworld",
        Environment::SyntheticHmm { .. } => "synthetic-hmm",
    }
}

fn init_pool() {
    let Some(n) = std::env::var(THREADS_VAR).ok().and_then(|v| v.parse::<usize>().ok()) else { return };
    if n > 0 {
        // A pool may already exist when called twice in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_pool();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn load(cli: &Cli, path: &PathBuf) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(dir) = &cli.output_dir {
        cfg.output.dir = dir.clone();
    }
    Ok(cfg)
}

fn finish(cfg: &ExperimentConfig, suffix: &str, rows: &[impl Serialize], summary: &Summary) -> Result<(), HarnessError> {
    let csv = cfg.csv_path(suffix);
    write_csv(&csv, rows)?;
    let json = cfg.summary_path(suffix);
    write_file(&json, summary.to_json()?.as_bytes())?;
    for (name, m) in &summary.metrics {
        println!("{name}: {:.6} ± {:.6} (n={})", m.mean, m.half_width, m.n);
    }
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn execute(cli: &Cli) -> Result<(), HarnessError> {
    match &cli.command {
        Command::RunPtum { config } => {
            let cfg = load(cli, config)?;
            let family = build_family(&cfg.environment)?;
            let p = cfg.ptum_section()?;
            let rows = ptum_sweep(&cfg, &family, p.epsilon)?;
            let mut s = Summary::new("run-ptum", scenario(&cfg.environment), cfg.num_runs, cfg.level);
            s.add("tau", rows.iter().map(|r| r.tau as f64))?;
            s.add("total_queries", rows.iter().map(|r| r.total_queries as f64))?;
            s.add("eps_optimal", rows.iter().map(|r| flag(r.eps_optimal)))?;
            s.add("true_survived", rows.iter().map(|r| flag(r.true_survived)))?;
            s.add("shortfall", rows.iter().map(|r| r.shortfall))?;
            s.add("informative_fraction", rows.iter().filter_map(|r| r.informative_fraction))?;
            s.add("uniform_queries", [uniform_queries(p, &family) as f64])?;
            finish(&cfg, "ptum", &rows, &s)
        }
        Command::RunSequential { config, static_transfer } => {
            let cfg = load(cli, config)?;
            let family = build_family(&cfg.environment)?;
            let runs = sequential_sweep(&cfg, &family, *static_transfer)?;
            let rows: Vec<TaskRow> = runs.iter().flat_map(|r| r.rows()).collect();
            let command = if *static_transfer { "run-sequential --static" } else { "run-sequential" };
            let mut s = Summary::new(command, scenario(&cfg.environment), cfg.num_runs, cfg.level);
            s.add("mean_transfer_queries", runs.iter().map(|r| r.trace.mean_transfer_queries()))?;
            s.add("eps_optimal_fraction", runs.iter().map(|r| r.trace.eps_optimal_fraction()))?;
            s.add("always_covered", runs.iter().map(|r| flag(r.always_covered())))?;
            s.add("normalized_complexity", runs.iter().filter_map(|r| r.normalized_complexity()))?;
            let suffix = if *static_transfer { "static" } else { "sequential" };
            finish(&cfg, suffix, &rows, &s)
        }
        Command::LearnHmm { config } => {
            let cfg = load(cli, config)?;
            let rows = hmm_sweep(&cfg)?;
            let Environment::SyntheticHmm { triples, .. } = &cfg.environment else { unreachable!() };
            for &m in triples {
                let of_m: Vec<_> = rows.iter().filter(|r| r.triples == m).collect();
                let mut s = Summary::new("learn-hmm", "synthetic-hmm", cfg.num_runs, cfg.level);
                s.add("o_col_err_max", of_m.iter().map(|r| r.o_col_err_max))?;
                s.add("t_err_max", of_m.iter().map(|r| r.t_err_max))?;
                s.add("failed", of_m.iter().map(|r| flag(r.failed)))?;
                println!("m = {m}");
                finish(&cfg, &format!("hmm_m{m}"), &of_m, &s)?;
            }
            Ok(())
        }
        Command::Diagnose { config } => {
            let cfg = load(cli, config)?;
            let family = build_family(&cfg.environment)?;
            let rows = diagnose(&cfg, &family)?;
            let mut s = Summary::new("diagnose", scenario(&cfg.environment), cfg.num_runs, cfg.level);
            s.add("theta_eps_size", rows.iter().map(|r| r.theta_eps_size as f64))?;
            s.add("bound", rows.iter().map(|r| r.bound))?;
            s.add("gap", rows.iter().map(|r| r.gap))?;
            finish(&cfg, "diagnose", &rows, &s)
        }
        Command::ExportEnv { config } => {
            let cfg = load(cli, config)?;
            let family = build_family(&cfg.environment)?;
            let doc = serde_json::json!({
                "scenario": scenario(&cfg.environment),
                "tasks": family.mdps,
                "chain": family.chain,
            });
            let path = cfg.output.dir.join(format!("{}_env.json", cfg.output.prefix));
            let text = serde_json::to_string(&doc).map_err(|e| HarnessError::Runtime(e.to_string()))?;
            write_file(&path, text.as_bytes())?;
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}
