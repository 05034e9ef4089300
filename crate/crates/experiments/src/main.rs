use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use htmdp_experiments::commands::{certify, gen_path, run, scheduler_stability, tubes, Mode};
use htmdp_experiments::{ExperimentConfig, Format};

#[derive(Parser)]
#[command(
    name = "htmdp",
    version,
    about = "Geometry certificates and homotopy-tracking experiments on drifting MDPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides [output] directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Table format; overrides [output] formats.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand)]
enum Command {
    /// Audit the path-value bound on every grid pair.
    Certify(Common),
    /// Feasible tubes, coverage, and gap-safe regions over the [tubes] sweep.
    Tubes(Common),
    /// Run learners or planners over seeds.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Number of seeds; overrides [agent] seeds.
        #[arg(long)]
        seeds: Option<u64>,
    },
    /// Chattering statistics over the [stability] (H, delta_hys) sweep.
    SchedulerStability {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seeds: Option<u64>,
    },
    /// Dump M(tau) on the [snapshot] grid.
    GenPath(Common),
}

struct Resolved {
    cfg: ExperimentConfig,
    out: PathBuf,
    formats: Vec<Format>,
}

fn resolve(c: &Common) -> Result<Resolved> {
    let cfg = ExperimentConfig::load(&c.config)?;
    let out = c
        .out
        .clone()
        .unwrap_or_else(|| cfg.output.directory.clone());
    let formats = match c.format {
        Some(f) => vec![f],
        None => cfg.output.formats.clone(),
    };
    Ok(Resolved { cfg, out, formats })
}

fn init_pool() -> Result<()> {
    if let Ok(v) = std::env::var("HTMDP_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("HTMDP_THREADS must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()?;
    }
    Ok(())
}

/// Returns the number of bound or coverage violations.
fn execute(cli: Cli) -> Result<usize> {
    init_pool()?;
    match cli.command {
        Command::Certify(c) => {
            let r = resolve(&c)?;
            let rep = certify(&r.cfg, &r.out, &r.formats)?;
            let s = &rep.summary;
            println!(
                "certify: {} pairs, {} violations, median ratio on regular pairs {:.3}, PL {:.4} Curv {:.4} Phi {:.4}",
                s.pairs, s.violations, s.median_ratio_regular, s.geometry.pl, s.geometry.curv, s.geometry.phi
            );
            Ok(s.violations)
        }
        Command::Tubes(c) => {
            let r = resolve(&c)?;
            let rep = tubes(&r.cfg, &r.out, &r.formats)?;
            let s = &rep.summary;
            println!(
                "tubes: {} rows, {} non-regular, {} coverage violations, {} strictly tighter second-order tubes",
                s.rows, s.errors, s.coverage_violations, s.strictly_tighter
            );
            Ok(s.coverage_violations)
        }
        Command::Run {
            common,
            mode,
            seeds,
        } => {
            let r = resolve(&common)?;
            let n = seeds.unwrap_or(r.cfg.agent.seeds);
            let rep = run(&r.cfg, mode, n, &r.out, &r.formats)?;
            for s in &rep.summaries {
                println!(
                    "{}: median regret {:.3} (IQR {:.3}), median final error {:.4}",
                    s.mode.name(),
                    s.cumulative_regret.median,
                    s.cumulative_regret.iqr,
                    s.final_tracking_error.median
                );
            }
            if let Some(c) = &rep.comparison {
                println!(
                    "HT-RL <= static: {}; HT-MCTS <= static: {}",
                    c.rl_ht_le_static, c.mcts_ht_le_static
                );
            }
            Ok(0)
        }
        Command::SchedulerStability { common, seeds } => {
            let r = resolve(&common)?;
            let n = seeds.unwrap_or(r.cfg.agent.seeds);
            let rep = scheduler_stability(&r.cfg, n, &r.out, &r.formats)?;
            let s = &rep.summary;
            println!(
                "scheduler-stability: {} runs, {} violations, monotone in H {}, in delta_hys {}",
                rep.rows.len(),
                s.violations,
                s.monotone_along_h,
                s.monotone_along_delta
            );
            Ok(s.violations)
        }
        Command::GenPath(c) => {
            let r = resolve(&c)?;
            let rep = gen_path(&r.cfg, &r.out, &r.formats)?;
            println!("gen-path: {} transitions written", rep.rows.len());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(v) => {
            eprintln!("error: {v} violation(s) found");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
