use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::ValueEnum;
use htmdp::agents::{
    dynamic_regret, ht_mcts_run, ht_q_learning_run, static_mcts_run, static_q_learning_run,
    AgentConfig, RunTrace, StepRecord,
};
use htmdp::geometry::PathGeometry;
use htmdp::path::MdpPath;
use htmdp::scheduler::{chatter_stats, SchedulerConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Format};
use crate::output::{ensure_dir, write_json, write_table, Row};
use crate::stats::{median, Spread};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    HtRl,
    StaticRl,
    HtMcts,
    StaticMcts,
    /// All four, with static MCTS matched to each seed's HT-MCTS budget and mean depth.
    Compare,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::HtRl => "ht-rl",
            Mode::StaticRl => "static-rl",
            Mode::HtMcts => "ht-mcts",
            Mode::StaticMcts => "static-mcts",
            Mode::Compare => "compare",
        }
    }
}

impl Row for StepRecord {
    const HEADER: &'static [&'static str] = &[
        "step",
        "tau",
        "e_t",
        "regret_inc",
        "geo_load",
        "eta",
        "nu",
        "lambda",
        "depth",
        "budget",
        "return",
    ];
}

pub fn run_one(
    mode: Mode,
    path: &MdpPath,
    geo: Option<&PathGeometry>,
    sched: &SchedulerConfig,
    agent: &AgentConfig,
    seed: u64,
) -> Result<RunTrace> {
    let t = match mode {
        Mode::HtRl => ht_q_learning_run(path, geo, sched, agent, seed)?,
        Mode::StaticRl => static_q_learning_run(path, geo, sched, agent, seed)?,
        Mode::HtMcts => ht_mcts_run(path, geo, sched, agent, seed)?,
        Mode::StaticMcts => static_mcts_run(path, geo, sched, agent, seed)?,
        Mode::Compare => anyhow::bail!("compare is not a single run mode"),
    };
    Ok(t)
}

/// Static MCTS settings matched to an HT-MCTS trace: same total simulations, rounded mean depth.
pub fn matched_static_agent(agent: &AgentConfig, ht: &RunTrace) -> AgentConfig {
    let n = ht.records.len().max(1) as f64;
    let depth = (ht.records.iter().map(|r| r.depth as f64).sum::<f64>() / n)
        .round()
        .max(1.0) as usize;
    AgentConfig {
        static_total_budget: Some(ht.total_budget()),
        static_depth: Some(depth),
        ..agent.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatterSummary {
    pub eps: f64,
    /// Median total variation of `(η, ν, λ, D, B)`.
    pub variation_median: [f64; 5],
    pub large_change_fraction: Spread,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub seeds: Vec<u64>,
    pub steps: u64,
    pub cumulative_regret: Spread,
    /// Area under the tracking-error curve, `Σ_t e_t`.
    pub auc: Spread,
    pub final_return: Spread,
    pub final_tracking_error: Spread,
    pub chatter: ChatterSummary,
    pub total_budget: Vec<u64>,
    pub expansions: Vec<u64>,
    pub scheduler_updates: Vec<usize>,
}

pub fn summarize(
    mode: Mode,
    seeds: &[u64],
    traces: &[RunTrace],
    chatter_eps: f64,
) -> Result<RunSummary> {
    let last = |t: &RunTrace, f: fn(&StepRecord) -> f64| t.records.last().map_or(f64::NAN, f);
    let mut variations = [const { Vec::new() }; 5];
    let mut fractions = Vec::new();
    for t in traces {
        let c = chatter_stats(&t.hyper_trace(), chatter_eps)?;
        for (v, x) in variations.iter_mut().zip(c.variation) {
            v.push(x);
        }
        fractions.push(c.large_change_fraction);
    }
    Ok(RunSummary {
        mode,
        seeds: seeds.to_vec(),
        steps: traces.first().map_or(0, |t| t.records.len() as u64),
        cumulative_regret: Spread::of(traces.iter().map(dynamic_regret).collect()),
        auc: Spread::of(
            traces
                .iter()
                .map(|t| t.records.iter().map(|r| r.e_t).sum())
                .collect(),
        ),
        final_return: Spread::of(
            traces
                .iter()
                .map(|t| last(t, |r| r.episode_return))
                .collect(),
        ),
        final_tracking_error: Spread::of(traces.iter().map(|t| last(t, |r| r.e_t)).collect()),
        chatter: ChatterSummary {
            eps: chatter_eps,
            variation_median: variations.map(|v| median(&v)),
            large_change_fraction: Spread::of(fractions),
        },
        total_budget: traces.iter().map(RunTrace::total_budget).collect(),
        expansions: traces.iter().map(|t| t.expansions).collect(),
        scheduler_updates: traces.iter().map(|t| t.scheduler_updates).collect(),
    })
}

/// Per-seed cumulative dynamic regret of the four modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub seed: u64,
    pub ht_rl: f64,
    pub static_rl: f64,
    pub ht_mcts: f64,
    pub static_mcts: f64,
    pub ht_mcts_budget: u64,
    pub static_mcts_budget: u64,
}

impl Row for ComparisonRow {
    const HEADER: &'static [&'static str] = &[
        "seed",
        "ht_rl",
        "static_rl",
        "ht_mcts",
        "static_mcts",
        "ht_mcts_budget",
        "static_mcts_budget",
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub seeds: Vec<u64>,
    pub median_ht_rl: f64,
    pub median_static_rl: f64,
    pub median_ht_mcts: f64,
    pub median_static_mcts: f64,
    pub rl_ht_le_static: bool,
    pub mcts_ht_le_static: bool,
    pub mcts_budgets_equal: bool,
}

pub struct RunReport {
    pub summaries: Vec<RunSummary>,
    pub traces: Vec<(Mode, Vec<RunTrace>)>,
    pub comparison: Option<ComparisonSummary>,
    pub files: Vec<PathBuf>,
}

fn chatter_eps(cfg: &ExperimentConfig) -> f64 {
    cfg.stability.as_ref().map_or(0.01, |s| s.eps)
}

fn write_traces(
    out: &Path,
    mode: Mode,
    seeds: &[u64],
    traces: &[RunTrace],
    formats: &[Format],
) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for (seed, t) in seeds.iter().zip(traces) {
        files.extend(write_table(
            out,
            &format!("trace_{}_seed{seed}", mode.name()),
            &t.records,
            formats,
        )?);
    }
    Ok(files)
}

/// Runs `mode` for seeds `0..n_seeds` in parallel and writes traces and summaries.
pub fn run(
    cfg: &ExperimentConfig,
    mode: Mode,
    n_seeds: u64,
    out: &Path,
    formats: &[Format],
) -> Result<RunReport> {
    let path = cfg.build_path()?;
    let geo = PathGeometry::analyze(&path, &cfg.geometry)?;
    let seeds: Vec<u64> = (0..n_seeds).collect();
    let (sched, agent) = (&cfg.scheduler, &cfg.agent);
    ensure_dir(out)?;
    let mut report = RunReport {
        summaries: vec![],
        traces: vec![],
        comparison: None,
        files: vec![],
    };

    let modes: Vec<(Mode, Vec<RunTrace>)> = if mode == Mode::Compare {
        let per_seed: Result<Vec<[RunTrace; 4]>> = seeds
            .par_iter()
            .map(|&s| {
                let ht_mcts = run_one(Mode::HtMcts, &path, Some(&geo), sched, agent, s)?;
                let matched = matched_static_agent(agent, &ht_mcts);
                Ok([
                    run_one(Mode::HtRl, &path, Some(&geo), sched, agent, s)?,
                    run_one(Mode::StaticRl, &path, Some(&geo), sched, agent, s)?,
                    run_one(Mode::StaticMcts, &path, Some(&geo), sched, &matched, s)?,
                    ht_mcts,
                ])
            })
            .collect();
        let mut cols: [Vec<RunTrace>; 4] = Default::default();
        for quad in per_seed? {
            for (c, t) in cols.iter_mut().zip(quad) {
                c.push(t);
            }
        }
        let [ht_rl, static_rl, static_mcts, ht_mcts] = cols;
        let rows: Vec<ComparisonRow> = seeds
            .iter()
            .enumerate()
            .map(|(k, &seed)| ComparisonRow {
                seed,
                ht_rl: dynamic_regret(&ht_rl[k]),
                static_rl: dynamic_regret(&static_rl[k]),
                ht_mcts: dynamic_regret(&ht_mcts[k]),
                static_mcts: dynamic_regret(&static_mcts[k]),
                ht_mcts_budget: ht_mcts[k].total_budget(),
                static_mcts_budget: static_mcts[k].total_budget(),
            })
            .collect();
        let col = |f: fn(&ComparisonRow) -> f64| median(&rows.iter().map(f).collect::<Vec<_>>());
        let summary = ComparisonSummary {
            seeds: seeds.clone(),
            median_ht_rl: col(|r| r.ht_rl),
            median_static_rl: col(|r| r.static_rl),
            median_ht_mcts: col(|r| r.ht_mcts),
            median_static_mcts: col(|r| r.static_mcts),
            rl_ht_le_static: col(|r| r.ht_rl) <= col(|r| r.static_rl),
            mcts_ht_le_static: col(|r| r.ht_mcts) <= col(|r| r.static_mcts),
            mcts_budgets_equal: rows
                .iter()
                .all(|r| r.ht_mcts_budget == r.static_mcts_budget),
        };
        report
            .files
            .extend(write_table(out, "comparison", &rows, formats)?);
        let p = out.join("comparison_summary.json");
        write_json(&p, &summary)?;
        report.files.push(p);
        report.comparison = Some(summary);
        vec![
            (Mode::HtRl, ht_rl),
            (Mode::StaticRl, static_rl),
            (Mode::HtMcts, ht_mcts),
            (Mode::StaticMcts, static_mcts),
        ]
    } else {
        let traces: Result<Vec<RunTrace>> = seeds
            .par_iter()
            .map(|&s| run_one(mode, &path, Some(&geo), sched, agent, s))
            .collect();
        vec![(mode, traces?)]
    };

    for (m, traces) in modes {
        report
            .files
            .extend(write_traces(out, m, &seeds, &traces, formats)?);
        let summary = summarize(m, &seeds, &traces, chatter_eps(cfg))?;
        let p = out.join(format!("summary_{}.json", m.name()));
        write_json(&p, &summary)?;
        report.files.push(p);
        report.summaries.push(summary);
        report.traces.push((m, traces));
    }
    Ok(report)
}
