//! Homotopy-tracking Q-learning and MCTS on stochastic paths, with exact
//! tracking-error and dynamic-regret measurement.

mod env;
mod mcts;
mod oracle;
mod process;
mod qlearning;
mod trace;

pub use mcts::{ht_mcts_run, static_mcts_run, uct_plan, PlanResult};
pub use oracle::{Oracle, Solution};
pub use process::PathProcess;
pub use qlearning::{ht_q_learning_run, static_q_learning_run, AgentConfig, ModelSource};
pub use trace::{
    dynamic_regret, tracking_recursion_audit, RecursionFit, RecursionReport, RunTrace, StepRecord,
};
