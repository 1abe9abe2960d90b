//! Lazy Q-learning for tabular average-reward MDPs.
//!
//! The crate provides
//! - the MDP model, Bellman operator and sampling primitives ([`mdp`]),
//! - the lazy kernel transform and its solution maps ([`lazy`]),
//! - exact oracles for hitting times, gains and stationary laws ([`oracles`]),
//! - the span seminorm and its horizon-discounted worst case ([`seminorm`]),
//! - synchronous and asynchronous learners ([`sync`], [`async_learner`]),
//! - an experiment harness with CSV output ([`harness`]).

pub mod async_learner;
pub mod error;
pub mod format;
pub mod harness;
pub mod lazy;
pub mod mdp;
pub mod oracles;
pub mod rng;
pub mod runlog;
pub mod seminorm;
pub mod sync;

pub use async_learner::{
    default_lambda_star, run_async, visit_frequency_report, AsyncConfig, AsyncDiagnostics,
    AsyncOutput, VisitCounter,
};
pub use error::{Error, Result};
pub use format::{mdp_to_text, parse_mdp, parse_qtable, read_mdp};
pub use harness::{
    build_paper_mdp, fit_loglog, random_reachable_mdp, read_csv, run_experiment, write_csv,
    Algorithm, CsvRow, ExperimentConfig, ExperimentResult, SlopeFit,
};
pub use lazy::{correct_q, lazy_transform, lift_solution, DEFAULT_ALPHA};
pub use mdp::{
    bellman, greedy, policy_matrix, sample_next, DeterministicPolicy, Mdp, QTable,
    StochasticPolicy,
};
pub use oracles::{
    check_reachability, expected_hitting_time, gain_of_policy, max_hitting_time, p_wedge,
    reachability_report, recurrent_class, solve_average_reward, stationary_distribution,
    AvgRewardSolution, ReachabilityReport,
};
pub use rng::SeededRng;
pub use runlog::{LogEntry, RunLog, RunOutput, Variant};
pub use seminorm::{
    check_contraction, check_policy_contraction, contraction_beta, sp_tilde, span,
    SeminormConfig,
};
pub use sync::{default_sync_stepsize, linf_growth_check, run_sync, SyncConfig};
