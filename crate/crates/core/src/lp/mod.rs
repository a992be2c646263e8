//! Linear and linear-fractional programming.

mod average;
mod ratio;
mod simplex;

pub use average::{decode_avg_policy, decode_avg_policy_with, solve_avg_reward_lp, AvgLpSolution};
pub(crate) use ratio::solve_ratio_lfp_unchecked;
pub use ratio::{
    decode_ratio_policy, decode_ratio_policy_with, policy_efficiency, solve_ratio_lfp, LfpSolution,
    SUPPORT_TOL,
};
pub use simplex::{solve_lp, LpProblem, LpSolution};
