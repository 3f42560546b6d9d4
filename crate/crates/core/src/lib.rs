//! Non-atomic routing games under growing demand.
//!
//! The crate models congestion games on directed networks, solves for user
//! equilibria and system optima with Frank-Wolfe, and measures how the price
//! of anarchy behaves as total demand grows with a fixed OD distribution.

// `!(x > 0.0)` style checks are meant to reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cost;
pub mod io;
pub mod metrics;
pub mod network;
pub mod oracle;
pub mod scaling;
pub mod solver;

pub use cost::{CostError, CostSpec, LimitCost, LimitForm, Piecewise, Term};
pub use metrics::{
    epsilon_of_profile, epsilon_under, l_upper_bound, price_of_anarchy, social_cost, MetricsError,
    PoaReport,
};
pub use network::{
    Arc, ArcId, Distribution, FlowProfile, Instance, ModelError, Network, NodeId, OdPair,
    PathFlow, Violation,
};
pub use scaling::{
    build_limit_game, decay_exponent, distribution_gap, limit_ratio, pigou_poa, run_sweep,
    saturation_point, ScalingError, SweepRow, SweepSpec,
};
pub use solver::{solve, Objective, SolveError, SolveOptions, SolveResult, StepRule};
