//! Social cost, price of anarchy and approximate-equilibrium measurements.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use thiserror::Error;

use crate::cost::CostSpec;
use crate::network::{FlowProfile, Instance};
use crate::oracle::{self, OracleError};
use crate::solver::{self, arc_costs, shortest_path, Objective, SolveError, SolveOptions, SolveResult};

/// Default residual-flow floor as a fraction of total demand.
pub const DEFAULT_FLOW_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("arc {0} does not carry a BPR cost")]
    NonBpr(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoaReport {
    pub c_ne: f64,
    pub c_so: f64,
    pub poa: f64,
    pub ne_gap: f64,
    pub so_gap: f64,
}

/// `sum_a f_a tau_a(f_a)`.
pub fn social_cost(instance: &Instance, profile: &FlowProfile) -> Result<f64, SolveError> {
    solver::social_cost_of_flows(instance, &profile.link_flows)
}

/// Equilibrium and system-optimum solves with identical tolerances.
pub fn solve_pair(
    instance: &Instance,
    options: &SolveOptions,
) -> Result<(SolveResult, SolveResult), SolveError> {
    let ne = solver::solve(instance, &options.clone().with_objective(Objective::UserEquilibrium))?;
    let so = solver::solve(instance, &options.clone().with_objective(Objective::SystemOptimum))?;
    Ok((ne, so))
}

pub fn report_from(ne: &SolveResult, so: &SolveResult) -> PoaReport {
    PoaReport {
        c_ne: ne.social_cost,
        c_so: so.social_cost,
        poa: ne.social_cost / so.social_cost,
        ne_gap: ne.relative_gap,
        so_gap: so.relative_gap,
    }
}

/// Ratio of equilibrium cost to optimal cost. `options.objective` is ignored.
pub fn price_of_anarchy(instance: &Instance, options: &SolveOptions) -> Result<PoaReport, SolveError> {
    let (ne, so) = solve_pair(instance, options)?;
    Ok(report_from(&ne, &so))
}

/// Largest relative excess `c_s(f) / pi_k(f) - 1` of a used path over the
/// true shortest path of its OD pair, with path prices from `objective`
/// (`UserEquilibrium` gives travel times, `SystemOptimum` marginal costs).
///
/// Paths carrying at most `flow_floor` are ignored; `None` means
/// `1e-6 * T`.
pub fn epsilon_under(
    instance: &Instance,
    profile: &FlowProfile,
    objective: Objective,
    flow_floor: Option<f64>,
) -> Result<f64, SolveError> {
    let floor = flow_floor.unwrap_or(DEFAULT_FLOW_FLOOR * instance.total_demand());
    let costs = arc_costs(instance, &profile.link_flows, objective)?;
    let mut trees = BTreeMap::new();
    let mut eps: f64 = 0.0;
    for p in profile.paths.iter().filter(|p| p.flow > floor) {
        let od = instance.od_pairs[p.od];
        let tree = match trees.entry(od.origin) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => e.insert(shortest_path(&instance.network, &costs, od.origin)?),
        };
        let pi = tree.dist[od.destination];
        let path_cost: f64 = p.arcs.iter().map(|&a| costs[a]).sum();
        let excess = path_cost - pi;
        let e = if pi > 0.0 {
            excess / pi
        } else if excess > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        eps = eps.max(e);
    }
    Ok(eps)
}

/// Epsilon of an approximate Nash equilibrium under travel times.
pub fn epsilon_of_profile(
    instance: &Instance,
    profile: &FlowProfile,
    flow_floor: Option<f64>,
) -> Result<f64, SolveError> {
    epsilon_under(instance, profile, Objective::UserEquilibrium, flow_floor)
}

/// `sum_s sum_{a in s} gamma_a` over every simple path of an all-BPR
/// instance, an upper bound on the limit-game cost of any distribution.
pub fn l_upper_bound(instance: &Instance, max_paths: usize) -> Result<f64, MetricsError> {
    let gammas = instance
        .network
        .arcs
        .iter()
        .map(|a| match a.cost {
            CostSpec::Bpr {
                t0,
                capacity,
                alpha,
                beta,
            } => Ok(alpha * t0 / capacity.powf(beta)),
            _ => Err(MetricsError::NonBpr(a.id)),
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let paths = oracle::enumerate_paths(instance, max_paths)?;
    Ok(paths
        .per_od
        .iter()
        .flatten()
        .map(|p| p.iter().map(|&a| gammas[a]).sum::<f64>())
        .sum())
}
