//! Brute-force and closed-form reference solvers for tiny instances.
//!
//! Nothing here shares code with the Frank-Wolfe solver beyond cost
//! evaluation, so agreement between the two is meaningful.

use thiserror::Error;

use crate::cost::{CostError, CostSpec};
use crate::network::{ArcId, Instance, NodeId};
use crate::solver::Objective;

/// Largest total path count the grid search accepts.
pub const MAX_ORACLE_PATHS: usize = 6;

const REFINEMENT_HALVINGS: usize = 40;
const MAX_SWEEPS_PER_STEP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("OD pair {od} has more than {limit} simple paths")]
    PathOverflow { od: usize, limit: usize },
    #[error("OD pair {0} has no path")]
    NoPath(usize),
    #[error("{count} paths exceed the brute-force limit of {limit}")]
    TooManyPaths { count: usize, limit: usize },
    #[error("path set covers {got} OD pairs, instance has {expected}")]
    PathSetMismatch { expected: usize, got: usize },
    #[error("grid needs at least 2 points per dimension")]
    GridTooSmall,
    #[error(transparent)]
    Cost(#[from] CostError),
}

/// Simple paths per OD pair, as arc-id sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub per_od: Vec<Vec<Vec<ArcId>>>,
}

impl PathSet {
    pub fn total(&self) -> usize {
        self.per_od.iter().map(Vec::len).sum()
    }
}

/// Depth-first enumeration of simple paths, branching on ascending arc ids.
pub fn enumerate_paths(instance: &Instance, max_paths: usize) -> Result<PathSet, OracleError> {
    let net = &instance.network;
    let out = net.out_arcs();
    let mut per_od = Vec::with_capacity(instance.od_pairs.len());
    for (k, od) in instance.od_pairs.iter().enumerate() {
        let mut found = Vec::new();
        let mut on_path = vec![false; net.node_count()];
        let mut stack = Vec::new();
        dfs(
            instance,
            &out,
            od.origin,
            od.destination,
            &mut on_path,
            &mut stack,
            &mut found,
            max_paths,
        )
        .map_err(|_| OracleError::PathOverflow { od: k, limit: max_paths })?;
        if found.is_empty() {
            return Err(OracleError::NoPath(k));
        }
        per_od.push(found);
    }
    Ok(PathSet { per_od })
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    instance: &Instance,
    out: &[Vec<ArcId>],
    v: NodeId,
    target: NodeId,
    on_path: &mut [bool],
    stack: &mut Vec<ArcId>,
    found: &mut Vec<Vec<ArcId>>,
    limit: usize,
) -> Result<(), ()> {
    if v == target {
        if found.len() >= limit {
            return Err(());
        }
        found.push(stack.clone());
        return Ok(());
    }
    on_path[v] = true;
    for &a in &out[v] {
        let h = instance.network.arcs[a].head;
        if on_path[h] {
            continue;
        }
        stack.push(a);
        let r = dfs(instance, out, h, target, on_path, stack, found, limit);
        stack.pop();
        r?;
    }
    on_path[v] = false;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    /// Flow per path, parallel to the input path set.
    pub path_flows: Vec<Vec<f64>>,
    pub link_flows: Vec<f64>,
    pub value: f64,
    pub social_cost: f64,
}

fn link_flows_of(instance: &Instance, paths: &PathSet, flows: &[Vec<f64>]) -> Vec<f64> {
    let mut f = vec![0.0; instance.network.arc_count()];
    for (ps, fs) in paths.per_od.iter().zip(flows) {
        for (p, &x) in ps.iter().zip(fs) {
            for &a in p {
                f[a] += x;
            }
        }
    }
    f
}

fn objective_value(
    instance: &Instance,
    link_flows: &[f64],
    objective: Objective,
) -> Result<f64, CostError> {
    let mut total = 0.0;
    for (arc, &x) in instance.network.arcs.iter().zip(link_flows) {
        let x = x.max(0.0);
        total += match objective {
            Objective::UserEquilibrium => arc.cost.integral(x)?,
            Objective::SystemOptimum => x * arc.cost.eval(x)?,
        };
    }
    Ok(total)
}

/// All compositions of `total` into `parts` nonnegative integers.
fn compositions(parts: usize, total: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(parts - 1, total - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Grid search over the product of per-OD simplices followed by pairwise
/// pattern refinement with 40 step halvings.
pub fn brute_force(
    instance: &Instance,
    paths: &PathSet,
    objective: Objective,
    grid: usize,
) -> Result<BruteForce, OracleError> {
    let k = instance.od_pairs.len();
    if paths.per_od.len() != k {
        return Err(OracleError::PathSetMismatch {
            expected: k,
            got: paths.per_od.len(),
        });
    }
    if paths.total() > MAX_ORACLE_PATHS {
        return Err(OracleError::TooManyPaths {
            count: paths.total(),
            limit: MAX_ORACLE_PATHS,
        });
    }
    if grid < 2 {
        return Err(OracleError::GridTooSmall);
    }
    if let Some(od) = paths.per_od.iter().position(Vec::is_empty) {
        return Err(OracleError::NoPath(od));
    }
    let steps = grid - 1;
    let demands: Vec<f64> = instance.od_pairs.iter().map(|od| od.demand.max(0.0)).collect();
    let per_od_points: Vec<Vec<Vec<f64>>> = paths
        .per_od
        .iter()
        .zip(&demands)
        .map(|(ps, &d)| {
            compositions(ps.len(), steps)
                .into_iter()
                .map(|c| c.into_iter().map(|i| d * i as f64 / steps as f64).collect())
                .collect()
        })
        .collect();

    let eval = |flows: &[Vec<f64>]| -> Result<f64, CostError> {
        objective_value(instance, &link_flows_of(instance, paths, flows), objective)
    };

    // odometer over the product of per-OD grids
    let mut idx = vec![0usize; k];
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    loop {
        let flows: Vec<Vec<f64>> = idx
            .iter()
            .enumerate()
            .map(|(j, &i)| per_od_points[j][i].clone())
            .collect();
        let v = eval(&flows)?;
        if best.as_ref().is_none_or(|(b, _)| v < *b) {
            best = Some((v, flows));
        }
        let mut j = 0;
        while j < k {
            idx[j] += 1;
            if idx[j] < per_od_points[j].len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == k {
            break;
        }
    }
    let (mut value, mut flows) = best.expect("grid is non-empty");

    let mut h = 1.0 / steps as f64;
    for _ in 0..=REFINEMENT_HALVINGS {
        for _ in 0..MAX_SWEEPS_PER_STEP {
            let mut improved = false;
            for od in 0..k {
                let n = flows[od].len();
                let delta = h * demands[od];
                for from in 0..n {
                    for to in 0..n {
                        if from == to {
                            continue;
                        }
                        let shift = delta.min(flows[od][from]);
                        if shift <= 0.0 {
                            continue;
                        }
                        let mut trial = flows.clone();
                        trial[od][from] -= shift;
                        trial[od][to] += shift;
                        let v = eval(&trial)?;
                        if v < value {
                            value = v;
                            flows = trial;
                            improved = true;
                        }
                    }
                }
            }
            if !improved {
                break;
            }
        }
        h *= 0.5;
    }

    let link_flows = link_flows_of(instance, paths, &flows);
    let social_cost = objective_value(instance, &link_flows, Objective::SystemOptimum)?;
    Ok(BruteForce {
        path_flows: flows,
        link_flows,
        value,
        social_cost,
    })
}

/// Split of demand `t` over two parallel arcs. Equalizes travel times (UE)
/// or marginal costs (SO) by bisection; when the prices tie on an interval
/// the midpoint of that interval is returned. Yields `(x_a, x_b, social cost)`.
pub fn two_link_analytic(
    spec_a: &CostSpec,
    spec_b: &CostSpec,
    t: f64,
    objective: Objective,
) -> Result<(f64, f64, f64), OracleError> {
    let price = |spec: &CostSpec, x: f64| -> Result<f64, CostError> {
        match objective {
            Objective::UserEquilibrium => spec.eval(x),
            Objective::SystemOptimum => spec.marginal_cost(x),
        }
    };
    // non-decreasing in x
    let g = |x: f64| -> Result<f64, CostError> {
        Ok(price(spec_a, x)? - price(spec_b, (t - x).max(0.0))?)
    };
    // inf { x : g(x) >= 0 }
    let lower = if g(0.0)? >= 0.0 {
        0.0
    } else if g(t)? < 0.0 {
        t
    } else {
        bisect(0.0, t, |x| Ok(g(x)? >= 0.0))?
    };
    // sup { x : g(x) <= 0 }
    let upper = if g(t)? <= 0.0 {
        t
    } else if g(0.0)? > 0.0 {
        0.0
    } else {
        bisect(0.0, t, |x| Ok(g(x)? > 0.0))?
    };
    let x = 0.5 * (lower + upper);
    let y = t - x;
    let cost = x * spec_a.eval(x)? + y * spec_b.eval(y)?;
    Ok((x, y, cost))
}

/// Boundary of a monotone predicate on `[lo, hi]` (false below, true above).
fn bisect(
    mut lo: f64,
    mut hi: f64,
    above: impl Fn(f64) -> Result<bool, CostError>,
) -> Result<f64, CostError> {
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if above(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
