//! Frank-Wolfe assignment for user equilibrium and system optimum.
//!
//! Both programs share the same machinery. The user-equilibrium program
//! minimizes the Beckmann objective `sum_a int_0^{f_a} tau_a` and prices
//! subproblems with `tau_a(f_a)`. The system-optimum program minimizes
//! `sum_a f_a tau_a(f_a)` and prices subproblems with marginal costs
//! `tau_a + f_a tau_a'`. Each iteration loads every OD pair on a shortest
//! path (all-or-nothing), measures the relative gap and takes an exact line
//! search step.
//!
//! The default step rule adds away steps: the iterate is tracked as a convex
//! combination of all-or-nothing loadings, and when shifting weight off the
//! most expensive loading promises more descent than moving towards the new
//! one, that step is taken instead. This keeps every iterate a convex
//! combination of shortest-path loadings while converging linearly on the
//! desk fixtures, where plain Frank-Wolfe zig-zags.

mod line_search;
mod shortest_path;

use std::cell::Cell;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::CostError;
use crate::network::{ArcId, FlowProfile, Instance, ModelError, NodeId, PathFlow};

pub use line_search::line_search;
pub use shortest_path::{shortest_path, ShortestPathTree};

use shortest_path::{check_costs, dijkstra};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("arc {arc} has invalid cost {cost} (must be finite and >= 0)")]
    InvalidArcCost { arc: ArcId, cost: f64 },
    #[error("expected {expected} arc costs, got {got}")]
    CostLength { expected: usize, got: usize },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("OD pair {0} has positive demand but no path")]
    Disconnected(usize),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// User (Wardrop) equilibrium.
    #[serde(rename = "ue")]
    UserEquilibrium,
    /// System optimum.
    #[serde(rename = "so")]
    SystemOptimum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Convex combination towards the all-or-nothing loading only.
    Classic,
    /// Frank-Wolfe with away steps.
    AwayStep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub objective: Objective,
    pub rel_gap_tol: f64,
    pub max_iters: usize,
    /// Upper bound on the line-search tolerance; the solver tightens it to
    /// `rel_gap_tol / 100` when that is smaller.
    pub line_search_tol: f64,
    pub record_paths: bool,
    pub step_rule: StepRule,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            objective: Objective::UserEquilibrium,
            rel_gap_tol: 1e-4,
            max_iters: 5000,
            line_search_tol: 1e-10,
            record_paths: true,
            step_rule: StepRule::AwayStep,
        }
    }
}

impl SolveOptions {
    pub fn new(objective: Objective) -> Self {
        Self {
            objective,
            ..Self::default()
        }
    }

    pub fn with_gap(mut self, rel_gap_tol: f64) -> Self {
        self.rel_gap_tol = rel_gap_tol;
        self
    }

    pub fn with_objective(mut self, objective: Objective) -> Self {
        self.objective = objective;
        self
    }

    /// The tolerance setting used by the original field experiment: stop once
    /// the objective is within 1% of optimal.
    pub fn one_percent(objective: Objective) -> Self {
        Self::new(objective).with_gap(1e-2)
    }

    fn check(&self) -> Result<(), SolveError> {
        if !(self.rel_gap_tol > 0.0) {
            return Err(SolveError::InvalidOptions("rel_gap_tol must be > 0".into()));
        }
        if !(self.line_search_tol > 0.0) {
            return Err(SolveError::InvalidOptions("line_search_tol must be > 0".into()));
        }
        if self.max_iters == 0 {
            return Err(SolveError::InvalidOptions("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub objective_value: f64,
    pub relative_gap: f64,
    pub step: f64,
    pub away: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub profile: FlowProfile,
    pub objective_value: f64,
    pub social_cost: f64,
    pub relative_gap: f64,
    pub iterations: usize,
    /// `false` when the run hit `max_iters` or stalled at float resolution.
    pub converged: bool,
    /// Shortest-path cost per OD at termination under the subproblem prices.
    pub od_min_costs: Vec<f64>,
    pub trace: Vec<TraceEntry>,
}

/// Subproblem arc prices at link flows `flows`.
pub fn arc_costs(
    instance: &Instance,
    flows: &[f64],
    objective: Objective,
) -> Result<Vec<f64>, SolveError> {
    instance
        .network
        .arcs
        .iter()
        .zip(flows)
        .map(|(a, &x)| {
            let x = x.max(0.0);
            Ok(match objective {
                Objective::UserEquilibrium => a.cost.eval(x)?,
                Objective::SystemOptimum => a.cost.marginal_cost(x)?,
            })
        })
        .collect()
}

/// `sum_a int_0^{f_a} tau_a`.
pub fn beckmann_value(instance: &Instance, profile: &FlowProfile) -> Result<f64, SolveError> {
    beckmann_of_flows(instance, &profile.link_flows)
}

fn beckmann_of_flows(instance: &Instance, flows: &[f64]) -> Result<f64, SolveError> {
    let mut total = 0.0;
    for (a, &x) in instance.network.arcs.iter().zip(flows) {
        total += a.cost.integral(x.max(0.0))?;
    }
    Ok(total)
}

pub(crate) fn social_cost_of_flows(instance: &Instance, flows: &[f64]) -> Result<f64, SolveError> {
    let mut total = 0.0;
    for (a, &x) in instance.network.arcs.iter().zip(flows) {
        let x = x.max(0.0);
        if x > 0.0 {
            total += x * a.cost.eval(x)?;
        }
    }
    Ok(total)
}

fn objective_of_flows(
    instance: &Instance,
    flows: &[f64],
    objective: Objective,
) -> Result<f64, SolveError> {
    match objective {
        Objective::UserEquilibrium => beckmann_of_flows(instance, flows),
        Objective::SystemOptimum => social_cost_of_flows(instance, flows),
    }
}

/// Result of one all-or-nothing loading.
#[derive(Debug, Clone, PartialEq)]
pub struct AllOrNothing {
    pub link_flows: Vec<f64>,
    /// `(od index, path)` for every OD with positive demand.
    pub used_paths: Vec<(usize, Vec<ArcId>)>,
    /// Shortest-path cost per OD (infinite when unreachable).
    pub od_costs: Vec<f64>,
}

/// Shortest-path trees per distinct origin, computed in ascending origin
/// order.
fn od_shortest_paths(
    instance: &Instance,
    out_arcs: &[Vec<ArcId>],
    costs: &[f64],
) -> Vec<(f64, Option<Vec<ArcId>>)> {
    let mut trees: HashMap<NodeId, ShortestPathTree> = HashMap::new();
    let mut origins: Vec<NodeId> = instance.od_pairs.iter().map(|od| od.origin).collect();
    origins.sort_unstable();
    origins.dedup();
    for o in origins {
        trees.insert(o, dijkstra(&instance.network, out_arcs, costs, o));
    }
    instance
        .od_pairs
        .iter()
        .map(|od| {
            let tree = &trees[&od.origin];
            let path = if od.demand > 0.0 {
                tree.path_to(&instance.network, od.destination)
            } else {
                None
            };
            (tree.dist[od.destination], path)
        })
        .collect()
}

fn load(
    instance: &Instance,
    out_arcs: &[Vec<ArcId>],
    costs: &[f64],
) -> Result<AllOrNothing, SolveError> {
    let sp = od_shortest_paths(instance, out_arcs, costs);
    let mut link_flows = vec![0.0; instance.network.arc_count()];
    let mut used_paths = Vec::new();
    let mut od_costs = Vec::with_capacity(sp.len());
    for (k, (od, (dist, path))) in instance.od_pairs.iter().zip(sp).enumerate() {
        od_costs.push(dist);
        if od.demand > 0.0 {
            let path = path.ok_or(SolveError::Disconnected(k))?;
            for &a in &path {
                link_flows[a] += od.demand;
            }
            used_paths.push((k, path));
        }
    }
    Ok(AllOrNothing {
        link_flows,
        used_paths,
        od_costs,
    })
}

/// Loads every OD pair's demand on one shortest path under `arc_costs`.
pub fn all_or_nothing(instance: &Instance, arc_costs: &[f64]) -> Result<AllOrNothing, SolveError> {
    if arc_costs.len() != instance.network.arc_count() {
        return Err(SolveError::CostLength {
            expected: instance.network.arc_count(),
            got: arc_costs.len(),
        });
    }
    check_costs(arc_costs)?;
    load(instance, &instance.network.out_arcs(), arc_costs)
}

fn gap_from_parts(priced_flow: f64, shortest: f64) -> f64 {
    if shortest == 0.0 {
        if priced_flow > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        (priced_flow - shortest) / shortest.abs()
    }
}

/// `(sum_a c_a f_a - sum_k d_k pi_k) / sum_k d_k pi_k` under the subproblem
/// prices of `objective`.
pub fn relative_gap(
    instance: &Instance,
    profile: &FlowProfile,
    objective: Objective,
) -> Result<f64, SolveError> {
    let costs = arc_costs(instance, &profile.link_flows, objective)?;
    check_costs(&costs)?;
    let aon = load(instance, &instance.network.out_arcs(), &costs)?;
    let priced: f64 = costs.iter().zip(&profile.link_flows).map(|(c, f)| c * f).sum();
    let shortest = shortest_total(instance, &aon.od_costs);
    Ok(gap_from_parts(priced, shortest))
}

fn shortest_total(instance: &Instance, od_costs: &[f64]) -> f64 {
    instance
        .od_pairs
        .iter()
        .zip(od_costs)
        .filter(|(od, _)| od.demand > 0.0)
        .map(|(od, c)| od.demand * c)
        .sum()
}

/// Path registry plus the active set of all-or-nothing loadings.
struct State {
    /// Per OD: path -> registry id.
    path_index: Vec<HashMap<Vec<ArcId>, usize>>,
    paths: Vec<(usize, Vec<ArcId>)>,
    path_flow: Vec<f64>,
    /// Loading = one registered path per OD with positive demand.
    vertex_index: HashMap<Vec<usize>, usize>,
    vertices: Vec<Vec<usize>>,
    weights: Vec<f64>,
}

impl State {
    fn new(od_count: usize) -> Self {
        Self {
            path_index: vec![HashMap::new(); od_count],
            paths: Vec::new(),
            path_flow: Vec::new(),
            vertex_index: HashMap::new(),
            vertices: Vec::new(),
            weights: Vec::new(),
        }
    }

    fn register_path(&mut self, od: usize, arcs: &[ArcId]) -> usize {
        if let Some(&id) = self.path_index[od].get(arcs) {
            return id;
        }
        let id = self.paths.len();
        self.path_index[od].insert(arcs.to_vec(), id);
        self.paths.push((od, arcs.to_vec()));
        self.path_flow.push(0.0);
        id
    }

    fn register_vertex(&mut self, aon: &AllOrNothing) -> usize {
        let ids: Vec<usize> = aon
            .used_paths
            .iter()
            .map(|(od, p)| self.register_path(*od, p))
            .collect();
        if let Some(&v) = self.vertex_index.get(&ids) {
            return v;
        }
        let v = self.vertices.len();
        self.vertex_index.insert(ids.clone(), v);
        self.vertices.push(ids);
        self.weights.push(0.0);
        v
    }

    fn link_flows(&self, arc_count: usize) -> Vec<f64> {
        let mut f = vec![0.0; arc_count];
        for ((_, arcs), &x) in self.paths.iter().zip(&self.path_flow) {
            if x > 0.0 {
                for &a in arcs {
                    f[a] += x;
                }
            }
        }
        f
    }

    fn vertex_link_flows(&self, v: usize, instance: &Instance) -> Vec<f64> {
        let mut f = vec![0.0; instance.network.arc_count()];
        for &pid in &self.vertices[v] {
            let (od, arcs) = &self.paths[pid];
            for &a in arcs {
                f[a] += instance.od_pairs[*od].demand;
            }
        }
        f
    }
}

/// Solves the user-equilibrium or system-optimum program.
pub fn solve(instance: &Instance, options: &SolveOptions) -> Result<SolveResult, SolveError> {
    options.check()?;
    instance.ensure_valid()?;
    let total = instance.total_demand();
    if !(total > 0.0) {
        return Err(ModelError::ZeroTotalDemand.into());
    }
    let m = instance.network.arc_count();
    let out_arcs = instance.network.out_arcs();
    let objective = options.objective;
    let away_enabled = options.step_rule == StepRule::AwayStep;
    // a coarse line search cannot certify a gap much finer than itself
    let ls_tol = options.line_search_tol.min(1e-2 * options.rel_gap_tol);

    let mut state = State::new(instance.od_pairs.len());
    let zero_costs = arc_costs(instance, &vec![0.0; m], objective)?;
    check_costs(&zero_costs)?;
    let first = load(instance, &out_arcs, &zero_costs)?;
    let v0 = state.register_vertex(&first);
    state.weights[v0] = 1.0;
    for &pid in &state.vertices[v0] {
        state.path_flow[pid] = instance.od_pairs[state.paths[pid].0].demand;
    }

    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut stalls = 0;
    let mut gap;
    let mut od_min_costs;
    loop {
        let flows = state.link_flows(m);
        let costs = arc_costs(instance, &flows, objective)?;
        check_costs(&costs)?;
        let aon = load(instance, &out_arcs, &costs)?;
        let priced: f64 = costs.iter().zip(&flows).map(|(c, f)| c * f).sum();
        let shortest = shortest_total(instance, &aon.od_costs);
        gap = gap_from_parts(priced, shortest);
        od_min_costs = aon.od_costs.clone();
        let value = objective_of_flows(instance, &flows, objective)?;
        if gap <= options.rel_gap_tol {
            converged = true;
            trace.push(TraceEntry {
                objective_value: value,
                relative_gap: gap,
                step: 0.0,
                away: false,
            });
            break;
        }
        if iterations >= options.max_iters || stalls >= 2 {
            trace.push(TraceEntry {
                objective_value: value,
                relative_gap: gap,
                step: 0.0,
                away: false,
            });
            break;
        }

        let fw_gain = priced - shortest;
        let mut away = None;
        if away_enabled {
            let path_cost: Vec<f64> = state
                .paths
                .iter()
                .map(|(_, arcs)| arcs.iter().map(|&a| costs[a]).sum())
                .collect();
            let mut best: Option<(usize, f64)> = None;
            for (v, ids) in state.vertices.iter().enumerate() {
                if state.weights[v] <= 0.0 {
                    continue;
                }
                let lin: f64 = ids
                    .iter()
                    .map(|&pid| instance.od_pairs[state.paths[pid].0].demand * path_cost[pid])
                    .sum();
                if best.is_none_or(|(_, b)| lin > b) {
                    best = Some((v, lin));
                }
            }
            if let Some((v, lin)) = best {
                let away_gain = lin - priced;
                let w = state.weights[v];
                if away_gain > fw_gain && w < 1.0 {
                    away = Some((v, w / (1.0 - w)));
                }
            }
        }

        let (direction, max_step) = match away {
            Some((v, max_step)) => {
                let target = state.vertex_link_flows(v, instance);
                let d: Vec<f64> = flows.iter().zip(&target).map(|(f, t)| f - t).collect();
                (d, max_step)
            }
            None => {
                let d: Vec<f64> = aon
                    .link_flows
                    .iter()
                    .zip(&flows)
                    .map(|(y, f)| y - f)
                    .collect();
                (d, 1.0)
            }
        };

        let eval_error: Cell<Option<CostError>> = Cell::new(None);
        let derivative = |s: f64| -> f64 {
            let step = s * max_step;
            let mut g = 0.0;
            for (a, arc) in instance.network.arcs.iter().enumerate() {
                let da = direction[a];
                if da == 0.0 {
                    continue;
                }
                let x = (flows[a] + step * da).max(0.0);
                let c = match objective {
                    Objective::UserEquilibrium => arc.cost.eval(x),
                    Objective::SystemOptimum => arc.cost.marginal_cost(x),
                };
                match c {
                    Ok(c) => g += c * da,
                    Err(e) => {
                        eval_error.set(Some(e));
                        return f64::NAN;
                    }
                }
            }
            g * max_step
        };
        let s = line_search(derivative, ls_tol);
        if let Some(e) = eval_error.take() {
            return Err(e.into());
        }
        let step = s * max_step;

        match away {
            Some((v, _)) => {
                let drop = s >= 1.0;
                for x in state.path_flow.iter_mut() {
                    *x *= 1.0 + step;
                }
                for w in state.weights.iter_mut() {
                    *w *= 1.0 + step;
                }
                for &pid in &state.vertices[v] {
                    let d = instance.od_pairs[state.paths[pid].0].demand;
                    state.path_flow[pid] = (state.path_flow[pid] - step * d).max(0.0);
                }
                state.weights[v] = if drop {
                    0.0
                } else {
                    (state.weights[v] - step).max(0.0)
                };
            }
            None => {
                let y = state.register_vertex(&aon);
                for x in state.path_flow.iter_mut() {
                    *x *= 1.0 - step;
                }
                for w in state.weights.iter_mut() {
                    *w *= 1.0 - step;
                }
                if s >= 1.0 {
                    state.weights.iter_mut().for_each(|w| *w = 0.0);
                    state.path_flow.iter_mut().for_each(|x| *x = 0.0);
                }
                state.weights[y] += step;
                for &pid in &state.vertices[y] {
                    let d = instance.od_pairs[state.paths[pid].0].demand;
                    state.path_flow[pid] += step * d;
                }
            }
        }
        stalls = if step == 0.0 { stalls + 1 } else { 0 };
        trace.push(TraceEntry {
            objective_value: value,
            relative_gap: gap,
            step,
            away: away.is_some(),
        });
        iterations += 1;
    }

    let floor = 1e-12 * total;
    let paths: Vec<PathFlow> = state
        .paths
        .iter()
        .zip(&state.path_flow)
        .filter(|(_, &x)| x >= floor && x > 0.0)
        .map(|((od, arcs), &flow)| PathFlow {
            od: *od,
            arcs: arcs.clone(),
            flow,
        })
        .collect();
    let profile = FlowProfile::from_paths(paths, m);
    let objective_value = objective_of_flows(instance, &profile.link_flows, objective)?;
    let social_cost = social_cost_of_flows(instance, &profile.link_flows)?;
    let profile = if options.record_paths {
        profile
    } else {
        FlowProfile {
            paths: Vec::new(),
            link_flows: profile.link_flows,
        }
    };
    Ok(SolveResult {
        profile,
        objective_value,
        social_cost,
        relative_gap: gap,
        iterations,
        converged,
        od_min_costs,
        trace,
    })
}
