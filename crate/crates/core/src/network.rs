//! Game instances: directed network, arc costs, OD demands and flow profiles.

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

use crate::cost::{CostError, CostSpec};

pub type NodeId = usize;
pub type ArcId = usize;

/// Relative tolerance on `sum lambda = 1`.
pub const DISTRIBUTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("total demand is zero")]
    ZeroTotalDemand,
    #[error("dimension mismatch: expected {expected} entries, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid total demand {0}")]
    InvalidTotal(f64),
    #[error("flow profile inconsistent: {0}")]
    InconsistentProfile(String),
    #[error("instance failed validation: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub id: ArcId,
    pub tail: NodeId,
    pub head: NodeId,
    pub cost: CostSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    /// External node names, indexed by dense node id.
    pub node_names: Vec<String>,
    pub arcs: Vec<Arc>,
    /// Self-loops are rejected by validation unless this is set.
    pub allow_self_loops: bool,
}

impl Network {
    /// Builds a network; arc ids are assigned densely in input order.
    pub fn new(
        node_names: Vec<String>,
        arcs: impl IntoIterator<Item = (NodeId, NodeId, CostSpec)>,
    ) -> Self {
        let arcs = arcs
            .into_iter()
            .enumerate()
            .map(|(id, (tail, head, cost))| Arc {
                id,
                tail,
                head,
                cost,
            })
            .collect();
        Self {
            node_names,
            arcs,
            allow_self_loops: false,
        }
    }

    /// Network with nodes named `0..n`.
    pub fn with_node_count(
        n: usize,
        arcs: impl IntoIterator<Item = (NodeId, NodeId, CostSpec)>,
    ) -> Self {
        Self::new((0..n).map(|i| i.to_string()).collect(), arcs)
    }

    pub fn node_count(&self) -> usize {
        self.node_names.len()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    /// Outgoing arc ids per node, ascending.
    pub fn out_arcs(&self) -> Vec<Vec<ArcId>> {
        let mut out = vec![Vec::new(); self.node_count()];
        for a in &self.arcs {
            if a.tail < out.len() {
                out[a.tail].push(a.id);
            }
        }
        out
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.node_names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdPair {
    pub origin: NodeId,
    pub destination: NodeId,
    pub demand: f64,
}

impl OdPair {
    pub fn new(origin: NodeId, destination: NodeId, demand: f64) -> Self {
        Self {
            origin,
            destination,
            demand,
        }
    }
}

/// A problem diagnosed by [`Instance::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DanglingNode { arc: ArcId, node: NodeId },
    SelfLoop { arc: ArcId },
    BadArcId { position: usize, id: ArcId },
    InvalidCost { arc: ArcId, reason: CostError },
    OdNodeOutOfRange { od: usize, node: NodeId },
    SameOriginDestination { od: usize },
    NegativeDemand { od: usize, demand: f64 },
    DisconnectedOd { od: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DanglingNode { arc, node } => {
                write!(f, "arc {arc} references unknown node {node}")
            }
            Violation::SelfLoop { arc } => write!(f, "arc {arc} is a self-loop"),
            Violation::BadArcId { position, id } => {
                write!(f, "arc at position {position} carries id {id}")
            }
            Violation::InvalidCost { arc, reason } => {
                write!(f, "arc {arc} has an invalid cost: {reason}")
            }
            Violation::OdNodeOutOfRange { od, node } => {
                write!(f, "OD pair {od} references unknown node {node}")
            }
            Violation::SameOriginDestination { od } => {
                write!(f, "OD pair {od} has origin equal to destination")
            }
            Violation::NegativeDemand { od, demand } => {
                write!(f, "OD pair {od} has negative or non-finite demand {demand}")
            }
            Violation::DisconnectedOd { od } => {
                write!(f, "OD pair {od} is disconnected (no directed path)")
            }
        }
    }
}

/// Normalized OD shares `lambda_k = d_k / T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    pub fn new(shares: Vec<f64>) -> Result<Self, ModelError> {
        if shares.is_empty() {
            return Err(ModelError::InvalidDistribution("no shares".into()));
        }
        if shares.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(ModelError::InvalidDistribution(
                "shares must be finite and >= 0".into(),
            ));
        }
        let sum: f64 = shares.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_TOL {
            return Err(ModelError::InvalidDistribution(format!(
                "shares sum to {sum}, not 1"
            )));
        }
        Ok(Self(shares))
    }

    /// Normalizes arbitrary nonnegative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self, ModelError> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(ModelError::InvalidDistribution(format!(
                "weights sum to {sum}"
            )));
        }
        Self::new(weights.iter().map(|w| w / sum).collect())
    }

    pub fn shares(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub network: Network,
    pub od_pairs: Vec<OdPair>,
}

impl Instance {
    pub fn new(network: Network, od_pairs: Vec<OdPair>) -> Self {
        Self { network, od_pairs }
    }

    pub fn total_demand(&self) -> f64 {
        self.od_pairs.iter().map(|od| od.demand).sum()
    }

    /// All violations of the instance invariants; empty when valid.
    pub fn validate(&self) -> Vec<Violation> {
        let net = &self.network;
        let n = net.node_count();
        let mut out = Vec::new();
        for (pos, a) in net.arcs.iter().enumerate() {
            if a.id != pos {
                out.push(Violation::BadArcId { position: pos, id: a.id });
            }
            for node in [a.tail, a.head] {
                if node >= n {
                    out.push(Violation::DanglingNode { arc: a.id, node });
                }
            }
            if a.tail == a.head && !net.allow_self_loops {
                out.push(Violation::SelfLoop { arc: a.id });
            }
            if let Err(reason) = a.cost.validate() {
                out.push(Violation::InvalidCost { arc: a.id, reason });
            }
        }
        let adjacency = net.out_arcs();
        for (k, od) in self.od_pairs.iter().enumerate() {
            let mut nodes_ok = true;
            for node in [od.origin, od.destination] {
                if node >= n {
                    out.push(Violation::OdNodeOutOfRange { od: k, node });
                    nodes_ok = false;
                }
            }
            if od.origin == od.destination {
                out.push(Violation::SameOriginDestination { od: k });
            }
            if !(od.demand.is_finite() && od.demand >= 0.0) {
                out.push(Violation::NegativeDemand {
                    od: k,
                    demand: od.demand,
                });
            }
            if nodes_ok
                && od.origin != od.destination
                && !reachable(net, &adjacency, od.origin, od.destination)
            {
                out.push(Violation::DisconnectedOd { od: k });
            }
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<(), ModelError> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Invalid(v))
        }
    }

    /// Total demand `T` and the shares `d_k / T`.
    pub fn normalize_demands(&self) -> Result<(f64, Distribution), ModelError> {
        let total = self.total_demand();
        if total == 0.0 {
            return Err(ModelError::ZeroTotalDemand);
        }
        if !(total > 0.0 && total.is_finite()) {
            return Err(ModelError::InvalidTotal(total));
        }
        let shares = self.od_pairs.iter().map(|od| od.demand / total).collect();
        Ok((total, Distribution::new(shares)?))
    }

    /// Same network with demands `d_k = lambda_k * total`.
    pub fn scale(&self, distribution: &Distribution, total: f64) -> Result<Instance, ModelError> {
        if distribution.len() != self.od_pairs.len() {
            return Err(ModelError::DimensionMismatch {
                expected: self.od_pairs.len(),
                got: distribution.len(),
            });
        }
        if !(total >= 0.0 && total.is_finite()) {
            return Err(ModelError::InvalidTotal(total));
        }
        let od_pairs = self
            .od_pairs
            .iter()
            .zip(distribution.shares())
            .map(|(od, share)| OdPair {
                demand: share * total,
                ..*od
            })
            .collect();
        Ok(Instance {
            network: self.network.clone(),
            od_pairs,
        })
    }
}

fn reachable(net: &Network, adjacency: &[Vec<ArcId>], from: NodeId, to: NodeId) -> bool {
    let mut seen = vec![false; net.node_count()];
    let mut queue = VecDeque::from([from]);
    seen[from] = true;
    while let Some(v) = queue.pop_front() {
        if v == to {
            return true;
        }
        for &a in &adjacency[v] {
            let h = net.arcs[a].head;
            if h < seen.len() && !seen[h] {
                seen[h] = true;
                queue.push_back(h);
            }
        }
    }
    false
}

/// Flow carried by one path of one OD pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFlow {
    pub od: usize,
    pub arcs: Vec<ArcId>,
    pub flow: f64,
}

/// Path flows plus the link flows they induce: `f_a = sum_{s ∋ a} f_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowProfile {
    pub paths: Vec<PathFlow>,
    pub link_flows: Vec<f64>,
}

impl FlowProfile {
    pub fn zero(arc_count: usize) -> Self {
        Self {
            paths: Vec::new(),
            link_flows: vec![0.0; arc_count],
        }
    }

    /// Builds a profile whose link flows are aggregated from `paths`.
    pub fn from_paths(paths: Vec<PathFlow>, arc_count: usize) -> Self {
        let link_flows = Self::aggregate(&paths, arc_count);
        Self { paths, link_flows }
    }

    pub fn aggregate(paths: &[PathFlow], arc_count: usize) -> Vec<f64> {
        let mut f = vec![0.0; arc_count];
        for p in paths {
            for &a in &p.arcs {
                f[a] += p.flow;
            }
        }
        f
    }

    /// Flow routed per OD pair.
    pub fn od_totals(&self, od_count: usize) -> Vec<f64> {
        let mut t = vec![0.0; od_count];
        for p in &self.paths {
            t[p.od] += p.flow;
        }
        t
    }

    pub fn path_flow(&self, od: usize, arcs: &[ArcId]) -> f64 {
        self.paths
            .iter()
            .filter(|p| p.od == od && p.arcs == arcs)
            .map(|p| p.flow)
            .sum()
    }

    /// Checks nonnegativity, link aggregation (1e-9 absolute per arc) and
    /// demand fulfilment (1e-9 relative per OD).
    pub fn check_consistency(&self, instance: &Instance) -> Result<(), ModelError> {
        let m = instance.network.arc_count();
        if self.link_flows.len() != m {
            return Err(ModelError::DimensionMismatch {
                expected: m,
                got: self.link_flows.len(),
            });
        }
        if let Some(p) = self.paths.iter().find(|p| !(p.flow >= 0.0)) {
            return Err(ModelError::InconsistentProfile(format!(
                "path {:?} of OD {} has flow {}",
                p.arcs, p.od, p.flow
            )));
        }
        let agg = Self::aggregate(&self.paths, m);
        for (a, (x, y)) in agg.iter().zip(&self.link_flows).enumerate() {
            if (x - y).abs() > 1e-9 {
                return Err(ModelError::InconsistentProfile(format!(
                    "arc {a}: link flow {y} but paths sum to {x}"
                )));
            }
        }
        let totals = self.od_totals(instance.od_pairs.len());
        for (k, (od, got)) in instance.od_pairs.iter().zip(totals).enumerate() {
            if (got - od.demand).abs() > 1e-9 * od.demand.max(1.0) {
                return Err(ModelError::InconsistentProfile(format!(
                    "OD {k}: routed {got} of demand {}",
                    od.demand
                )));
            }
        }
        Ok(())
    }
}
