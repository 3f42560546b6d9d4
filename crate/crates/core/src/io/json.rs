use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::cost::CostSpec;
use crate::network::{Instance, Network, OdPair};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArcEntry {
    pub tail: String,
    pub head: String,
    pub cost: CostSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdEntry {
    pub origin: String,
    pub destination: String,
    pub demand: f64,
}

/// Versioned JSON form of an instance. Nodes are referenced by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDocument {
    pub schema_version: u32,
    pub nodes: Vec<String>,
    pub arcs: Vec<ArcEntry>,
    pub od_pairs: Vec<OdEntry>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub allow_self_loops: bool,
}

impl InstanceDocument {
    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let doc: Self = serde_json::from_str(text).map_err(|e| FormatError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(FormatError::UnsupportedVersion(doc.schema_version));
        }
        Ok(doc)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("document serializes");
        s.push('\n');
        s
    }

    pub fn from_instance(instance: &Instance) -> Self {
        let names = &instance.network.node_names;
        Self {
            schema_version: SCHEMA_VERSION,
            nodes: names.clone(),
            arcs: instance
                .network
                .arcs
                .iter()
                .map(|a| ArcEntry {
                    tail: names[a.tail].clone(),
                    head: names[a.head].clone(),
                    cost: a.cost.clone(),
                })
                .collect(),
            od_pairs: instance
                .od_pairs
                .iter()
                .map(|od| OdEntry {
                    origin: names[od.origin].clone(),
                    destination: names[od.destination].clone(),
                    demand: od.demand,
                })
                .collect(),
            allow_self_loops: instance.network.allow_self_loops,
        }
    }

    /// Resolves node names. Does not validate costs or demands.
    pub fn to_instance(&self) -> Result<Instance, FormatError> {
        let mut ids = HashMap::with_capacity(self.nodes.len());
        for (i, n) in self.nodes.iter().enumerate() {
            if ids.insert(n.as_str(), i).is_some() {
                return Err(FormatError::DuplicateNode(n.clone()));
            }
        }
        let id = |name: &str| {
            ids.get(name)
                .copied()
                .ok_or_else(|| FormatError::UnknownNode(name.to_string()))
        };
        let arcs = self
            .arcs
            .iter()
            .map(|a| Ok((id(&a.tail)?, id(&a.head)?, a.cost.clone())))
            .collect::<Result<Vec<_>, FormatError>>()?;
        let od_pairs = self
            .od_pairs
            .iter()
            .map(|od| Ok(OdPair::new(id(&od.origin)?, id(&od.destination)?, od.demand)))
            .collect::<Result<Vec<_>, FormatError>>()?;
        let mut network = Network::new(self.nodes.clone(), arcs);
        network.allow_self_loops = self.allow_self_loops;
        Ok(Instance::new(network, od_pairs))
    }
}
