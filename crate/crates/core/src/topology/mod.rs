//! Physical data-center graph: hosts, switches, the storage node and the
//! links between them.
//!
//! Topologies are read from a strict JSON document ([`TopologyDoc`]) or
//! generated by [`ThreeTier`]. A [`PhysicalTopology`] is immutable once
//! built; routing and bandwidth accounting refer to nodes and links by
//! [`NodeIx`] / [`LinkIx`].

mod three_tier;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use three_tier::ThreeTier;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostSpec {
    pub name: String,
    pub pes: u32,
    pub mips_per_pe: f64,
    pub ram_mb: u64,
}

impl HostSpec {
    pub fn total_mips(&self) -> f64 {
        f64::from(self.pes) * self.mips_per_pe
    }
}

/// The storage node carries the same resource fields as a host.
pub type StorageSpec = HostSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Core,
    Aggregation,
    Edge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchSpec {
    pub name: String,
    pub tier: Tier,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    pub bandwidth_bps: f64,
}

/// On-disk topology document.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDoc {
    pub hosts: Vec<HostSpec>,
    pub switches: Vec<SwitchSpec>,
    pub storage: Vec<StorageSpec>,
    pub links: Vec<LinkSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeIx(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinkIx(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub enum NodeKind {
    Host(HostSpec),
    Switch(Tier),
    Storage(StorageSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
}

impl Node {
    pub fn is_switch(&self) -> bool {
        matches!(self.kind, NodeKind::Switch(_))
    }

    pub fn kind_label(&self) -> &'static str {
        match self.kind {
            NodeKind::Host(_) => "host",
            NodeKind::Switch(_) => "switch",
            NodeKind::Storage(_) => "storage",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Link {
    pub a: NodeIx,
    pub b: NodeIx,
    pub bandwidth_bps: f64,
}

impl Link {
    /// The endpoint opposite `from`.
    pub fn other(&self, from: NodeIx) -> NodeIx {
        if self.a == from {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("topology schema error: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("duplicate node name '{0}'")]
    DuplicateName(String),
    #[error("link {link} references unknown node '{endpoint}'")]
    DanglingLink { link: usize, endpoint: String },
    #[error("topology graph is disconnected")]
    DisconnectedGraph,
    #[error("link {link} has non-positive bandwidth")]
    NonPositiveBandwidth { link: usize },
    #[error("{0}")]
    Invalid(Violation),
    #[error("cannot build three-tier fabric: {0}")]
    Shape(String),
}

/// A semantic problem found by [`PhysicalTopology::validate`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    DisconnectedGraph,
    NonPositiveBandwidth {
        link: usize,
    },
    SelfLoop {
        link: usize,
    },
    /// A host or storage node with no link to a switch.
    Unattached {
        node: String,
    },
    InvalidResources {
        node: String,
    },
    TooManyStorageNodes {
        count: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DisconnectedGraph => write!(f, "graph is disconnected"),
            Violation::NonPositiveBandwidth { link } => {
                write!(f, "link {link} has non-positive bandwidth")
            }
            Violation::SelfLoop { link } => write!(f, "link {link} connects a node to itself"),
            Violation::Unattached { node } => write!(f, "'{node}' is not attached to any switch"),
            Violation::InvalidResources { node } => {
                write!(f, "'{node}' needs pes >= 1, mips_per_pe > 0 and ram_mb >= 1")
            }
            Violation::TooManyStorageNodes { count } => {
                write!(f, "{count} storage nodes declared, at most one is supported")
            }
        }
    }
}

impl From<Violation> for TopologyError {
    fn from(v: Violation) -> Self {
        match v {
            Violation::DisconnectedGraph => TopologyError::DisconnectedGraph,
            Violation::NonPositiveBandwidth { link } => TopologyError::NonPositiveBandwidth { link },
            other => TopologyError::Invalid(other),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalTopology {
    nodes: Vec<Node>,
    links: Vec<Link>,
    adjacency: Vec<Vec<(NodeIx, LinkIx)>>,
    by_name: BTreeMap<String, NodeIx>,
}

impl PhysicalTopology {
    /// Resolves names and builds the adjacency index. Only structural
    /// problems (duplicate names, dangling endpoints) are errors here; see
    /// [`PhysicalTopology::validate`] for the semantic checks.
    pub fn from_doc(doc: &TopologyDoc) -> Result<Self, TopologyError> {
        let mut nodes = Vec::new();
        nodes.extend(doc.hosts.iter().map(|h| Node {
            name: h.name.clone(),
            kind: NodeKind::Host(h.clone()),
        }));
        nodes.extend(doc.switches.iter().map(|s| Node {
            name: s.name.clone(),
            kind: NodeKind::Switch(s.tier),
        }));
        nodes.extend(doc.storage.iter().map(|s| Node {
            name: s.name.clone(),
            kind: NodeKind::Storage(s.clone()),
        }));

        let mut by_name = BTreeMap::new();
        for (i, node) in nodes.iter().enumerate() {
            if by_name.insert(node.name.clone(), NodeIx(i)).is_some() {
                return Err(TopologyError::DuplicateName(node.name.clone()));
            }
        }

        let mut links = Vec::with_capacity(doc.links.len());
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (i, spec) in doc.links.iter().enumerate() {
            let resolve = |name: &str| {
                by_name.get(name).copied().ok_or_else(|| TopologyError::DanglingLink {
                    link: i,
                    endpoint: name.to_string(),
                })
            };
            let a = resolve(&spec.a)?;
            let b = resolve(&spec.b)?;
            adjacency[a.0].push((b, LinkIx(i)));
            if a != b {
                adjacency[b.0].push((a, LinkIx(i)));
            }
            links.push(Link {
                a,
                b,
                bandwidth_bps: spec.bandwidth_bps,
            });
        }

        Ok(Self {
            nodes,
            links,
            adjacency,
            by_name,
        })
    }

    pub fn to_doc(&self) -> TopologyDoc {
        let mut doc = TopologyDoc::default();
        for node in &self.nodes {
            match &node.kind {
                NodeKind::Host(spec) => doc.hosts.push(spec.clone()),
                NodeKind::Switch(tier) => doc.switches.push(SwitchSpec {
                    name: node.name.clone(),
                    tier: *tier,
                }),
                NodeKind::Storage(spec) => doc.storage.push(spec.clone()),
            }
        }
        doc.links = self
            .links
            .iter()
            .map(|l| LinkSpec {
                a: self.nodes[l.a.0].name.clone(),
                b: self.nodes[l.b.0].name.clone(),
                bandwidth_bps: l.bandwidth_bps,
            })
            .collect();
        doc
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("topology serializes")
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();

        for node in &self.nodes {
            if let NodeKind::Host(spec) | NodeKind::Storage(spec) = &node.kind {
                if spec.pes == 0 || !(spec.mips_per_pe > 0.0) || spec.ram_mb == 0 {
                    violations.push(Violation::InvalidResources {
                        node: node.name.clone(),
                    });
                }
            }
        }

        for (i, link) in self.links.iter().enumerate() {
            if link.a == link.b {
                violations.push(Violation::SelfLoop { link: i });
            }
            if !(link.bandwidth_bps > 0.0) || !link.bandwidth_bps.is_finite() {
                violations.push(Violation::NonPositiveBandwidth { link: i });
            }
        }

        let storage_count = self
            .nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Storage(_)))
            .count();
        if storage_count > 1 {
            violations.push(Violation::TooManyStorageNodes { count: storage_count });
        }

        for (i, node) in self.nodes.iter().enumerate() {
            if node.is_switch() {
                continue;
            }
            let attached = self.adjacency[i].iter().any(|(n, _)| self.nodes[n.0].is_switch());
            if !attached {
                violations.push(Violation::Unattached {
                    node: node.name.clone(),
                });
            }
        }

        if !self.is_connected() {
            violations.push(Violation::DisconnectedGraph);
        }
        violations
    }

    fn is_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.adjacency[u] {
                if !seen[v.0] {
                    seen[v.0] = true;
                    count += 1;
                    queue.push_back(v.0);
                }
            }
        }
        count == self.nodes.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node(&self, ix: NodeIx) -> &Node {
        &self.nodes[ix.0]
    }

    pub fn link(&self, ix: LinkIx) -> &Link {
        &self.links[ix.0]
    }

    pub fn name(&self, ix: NodeIx) -> &str {
        &self.nodes[ix.0].name
    }

    pub fn node_ix(&self, name: &str) -> Option<NodeIx> {
        self.by_name.get(name).copied()
    }

    /// Neighbours of `ix` with the link used to reach each; parallel links
    /// appear once per link.
    pub fn neighbors(&self, ix: NodeIx) -> &[(NodeIx, LinkIx)] {
        &self.adjacency[ix.0]
    }

    /// Hosts in declaration order.
    pub fn hosts(&self) -> impl Iterator<Item = (NodeIx, &HostSpec)> {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match &n.kind {
            NodeKind::Host(spec) => Some((NodeIx(i), spec)),
            _ => None,
        })
    }

    pub fn switches(&self) -> impl Iterator<Item = NodeIx> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.is_switch())
            .map(|(i, _)| NodeIx(i))
    }

    pub fn storage(&self) -> Option<NodeIx> {
        self.nodes
            .iter()
            .position(|n| matches!(n.kind, NodeKind::Storage(_)))
            .map(NodeIx)
    }
}

/// Parses and validates a topology document.
pub fn parse_topology(document: &str) -> Result<PhysicalTopology, TopologyError> {
    let doc: TopologyDoc = serde_json::from_str(document)?;
    let topology = PhysicalTopology::from_doc(&doc)?;
    match topology.validate().into_iter().next() {
        Some(violation) => Err(violation.into()),
        None => Ok(topology),
    }
}
