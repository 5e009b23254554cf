//! Per-node forwarding tables maintained by the controller.

use std::collections::BTreeMap;

use super::{PinKey, Route};
use crate::ids::PacketId;
use crate::topology::{LinkIx, NodeIx};

/// What a rule matches on: a pinned flow shared by all its packets, or a
/// single packet with its own route.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RuleMatch {
    Pinned(PinKey),
    Packet(PacketId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForwardingRule {
    pub node: NodeIx,
    pub matcher: RuleMatch,
    /// `None` on the last node of the route: deliver locally.
    pub next_hop: Option<(NodeIx, LinkIx)>,
}

#[derive(Clone, Copy, Debug)]
struct Installed {
    next_hop: Option<(NodeIx, LinkIx)>,
    channels: u32,
}

#[derive(Clone, Debug, Default)]
pub struct ForwardingTables {
    tables: BTreeMap<NodeIx, BTreeMap<RuleMatch, Installed>>,
}

impl ForwardingTables {
    /// Adds one rule per node of `route`. Rules installed under the same
    /// matcher are reference counted per channel.
    pub fn install(&mut self, route: &Route, matcher: RuleMatch) {
        for (i, &node) in route.nodes.iter().enumerate() {
            let next_hop = route.links.get(i).map(|&l| (route.nodes[i + 1], l));
            let entry = self
                .tables
                .entry(node)
                .or_default()
                .entry(matcher)
                .or_insert(Installed { next_hop, channels: 0 });
            debug_assert_eq!(entry.next_hop, next_hop, "conflicting rule for a pinned flow");
            entry.channels += 1;
        }
    }

    pub fn remove(&mut self, route: &Route, matcher: RuleMatch) {
        for node in &route.nodes {
            let Some(table) = self.tables.get_mut(node) else {
                continue;
            };
            if let Some(entry) = table.get_mut(&matcher) {
                entry.channels -= 1;
                if entry.channels == 0 {
                    table.remove(&matcher);
                }
            }
            if table.is_empty() {
                self.tables.remove(node);
            }
        }
    }

    pub fn lookup(&self, node: NodeIx, matcher: RuleMatch) -> Option<ForwardingRule> {
        let installed = self.tables.get(&node)?.get(&matcher)?;
        Some(ForwardingRule {
            node,
            matcher,
            next_hop: installed.next_hop,
        })
    }

    pub fn rules_at(&self, node: NodeIx) -> Vec<ForwardingRule> {
        self.tables
            .get(&node)
            .into_iter()
            .flat_map(|t| t.iter())
            .map(|(&matcher, installed)| ForwardingRule {
                node,
                matcher,
                next_hop: installed.next_hop,
            })
            .collect()
    }

    pub fn rule_count(&self) -> usize {
        self.tables.values().map(BTreeMap::len).sum()
    }
}
