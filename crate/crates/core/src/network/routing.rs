//! Route computation.
//!
//! Both built-in protocols first restrict themselves to minimum-hop routes
//! (shortest path in link count). [`LegacyShortestPath`] then picks one of
//! them uniformly at random and pins it; [`SdnMaxBandwidth`] picks, for every
//! packet, the one whose tightest link offers the most bandwidth to a new
//! channel.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{Endpoint, Flow, NetworkError, Route, RuleMatch};
use crate::ids::{PacketId, TaskId};
use crate::topology::{LinkIx, NodeIx, PhysicalTopology};

/// Inputs for one routing decision. `link_channels[l]` is the number of
/// channels currently crossing link `l`.
pub struct RouteRequest<'a> {
    pub topology: &'a PhysicalTopology,
    pub flow: &'a Flow,
    pub src: NodeIx,
    pub dst: NodeIx,
    pub link_channels: &'a [u32],
}

pub trait RoutingProtocol: Send {
    fn name(&self) -> &'static str;

    fn route(&mut self, request: &RouteRequest<'_>, rng: &mut dyn RngCore) -> Result<Route, NetworkError>;

    /// Key under which forwarding rules for this packet are installed.
    fn rule_match(&self, flow: &Flow, packet: PacketId) -> RuleMatch;
}

/// Hop count from every node to `target`, `None` when unreachable.
pub fn hop_distances(topology: &PhysicalTopology, target: NodeIx) -> Vec<Option<u32>> {
    let mut dist = vec![None; topology.node_count()];
    dist[target.0] = Some(0);
    let mut queue = VecDeque::from([target]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u.0].expect("queued nodes have a distance");
        for &(v, _) in topology.neighbors(u) {
            if dist[v.0].is_none() {
                dist[v.0] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Bandwidth a new channel would get on `link`: capacity over (channels + 1).
pub fn available_bandwidth(topology: &PhysicalTopology, link: LinkIx, link_channels: &[u32]) -> f64 {
    topology.link(link).bandwidth_bps / f64::from(link_channels[link.0] + 1)
}

fn no_route(topology: &PhysicalTopology, src: NodeIx, dst: NodeIx) -> NetworkError {
    NetworkError::NoRoute {
        src: topology.name(src).to_string(),
        dst: topology.name(dst).to_string(),
    }
}

/// Next hops from `v` that stay on a minimum-hop route to the target.
fn downhill<'t>(
    topology: &'t PhysicalTopology,
    dist: &'t [Option<u32>],
    v: NodeIx,
) -> impl Iterator<Item = (NodeIx, LinkIx)> + 't {
    let dv = dist[v.0];
    topology
        .neighbors(v)
        .iter()
        .copied()
        .filter(move |(w, _)| matches!((dv, dist[w.0]), (Some(a), Some(b)) if b + 1 == a))
}

/// A minimum-hop route drawn uniformly among all of them (parallel links
/// count as distinct routes).
pub fn route_legacy(
    topology: &PhysicalTopology,
    src: NodeIx,
    dst: NodeIx,
    rng: &mut dyn RngCore,
) -> Result<Route, NetworkError> {
    let dist = hop_distances(topology, dst);
    let Some(hops) = dist[src.0] else {
        return Err(no_route(topology, src, dst));
    };

    // number of min-hop routes from each node, filled in order of distance
    let mut order: Vec<NodeIx> = (0..topology.node_count())
        .map(NodeIx)
        .filter(|n| dist[n.0].is_some_and(|d| d <= hops))
        .collect();
    order.sort_by_key(|n| dist[n.0]);
    let mut paths = vec![0.0f64; topology.node_count()];
    paths[dst.0] = 1.0;
    for &v in order.iter().skip(1) {
        paths[v.0] = downhill(topology, &dist, v).map(|(w, _)| paths[w.0]).sum();
    }

    let mut route = Route::local(src);
    let mut v = src;
    while v != dst {
        let mut pick = rng.gen::<f64>() * paths[v.0];
        let mut chosen = None;
        for (w, l) in downhill(topology, &dist, v) {
            chosen = Some((w, l));
            if pick < paths[w.0] {
                break;
            }
            pick -= paths[w.0];
        }
        let (w, l) = chosen.expect("a node at positive distance has a downhill neighbour");
        route.nodes.push(w);
        route.links.push(l);
        v = w;
    }
    Ok(route)
}

/// Among minimum-hop routes, the one maximising the smallest
/// [`available_bandwidth`] along it. Remaining ties go to the
/// lexicographically smallest node-name sequence, then to the parallel link
/// with more headroom (lower index on equality).
pub fn route_sdn(
    topology: &PhysicalTopology,
    src: NodeIx,
    dst: NodeIx,
    link_channels: &[u32],
) -> Result<Route, NetworkError> {
    let dist = hop_distances(topology, dst);
    let Some(hops) = dist[src.0] else {
        return Err(no_route(topology, src, dst));
    };

    let mut order: Vec<NodeIx> = (0..topology.node_count())
        .map(NodeIx)
        .filter(|n| dist[n.0].is_some_and(|d| d <= hops))
        .collect();
    order.sort_by_key(|n| dist[n.0]);
    // widest bottleneck from each node to the destination over min-hop routes
    let mut widest = vec![0.0f64; topology.node_count()];
    widest[dst.0] = f64::INFINITY;
    for &v in order.iter().skip(1) {
        widest[v.0] = downhill(topology, &dist, v)
            .map(|(w, l)| available_bandwidth(topology, l, link_channels).min(widest[w.0]))
            .fold(0.0, f64::max);
    }

    let target = widest[src.0];
    let mut route = Route::local(src);
    let mut v = src;
    while v != dst {
        let mut best: Option<(NodeIx, LinkIx, f64)> = None;
        for (w, l) in downhill(topology, &dist, v) {
            let avail = available_bandwidth(topology, l, link_channels);
            if avail.min(widest[w.0]) < target {
                continue;
            }
            let better = match best {
                None => true,
                Some((bw, bl, bavail)) => {
                    let (name, best_name) = (topology.name(w), topology.name(bw));
                    name < best_name || (w == bw && (avail > bavail || (avail == bavail && l < bl)))
                }
            };
            if better {
                best = Some((w, l, avail));
            }
        }
        let (w, l, _) = best.expect("the widest value is achieved by some neighbour");
        route.nodes.push(w);
        route.links.push(l);
        v = w;
    }
    Ok(route)
}

/// Min-hop, maximum-available-bandwidth routing evaluated per packet.
#[derive(Clone, Debug, Default)]
pub struct SdnMaxBandwidth;

impl RoutingProtocol for SdnMaxBandwidth {
    fn name(&self) -> &'static str {
        "min_hop_max_bandwidth"
    }

    fn route(&mut self, request: &RouteRequest<'_>, _rng: &mut dyn RngCore) -> Result<Route, NetworkError> {
        route_sdn(request.topology, request.src, request.dst, request.link_channels)
    }

    fn rule_match(&self, _flow: &Flow, packet: PacketId) -> RuleMatch {
        RuleMatch::Packet(packet)
    }
}

/// What a pinned legacy route is keyed on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PinGranularity {
    #[default]
    EndpointPair,
    TaskPair,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PinKey {
    Endpoints(Endpoint, Endpoint),
    Tasks {
        src: Endpoint,
        src_task: Option<TaskId>,
        dst: Endpoint,
        dst_task: Option<TaskId>,
    },
}

/// Random minimum-hop routing; the first choice for a key is reused for
/// the rest of the run.
#[derive(Clone, Debug, Default)]
pub struct LegacyShortestPath {
    granularity: PinGranularity,
    pinned: BTreeMap<PinKey, Route>,
}

impl LegacyShortestPath {
    pub fn new(granularity: PinGranularity) -> Self {
        Self {
            granularity,
            pinned: BTreeMap::new(),
        }
    }

    pub fn key(&self, flow: &Flow) -> PinKey {
        match self.granularity {
            PinGranularity::EndpointPair => PinKey::Endpoints(flow.src, flow.dst),
            PinGranularity::TaskPair => PinKey::Tasks {
                src: flow.src,
                src_task: flow.src_task,
                dst: flow.dst,
                dst_task: flow.dst_task,
            },
        }
    }

    pub fn pinned(&self) -> &BTreeMap<PinKey, Route> {
        &self.pinned
    }
}

impl RoutingProtocol for LegacyShortestPath {
    fn name(&self) -> &'static str {
        "min_hop_random_pinned"
    }

    fn route(&mut self, request: &RouteRequest<'_>, rng: &mut dyn RngCore) -> Result<Route, NetworkError> {
        let key = self.key(request.flow);
        if let Some(route) = self.pinned.get(&key) {
            return Ok(route.clone());
        }
        let route = route_legacy(request.topology, request.src, request.dst, rng)?;
        self.pinned.insert(key, route.clone());
        Ok(route)
    }

    fn rule_match(&self, flow: &Flow, _packet: PacketId) -> RuleMatch {
        RuleMatch::Pinned(self.key(flow))
    }
}
