//! SDN controller and flow-level data plane.
//!
//! Every transfer is a [`Packet`] carried end to end by its own channel.
//! On each admission and each completion the controller advances packet
//! progress, drops finished channels, routes the newcomer, installs
//! forwarding rules, re-divides link capacity among channels and schedules
//! its next wake-up at the earliest predicted finish time.

mod controller;
mod entity;
mod forwarding;
pub mod routing;
pub mod traffic;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{JobId, TaskId, VmId};
use crate::topology::{LinkIx, NodeIx, PhysicalTopology};

pub use controller::{
    transmission_time, BandwidthInterval, Channel, Controller, Packet, PacketRecord, COMPLETION_EPSILON_BITS,
};
pub use entity::{ControllerEntity, Delivery, TransmitRequest};
pub use forwarding::{ForwardingRule, ForwardingTables, RuleMatch};
pub use routing::{LegacyShortestPath, PinGranularity, PinKey, RouteRequest, RoutingProtocol, SdnMaxBandwidth};
pub use traffic::{FairShare, TrafficPolicy};

/// A data source or sink attached to the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Endpoint {
    Storage,
    Vm(VmId),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Storage => f.write_str("san"),
            Endpoint::Vm(vm) => write!(f, "{vm}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Flow {
    pub src: Endpoint,
    pub dst: Endpoint,
    pub job: JobId,
    pub src_task: Option<TaskId>,
    pub dst_task: Option<TaskId>,
}

impl Flow {
    pub fn new(src: Endpoint, dst: Endpoint, job: JobId) -> Self {
        Self {
            src,
            dst,
            job,
            src_task: None,
            dst_task: None,
        }
    }

    pub fn tasks(mut self, src_task: Option<TaskId>, dst_task: Option<TaskId>) -> Self {
        self.src_task = src_task;
        self.dst_task = dst_task;
        self
    }

    /// Source and destination must differ; two tasks sharing a VM still
    /// count as distinct endpoints.
    pub fn is_loop(&self) -> bool {
        self.src == self.dst && self.src_task == self.dst_task
    }
}

/// Nodes traversed by a channel and the specific link taken between each
/// consecutive pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Route {
    pub nodes: Vec<NodeIx>,
    pub links: Vec<LinkIx>,
}

impl Route {
    pub fn local(node: NodeIx) -> Self {
        Self {
            nodes: vec![node],
            links: Vec::new(),
        }
    }

    pub fn hops(&self) -> usize {
        self.links.len()
    }

    pub fn source(&self) -> NodeIx {
        self.nodes[0]
    }

    pub fn destination(&self) -> NodeIx {
        *self.nodes.last().expect("route has at least one node")
    }

    /// Smallest raw capacity along the route; infinite for a local route.
    pub fn capacity(&self, topology: &PhysicalTopology) -> f64 {
        self.links
            .iter()
            .map(|&l| topology.link(l).bandwidth_bps)
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks that consecutive nodes are joined by the listed links and
    /// that no node repeats.
    pub fn is_well_formed(&self, topology: &PhysicalTopology) -> bool {
        if self.nodes.is_empty() || self.links.len() + 1 != self.nodes.len() {
            return false;
        }
        let joined = self.links.iter().enumerate().all(|(i, &l)| {
            let link = topology.link(l);
            let (u, v) = (self.nodes[i], self.nodes[i + 1]);
            (link.a == u && link.b == v) || (link.a == v && link.b == u)
        });
        let mut sorted = self.nodes.clone();
        sorted.sort();
        sorted.dedup();
        joined && sorted.len() == self.nodes.len()
    }

    pub fn node_names<'t>(&self, topology: &'t PhysicalTopology) -> Vec<&'t str> {
        self.nodes.iter().map(|&n| topology.name(n)).collect()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("packet size must be positive")]
    ZeroSize,
    #[error("channel bandwidth must be positive")]
    ZeroBandwidth,
    #[error("no route between '{src}' and '{dst}'")]
    NoRoute { src: String, dst: String },
    #[error("endpoint {0} is not placed on any node")]
    UnknownEndpoint(Endpoint),
    #[error("flow source and destination are the same endpoint")]
    SameEndpoint,
}
