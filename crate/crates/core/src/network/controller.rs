use std::collections::BTreeMap;
use std::sync::Arc;

use rand::RngCore;

use super::{
    Endpoint, Flow, ForwardingTables, NetworkError, Route, RouteRequest, RoutingProtocol, RuleMatch, TrafficPolicy,
};
use crate::ids::{ChannelId, PacketId};
use crate::kernel::SimTime;
use crate::topology::{NodeIx, PhysicalTopology};

/// Remaining volume at or below which a packet counts as delivered.
pub const COMPLETION_EPSILON_BITS: f64 = 1e-9;
/// A packet whose remaining transfer time is below this is also delivered;
/// absorbs rounding in finish times computed as `clock + remaining / bw`.
const COMPLETION_EPSILON_SECS: f64 = 1e-9;

/// A stretch of time during which a packet's bandwidth was constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandwidthInterval {
    pub start: SimTime,
    pub end: SimTime,
    pub bandwidth_bps: f64,
}

impl BandwidthInterval {
    pub fn bits(&self) -> f64 {
        self.bandwidth_bps * self.end.since(self.start)
    }
}

#[derive(Clone, Debug)]
pub struct Packet {
    pub id: PacketId,
    pub flow: Flow,
    pub size_bits: f64,
    pub remaining_bits: f64,
    pub start: SimTime,
    pub channel: ChannelId,
    pub route: Route,
    pub bandwidth_bps: f64,
    since: SimTime,
    intervals: Vec<BandwidthInterval>,
}

#[derive(Clone, Debug)]
pub struct Channel {
    pub id: ChannelId,
    pub route: Route,
    pub bandwidth_bps: f64,
    pub packet: PacketId,
    matcher: RuleMatch,
}

/// A delivered packet with its bandwidth history.
#[derive(Clone, Debug, PartialEq)]
pub struct PacketRecord {
    pub id: PacketId,
    pub flow: Flow,
    pub size_bits: f64,
    pub start: SimTime,
    pub finish: SimTime,
    pub route: Route,
    pub intervals: Vec<BandwidthInterval>,
}

impl PacketRecord {
    pub fn duration(&self) -> f64 {
        self.finish.since(self.start)
    }

    /// Integral of allocated bandwidth over the packet's lifetime.
    pub fn transferred_bits(&self) -> f64 {
        self.intervals.iter().map(BandwidthInterval::bits).sum()
    }
}

/// Estimated transmission time of `size_bits` at `bandwidth_bps`.
pub fn transmission_time(size_bits: f64, bandwidth_bps: f64) -> Result<f64, NetworkError> {
    if !(bandwidth_bps > 0.0) {
        return Err(NetworkError::ZeroBandwidth);
    }
    Ok(size_bits / bandwidth_bps)
}

/// Controller state: placement of endpoints, active packets and their
/// channels, forwarding tables and the record of delivered packets.
pub struct Controller {
    topology: Arc<PhysicalTopology>,
    routing: Box<dyn RoutingProtocol>,
    traffic: Box<dyn TrafficPolicy>,
    endpoints: BTreeMap<Endpoint, NodeIx>,
    packets: BTreeMap<PacketId, Packet>,
    channels: BTreeMap<ChannelId, Channel>,
    link_channels: Vec<u32>,
    tables: ForwardingTables,
    clock: SimTime,
    next_packet: u64,
    next_channel: u64,
    completed: Vec<PacketRecord>,
}

impl Controller {
    pub fn new(
        topology: Arc<PhysicalTopology>,
        routing: Box<dyn RoutingProtocol>,
        traffic: Box<dyn TrafficPolicy>,
    ) -> Self {
        let links = topology.link_count();
        let mut endpoints = BTreeMap::new();
        if let Some(san) = topology.storage() {
            endpoints.insert(Endpoint::Storage, san);
        }
        Self {
            topology,
            routing,
            traffic,
            endpoints,
            packets: BTreeMap::new(),
            channels: BTreeMap::new(),
            link_channels: vec![0; links],
            tables: ForwardingTables::default(),
            clock: SimTime::ZERO,
            next_packet: 0,
            next_channel: 0,
            completed: Vec::new(),
        }
    }

    pub fn topology(&self) -> &Arc<PhysicalTopology> {
        &self.topology
    }

    pub fn routing(&self) -> &dyn RoutingProtocol {
        self.routing.as_ref()
    }

    pub fn register_endpoint(&mut self, endpoint: Endpoint, node: NodeIx) {
        self.endpoints.insert(endpoint, node);
    }

    pub fn endpoint_node(&self, endpoint: Endpoint) -> Option<NodeIx> {
        self.endpoints.get(&endpoint).copied()
    }

    pub fn clock(&self) -> SimTime {
        self.clock
    }

    /// Admits a packet: advances in-flight packets to `now`, drops finished
    /// ones, routes and installs the new channel, then re-divides
    /// bandwidth. Packets whose endpoints share a node are delivered at
    /// once over a local route.
    pub fn transmit_packet(
        &mut self,
        now: SimTime,
        flow: Flow,
        size_bits: f64,
        rng: &mut dyn RngCore,
    ) -> Result<PacketId, NetworkError> {
        if !(size_bits > 0.0) || !size_bits.is_finite() {
            return Err(NetworkError::ZeroSize);
        }
        if flow.is_loop() {
            return Err(NetworkError::SameEndpoint);
        }
        let src = self
            .endpoint_node(flow.src)
            .ok_or(NetworkError::UnknownEndpoint(flow.src))?;
        let dst = self
            .endpoint_node(flow.dst)
            .ok_or(NetworkError::UnknownEndpoint(flow.dst))?;

        self.update_progress(now);

        let route = {
            let request = RouteRequest {
                topology: &self.topology,
                flow: &flow,
                src,
                dst,
                link_channels: &self.link_channels,
            };
            self.routing.route(&request, rng)?
        };
        debug_assert!(route.is_well_formed(&self.topology));

        let id = PacketId(self.next_packet);
        self.next_packet += 1;

        if route.hops() == 0 {
            self.completed.push(PacketRecord {
                id,
                flow,
                size_bits,
                start: now,
                finish: now,
                route,
                intervals: Vec::new(),
            });
        } else {
            let channel = ChannelId(self.next_channel);
            self.next_channel += 1;
            let matcher = self.routing.rule_match(&flow, id);
            self.tables.install(&route, matcher);
            for l in &route.links {
                self.link_channels[l.0] += 1;
            }
            self.channels.insert(
                channel,
                Channel {
                    id: channel,
                    route: route.clone(),
                    bandwidth_bps: 0.0,
                    packet: id,
                    matcher,
                },
            );
            self.packets.insert(
                id,
                Packet {
                    id,
                    flow,
                    size_bits,
                    remaining_bits: size_bits,
                    start: now,
                    channel,
                    route,
                    bandwidth_bps: 0.0,
                    since: now,
                    intervals: Vec::new(),
                },
            );
        }
        self.reallocate_bandwidth();
        Ok(id)
    }

    /// Moves every active packet forward to `at` and retires those that
    /// finished, along with their channels and forwarding rules.
    pub fn update_progress(&mut self, at: SimTime) -> Vec<PacketId> {
        debug_assert!(at >= self.clock, "progress update moves backwards");
        let at = at.max(self.clock);
        let dt = at.since(self.clock);
        let mut done = Vec::new();
        for packet in self.packets.values_mut() {
            packet.remaining_bits = (packet.remaining_bits - packet.bandwidth_bps * dt).max(0.0);
            if packet.remaining_bits <= COMPLETION_EPSILON_BITS
                || packet.remaining_bits <= packet.bandwidth_bps * COMPLETION_EPSILON_SECS
            {
                done.push(packet.id);
            }
        }
        self.clock = at;
        for id in &done {
            let mut packet = self.packets.remove(id).expect("completed packet is active");
            let channel = self.channels.remove(&packet.channel).expect("packet has a channel");
            for l in &channel.route.links {
                self.link_channels[l.0] -= 1;
            }
            self.tables.remove(&channel.route, channel.matcher);
            close_interval(&mut packet, at);
            self.completed.push(PacketRecord {
                id: packet.id,
                flow: packet.flow,
                size_bits: packet.size_bits,
                start: packet.start,
                finish: at,
                route: packet.route,
                intervals: packet.intervals,
            });
        }
        done
    }

    /// Applies the traffic policy to all channels at the current clock.
    pub fn reallocate_bandwidth(&mut self) -> BTreeMap<ChannelId, f64> {
        let allocation = {
            let routes: Vec<(ChannelId, &Route)> = self.channels.values().map(|c| (c.id, &c.route)).collect();
            self.traffic.allocate(&self.topology, &routes)
        };
        for (&id, &bw) in &allocation {
            let channel = self.channels.get_mut(&id).expect("allocated channel exists");
            channel.bandwidth_bps = bw;
            let packet = self.packets.get_mut(&channel.packet).expect("channel carries a packet");
            if packet.bandwidth_bps != bw {
                close_interval(packet, self.clock);
                packet.bandwidth_bps = bw;
            }
        }
        allocation
    }

    /// Clock plus the smallest remaining / bandwidth over active packets.
    pub fn earliest_finish_time(&self) -> Option<SimTime> {
        self.packets
            .values()
            .filter(|p| p.bandwidth_bps > 0.0)
            .map(|p| p.remaining_bits / p.bandwidth_bps)
            .min_by(f64::total_cmp)
            .map(|dt| self.clock.after(dt))
    }

    pub fn packet(&self, id: PacketId) -> Option<&Packet> {
        self.packets.get(&id)
    }

    pub fn active_packets(&self) -> impl Iterator<Item = &Packet> {
        self.packets.values()
    }

    pub fn channels(&self) -> impl Iterator<Item = &Channel> {
        self.channels.values()
    }

    /// Channels currently crossing each link, indexed by link.
    pub fn link_channels(&self) -> &[u32] {
        &self.link_channels
    }

    pub fn forwarding_tables(&self) -> &ForwardingTables {
        &self.tables
    }

    pub fn rule_match_of(&self, channel: &Channel) -> RuleMatch {
        channel.matcher
    }

    /// All delivered packets in completion order.
    pub fn completed(&self) -> &[PacketRecord] {
        &self.completed
    }
}

fn close_interval(packet: &mut Packet, at: SimTime) {
    if at > packet.since && packet.bandwidth_bps > 0.0 {
        packet.intervals.push(BandwidthInterval {
            start: packet.since,
            end: at,
            bandwidth_bps: packet.bandwidth_bps,
        });
    }
    packet.since = at;
}
