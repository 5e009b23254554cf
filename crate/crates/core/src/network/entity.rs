use std::collections::BTreeMap;

use super::{Controller, Flow, PacketRecord};
use crate::energy::{switch_power, PowerModel, PowerTrack};
use crate::ids::PacketId;
use crate::kernel::{Context, Entity, EntityError, EntityId, SimEvent, SimTime};
use crate::msg::Msg;
use crate::topology::NodeIx;

#[derive(Clone, Debug, PartialEq)]
pub struct TransmitRequest {
    pub flow: Flow,
    pub size_bits: f64,
    pub reply_to: EntityId,
}

/// Notice sent to the requester once a packet has fully arrived.
#[derive(Clone, Debug, PartialEq)]
pub struct Delivery {
    pub packet: PacketId,
    pub flow: Flow,
    pub size_bits: f64,
    pub start: SimTime,
    pub finish: SimTime,
}

impl Delivery {
    fn of(record: &PacketRecord) -> Self {
        Self {
            packet: record.id,
            flow: record.flow,
            size_bits: record.size_bits,
            start: record.start,
            finish: record.finish,
        }
    }
}

struct SwitchState {
    node: NodeIx,
    active_ports: usize,
    track: PowerTrack,
}

/// Event-driven wrapper around [`Controller`]. Keeps one pending wake-up
/// at the earliest finish time; older wake-ups are recognised by their
/// generation number and dropped.
pub struct ControllerEntity {
    name: String,
    controller: Controller,
    generation: u64,
    delivered: usize,
    reply_to: BTreeMap<PacketId, EntityId>,
    switches: Vec<SwitchState>,
    power: PowerModel,
    wakeups: u64,
}

impl ControllerEntity {
    pub fn new(name: impl Into<String>, controller: Controller, power: PowerModel) -> Self {
        let switches = controller
            .topology()
            .switches()
            .map(|node| SwitchState {
                node,
                active_ports: 0,
                track: PowerTrack::new(switch_power(0, &power), false),
            })
            .collect();
        Self {
            name: name.into(),
            controller,
            generation: 0,
            delivered: 0,
            reply_to: BTreeMap::new(),
            switches,
            power,
            wakeups: 0,
        }
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn switch_tracks(&self) -> impl Iterator<Item = (NodeIx, &PowerTrack)> {
        self.switches.iter().map(|s| (s.node, &s.track))
    }

    /// Wake-ups that were still current when they fired.
    pub fn wakeups(&self) -> u64 {
        self.wakeups
    }

    fn settle(&mut self, ctx: &mut Context<Msg>) -> Result<(), EntityError> {
        let now = ctx.now();
        for record in &self.controller.completed()[self.delivered..] {
            let to = self.reply_to.remove(&record.id).unwrap_or(EntityId::EXTERNAL);
            if to != EntityId::EXTERNAL {
                ctx.send(to, 0.0, Msg::PacketDelivered(Delivery::of(record)))?;
            }
        }
        self.delivered = self.controller.completed().len();

        let topology = self.controller.topology().clone();
        let load = self.controller.link_channels();
        for sw in &mut self.switches {
            let ports = topology
                .neighbors(sw.node)
                .iter()
                .filter(|(_, l)| load[l.0] > 0)
                .count();
            if ports != sw.active_ports {
                sw.active_ports = ports;
                sw.track.record(now, switch_power(ports, &self.power), ports > 0);
            }
        }

        self.generation += 1;
        if let Some(at) = self.controller.earliest_finish_time() {
            ctx.send_at(
                ctx.self_id(),
                at,
                Msg::ControllerTick {
                    generation: self.generation,
                },
            )?;
        }
        Ok(())
    }
}

impl Entity<Msg> for ControllerEntity {
    fn name(&self) -> &str {
        &self.name
    }

    fn handle(&mut self, event: SimEvent<Msg>, ctx: &mut Context<Msg>) -> Result<(), EntityError> {
        match event.payload {
            Msg::TransmitPacket(req) => {
                let id = self
                    .controller
                    .transmit_packet(ctx.now(), req.flow, req.size_bits, ctx.rng())?;
                self.reply_to.insert(id, req.reply_to);
                self.settle(ctx)
            }
            Msg::ControllerTick { generation } => {
                if generation != self.generation {
                    return Ok(());
                }
                self.wakeups += 1;
                self.controller.update_progress(ctx.now());
                self.controller.reallocate_bandwidth();
                self.settle(ctx)
            }
            Msg::VmPlaced { vm, host } => {
                self.controller.register_endpoint(super::Endpoint::Vm(vm), host);
                Ok(())
            }
            other => Err(format!("controller cannot handle {}", crate::kernel::EventTag::tag(&other)).into()),
        }
    }
}
