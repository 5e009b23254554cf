use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{BigDataError, SharedVms, UtilizationRecord, VmRequest};
use crate::ids::VmId;
use crate::kernel::{Context, Entity, EntityError, EntityId, EventTag, SimEvent, SimTime};
use crate::msg::Msg;
use crate::topology::{NodeIx, PhysicalTopology};

/// Host choice for new VMs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VmAllocation {
    /// First host in declaration order with room left.
    #[default]
    FirstFit,
    /// Host holding the fewest VMs, declaration order on ties.
    Spread,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grant {
    pub time: SimTime,
    pub to: EntityId,
    pub vms: Vec<VmId>,
}

/// Cluster-wide VM allocator. Requests are served first come first
/// served; a request that does not fit blocks the ones behind it until
/// VMs are released.
pub struct ResourceManager {
    name: String,
    topology: Arc<PhysicalTopology>,
    registry: SharedVms,
    controller: EntityId,
    allocation: VmAllocation,
    queue: VecDeque<VmRequest>,
    expected_apps: usize,
    finished_apps: usize,
    node_managers: Vec<EntityId>,
    ledger: Vec<UtilizationRecord>,
    grants: Vec<Grant>,
}

impl ResourceManager {
    pub fn new(
        topology: Arc<PhysicalTopology>,
        registry: SharedVms,
        controller: EntityId,
        allocation: VmAllocation,
        expected_apps: usize,
        node_managers: Vec<EntityId>,
    ) -> Self {
        Self {
            name: "resource-manager".into(),
            topology,
            registry,
            controller,
            allocation,
            queue: VecDeque::new(),
            expected_apps,
            finished_apps: 0,
            node_managers,
            ledger: Vec::new(),
            grants: Vec::new(),
        }
    }

    /// Heartbeat records in arrival order.
    pub fn ledger(&self) -> &[UtilizationRecord] {
        &self.ledger
    }

    pub fn grants(&self) -> &[Grant] {
        &self.grants
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    /// Hosts for each VM of `req`, or `None` if it does not fit now.
    /// With `empty` the current VMs are ignored.
    fn choose_hosts(&self, req: &VmRequest, empty: bool) -> Option<Vec<NodeIx>> {
        let registry = self.registry.borrow();
        let mut hosts: Vec<(NodeIx, u32, u64, usize, u32, u64, f64)> = self
            .topology
            .hosts()
            .map(|(ix, spec)| {
                let (pes, ram) = if empty { (0, 0) } else { registry.used_on_host(ix) };
                let count = if empty { 0 } else { registry.on_host(ix).len() };
                (ix, pes, ram, count, spec.pes, spec.ram_mb, spec.mips_per_pe)
            })
            .collect();
        let spec = req.spec;
        let mut chosen = Vec::with_capacity(req.count);
        for _ in 0..req.count {
            let fits = |h: &&mut (NodeIx, u32, u64, usize, u32, u64, f64)| {
                h.1 + spec.pes <= h.4 && h.2 + spec.ram_mb <= h.5 && spec.mips_per_pe <= h.6
            };
            let pick = match self.allocation {
                VmAllocation::FirstFit => hosts.iter_mut().find(|h| fits(h)),
                VmAllocation::Spread => hosts.iter_mut().filter(|h| fits(h)).min_by_key(|h| (h.3, h.0)),
            }?;
            pick.1 += spec.pes;
            pick.2 += spec.ram_mb;
            pick.3 += 1;
            chosen.push(pick.0);
        }
        Some(chosen)
    }

    fn drain(&mut self, ctx: &mut Context<Msg>) -> Result<(), EntityError> {
        while let Some(front) = self.queue.front() {
            let Some(hosts) = self.choose_hosts(front, false) else {
                break;
            };
            let req = self.queue.pop_front().expect("front exists");
            let mut vms = Vec::with_capacity(hosts.len());
            for host in hosts {
                let vm = self.registry.borrow_mut().create(host, req.spec, req.scheduler);
                ctx.send(self.controller, 0.0, Msg::VmPlaced { vm, host })?;
                vms.push(vm);
            }
            log::debug!("granted {} VMs to {} at {}", vms.len(), req.reply_to, ctx.now());
            self.grants.push(Grant {
                time: ctx.now(),
                to: req.reply_to,
                vms: vms.clone(),
            });
            ctx.send(req.reply_to, 0.0, Msg::VmGranted { vms })?;
        }
        Ok(())
    }
}

impl Entity<Msg> for ResourceManager {
    fn name(&self) -> &str {
        &self.name
    }

    fn handle(&mut self, event: SimEvent<Msg>, ctx: &mut Context<Msg>) -> Result<(), EntityError> {
        match event.payload {
            Msg::VmRequest(req) => {
                if self.choose_hosts(&req, true).is_none() {
                    return Err(BigDataError::Unsatisfiable { count: req.count }.into());
                }
                self.queue.push_back(req);
                self.drain(ctx)
            }
            Msg::VmRelease { vms } => {
                {
                    let mut registry = self.registry.borrow_mut();
                    for vm in vms {
                        registry.remove(vm);
                    }
                }
                self.drain(ctx)
            }
            Msg::HeartbeatReport(record) => {
                self.ledger.push(record);
                Ok(())
            }
            Msg::ApplicationFinished => {
                self.finished_apps += 1;
                if self.finished_apps >= self.expected_apps {
                    for &nm in &self.node_managers {
                        ctx.send(nm, 0.0, Msg::Shutdown)?;
                    }
                }
                Ok(())
            }
            other => Err(format!("resource manager cannot handle {}", other.tag()).into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bigdata::{SchedulerKind, VmRegistry, VmSpec};
    use crate::kernel::Simulation;
    use crate::topology::ThreeTier;

    #[derive(Default)]
    struct Inbox {
        got: Vec<(f64, Msg)>,
    }

    impl Entity<Msg> for Inbox {
        fn name(&self) -> &str {
            "inbox"
        }

        fn handle(&mut self, event: SimEvent<Msg>, ctx: &mut Context<Msg>) -> Result<(), EntityError> {
            self.got.push((ctx.now().secs(), event.payload));
            Ok(())
        }
    }

    fn request(count: usize, reply_to: EntityId) -> Msg {
        Msg::VmRequest(VmRequest {
            count,
            spec: VmSpec::EVALUATION,
            scheduler: SchedulerKind::TimeShared,
            reply_to,
        })
    }

    fn setup(allocation: VmAllocation) -> (Simulation<Msg>, EntityId, EntityId, EntityId, SharedVms) {
        let topo = Arc::new(ThreeTier::default().build().unwrap());
        let registry = VmRegistry::shared();
        let mut sim = Simulation::new(0);
        let ctl = sim.add_entity(Inbox::default());
        let am = sim.add_entity(Inbox::default());
        let rm = sim.add_entity(ResourceManager::new(topo, registry.clone(), ctl, allocation, 1, vec![]));
        (sim, ctl, am, rm, registry)
    }

    fn at(t: f64, dst: EntityId, msg: Msg) -> SimEvent<Msg> {
        SimEvent::new(SimTime::from_secs(t), EntityId::EXTERNAL, dst, msg)
    }

    #[test]
    fn sixteen_vms_fit_the_evaluation_cluster() {
        let (mut sim, ctl, am, rm, registry) = setup(VmAllocation::FirstFit);
        sim.schedule(at(0.0, rm, request(16, am))).unwrap();
        sim.run(None).unwrap();
        let got = &sim.entity::<Inbox>(am).unwrap().got;
        let Msg::VmGranted { vms } = &got[0].1 else {
            panic!("expected a grant")
        };
        assert_eq!(vms.len(), 16);
        assert_eq!(registry.borrow().len(), 16);
        // two 4-PE VMs per 8-PE host
        let hosts: std::collections::BTreeSet<_> =
            vms.iter().map(|v| registry.borrow().get(*v).unwrap().host).collect();
        assert_eq!(hosts.len(), 8);
        assert_eq!(sim.entity::<Inbox>(ctl).unwrap().got.len(), 16);
    }

    #[test]
    fn spread_uses_one_host_per_vm() {
        let (mut sim, _, am, rm, registry) = setup(VmAllocation::Spread);
        sim.schedule(at(0.0, rm, request(16, am))).unwrap();
        sim.run(None).unwrap();
        let reg = registry.borrow();
        let hosts: std::collections::BTreeSet<_> = (1..=16).map(|v| reg.get(VmId(v)).unwrap().host).collect();
        assert_eq!(hosts.len(), 16);
    }

    #[test]
    fn oversized_request_waits_for_release() {
        let (mut sim, _, am, rm, _) = setup(VmAllocation::FirstFit);
        sim.schedule(at(0.0, rm, request(30, am))).unwrap();
        sim.schedule(at(0.0, rm, request(4, am))).unwrap();
        let first: Vec<VmId> = (1..=30).map(VmId).collect();
        sim.schedule(at(5.0, rm, Msg::VmRelease { vms: first })).unwrap();
        sim.run(None).unwrap();
        let grants = sim.entity::<ResourceManager>(rm).unwrap().grants().to_vec();
        assert_eq!(grants.len(), 2);
        assert_eq!((grants[0].time.secs(), grants[0].vms.len()), (0.0, 30));
        // blocked behind nothing but capacity: 2 VMs left free, 4 requested
        assert_eq!((grants[1].time.secs(), grants[1].vms.len()), (5.0, 4));
    }

    #[test]
    fn impossible_request_is_an_error() {
        let (mut sim, _, am, rm, _) = setup(VmAllocation::FirstFit);
        sim.schedule(at(0.0, rm, request(33, am))).unwrap();
        assert!(sim.run(None).is_err());
    }
}
