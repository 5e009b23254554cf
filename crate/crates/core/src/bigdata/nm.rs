use std::collections::BTreeMap;

use super::{ExecuteTask, FinishedTask, SharedVms, COMPLETION_EPSILON_MI};
use crate::energy::{host_power, PowerModel, PowerTrack};
use crate::ids::TaskId;
use crate::kernel::{Context, Entity, EntityError, EntityId, EventTag, SimEvent, SimTime};
use crate::msg::Msg;
use crate::topology::{HostSpec, NodeIx};

/// Host usage reported to the resource manager.
#[derive(Clone, Debug, PartialEq)]
pub struct UtilizationRecord {
    pub host: NodeIx,
    pub used_mips: f64,
    pub used_ram_mb: u64,
    pub time: SimTime,
}

/// Per-host daemon: runs the tasks of the VMs placed on its host, reports
/// usage to the resource manager and tracks the host's power draw.
pub struct NodeManager {
    name: String,
    host: NodeIx,
    spec: HostSpec,
    registry: SharedVms,
    rm: EntityId,
    heartbeat_interval: f64,
    generation: u64,
    owners: BTreeMap<TaskId, EntityId>,
    power: PowerModel,
    track: PowerTrack,
    shut_down: bool,
    heartbeats: u64,
}

impl NodeManager {
    pub fn new(
        host: NodeIx,
        spec: HostSpec,
        registry: SharedVms,
        rm: EntityId,
        heartbeat_interval: f64,
        power: PowerModel,
    ) -> Self {
        let idle = host_power(0.0, &power).expect("zero utilization is in range");
        Self {
            name: format!("nm-{}", spec.name),
            host,
            spec,
            registry,
            rm,
            heartbeat_interval,
            generation: 0,
            owners: BTreeMap::new(),
            power,
            track: PowerTrack::new(idle, false),
            shut_down: false,
            heartbeats: 0,
        }
    }

    pub fn host(&self) -> NodeIx {
        self.host
    }

    pub fn host_name(&self) -> &str {
        &self.spec.name
    }

    pub fn power_track(&self) -> &PowerTrack {
        &self.track
    }

    pub fn heartbeats_sent(&self) -> u64 {
        self.heartbeats
    }

    pub fn used_mips(&self) -> f64 {
        let registry = self.registry.borrow();
        registry
            .on_host(self.host)
            .into_iter()
            .filter_map(|vm| registry.get(vm))
            .map(|vm| vm.scheduler.used_mips())
            .sum()
    }

    /// Brings every VM on the host to the current time, reports finished
    /// tasks, refreshes the power level and re-arms the progress wake-up.
    fn sync(&mut self, ctx: &mut Context<Msg>, extra: Option<ExecuteTask>) -> Result<(), EntityError> {
        let now = ctx.now();
        let mut finished = Vec::new();
        let mut next: Option<SimTime> = None;
        {
            let mut registry = self.registry.borrow_mut();
            for id in registry.on_host(self.host) {
                let vm = registry.get_mut(id).expect("listed VM exists");
                for (task, start, end) in vm.scheduler.advance(now) {
                    finished.push(FinishedTask {
                        task,
                        vm: id,
                        start,
                        end,
                    });
                }
            }
            if let Some(x) = extra {
                if x.length_mi <= COMPLETION_EPSILON_MI {
                    finished.push(FinishedTask {
                        task: x.task,
                        vm: x.vm,
                        start: now,
                        end: now,
                    });
                    self.owners.insert(x.task, x.reply_to);
                } else {
                    let vm = registry
                        .get_mut(x.vm)
                        .filter(|vm| vm.host == self.host)
                        .ok_or_else(|| format!("{} is not placed on {}", x.vm, self.spec.name))?;
                    vm.scheduler.submit(x.task, x.length_mi, now);
                    self.owners.insert(x.task, x.reply_to);
                }
            }
            for id in registry.on_host(self.host) {
                if let Some(t) = registry.get(id).and_then(|vm| vm.scheduler.next_completion()) {
                    next = Some(next.map_or(t, |n| n.min(t)));
                }
            }
        }
        for done in finished {
            let owner = self.owners.remove(&done.task).unwrap_or(EntityId::EXTERNAL);
            if owner != EntityId::EXTERNAL {
                ctx.send(owner, 0.0, Msg::TaskDone(done))?;
            }
        }
        let u = (self.used_mips() / self.spec.total_mips()).clamp(0.0, 1.0);
        self.track.record(now, host_power(u, &self.power)?, u > 0.0);

        self.generation += 1;
        if let Some(at) = next {
            ctx.send_at(
                ctx.self_id(),
                at,
                Msg::NodeTick {
                    generation: self.generation,
                },
            )?;
        }
        Ok(())
    }
}

impl Entity<Msg> for NodeManager {
    fn name(&self) -> &str {
        &self.name
    }

    fn handle(&mut self, event: SimEvent<Msg>, ctx: &mut Context<Msg>) -> Result<(), EntityError> {
        match event.payload {
            Msg::ExecuteTask(x) => self.sync(ctx, Some(x)),
            Msg::NodeTick { generation } if generation == self.generation => self.sync(ctx, None),
            Msg::NodeTick { .. } => Ok(()),
            Msg::Heartbeat => {
                if self.shut_down {
                    return Ok(());
                }
                let used_ram_mb = self.registry.borrow().used_on_host(self.host).1;
                let record = UtilizationRecord {
                    host: self.host,
                    used_mips: self.used_mips(),
                    used_ram_mb,
                    time: ctx.now(),
                };
                self.heartbeats += 1;
                ctx.send(self.rm, 0.0, Msg::HeartbeatReport(record))?;
                ctx.send(ctx.self_id(), self.heartbeat_interval, Msg::Heartbeat)?;
                Ok(())
            }
            Msg::Shutdown => {
                self.shut_down = true;
                Ok(())
            }
            other => Err(format!("node manager cannot handle {}", other.tag()).into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::bigdata::{ResourceManager, SchedulerKind, VmAllocation, VmRegistry, VmSpec};
    use crate::ids::{JobId, VmId};
    use crate::kernel::Simulation;
    use crate::topology::ThreeTier;

    #[derive(Default)]
    struct Inbox {
        done: Vec<FinishedTask>,
    }

    impl Entity<Msg> for Inbox {
        fn name(&self) -> &str {
            "inbox"
        }

        fn handle(&mut self, event: SimEvent<Msg>, _ctx: &mut Context<Msg>) -> Result<(), EntityError> {
            if let Msg::TaskDone(d) = event.payload {
                self.done.push(d);
            }
            Ok(())
        }
    }

    struct Rig {
        sim: Simulation<Msg>,
        rm: EntityId,
        nm: EntityId,
        owner: EntityId,
        vm: VmId,
    }

    fn rig() -> Rig {
        let topo = Arc::new(ThreeTier::with_shape(1, 1, 1, 2).build().unwrap());
        let registry = VmRegistry::shared();
        let (host, spec) = topo.hosts().next().map(|(ix, s)| (ix, s.clone())).unwrap();
        let vm = registry
            .borrow_mut()
            .create(host, VmSpec::EVALUATION, SchedulerKind::TimeShared);
        let mut sim = Simulation::new(0);
        let owner = sim.add_entity(Inbox::default());
        let nm_id = EntityId::new(2);
        let rm = sim.add_entity(ResourceManager::new(
            topo,
            registry.clone(),
            owner,
            VmAllocation::FirstFit,
            1,
            vec![nm_id],
        ));
        let nm = sim.add_entity(NodeManager::new(host, spec, registry, rm, 1.0, PowerModel::default()));
        assert_eq!(nm, nm_id);
        Rig { sim, rm, nm, owner, vm }
    }

    fn at(t: f64, dst: EntityId, msg: Msg) -> SimEvent<Msg> {
        SimEvent::new(SimTime::from_secs(t), EntityId::EXTERNAL, dst, msg)
    }

    fn exec(r: &Rig, i: u32, mi: f64) -> Msg {
        Msg::ExecuteTask(ExecuteTask {
            task: crate::ids::TaskId::map(JobId(1), i),
            vm: r.vm,
            length_mi: mi,
            reply_to: r.owner,
        })
    }

    #[test]
    fn ten_heartbeats_over_ten_seconds() {
        let mut r = rig();
        r.sim.schedule(at(1.0, r.nm, Msg::Heartbeat)).unwrap();
        r.sim.schedule(at(10.5, r.rm, Msg::ApplicationFinished)).unwrap();
        r.sim.run(None).unwrap();
        let ledger = r.sim.entity::<ResourceManager>(r.rm).unwrap().ledger();
        assert_eq!(ledger.len(), 10);
        assert!(ledger.iter().all(|rec| rec.used_mips == 0.0));
    }

    #[test]
    fn heartbeat_reports_task_shares() {
        let mut r = rig();
        let (a, b) = (exec(&r, 0, 50_000.0), exec(&r, 1, 50_000.0));
        r.sim.schedule(at(0.0, r.nm, a)).unwrap();
        r.sim.schedule(at(0.0, r.nm, b)).unwrap();
        r.sim.schedule(at(1.0, r.nm, Msg::Heartbeat)).unwrap();
        r.sim.schedule(at(2.5, r.rm, Msg::ApplicationFinished)).unwrap();
        r.sim.run(None).unwrap();
        let ledger = r.sim.entity::<ResourceManager>(r.rm).unwrap().ledger();
        // two tasks sharing 5000 MIPS
        assert_eq!(ledger[0].used_mips, 2500.0 + 2500.0);
        assert_eq!(ledger[0].used_ram_mb, 8192);
        let done = &r.sim.entity::<Inbox>(r.owner).unwrap().done;
        assert_eq!(done.iter().map(|d| d.end.secs()).collect::<Vec<_>>(), [20.0, 20.0]);
        // 5000 of 80000 MIPS busy for 20 s
        let track = r.sim.entity::<NodeManager>(r.nm).unwrap().power_track();
        let iv = track.intervals(SimTime::from_secs(30.0));
        assert_eq!(iv.len(), 2);
        assert_eq!(iv[0].power_w, 100.0 + 150.0 * 5000.0 / 80_000.0);
        assert_eq!(iv[1].power_w, 0.0);
    }

    #[test]
    fn zero_length_task_finishes_immediately() {
        let mut r = rig();
        let x = exec(&r, 0, 0.0);
        r.sim.schedule(at(3.0, r.nm, x)).unwrap();
        r.sim.run(None).unwrap();
        let done = &r.sim.entity::<Inbox>(r.owner).unwrap().done;
        assert_eq!((done[0].start.secs(), done[0].end.secs()), (3.0, 3.0));
    }
}
