use std::cell::RefCell;
use std::collections::{BTreeMap, VecDeque};
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::ids::{TaskId, VmId};
use crate::kernel::SimTime;
use crate::topology::NodeIx;

/// Remaining length at or below which a task counts as finished.
pub const COMPLETION_EPSILON_MI: f64 = 1e-9;
const COMPLETION_EPSILON_SECS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VmSpec {
    pub pes: u32,
    pub mips_per_pe: f64,
    pub ram_mb: u64,
}

impl VmSpec {
    /// 4 CPUs at 1250 MIPS with 8 GB RAM.
    pub const EVALUATION: VmSpec = VmSpec {
        pes: 4,
        mips_per_pe: 1250.0,
        ram_mb: 8 * 1024,
    };

    pub fn total_mips(&self) -> f64 {
        f64::from(self.pes) * self.mips_per_pe
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    #[default]
    TimeShared,
    SpaceShared,
}

impl SchedulerKind {
    pub fn build(self, spec: &VmSpec) -> Box<dyn VmScheduler> {
        match self {
            SchedulerKind::TimeShared => Box::new(TimeShared::new(spec)),
            SchedulerKind::SpaceShared => Box::new(SpaceShared::new(spec)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FinishedTask {
    pub task: TaskId,
    pub vm: VmId,
    pub start: SimTime,
    pub end: SimTime,
}

/// Execution of tasks inside one VM.
pub trait VmScheduler {
    fn name(&self) -> &'static str;

    /// Adds a task at `now`. The scheduler must already be advanced to `now`.
    fn submit(&mut self, task: TaskId, length_mi: f64, now: SimTime);

    /// Runs every task forward to `now`, returning those that finished as
    /// `(task, start, end)` in completion order.
    fn advance(&mut self, now: SimTime) -> Vec<(TaskId, SimTime, SimTime)>;

    fn next_completion(&self) -> Option<SimTime>;

    /// Current rate in MIPS of every executing task.
    fn rates(&self) -> Vec<(TaskId, f64)>;

    /// Length still to execute for `task` as of `now`, if the VM holds it.
    fn remaining_at(&self, task: TaskId, now: SimTime) -> Option<f64>;

    fn task_count(&self) -> usize;

    fn used_mips(&self) -> f64 {
        self.rates().iter().map(|(_, r)| r).sum()
    }
}

#[derive(Clone, Debug)]
struct Running {
    task: TaskId,
    remaining: f64,
    start: SimTime,
}

/// Shared bookkeeping: a run set limited to `slots` tasks, a FIFO of
/// waiting tasks and a per-task rate depending on the run set size.
#[derive(Clone, Debug)]
struct Core {
    clock: SimTime,
    running: Vec<Running>,
    waiting: VecDeque<(TaskId, f64)>,
    slots: usize,
}

impl Core {
    fn new(slots: usize) -> Self {
        Self {
            clock: SimTime::ZERO,
            running: Vec::new(),
            waiting: VecDeque::new(),
            slots,
        }
    }

    fn submit(&mut self, task: TaskId, length_mi: f64, now: SimTime) {
        debug_assert!(now >= self.clock);
        if self.running.is_empty() && self.waiting.is_empty() {
            self.clock = self.clock.max(now);
        }
        debug_assert_eq!(self.clock, now, "submit on a scheduler that was not advanced");
        self.waiting.push_back((task, length_mi));
        self.promote();
    }

    fn promote(&mut self) {
        while self.running.len() < self.slots {
            let Some((task, remaining)) = self.waiting.pop_front() else {
                break;
            };
            self.running.push(Running {
                task,
                remaining,
                start: self.clock,
            });
        }
    }

    fn next_completion(&self, rate: impl Fn(usize) -> f64) -> Option<SimTime> {
        if self.running.is_empty() {
            return None;
        }
        let r = rate(self.running.len());
        let dt = self.running.iter().map(|t| t.remaining / r).min_by(f64::total_cmp)?;
        Some(self.clock.after(dt))
    }

    fn step(&mut self, to: SimTime, r: f64, done: &mut Vec<(TaskId, SimTime, SimTime)>) {
        let dt = to.since(self.clock);
        self.clock = to;
        for t in &mut self.running {
            t.remaining = (t.remaining - r * dt).max(0.0);
        }
        let clock = self.clock;
        self.running.retain(|t| {
            let finished = t.remaining <= COMPLETION_EPSILON_MI || t.remaining <= r * COMPLETION_EPSILON_SECS;
            if finished {
                done.push((t.task, t.start, clock));
            }
            !finished
        });
    }

    fn advance(&mut self, now: SimTime, rate: impl Fn(usize) -> f64) -> Vec<(TaskId, SimTime, SimTime)> {
        let mut done = Vec::new();
        if now < self.clock {
            return done;
        }
        loop {
            self.promote();
            if self.running.is_empty() {
                self.clock = now;
                break;
            }
            let r = rate(self.running.len());
            let next = self.next_completion(&rate).expect("running tasks");
            if next <= now {
                self.step(next, r, &mut done);
            } else {
                self.step(now, r, &mut done);
                self.promote();
                break;
            }
        }
        done
    }

    fn remaining_at(&self, task: TaskId, now: SimTime, rate: impl Fn(usize) -> f64) -> Option<f64> {
        let mut probe = self.clone();
        probe.advance(now, rate);
        probe
            .running
            .iter()
            .find(|t| t.task == task)
            .map(|t| t.remaining)
            .or_else(|| probe.waiting.iter().find(|w| w.0 == task).map(|w| w.1))
    }

    fn len(&self) -> usize {
        self.running.len() + self.waiting.len()
    }
}

/// All tasks run at once and split the VM's total capacity equally.
#[derive(Clone, Debug)]
pub struct TimeShared {
    capacity_mips: f64,
    core: Core,
}

impl TimeShared {
    pub fn new(spec: &VmSpec) -> Self {
        Self {
            capacity_mips: spec.total_mips(),
            core: Core::new(usize::MAX),
        }
    }

    fn rate(&self) -> impl Fn(usize) -> f64 {
        let c = self.capacity_mips;
        move |n| c / n as f64
    }
}

impl VmScheduler for TimeShared {
    fn name(&self) -> &'static str {
        "time_shared"
    }

    fn submit(&mut self, task: TaskId, length_mi: f64, now: SimTime) {
        self.core.submit(task, length_mi, now);
    }

    fn advance(&mut self, now: SimTime) -> Vec<(TaskId, SimTime, SimTime)> {
        let rate = self.rate();
        self.core.advance(now, rate)
    }

    fn next_completion(&self) -> Option<SimTime> {
        self.core.next_completion(self.rate())
    }

    fn rates(&self) -> Vec<(TaskId, f64)> {
        let n = self.core.running.len();
        self.core.running.iter().map(|t| (t.task, self.rate()(n))).collect()
    }

    fn remaining_at(&self, task: TaskId, now: SimTime) -> Option<f64> {
        self.core.remaining_at(task, now, self.rate())
    }

    fn task_count(&self) -> usize {
        self.core.len()
    }
}

/// One task per PE at the per-PE rate; surplus tasks wait in FIFO order.
#[derive(Clone, Debug)]
pub struct SpaceShared {
    mips_per_pe: f64,
    core: Core,
}

impl SpaceShared {
    pub fn new(spec: &VmSpec) -> Self {
        Self {
            mips_per_pe: spec.mips_per_pe,
            core: Core::new(spec.pes as usize),
        }
    }

    fn rate(&self) -> impl Fn(usize) -> f64 {
        let m = self.mips_per_pe;
        move |_| m
    }
}

impl VmScheduler for SpaceShared {
    fn name(&self) -> &'static str {
        "space_shared"
    }

    fn submit(&mut self, task: TaskId, length_mi: f64, now: SimTime) {
        self.core.submit(task, length_mi, now);
    }

    fn advance(&mut self, now: SimTime) -> Vec<(TaskId, SimTime, SimTime)> {
        let rate = self.rate();
        self.core.advance(now, rate)
    }

    fn next_completion(&self) -> Option<SimTime> {
        self.core.next_completion(self.rate())
    }

    fn rates(&self) -> Vec<(TaskId, f64)> {
        self.core.running.iter().map(|t| (t.task, self.mips_per_pe)).collect()
    }

    fn remaining_at(&self, task: TaskId, now: SimTime) -> Option<f64> {
        self.core.remaining_at(task, now, self.rate())
    }

    fn task_count(&self) -> usize {
        self.core.len()
    }
}

pub struct Vm {
    pub id: VmId,
    pub host: NodeIx,
    pub spec: VmSpec,
    pub scheduler: Box<dyn VmScheduler>,
}

/// Every VM in the cluster, shared by the entities of one run.
#[derive(Default)]
pub struct VmRegistry {
    vms: BTreeMap<VmId, Vm>,
    next_id: u32,
}

pub type SharedVms = Rc<RefCell<VmRegistry>>;

impl VmRegistry {
    pub fn shared() -> SharedVms {
        Rc::new(RefCell::new(Self::default()))
    }

    /// Creates a VM on `host`; ids are handed out from 1 upwards.
    pub fn create(&mut self, host: NodeIx, spec: VmSpec, scheduler: SchedulerKind) -> VmId {
        self.next_id += 1;
        let id = VmId(self.next_id);
        self.vms.insert(
            id,
            Vm {
                id,
                host,
                spec,
                scheduler: scheduler.build(&spec),
            },
        );
        id
    }

    pub fn remove(&mut self, id: VmId) -> Option<Vm> {
        self.vms.remove(&id)
    }

    pub fn get(&self, id: VmId) -> Option<&Vm> {
        self.vms.get(&id)
    }

    pub fn get_mut(&mut self, id: VmId) -> Option<&mut Vm> {
        self.vms.get_mut(&id)
    }

    pub fn on_host(&self, host: NodeIx) -> Vec<VmId> {
        self.vms.values().filter(|v| v.host == host).map(|v| v.id).collect()
    }

    /// PEs and RAM taken by VMs on `host`.
    pub fn used_on_host(&self, host: NodeIx) -> (u32, u64) {
        self.vms
            .values()
            .filter(|v| v.host == host)
            .fold((0, 0), |(p, r), v| (p + v.spec.pes, r + v.spec.ram_mb))
    }

    pub fn len(&self) -> usize {
        self.vms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vms.is_empty()
    }
}
