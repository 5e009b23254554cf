use std::collections::BTreeMap;

use super::{
    BigDataError, BigDataTask, ExecuteTask, FinishedTask, Job, JobMetrics, JobSelection, Legs, QueuedJob,
    SchedulerKind, SharedVms, SizingOptions, TaskPlacement, TaskPlan, TaskState, VmRequest, VmSpec,
};
use crate::ids::{JobId, TaskId, TaskKind, VmId};
use crate::kernel::{Context, Entity, EntityError, EntityId, EventTag, SimEvent, SimTime};
use crate::msg::Msg;
use crate::network::{Delivery, Endpoint, Flow, TransmitRequest};
use crate::topology::NodeIx;

#[derive(Clone, Debug, PartialEq)]
pub struct AmConfig {
    pub vm_count: usize,
    pub vm_spec: VmSpec,
    pub scheduler: SchedulerKind,
    pub sizing: SizingOptions,
    /// Upper bound on tasks in flight; `None` is unlimited.
    pub task_slots: Option<usize>,
}

/// Outcome of one finished job.
#[derive(Clone, Debug, PartialEq)]
pub struct JobRecord {
    pub job: Job,
    pub metrics: JobMetrics,
    pub legs: Legs,
    pub tasks: Vec<BigDataTask>,
}

struct JobRun {
    job: Job,
    plan: TaskPlan,
    start: SimTime,
    tasks: BTreeMap<TaskId, BigDataTask>,
    legs: Legs,
    /// Shuffle packets a mapper still has in flight.
    outgoing: BTreeMap<TaskId, u32>,
    /// Mapper inputs a reducer is still waiting for.
    incoming: BTreeMap<TaskId, u32>,
}

impl JobRun {
    fn task(&mut self, id: TaskId) -> Result<&mut BigDataTask, EntityError> {
        self.tasks
            .get_mut(&id)
            .ok_or_else(|| format!("unknown task {id}").into())
    }

    fn vm_of(&self, id: TaskId) -> VmId {
        self.tasks[&id].vm.expect("tasks are placed when the job starts")
    }

    fn is_done(&self) -> bool {
        self.tasks.values().all(|t| t.state == TaskState::Done)
    }
}

pub struct Peers {
    pub rm: EntityId,
    pub san: EntityId,
    pub controller: EntityId,
    pub node_managers: BTreeMap<NodeIx, EntityId>,
}

/// Per-application orchestrator: leases VMs, starts jobs in policy order,
/// places their tasks and drives each job through storage read, map,
/// shuffle, reduce and storage write.
pub struct ApplicationMaster {
    name: String,
    app: u32,
    peers: Peers,
    registry: SharedVms,
    config: AmConfig,
    selection: Box<dyn JobSelection>,
    placement: Box<dyn TaskPlacement>,
    pending: BTreeMap<JobId, Job>,
    queue: Vec<QueuedJob>,
    leases: Vec<VmId>,
    active: BTreeMap<JobId, JobRun>,
    active_tasks: usize,
    total_jobs: usize,
    records: Vec<JobRecord>,
    finished_at: Option<SimTime>,
}

impl ApplicationMaster {
    pub fn new(
        app: u32,
        peers: Peers,
        registry: SharedVms,
        config: AmConfig,
        selection: Box<dyn JobSelection>,
        placement: Box<dyn TaskPlacement>,
        jobs: Vec<Job>,
    ) -> Result<Self, BigDataError> {
        let mut pending = BTreeMap::new();
        for job in jobs {
            TaskPlan::new(&job, &config.sizing)?;
            let id = job.id;
            if pending.insert(id, job).is_some() {
                return Err(BigDataError::DuplicateJob(id));
            }
        }
        Ok(Self {
            name: format!("am-{app}"),
            app,
            peers,
            registry,
            config,
            selection,
            placement,
            total_jobs: pending.len(),
            pending,
            queue: Vec::new(),
            leases: Vec::new(),
            active: BTreeMap::new(),
            active_tasks: 0,
            records: Vec::new(),
            finished_at: None,
        })
    }

    /// Finished jobs in completion order.
    pub fn records(&self) -> &[JobRecord] {
        &self.records
    }

    pub fn finished_at(&self) -> Option<SimTime> {
        self.finished_at
    }

    pub fn leases(&self) -> &[VmId] {
        &self.leases
    }

    /// Outstanding MI per leased VM: tasks waiting for data count in full,
    /// executing ones by what the VM still has to run.
    fn loads(&self, now: SimTime) -> BTreeMap<VmId, f64> {
        let registry = self.registry.borrow();
        let mut loads: BTreeMap<VmId, f64> = self.leases.iter().map(|&v| (v, 0.0)).collect();
        for run in self.active.values() {
            for t in run.tasks.values() {
                let Some(vm) = t.vm else { continue };
                let left = match t.state {
                    TaskState::Pending | TaskState::AwaitingData => t.length_mi,
                    TaskState::Executing => registry
                        .get(vm)
                        .and_then(|v| v.scheduler.remaining_at(t.id, now))
                        .unwrap_or(t.length_mi),
                    TaskState::TransmittingOutput | TaskState::Done => 0.0,
                };
                if let Some(l) = loads.get_mut(&vm) {
                    *l += left;
                }
            }
        }
        loads
    }

    fn dispatch(&mut self, ctx: &mut Context<Msg>) -> Result<(), EntityError> {
        if self.leases.is_empty() {
            return Ok(());
        }
        while !self.queue.is_empty() {
            let i = self.selection.select(&self.queue)?;
            let needed = self.pending[&self.queue[i].id].task_count();
            if let Some(slots) = self.config.task_slots {
                if self.active_tasks > 0 && self.active_tasks + needed > slots {
                    break;
                }
            }
            let q = self.queue.remove(i);
            self.start_job(q.id, ctx)?;
        }
        Ok(())
    }

    fn start_job(&mut self, id: JobId, ctx: &mut Context<Msg>) -> Result<(), EntityError> {
        let now = ctx.now();
        let job = self.pending.remove(&id).expect("queued job is pending");
        let plan = TaskPlan::new(&job, &self.config.sizing)?;
        let nm = job.num_mappers;
        let nr = job.num_reducers;
        let mut tasks = Vec::with_capacity(job.task_count());
        for i in 0..nm {
            tasks.push(BigDataTask::new(
                TaskId::map(id, i),
                self.app,
                plan.map_mi,
                plan.map_input_bits,
                plan.map_output_bits,
            ));
        }
        for j in 0..nr {
            tasks.push(BigDataTask::new(
                TaskId::reduce(id, j),
                self.app,
                plan.reduce_mi,
                plan.shuffle_bits * f64::from(nm),
                plan.reduce_output_bits,
            ));
        }
        let demand: Vec<(TaskId, f64)> = tasks.iter().map(|t| (t.id, t.length_mi)).collect();
        let placed = self.placement.place(&demand, &self.loads(now))?;
        for (t, (tid, vm)) in tasks.iter_mut().zip(placed) {
            debug_assert_eq!(t.id, tid);
            t.vm = Some(vm);
            t.advance_to(TaskState::AwaitingData)?;
        }
        log::debug!("job {id} starts at {now}");
        self.active_tasks += tasks.len();
        let mut run = JobRun {
            plan,
            start: now,
            outgoing: (0..nm).map(|i| (TaskId::map(id, i), 0)).collect(),
            incoming: (0..nr).map(|j| (TaskId::reduce(id, j), nm)).collect(),
            tasks: tasks.into_iter().map(|t| (t.id, t)).collect(),
            legs: Legs::default(),
            job,
        };
        for i in 0..nm {
            let m = TaskId::map(id, i);
            if run.plan.map_input_bits > 0.0 {
                let flow = Flow::new(Endpoint::Storage, Endpoint::Vm(run.vm_of(m)), id).tasks(None, Some(m));
                let req = TransmitRequest {
                    flow,
                    size_bits: run.plan.map_input_bits,
                    reply_to: ctx.self_id(),
                };
                ctx.send(self.peers.san, 0.0, Msg::StorageRead(req))?;
            } else {
                run.legs.storage_to_map.push(0.0);
                self.execute(&mut run, m, ctx)?;
            }
        }
        self.active.insert(id, run);
        Ok(())
    }

    fn execute(&self, run: &mut JobRun, id: TaskId, ctx: &mut Context<Msg>) -> Result<(), EntityError> {
        let task = run.task(id)?;
        task.advance_to(TaskState::Executing)?;
        let vm = task.vm.expect("placed");
        let length_mi = task.length_mi;
        let host = self
            .registry
            .borrow()
            .get(vm)
            .map(|v| v.host)
            .ok_or_else(|| format!("leased {vm} no longer exists"))?;
        let nm = self.peers.node_managers[&host];
        ctx.send(
            nm,
            0.0,
            Msg::ExecuteTask(ExecuteTask {
                task: id,
                vm,
                length_mi,
                reply_to: ctx.self_id(),
            }),
        )?;
        Ok(())
    }

    fn reducer_input(&self, run: &mut JobRun, r: TaskId, ctx: &mut Context<Msg>) -> Result<(), EntityError> {
        let left = run.incoming.get_mut(&r).ok_or_else(|| format!("unknown reducer {r}"))?;
        *left -= 1;
        if *left == 0 {
            self.execute(run, r, ctx)?;
        }
        Ok(())
    }

    fn task_done(&mut self, run: &mut JobRun, id: TaskId) -> Result<(), EntityError> {
        run.task(id)?.advance_to(TaskState::Done)?;
        self.active_tasks -= 1;
        Ok(())
    }

    fn on_task_finished(&mut self, f: FinishedTask, ctx: &mut Context<Msg>) -> Result<(), EntityError> {
        let job = f.task.job;
        let mut run = self
            .active
            .remove(&job)
            .ok_or_else(|| format!("no running job {job}"))?;
        let task = run.task(f.task)?;
        task.exec_start = Some(f.start);
        task.exec_end = Some(f.end);
        task.advance_to(TaskState::TransmittingOutput)?;
        match f.task.kind {
            TaskKind::Map => {
                let src = run.vm_of(f.task);
                let mut sent = 0;
                for j in 0..run.job.num_reducers {
                    let r = TaskId::reduce(job, j);
                    if run.plan.shuffle_bits > 0.0 {
                        let flow =
                            Flow::new(Endpoint::Vm(src), Endpoint::Vm(run.vm_of(r)), job).tasks(Some(f.task), Some(r));
                        ctx.send(
                            self.peers.controller,
                            0.0,
                            Msg::TransmitPacket(TransmitRequest {
                                flow,
                                size_bits: run.plan.shuffle_bits,
                                reply_to: ctx.self_id(),
                            }),
                        )?;
                        sent += 1;
                    } else {
                        run.legs.map_to_reduce.push(0.0);
                        self.reducer_input(&mut run, r, ctx)?;
                    }
                }
                run.outgoing.insert(f.task, sent);
                if sent == 0 {
                    self.task_done(&mut run, f.task)?;
                }
            }
            TaskKind::Reduce => {
                if run.plan.reduce_output_bits > 0.0 {
                    let flow =
                        Flow::new(Endpoint::Vm(run.vm_of(f.task)), Endpoint::Storage, job).tasks(Some(f.task), None);
                    ctx.send(
                        self.peers.san,
                        0.0,
                        Msg::StorageWrite(TransmitRequest {
                            flow,
                            size_bits: run.plan.reduce_output_bits,
                            reply_to: ctx.self_id(),
                        }),
                    )?;
                } else {
                    run.legs.reduce_to_storage.push(0.0);
                    self.task_done(&mut run, f.task)?;
                }
            }
        }
        self.settle(run, ctx)
    }

    fn on_delivery(&mut self, d: Delivery, ctx: &mut Context<Msg>) -> Result<(), EntityError> {
        let job = d.flow.job;
        let mut run = self
            .active
            .remove(&job)
            .ok_or_else(|| format!("no running job {job}"))?;
        let took = d.finish.since(d.start);
        let missing = || format!("packet {} lacks its task ids", d.packet);
        match (d.flow.src, d.flow.dst) {
            (Endpoint::Storage, _) => {
                let m = d.flow.dst_task.ok_or_else(missing)?;
                run.legs.storage_to_map.push(took);
                self.execute(&mut run, m, ctx)?;
            }
            (_, Endpoint::Storage) => {
                let r = d.flow.src_task.ok_or_else(missing)?;
                run.legs.reduce_to_storage.push(took);
                self.task_done(&mut run, r)?;
            }
            _ => {
                let m = d.flow.src_task.ok_or_else(missing)?;
                let r = d.flow.dst_task.ok_or_else(missing)?;
                run.legs.map_to_reduce.push(took);
                let left = run.outgoing.get_mut(&m).ok_or_else(missing)?;
                *left -= 1;
                if *left == 0 {
                    self.task_done(&mut run, m)?;
                }
                self.reducer_input(&mut run, r, ctx)?;
            }
        }
        self.settle(run, ctx)
    }

    /// Puts a running job back, or records it and moves on if it is done.
    fn settle(&mut self, run: JobRun, ctx: &mut Context<Msg>) -> Result<(), EntityError> {
        if !run.is_done() {
            self.active.insert(run.job.id, run);
            return Ok(());
        }
        let now = ctx.now();
        let tasks: Vec<BigDataTask> = run.tasks.into_values().collect();
        let metrics = JobMetrics::compute(&run.legs, &tasks, run.job.submit_time, run.start, now)?;
        log::debug!("job {} done at {now}: j_ct {:.3}", run.job.id, metrics.j_ct);
        self.records.push(JobRecord {
            job: run.job,
            metrics,
            legs: run.legs,
            tasks,
        });
        self.dispatch(ctx)?;
        if self.records.len() == self.total_jobs {
            self.finish(ctx)?;
        }
        Ok(())
    }

    fn finish(&mut self, ctx: &mut Context<Msg>) -> Result<(), EntityError> {
        if !self.leases.is_empty() {
            let vms = std::mem::take(&mut self.leases);
            ctx.send(self.peers.rm, 0.0, Msg::VmRelease { vms })?;
        }
        ctx.send(self.peers.rm, 0.0, Msg::ApplicationFinished)?;
        self.finished_at = Some(ctx.now());
        Ok(())
    }
}

impl Entity<Msg> for ApplicationMaster {
    fn name(&self) -> &str {
        &self.name
    }

    fn handle(&mut self, event: SimEvent<Msg>, ctx: &mut Context<Msg>) -> Result<(), EntityError> {
        match event.payload {
            Msg::AppStart => {
                if self.total_jobs == 0 {
                    return self.finish(ctx);
                }
                ctx.send(
                    self.peers.rm,
                    0.0,
                    Msg::VmRequest(VmRequest {
                        count: self.config.vm_count,
                        spec: self.config.vm_spec,
                        scheduler: self.config.scheduler,
                        reply_to: ctx.self_id(),
                    }),
                )?;
                let arrivals: Vec<(JobId, SimTime)> = self.pending.values().map(|j| (j.id, j.submit_time)).collect();
                for (id, at) in arrivals {
                    ctx.send_at(ctx.self_id(), at.max(ctx.now()), Msg::JobSubmit(id))?;
                }
                Ok(())
            }
            Msg::JobSubmit(id) => {
                let submit = self
                    .pending
                    .get(&id)
                    .ok_or_else(|| format!("unknown job {id}"))?
                    .submit_time;
                self.queue.push(QueuedJob { id, submit });
                self.dispatch(ctx)
            }
            Msg::VmGranted { vms } => {
                if vms.is_empty() {
                    return Err("application master was granted no VMs".into());
                }
                self.leases = vms;
                self.dispatch(ctx)
            }
            Msg::TaskDone(f) => self.on_task_finished(f, ctx),
            Msg::PacketDelivered(d) => self.on_delivery(d, ctx),
            other => Err(format!("application master cannot handle {}", other.tag()).into()),
        }
    }
}
