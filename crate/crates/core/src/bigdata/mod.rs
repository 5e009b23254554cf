//! Big-data management layer: jobs and tasks, sizing rules, scheduling
//! policies, VM execution and the ResourceManager / NodeManager /
//! ApplicationMaster / storage entities that drive a MapReduce workflow
//! over the network controller.

mod am;
mod metrics;
mod nm;
mod policy;
mod rm;
mod san;
mod vm;
mod workload;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{JobId, TaskId, TaskKind, VmId};
use crate::kernel::{EntityId, SimTime};

pub use am::{AmConfig, ApplicationMaster, JobRecord, Peers};
pub use metrics::{job_completion_time, job_phase_times, job_transmission_time, JobMetrics, Legs};
pub use nm::{NodeManager, UtilizationRecord};
pub use policy::{FcfsJobSelection, JobSelection, LeastUsedPlacement, QueuedJob, TaskPlacement};
pub use rm::{Grant, ResourceManager, VmAllocation};
pub use san::StorageAreaNetwork;
pub use vm::{
    FinishedTask, SchedulerKind, SharedVms, SpaceShared, TimeShared, Vm, VmRegistry, VmScheduler, VmSpec,
    COMPLETION_EPSILON_MI,
};
pub use workload::{parse_workload, write_workload};

#[derive(Debug, Error, PartialEq)]
pub enum BigDataError {
    #[error("a job needs at least one mapper")]
    ZeroMappers,
    #[error("a job needs at least one reducer")]
    ZeroReducers,
    #[error("job {job}: {reason}")]
    InvalidJob { job: JobId, reason: String },
    #[error("job id {0} appears more than once")]
    DuplicateJob(JobId),
    #[error("job queue is empty")]
    EmptyQueue,
    #[error("no VMs available for placement")]
    NoVms,
    #[error("a transmission leg has no finished transfers")]
    IncompleteLegs,
    #[error("task {0} has not finished executing")]
    TaskNotDone(TaskId),
    #[error("task {task} cannot move from {from:?} to {to:?}")]
    BadTransition {
        task: TaskId,
        from: TaskState,
        to: TaskState,
    },
    #[error("workload: {0}")]
    Workload(String),
    #[error("VM request for {count} VMs can never fit the cluster")]
    Unsatisfiable { count: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum JobType {
    Small,
    Medium,
    Big,
    Custom(String),
}

impl fmt::Display for JobType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JobType::Small => "small",
            JobType::Medium => "medium",
            JobType::Big => "big",
            JobType::Custom(name) => name,
        })
    }
}

impl FromStr for JobType {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "small" => JobType::Small,
            "medium" => JobType::Medium,
            "big" => JobType::Big,
            other => JobType::Custom(other.to_string()),
        })
    }
}

/// A MapReduce job. Sizes are totals for the whole job, in bits and MI.
#[derive(Clone, Debug, PartialEq)]
pub struct Job {
    pub id: JobId,
    pub user_id: u64,
    pub job_type: JobType,
    pub submit_time: SimTime,
    pub map_mi_total: f64,
    pub reduce_mi_total: f64,
    pub storage_to_map_bits: f64,
    pub map_to_reduce_bits: f64,
    pub reduce_to_storage_bits: f64,
    pub num_mappers: u32,
    pub num_reducers: u32,
}

impl Job {
    pub fn validate(&self) -> Result<(), BigDataError> {
        if self.num_mappers == 0 {
            return Err(BigDataError::ZeroMappers);
        }
        if self.num_reducers == 0 {
            return Err(BigDataError::ZeroReducers);
        }
        let sizes = [
            ("map_mi_total", self.map_mi_total),
            ("reduce_mi_total", self.reduce_mi_total),
            ("storage_to_map", self.storage_to_map_bits),
            ("map_to_reduce", self.map_to_reduce_bits),
            ("reduce_to_storage", self.reduce_to_storage_bits),
        ];
        for (field, v) in sizes {
            if !v.is_finite() || v < 0.0 {
                return Err(BigDataError::InvalidJob {
                    job: self.id,
                    reason: format!("{field} must be finite and non-negative, got {v}"),
                });
            }
        }
        Ok(())
    }

    /// Ratio of intermediate to input data, when there is input data.
    pub fn reduce_factor(&self) -> Option<f64> {
        (self.storage_to_map_bits > 0.0).then(|| self.map_to_reduce_bits / self.storage_to_map_bits)
    }

    pub fn task_count(&self) -> usize {
        (self.num_mappers + self.num_reducers) as usize
    }
}

/// Per-task share of a job total.
pub fn mapper_size(jl: f64, nm: u32) -> Result<f64, BigDataError> {
    if nm == 0 {
        return Err(BigDataError::ZeroMappers);
    }
    Ok(jl / f64::from(nm))
}

/// Mapper output size from its input size and the reduce factor.
pub fn reducer_size(ms: f64, f: f64) -> f64 {
    ms * f
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SizingOptions {
    /// Treat the workload MI columns as per-task lengths.
    pub per_task_mi: bool,
    pub reduce_factor: Option<f64>,
}

/// Task lengths and transfer sizes derived from a job.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaskPlan {
    pub map_mi: f64,
    pub reduce_mi: f64,
    pub map_input_bits: f64,
    pub map_output_bits: f64,
    /// One mapper-to-reducer packet.
    pub shuffle_bits: f64,
    pub reduce_output_bits: f64,
}

impl TaskPlan {
    pub fn new(job: &Job, options: &SizingOptions) -> Result<Self, BigDataError> {
        job.validate()?;
        let nm = job.num_mappers;
        let nr = job.num_reducers;
        let (map_mi, reduce_mi) = if options.per_task_mi {
            (job.map_mi_total, job.reduce_mi_total)
        } else {
            (mapper_size(job.map_mi_total, nm)?, job.reduce_mi_total / f64::from(nr))
        };
        let map_input_bits = mapper_size(job.storage_to_map_bits, nm)?;
        let map_output_bits = match options.reduce_factor.or_else(|| job.reduce_factor()) {
            Some(f) => reducer_size(map_input_bits, f),
            None => mapper_size(job.map_to_reduce_bits, nm)?,
        };
        Ok(Self {
            map_mi,
            reduce_mi,
            map_input_bits,
            map_output_bits,
            shuffle_bits: map_output_bits / f64::from(nr),
            reduce_output_bits: job.reduce_to_storage_bits / f64::from(nr),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum TaskState {
    Pending,
    AwaitingData,
    Executing,
    TransmittingOutput,
    Done,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BigDataTask {
    pub id: TaskId,
    pub app: u32,
    pub length_mi: f64,
    pub input_bits: f64,
    pub output_bits: f64,
    pub vm: Option<VmId>,
    pub state: TaskState,
    pub exec_start: Option<SimTime>,
    pub exec_end: Option<SimTime>,
}

impl BigDataTask {
    pub fn new(id: TaskId, app: u32, length_mi: f64, input_bits: f64, output_bits: f64) -> Self {
        Self {
            id,
            app,
            length_mi,
            input_bits,
            output_bits,
            vm: None,
            state: TaskState::Pending,
            exec_start: None,
            exec_end: None,
        }
    }

    pub fn kind(&self) -> TaskKind {
        self.id.kind
    }

    pub fn job(&self) -> JobId {
        self.id.job
    }

    /// Moves to the next state; states are visited strictly in order.
    pub fn advance_to(&mut self, to: TaskState) -> Result<(), BigDataError> {
        let next = match self.state {
            TaskState::Pending => TaskState::AwaitingData,
            TaskState::AwaitingData => TaskState::Executing,
            TaskState::Executing => TaskState::TransmittingOutput,
            TaskState::TransmittingOutput | TaskState::Done => TaskState::Done,
        };
        if to != next || self.state == TaskState::Done {
            return Err(BigDataError::BadTransition {
                task: self.id,
                from: self.state,
                to,
            });
        }
        self.state = to;
        Ok(())
    }

    pub fn exec_duration(&self) -> Option<f64> {
        Some(self.exec_end?.since(self.exec_start?))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VmRequest {
    pub count: usize,
    pub spec: VmSpec,
    pub scheduler: SchedulerKind,
    pub reply_to: EntityId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExecuteTask {
    pub task: TaskId,
    pub vm: VmId,
    pub length_mi: f64,
    pub reply_to: EntityId,
}
