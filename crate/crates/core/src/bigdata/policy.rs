use std::collections::BTreeMap;

use super::BigDataError;
use crate::ids::{JobId, TaskId, VmId};
use crate::kernel::SimTime;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QueuedJob {
    pub id: JobId,
    pub submit: SimTime,
}

/// Which waiting job an application master starts next.
pub trait JobSelection {
    fn name(&self) -> &'static str;

    /// Index into `queue` of the job to start.
    fn select(&self, queue: &[QueuedJob]) -> Result<usize, BigDataError>;
}

/// Earliest submission first, lower job id on ties.
#[derive(Clone, Copy, Debug, Default)]
pub struct FcfsJobSelection;

impl JobSelection for FcfsJobSelection {
    fn name(&self) -> &'static str {
        "fcfs"
    }

    fn select(&self, queue: &[QueuedJob]) -> Result<usize, BigDataError> {
        queue
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.submit.cmp(&b.submit).then(a.id.cmp(&b.id)))
            .map(|(i, _)| i)
            .ok_or(BigDataError::EmptyQueue)
    }
}

/// Where each task of a job runs.
pub trait TaskPlacement {
    fn name(&self) -> &'static str;

    /// Assigns `tasks` (id, length in MI) given the current load in MI of
    /// every candidate VM.
    fn place(&self, tasks: &[(TaskId, f64)], loads: &BTreeMap<VmId, f64>) -> Result<Vec<(TaskId, VmId)>, BigDataError>;
}

/// Each task goes to the VM with the least outstanding work, counting
/// tasks placed earlier in the same batch; lower VM id on ties.
#[derive(Clone, Copy, Debug, Default)]
pub struct LeastUsedPlacement;

impl TaskPlacement for LeastUsedPlacement {
    fn name(&self) -> &'static str {
        "least_used"
    }

    fn place(&self, tasks: &[(TaskId, f64)], loads: &BTreeMap<VmId, f64>) -> Result<Vec<(TaskId, VmId)>, BigDataError> {
        if loads.is_empty() {
            return Err(BigDataError::NoVms);
        }
        let mut loads = loads.clone();
        let mut out = Vec::with_capacity(tasks.len());
        for &(task, mi) in tasks {
            let (&vm, load) = loads
                .iter_mut()
                .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(b.0)))
                .expect("non-empty");
            *load += mi;
            out.push((task, vm));
        }
        Ok(out)
    }
}
