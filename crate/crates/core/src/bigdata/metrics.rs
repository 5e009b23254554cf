use super::{BigDataError, BigDataTask, TaskState};
use crate::ids::TaskKind;
use crate::kernel::SimTime;

/// Durations of the three transfer stages of one job, one entry per
/// transfer. Transfers of zero bits are recorded as zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Legs {
    pub storage_to_map: Vec<f64>,
    pub map_to_reduce: Vec<f64>,
    pub reduce_to_storage: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JobMetrics {
    pub s_tr: f64,
    pub mp_tr: f64,
    pub rd_tr: f64,
    pub j_tr: f64,
    pub j_mp: f64,
    pub j_rd: f64,
    pub j_ct: f64,
    pub submit: SimTime,
    pub start: SimTime,
    pub finish: SimTime,
}

impl JobMetrics {
    pub fn compute(
        legs: &Legs,
        tasks: &[BigDataTask],
        submit: SimTime,
        start: SimTime,
        finish: SimTime,
    ) -> Result<Self, BigDataError> {
        let j_tr = job_transmission_time(legs)?;
        let (j_mp, j_rd) = job_phase_times(tasks)?;
        Ok(Self {
            s_tr: leg_max(&legs.storage_to_map),
            mp_tr: leg_max(&legs.map_to_reduce),
            rd_tr: leg_max(&legs.reduce_to_storage),
            j_tr,
            j_mp,
            j_rd,
            j_ct: job_completion_time(j_tr, j_mp, j_rd),
            submit,
            start,
            finish,
        })
    }

    pub fn queuing_delay(&self) -> f64 {
        self.start.since(self.submit)
    }
}

fn leg_max(leg: &[f64]) -> f64 {
    leg.iter().copied().fold(0.0, f64::max)
}

/// Sum over the three stages of the slowest transfer in each.
pub fn job_transmission_time(legs: &Legs) -> Result<f64, BigDataError> {
    let stages = [&legs.storage_to_map, &legs.map_to_reduce, &legs.reduce_to_storage];
    if stages.iter().any(|s| s.is_empty()) {
        return Err(BigDataError::IncompleteLegs);
    }
    Ok(stages.iter().map(|s| leg_max(s)).sum())
}

/// Longest mapper and longest reducer execution.
pub fn job_phase_times(tasks: &[BigDataTask]) -> Result<(f64, f64), BigDataError> {
    let mut j_mp: f64 = 0.0;
    let mut j_rd: f64 = 0.0;
    for t in tasks {
        let d = match (t.state, t.exec_duration()) {
            (TaskState::TransmittingOutput | TaskState::Done, Some(d)) => d,
            _ => return Err(BigDataError::TaskNotDone(t.id)),
        };
        match t.kind() {
            TaskKind::Map => j_mp = j_mp.max(d),
            TaskKind::Reduce => j_rd = j_rd.max(d),
        }
    }
    Ok((j_mp, j_rd))
}

pub fn job_completion_time(j_tr: f64, j_mp: f64, j_rd: f64) -> f64 {
    j_tr + j_mp + j_rd
}
