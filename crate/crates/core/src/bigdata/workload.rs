use std::collections::BTreeSet;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{BigDataError, Job};
use crate::ids::JobId;
use crate::kernel::SimTime;

const GBIT: f64 = 1e9;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Row {
    user_id: u64,
    job_id: u64,
    job_type: String,
    submit_time_s: f64,
    map_mi_total: f64,
    reduce_mi_total: f64,
    storage_to_map_gbits: f64,
    map_to_reduce_gbits: f64,
    reduce_to_storage_gbits: f64,
    num_mappers: u32,
    num_reducers: u32,
}

/// Reads a workload CSV with a header row. Jobs come back in file order.
pub fn parse_workload(reader: impl Read) -> Result<Vec<Job>, BigDataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut jobs = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| BigDataError::Workload(format!("record {}: {e}", line + 1)))?;
        let id = JobId(row.job_id);
        if !seen.insert(id) {
            return Err(BigDataError::DuplicateJob(id));
        }
        let submit_time =
            SimTime::try_from(row.submit_time_s).map_err(|e| BigDataError::InvalidJob { job: id, reason: e })?;
        let job = Job {
            id,
            user_id: row.user_id,
            job_type: row.job_type.parse().expect("infallible"),
            submit_time,
            map_mi_total: row.map_mi_total,
            reduce_mi_total: row.reduce_mi_total,
            storage_to_map_bits: row.storage_to_map_gbits * GBIT,
            map_to_reduce_bits: row.map_to_reduce_gbits * GBIT,
            reduce_to_storage_bits: row.reduce_to_storage_gbits * GBIT,
            num_mappers: row.num_mappers,
            num_reducers: row.num_reducers,
        };
        job.validate()?;
        jobs.push(job);
    }
    Ok(jobs)
}

pub fn write_workload(jobs: &[Job]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for job in jobs {
        w.serialize(Row {
            user_id: job.user_id,
            job_id: job.id.0,
            job_type: job.job_type.to_string(),
            submit_time_s: job.submit_time.secs(),
            map_mi_total: job.map_mi_total,
            reduce_mi_total: job.reduce_mi_total,
            storage_to_map_gbits: job.storage_to_map_bits / GBIT,
            map_to_reduce_gbits: job.map_to_reduce_bits / GBIT,
            reduce_to_storage_gbits: job.reduce_to_storage_bits / GBIT,
            num_mappers: job.num_mappers,
            num_reducers: job.num_reducers,
        })
        .expect("writing to memory");
    }
    if jobs.is_empty() {
        return "user_id,job_id,job_type,submit_time_s,map_mi_total,reduce_mi_total,storage_to_map_gbits,\
                map_to_reduce_gbits,reduce_to_storage_gbits,num_mappers,num_reducers\n"
            .to_string();
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("csv is utf-8")
}
