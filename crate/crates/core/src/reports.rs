//! Result artifacts of a run and the SDN versus legacy comparison.
//!
//! Times are kept as integer microseconds and written as seconds with six
//! decimals, so every derived column can be recomputed exactly from the
//! rows it depends on.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::energy::{total_energy, EnergyError};
use crate::ids::{JobId, PacketId, TaskKind};
use crate::kernel::SimTime;
use crate::network::{Endpoint, Flow};
use crate::scenario::{NetworkMode, RunOutcome};

pub const JOBS_CSV: &str = "jobs.csv";
pub const TRANSMISSIONS_CSV: &str = "transmissions.csv";
pub const PROCESSING_CSV: &str = "processing.csv";
pub const ENERGY_CSV: &str = "energy.csv";
pub const FORWARDING_CSV: &str = "forwarding.csv";
pub const RUN_META: &str = "run.meta";
pub const COMPARISON_CSV: &str = "comparison.csv";

pub const JOB_HEADER: [&str; 11] = [
    "job_id",
    "job_type",
    "user_id",
    "submit",
    "queuing_delay",
    "start",
    "finish",
    "j_tr",
    "j_mp",
    "j_rd",
    "j_ct",
];
pub const TRANSMISSION_HEADER: [&str; 11] = [
    "packet_id",
    "job_id",
    "leg",
    "src",
    "dst",
    "src_task",
    "dst_task",
    "bits",
    "start",
    "finish",
    "duration",
];
pub const PROCESSING_HEADER: [&str; 7] = ["task_id", "job_id", "kind", "vm_id", "start", "end", "duration"];
pub const ENERGY_HEADER: [&str; 5] = ["node", "kind", "energy_j", "busy_s", "idle_s"];
pub const FORWARDING_HEADER: [&str; 6] = ["packet_id", "path", "interval", "start", "end", "bandwidth_bps"];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("job sets differ: {only_first:?} only in the first report, {only_second:?} only in the second")]
    JobSetMismatch {
        only_first: Vec<u64>,
        only_second: Vec<u64>,
    },
    #[error("task {0} has no execution interval")]
    MissingTaskTimes(String),
}

/// Rounds a time to whole microseconds.
pub fn micros(t: SimTime) -> i64 {
    (t.secs() * 1e6).round() as i64
}

/// Formats microseconds as seconds with six decimals.
pub fn fmt_micros(us: i64) -> String {
    let sign = if us < 0 { "-" } else { "" };
    let a = us.unsigned_abs();
    format!("{sign}{}.{:06}", a / 1_000_000, a % 1_000_000)
}

fn fmt_f(x: f64) -> String {
    // adding zero folds -0.0 into 0.0
    format!("{:.6}", x + 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Leg {
    StorageToMap,
    MapToReduce,
    ReduceToStorage,
}

impl Leg {
    pub fn of(flow: &Flow) -> Self {
        match (flow.src, flow.dst) {
            (Endpoint::Storage, _) => Leg::StorageToMap,
            (_, Endpoint::Storage) => Leg::ReduceToStorage,
            _ => Leg::MapToReduce,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Leg::StorageToMap => "storage_to_map",
            Leg::MapToReduce => "map_to_reduce",
            Leg::ReduceToStorage => "reduce_to_storage",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JobRow {
    pub job_id: JobId,
    pub job_type: String,
    pub user_id: u64,
    pub submit_us: i64,
    pub queuing_us: i64,
    pub start_us: i64,
    pub finish_us: i64,
    pub j_tr_us: i64,
    pub j_mp_us: i64,
    pub j_rd_us: i64,
    pub j_ct_us: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransmissionRow {
    pub packet_id: PacketId,
    pub job_id: JobId,
    pub leg: Leg,
    pub src: String,
    pub dst: String,
    pub src_task: String,
    pub dst_task: String,
    pub bits: f64,
    pub start_us: i64,
    pub finish_us: i64,
    pub duration_us: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProcessingRow {
    pub task_id: String,
    pub job_id: JobId,
    pub kind: TaskKind,
    pub vm: String,
    pub start_us: i64,
    pub end_us: i64,
    pub duration_us: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyRow {
    pub node: String,
    pub kind: &'static str,
    pub energy_j: f64,
    pub busy_s: f64,
    pub idle_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardingRow {
    pub packet_id: PacketId,
    pub path: String,
    pub interval: usize,
    pub start_us: i64,
    pub end_us: i64,
    pub bandwidth_bps: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunMeta {
    pub mode: NetworkMode,
    pub seed: u64,
    pub config_hash: String,
    pub routing: String,
    pub traffic: String,
    pub run_end_us: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub meta: RunMeta,
    pub jobs: Vec<JobRow>,
    pub transmissions: Vec<TransmissionRow>,
    pub processing: Vec<ProcessingRow>,
    pub energy: Vec<EnergyRow>,
    pub forwarding: Vec<ForwardingRow>,
    pub host_energy_j: f64,
    pub switch_energy_j: f64,
    pub total_energy_j: f64,
}

/// Slowest transfer per leg plus longest task per phase, from rounded rows.
/// An absent leg contributes zero.
pub fn job_times_from_rows(
    job: JobId,
    transmissions: &[TransmissionRow],
    processing: &[ProcessingRow],
) -> (i64, i64, i64) {
    let mut legs: BTreeMap<Leg, i64> = BTreeMap::new();
    for t in transmissions.iter().filter(|t| t.job_id == job) {
        let e = legs.entry(t.leg).or_insert(0);
        *e = (*e).max(t.duration_us);
    }
    let (mut mp, mut rd) = (0, 0);
    for p in processing.iter().filter(|p| p.job_id == job) {
        match p.kind {
            TaskKind::Map => mp = p.duration_us.max(mp),
            TaskKind::Reduce => rd = p.duration_us.max(rd),
        }
    }
    (legs.values().sum(), mp, rd)
}

impl RunReport {
    pub fn from_outcome(out: &RunOutcome) -> Result<Self, ReportError> {
        let topo = &out.topology;
        let task = |t: Option<crate::ids::TaskId>| t.map(|t| t.to_string()).unwrap_or_default();

        let mut transmissions = Vec::with_capacity(out.packets.len());
        let mut forwarding = Vec::new();
        for p in &out.packets {
            let (start_us, finish_us) = (micros(p.start), micros(p.finish));
            transmissions.push(TransmissionRow {
                packet_id: p.id,
                job_id: p.flow.job,
                leg: Leg::of(&p.flow),
                src: p.flow.src.to_string(),
                dst: p.flow.dst.to_string(),
                src_task: task(p.flow.src_task),
                dst_task: task(p.flow.dst_task),
                bits: p.size_bits,
                start_us,
                finish_us,
                duration_us: finish_us - start_us,
            });
            let path = p
                .route
                .nodes
                .iter()
                .map(|&n| topo.name(n))
                .collect::<Vec<_>>()
                .join(">");
            for (i, iv) in p.intervals.iter().enumerate() {
                forwarding.push(ForwardingRow {
                    packet_id: p.id,
                    path: path.clone(),
                    interval: i,
                    start_us: micros(iv.start),
                    end_us: micros(iv.end),
                    bandwidth_bps: iv.bandwidth_bps,
                });
            }
        }

        let mut processing = Vec::new();
        for record in &out.jobs {
            for t in &record.tasks {
                let (Some(s), Some(e)) = (t.exec_start, t.exec_end) else {
                    return Err(ReportError::MissingTaskTimes(t.id.to_string()));
                };
                let (start_us, end_us) = (micros(s), micros(e));
                processing.push(ProcessingRow {
                    task_id: t.id.to_string(),
                    job_id: t.job(),
                    kind: t.kind(),
                    vm: t.vm.map(|v| v.to_string()).unwrap_or_default(),
                    start_us,
                    end_us,
                    duration_us: end_us - start_us,
                });
            }
        }

        let jobs = out
            .jobs
            .iter()
            .map(|r| {
                let (j_tr_us, j_mp_us, j_rd_us) = job_times_from_rows(r.job.id, &transmissions, &processing);
                let (submit_us, start_us) = (micros(r.metrics.submit), micros(r.metrics.start));
                JobRow {
                    job_id: r.job.id,
                    job_type: r.job.job_type.to_string(),
                    user_id: r.job.user_id,
                    submit_us,
                    queuing_us: start_us - submit_us,
                    start_us,
                    finish_us: micros(r.metrics.finish),
                    j_tr_us,
                    j_mp_us,
                    j_rd_us,
                    j_ct_us: j_tr_us + j_mp_us + j_rd_us,
                }
            })
            .collect();

        let totals = total_energy(&out.energy)?;
        let energy = totals
            .nodes
            .iter()
            .map(|n| EnergyRow {
                node: n.name.clone(),
                kind: n.kind,
                energy_j: n.energy_j,
                busy_s: n.busy_s,
                idle_s: n.idle_s,
            })
            .collect();

        Ok(Self {
            meta: RunMeta {
                mode: out.mode,
                seed: out.seed,
                config_hash: out.config_hash.clone(),
                routing: out.routing.to_string(),
                traffic: out.traffic.to_string(),
                run_end_us: micros(out.run_end),
            },
            jobs,
            transmissions,
            processing,
            energy,
            forwarding,
            host_energy_j: totals.host_j,
            switch_energy_j: totals.switch_j,
            total_energy_j: totals.total_j,
        })
    }

    pub fn job_records(&self) -> Vec<Vec<String>> {
        self.jobs
            .iter()
            .map(|j| {
                vec![
                    j.job_id.to_string(),
                    j.job_type.clone(),
                    j.user_id.to_string(),
                    fmt_micros(j.submit_us),
                    fmt_micros(j.queuing_us),
                    fmt_micros(j.start_us),
                    fmt_micros(j.finish_us),
                    fmt_micros(j.j_tr_us),
                    fmt_micros(j.j_mp_us),
                    fmt_micros(j.j_rd_us),
                    fmt_micros(j.j_ct_us),
                ]
            })
            .collect()
    }

    pub fn transmission_records(&self) -> Vec<Vec<String>> {
        self.transmissions
            .iter()
            .map(|t| {
                vec![
                    t.packet_id.to_string(),
                    t.job_id.to_string(),
                    t.leg.as_str().to_string(),
                    t.src.clone(),
                    t.dst.clone(),
                    t.src_task.clone(),
                    t.dst_task.clone(),
                    format!("{:.0}", t.bits),
                    fmt_micros(t.start_us),
                    fmt_micros(t.finish_us),
                    fmt_micros(t.duration_us),
                ]
            })
            .collect()
    }

    pub fn processing_records(&self) -> Vec<Vec<String>> {
        self.processing
            .iter()
            .map(|p| {
                vec![
                    p.task_id.clone(),
                    p.job_id.to_string(),
                    p.kind.to_string(),
                    p.vm.clone(),
                    fmt_micros(p.start_us),
                    fmt_micros(p.end_us),
                    fmt_micros(p.duration_us),
                ]
            })
            .collect()
    }

    pub fn energy_records(&self) -> Vec<Vec<String>> {
        self.energy
            .iter()
            .map(|e| {
                vec![
                    e.node.clone(),
                    e.kind.to_string(),
                    fmt_f(e.energy_j),
                    fmt_f(e.busy_s),
                    fmt_f(e.idle_s),
                ]
            })
            .collect()
    }

    pub fn forwarding_records(&self) -> Vec<Vec<String>> {
        self.forwarding
            .iter()
            .map(|f| {
                vec![
                    f.packet_id.to_string(),
                    f.path.clone(),
                    f.interval.to_string(),
                    fmt_micros(f.start_us),
                    fmt_micros(f.end_us),
                    fmt_f(f.bandwidth_bps),
                ]
            })
            .collect()
    }

    pub fn meta_text(&self) -> String {
        let m = &self.meta;
        format!(
            "mode={}\nseed={}\nconfig_hash={}\nrouting={}\ntraffic={}\njobs={}\npackets={}\nrun_end={}\ntotal_energy_j={}\n",
            m.mode,
            m.seed,
            m.config_hash,
            m.routing,
            m.traffic,
            self.jobs.len(),
            self.transmissions.len(),
            fmt_micros(m.run_end_us),
            fmt_f(self.total_energy_j),
        )
    }

    /// Writes the five CSV files and `run.meta` into `dir`, creating it.
    pub fn emit(&self, dir: &Path) -> Result<(), ReportError> {
        fs::create_dir_all(dir).map_err(|source| ReportError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        write_csv(&dir.join(JOBS_CSV), &JOB_HEADER, self.job_records())?;
        write_csv(
            &dir.join(TRANSMISSIONS_CSV),
            &TRANSMISSION_HEADER,
            self.transmission_records(),
        )?;
        write_csv(&dir.join(PROCESSING_CSV), &PROCESSING_HEADER, self.processing_records())?;
        write_csv(&dir.join(ENERGY_CSV), &ENERGY_HEADER, self.energy_records())?;
        write_csv(&dir.join(FORWARDING_CSV), &FORWARDING_HEADER, self.forwarding_records())?;
        let meta = dir.join(RUN_META);
        fs::write(&meta, self.meta_text()).map_err(|source| ReportError::Io { path: meta, source })
    }

    pub fn mean_transmission_s(&self) -> f64 {
        mean(self.jobs.iter().map(|j| j.j_tr_us))
    }

    pub fn mean_completion_s(&self) -> f64 {
        mean(self.jobs.iter().map(|j| j.j_ct_us))
    }
}

fn mean(us: impl ExactSizeIterator<Item = i64>) -> f64 {
    let n = us.len();
    if n == 0 {
        return 0.0;
    }
    us.map(|u| u as f64 / 1e6).sum::<f64>() / n as f64
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), ReportError> {
    let file = fs::File::create(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub metric: &'static str,
    /// Job id, `mean` or `total`.
    pub scope: String,
    pub first: f64,
    pub second: f64,
    pub improvement_pct: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonSummary {
    pub first: NetworkMode,
    pub second: NetworkMode,
    pub baseline: NetworkMode,
    pub rows: Vec<ComparisonRow>,
    pub transmission_pct: f64,
    pub completion_pct: f64,
    pub energy_pct: f64,
}

/// Percentage by which `first` undercuts `second`, relative to `base`.
/// A zero base yields zero.
pub fn improvement_pct(first: f64, second: f64, base: f64) -> f64 {
    if base == 0.0 {
        0.0
    } else {
        (second - first) / base * 100.0
    }
}

/// Compares two runs of the same job set. Percentages are
/// `(second - first) / baseline * 100`, where the baseline is the legacy
/// report's value (the second report's when neither or both are legacy),
/// so `compare(sdn, legacy)` reports how much SDN improves on legacy.
pub fn compare(first: &RunReport, second: &RunReport) -> Result<ComparisonSummary, ReportError> {
    let a: BTreeMap<JobId, &JobRow> = first.jobs.iter().map(|j| (j.job_id, j)).collect();
    let b: BTreeMap<JobId, &JobRow> = second.jobs.iter().map(|j| (j.job_id, j)).collect();
    let ka: BTreeSet<_> = a.keys().copied().collect();
    let kb: BTreeSet<_> = b.keys().copied().collect();
    if ka != kb {
        return Err(ReportError::JobSetMismatch {
            only_first: ka.difference(&kb).map(|j| j.0).collect(),
            only_second: kb.difference(&ka).map(|j| j.0).collect(),
        });
    }
    let baseline = match (first.meta.mode, second.meta.mode) {
        (NetworkMode::Legacy, NetworkMode::Sdn) => NetworkMode::Legacy,
        (_, m) => m,
    };
    let first_is_base = first.meta.mode == baseline && second.meta.mode != baseline;
    let row = |metric, scope: String, x: f64, y: f64| {
        let base = if first_is_base { x } else { y };
        ComparisonRow {
            metric,
            scope,
            first: x,
            second: y,
            improvement_pct: improvement_pct(x, y, base),
        }
    };
    let mut rows = Vec::new();
    for (id, ja) in &a {
        let jb = b[id];
        let s = |us: i64| us as f64 / 1e6;
        rows.push(row("transmission_time", id.to_string(), s(ja.j_tr_us), s(jb.j_tr_us)));
        rows.push(row("completion_time", id.to_string(), s(ja.j_ct_us), s(jb.j_ct_us)));
    }
    let tr = row(
        "transmission_time",
        "mean".into(),
        first.mean_transmission_s(),
        second.mean_transmission_s(),
    );
    let ct = row(
        "completion_time",
        "mean".into(),
        first.mean_completion_s(),
        second.mean_completion_s(),
    );
    let en = row("energy_j", "total".into(), first.total_energy_j, second.total_energy_j);
    let (transmission_pct, completion_pct, energy_pct) = (tr.improvement_pct, ct.improvement_pct, en.improvement_pct);
    rows.push(tr);
    rows.push(ct);
    rows.push(row(
        "energy_j",
        "hosts".into(),
        first.host_energy_j,
        second.host_energy_j,
    ));
    rows.push(row(
        "energy_j",
        "switches".into(),
        first.switch_energy_j,
        second.switch_energy_j,
    ));
    rows.push(en);
    Ok(ComparisonSummary {
        first: first.meta.mode,
        second: second.meta.mode,
        baseline,
        rows,
        transmission_pct,
        completion_pct,
        energy_pct,
    })
}

impl ComparisonSummary {
    pub fn to_csv(&self) -> Result<String, ReportError> {
        let mut out = format!(
            "# improvement_pct = (second - first) / baseline * 100; first={} second={} baseline={}\n",
            self.first, self.second, self.baseline
        );
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "scope", "first", "second", "improvement_pct"])?;
        for r in &self.rows {
            w.write_record([
                r.metric.to_string(),
                r.scope.clone(),
                fmt_f(r.first),
                fmt_f(r.second),
                fmt_f(r.improvement_pct),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<(), ReportError> {
        fs::write(path, self.to_csv()?).map_err(|source| ReportError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}
