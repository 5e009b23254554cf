//! The bundled three-tier MapReduce experiment: 16 hosts, 16 VMs and fifteen
//! jobs in three size classes, submitted one second apart.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bigdata::{write_workload, Job, JobType, VmSpec};
use crate::energy::PowerModel;
use crate::ids::JobId;
use crate::kernel::SimTime;
use crate::scenario::{ConfigError, Mode, Options, Policies, Scenario, ScenarioConfig, VmFleet};
use crate::topology::{PhysicalTopology, ThreeTier};

pub const TOPOLOGY_FILE: &str = "topology.json";
pub const WORKLOAD_FILE: &str = "workload.csv";
pub const SCENARIO_FILE: &str = "usecase.json";
pub const VM_COUNT: usize = 16;
pub const JOBS_PER_CLASS: u64 = 5;

/// Shape shared by every job of one size class.
#[derive(Clone, Debug, PartialEq)]
pub struct JobClass {
    pub kind: JobType,
    pub map_mi: f64,
    pub reduce_mi: f64,
    pub storage_to_map_gbits: f64,
    pub map_to_reduce_gbits: f64,
    pub reduce_to_storage_gbits: f64,
    pub mappers: u32,
    pub reducers: u32,
}

const fn class(kind: JobType, mi: (f64, f64), gbits: (f64, f64, f64), tasks: (u32, u32)) -> JobClass {
    JobClass {
        kind,
        map_mi: mi.0,
        reduce_mi: mi.1,
        storage_to_map_gbits: gbits.0,
        map_to_reduce_gbits: gbits.1,
        reduce_to_storage_gbits: gbits.2,
        mappers: tasks.0,
        reducers: tasks.1,
    }
}

pub const CLASSES: [JobClass; 3] = [
    class(JobType::Small, (100_000.0, 75_000.0), (200.0, 150.0, 100.0), (2, 1)),
    class(JobType::Medium, (200_000.0, 175_000.0), (400.0, 350.0, 300.0), (4, 2)),
    class(JobType::Big, (300_000.0, 275_000.0), (600.0, 550.0, 500.0), (6, 3)),
];

pub fn usecase_topology() -> PhysicalTopology {
    ThreeTier::default().build().expect("default three-tier shape is valid")
}

/// Fifteen jobs, ids 1-5 small, 6-10 medium, 11-15 big. The seed shuffles
/// the arrival order; submissions are spaced one second apart from t=0.
pub fn usecase_jobs(seed: u64) -> Vec<Job> {
    let mut jobs = Vec::new();
    for (c, class) in CLASSES.iter().enumerate() {
        for k in 0..JOBS_PER_CLASS {
            jobs.push(Job {
                id: JobId(c as u64 * JOBS_PER_CLASS + k + 1),
                user_id: 1,
                job_type: class.kind.clone(),
                submit_time: SimTime::ZERO,
                map_mi_total: class.map_mi,
                reduce_mi_total: class.reduce_mi,
                storage_to_map_bits: class.storage_to_map_gbits * 1e9,
                map_to_reduce_bits: class.map_to_reduce_gbits * 1e9,
                reduce_to_storage_bits: class.reduce_to_storage_gbits * 1e9,
                num_mappers: class.mappers,
                num_reducers: class.reducers,
            });
        }
    }
    jobs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for (i, job) in jobs.iter_mut().enumerate() {
        job.submit_time = SimTime::from_secs(i as f64);
    }
    jobs
}

pub fn usecase_config(seed: u64) -> ScenarioConfig {
    let vm = VmSpec::EVALUATION;
    ScenarioConfig {
        topology: TOPOLOGY_FILE.into(),
        workload: WORKLOAD_FILE.into(),
        mode: Mode::Both,
        seed,
        policies: Policies::default(),
        vms: VmFleet {
            count: VM_COUNT,
            pes: vm.pes,
            mips_per_pe: vm.mips_per_pe,
            ram_mb: vm.ram_mb,
        },
        power: PowerModel::default(),
        output: "out".into(),
        options: Options::default(),
    }
}

/// The experiment assembled in memory, equivalent to loading the files
/// written by [`write_fixture`] with the same seed.
pub fn usecase_scenario(seed: u64) -> Result<Scenario, ConfigError> {
    Scenario::from_parts(usecase_config(seed), usecase_topology(), usecase_jobs(seed))
}

/// Writes the topology, workload and scenario files into `dir` and returns
/// the scenario path.
pub fn write_fixture(dir: &Path, seed: u64) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(TOPOLOGY_FILE), usecase_topology().to_json() + "\n")?;
    fs::write(dir.join(WORKLOAD_FILE), write_workload(&usecase_jobs(seed)))?;
    let config = serde_json::to_string_pretty(&usecase_config(seed)).map_err(io::Error::other)?;
    let path = dir.join(SCENARIO_FILE);
    fs::write(&path, config + "\n")?;
    Ok(path)
}
