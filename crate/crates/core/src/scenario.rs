//! Scenario configuration and the assembly of one simulation run.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bigdata::{
    parse_workload, write_workload, AmConfig, ApplicationMaster, BigDataError, FcfsJobSelection, Job, JobRecord,
    JobSelection, LeastUsedPlacement, NodeManager, Peers, ResourceManager, SchedulerKind, SizingOptions,
    StorageAreaNetwork, TaskPlacement, VmAllocation, VmRegistry, VmSpec,
};
use crate::energy::{EnergyError, EnergyLedger, PowerModel};
use crate::kernel::{EntityId, KernelError, SimEvent, SimTime, Simulation};
use crate::msg::Msg;
use crate::network::{
    Controller, ControllerEntity, FairShare, LegacyShortestPath, PacketRecord, PinGranularity, RoutingProtocol,
    SdnMaxBandwidth, TrafficPolicy,
};
use crate::topology::{parse_topology, PhysicalTopology, TopologyError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sdn,
    Legacy,
    #[default]
    Both,
}

impl Mode {
    pub fn runs(self) -> Vec<NetworkMode> {
        match self {
            Mode::Sdn => vec![NetworkMode::Sdn],
            Mode::Legacy => vec![NetworkMode::Legacy],
            Mode::Both => vec![NetworkMode::Sdn, NetworkMode::Legacy],
        }
    }
}

/// Network behaviour of a single run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkMode {
    Sdn,
    Legacy,
}

impl fmt::Display for NetworkMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NetworkMode::Sdn => "sdn",
            NetworkMode::Legacy => "legacy",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoutingNames {
    pub sdn: String,
    pub legacy: String,
}

impl Default for RoutingNames {
    fn default() -> Self {
        Self {
            sdn: "min_hop_max_bandwidth".into(),
            legacy: "min_hop_random_pinned".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Policies {
    pub job_selection: String,
    pub task_placement: String,
    pub vm_scheduler: SchedulerKind,
    pub routing: RoutingNames,
    pub traffic: String,
}

impl Default for Policies {
    fn default() -> Self {
        Self {
            job_selection: "fcfs".into(),
            task_placement: "least_used".into(),
            vm_scheduler: SchedulerKind::TimeShared,
            routing: RoutingNames::default(),
            traffic: "fair_share".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VmFleet {
    pub count: usize,
    pub pes: u32,
    pub mips_per_pe: f64,
    pub ram_mb: u64,
}

impl VmFleet {
    pub fn spec(&self) -> VmSpec {
        VmSpec {
            pes: self.pes,
            mips_per_pe: self.mips_per_pe,
            ram_mb: self.ram_mb,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Options {
    pub per_task_mi: bool,
    pub reduce_factor: Option<f64>,
    pub pin_granularity: PinGranularity,
    pub heartbeat_interval_s: f64,
    pub task_slots: Option<usize>,
    pub vm_allocation: VmAllocation,
    /// Simulated time after which an unfinished run is abandoned.
    pub horizon_s: f64,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            per_task_mi: false,
            reduce_factor: None,
            pin_granularity: PinGranularity::default(),
            heartbeat_interval_s: 1.0,
            task_slots: None,
            vm_allocation: VmAllocation::default(),
            horizon_s: 1e7,
        }
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Scenario file. Relative paths are resolved against the file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub topology: PathBuf,
    pub workload: PathBuf,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub policies: Policies,
    pub vms: VmFleet,
    #[serde(default)]
    pub power: PowerModel,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub options: Options,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("topology: {0}")]
    Topology(#[from] TopologyError),
    #[error("workload: {0}")]
    Workload(#[from] BigDataError),
    #[error("power model: {0}")]
    Power(#[from] EnergyError),
    #[error("unknown {kind} policy '{name}'")]
    UnknownPolicy { kind: &'static str, name: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("energy accounting: {0}")]
    Energy(#[from] EnergyError),
    #[error("setup: {0}")]
    Setup(#[from] BigDataError),
    #[error("application did not finish before t={0}")]
    Unfinished(SimTime),
}

/// Everything a finished run produced.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub mode: NetworkMode,
    pub seed: u64,
    pub config_hash: String,
    pub routing: &'static str,
    pub traffic: &'static str,
    pub topology: Arc<PhysicalTopology>,
    /// Sorted by job id.
    pub jobs: Vec<JobRecord>,
    /// Sorted by packet id.
    pub packets: Vec<PacketRecord>,
    pub energy: EnergyLedger,
    pub run_end: SimTime,
    pub heartbeats: usize,
}

/// A validated scenario: configuration plus loaded topology and workload.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub topology: Arc<PhysicalTopology>,
    pub jobs: Vec<Job>,
    config_hash: String,
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let config: ScenarioConfig = serde_json::from_str(&read(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let topology = parse_topology(&read(&base.join(&config.topology))?)?;
        let workload = read(&base.join(&config.workload))?;
        let jobs = parse_workload(workload.as_bytes())?;
        let mut config = config;
        if config.output.is_relative() {
            config.output = base.join(&config.output);
        }
        Self::from_parts(config, topology, jobs)
    }

    pub fn from_parts(config: ScenarioConfig, topology: PhysicalTopology, jobs: Vec<Job>) -> Result<Self, ConfigError> {
        check_policies(&config.policies)?;
        config.power.validate()?;
        let o = &config.options;
        if !(o.heartbeat_interval_s > 0.0 && o.heartbeat_interval_s.is_finite()) {
            return Err(ConfigError::Invalid("heartbeat_interval_s must be positive".into()));
        }
        if !(o.horizon_s > 0.0 && o.horizon_s.is_finite()) {
            return Err(ConfigError::Invalid("horizon_s must be positive".into()));
        }
        if o.reduce_factor.is_some_and(|f| !(f >= 0.0 && f.is_finite())) {
            return Err(ConfigError::Invalid("reduce_factor must be non-negative".into()));
        }
        if o.task_slots == Some(0) {
            return Err(ConfigError::Invalid("task_slots must be at least 1".into()));
        }
        let v = config.vms;
        if v.count == 0 || v.pes == 0 || !(v.mips_per_pe > 0.0) || v.ram_mb == 0 {
            return Err(ConfigError::Invalid(
                "vms need a positive count, pes, mips_per_pe and ram_mb".into(),
            ));
        }
        if topology.hosts().next().is_none() {
            return Err(ConfigError::Invalid("topology has no hosts".into()));
        }
        if !jobs.is_empty() && topology.storage().is_none() {
            return Err(ConfigError::Invalid("topology needs a storage node to run jobs".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for job in &jobs {
            job.validate()?;
            if !seen.insert(job.id) {
                return Err(BigDataError::DuplicateJob(job.id).into());
            }
        }
        let config_hash = hash_inputs(&config, &topology, &jobs);
        Ok(Self {
            config,
            topology: Arc::new(topology),
            jobs,
            config_hash,
        })
    }

    /// SHA-256 over policies, VM fleet, power model, options, topology and
    /// workload. Paths, mode, seed and output location are left out.
    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    fn sizing(&self) -> SizingOptions {
        SizingOptions {
            per_task_mi: self.config.options.per_task_mi,
            reduce_factor: self.config.options.reduce_factor,
        }
    }

    pub fn run(&self, mode: NetworkMode, seed: u64) -> Result<RunOutcome, RunError> {
        let cfg = &self.config;
        let topo = self.topology.clone();
        let routing: Box<dyn RoutingProtocol> = match mode {
            NetworkMode::Sdn => Box::new(SdnMaxBandwidth),
            NetworkMode::Legacy => Box::new(LegacyShortestPath::new(cfg.options.pin_granularity)),
        };
        let routing_name = routing.name();
        let traffic: Box<dyn TrafficPolicy> = Box::new(FairShare);
        let traffic_name = traffic.name();

        let mut sim: Simulation<Msg> = Simulation::new(seed);
        let registry = VmRegistry::shared();
        let hosts: Vec<_> = topo.hosts().map(|(ix, spec)| (ix, spec.clone())).collect();

        let controller = Controller::new(topo.clone(), routing, traffic);
        let ctl = sim.add_entity(ControllerEntity::new("sdn-controller", controller, cfg.power));
        let san_name = topo.storage().map_or("san", |s| topo.name(s)).to_string();
        let san = sim.add_entity(StorageAreaNetwork::new(san_name, ctl));
        let first_nm = sim.next_entity_id().index() + 1;
        let nm_ids: Vec<EntityId> = (0..hosts.len()).map(|i| EntityId::new(first_nm + i)).collect();
        let rm = sim.add_entity(ResourceManager::new(
            topo.clone(),
            registry.clone(),
            ctl,
            cfg.options.vm_allocation,
            1,
            nm_ids.clone(),
        ));
        let mut node_managers = BTreeMap::new();
        for ((ix, spec), &expected) in hosts.iter().zip(&nm_ids) {
            let id = sim.add_entity(NodeManager::new(
                *ix,
                spec.clone(),
                registry.clone(),
                rm,
                cfg.options.heartbeat_interval_s,
                cfg.power,
            ));
            debug_assert_eq!(id, expected);
            node_managers.insert(*ix, id);
        }
        let am_config = AmConfig {
            vm_count: cfg.vms.count,
            vm_spec: cfg.vms.spec(),
            scheduler: cfg.policies.vm_scheduler,
            sizing: self.sizing(),
            task_slots: cfg.options.task_slots,
        };
        let am = sim.add_entity(ApplicationMaster::new(
            0,
            Peers {
                rm,
                san,
                controller: ctl,
                node_managers,
            },
            registry,
            am_config,
            job_selection(&cfg.policies.job_selection),
            task_placement(&cfg.policies.task_placement),
            self.jobs.clone(),
        )?);

        let external =
            |at: f64, dst: EntityId, msg: Msg| SimEvent::new(SimTime::from_secs(at), EntityId::EXTERNAL, dst, msg);
        sim.schedule(external(0.0, am, Msg::AppStart))?;
        for &nm in &nm_ids {
            sim.schedule(external(cfg.options.heartbeat_interval_s, nm, Msg::Heartbeat))?;
        }

        let horizon = SimTime::from_secs(cfg.options.horizon_s);
        sim.run(Some(horizon))?;

        let master = sim.entity::<ApplicationMaster>(am).expect("application master");
        let run_end = master.finished_at().ok_or(RunError::Unfinished(horizon))?;
        let mut jobs = master.records().to_vec();
        jobs.sort_by_key(|r| r.job.id);

        let mut energy = EnergyLedger::new(run_end);
        let mut heartbeats = 0;
        for &nm in &nm_ids {
            let n = sim.entity::<NodeManager>(nm).expect("node manager");
            energy.push_track(n.host_name(), "host", n.power_track());
            heartbeats += n.heartbeats_sent() as usize;
        }
        let ce = sim.entity::<ControllerEntity>(ctl).expect("controller");
        for (ix, track) in ce.switch_tracks() {
            energy.push_track(topo.name(ix), "switch", track);
        }
        let mut packets = ce.controller().completed().to_vec();
        packets.sort_by_key(|p| p.id);

        Ok(RunOutcome {
            mode,
            seed,
            config_hash: self.config_hash.clone(),
            routing: routing_name,
            traffic: traffic_name,
            topology: topo,
            jobs,
            packets,
            energy,
            run_end,
            heartbeats,
        })
    }

    /// Runs the SDN and legacy variants side by side with the same seed.
    pub fn run_both(&self, seed: u64) -> Result<(RunOutcome, RunOutcome), RunError> {
        thread::scope(|s| {
            let legacy = s.spawn(|| self.run(NetworkMode::Legacy, seed));
            let sdn = self.run(NetworkMode::Sdn, seed);
            let legacy = legacy.join().expect("legacy run panicked");
            Ok((sdn?, legacy?))
        })
    }
}

fn check_policies(p: &Policies) -> Result<(), ConfigError> {
    let checks: [(&'static str, &str, &str); 5] = [
        ("job selection", &p.job_selection, FcfsJobSelection.name()),
        ("task placement", &p.task_placement, LeastUsedPlacement.name()),
        ("traffic", &p.traffic, FairShare.name()),
        ("sdn routing", &p.routing.sdn, SdnMaxBandwidth.name()),
        (
            "legacy routing",
            &p.routing.legacy,
            LegacyShortestPath::default().name(),
        ),
    ];
    for (kind, name, known) in checks {
        if name != known {
            return Err(ConfigError::UnknownPolicy {
                kind,
                name: name.to_string(),
            });
        }
    }
    Ok(())
}

fn job_selection(_name: &str) -> Box<dyn JobSelection> {
    Box::new(FcfsJobSelection)
}

fn task_placement(_name: &str) -> Box<dyn TaskPlacement> {
    Box::new(LeastUsedPlacement)
}

fn hash_inputs(config: &ScenarioConfig, topology: &PhysicalTopology, jobs: &[Job]) -> String {
    let hashed = serde_json::json!({
        "policies": config.policies,
        "vms": config.vms,
        "power": config.power,
        "options": config.options,
    });
    let mut h = Sha256::new();
    h.update(hashed.to_string().as_bytes());
    h.update(b"\n");
    h.update(topology.to_json().as_bytes());
    h.update(b"\n");
    h.update(write_workload(jobs).as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
