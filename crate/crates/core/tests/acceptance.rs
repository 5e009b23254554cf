//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdnsim::bigdata::{Job, JobType, SchedulerKind, VmSpec};
use sdnsim::ids::{JobId, TaskId, TaskKind, VmId};
use sdnsim::kernel::SimTime;
use sdnsim::network::routing::{route_legacy, route_sdn};
use sdnsim::network::{Controller, Endpoint, FairShare, Flow, SdnMaxBandwidth};
use sdnsim::reports::{compare, RunReport};
use sdnsim::scenario::{NetworkMode, Options, Policies, Scenario, ScenarioConfig, VmFleet};
use sdnsim::topology::{HostSpec, LinkIx, LinkSpec, NodeIx, PhysicalTopology, SwitchSpec, Tier, TopologyDoc};
use sdnsim::usecase::usecase_scenario;

const ORACLE_REL_TOL: f64 = 1e-6;
const FAIR_SHARE_REL_TOL: f64 = 1e-12;
const CAPACITY_SLACK: f64 = 1e-9;
const CONSERVATION_REL_TOL: f64 = 1e-6;
const ROUTING_GRAPHS: usize = 250;
const USECASE_SEEDS: [u64; 5] = [42, 43, 44, 45, 46];
const CONSERVATION_SCENARIOS: u64 = 100;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("analytic oracle equivalence", Duration::from_secs(1), analytic_oracle),
        ("fair-share exactness", Duration::from_secs(1), fair_share),
        ("routing correctness", Duration::from_secs(30), routing),
        ("use-case direction", Duration::from_secs(60), usecase_direction),
        ("metric self-consistency", Duration::from_secs(60), self_consistency),
        ("determinism", Duration::from_secs(60), determinism),
        ("scheduler oracles", Duration::from_secs(1), scheduler_oracles),
        ("conservation suite", Duration::from_secs(60), conservation),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = check();
        let took = t.elapsed();
        let result = match result {
            Ok(detail) if took > *budget => Err(format!("{detail}; took {took:?}, budget {budget:?}")),
            other => other,
        };
        match result {
            Ok(detail) => println!("PASS {} {name}: {detail} ({took:.2?})", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why} ({took:.2?})", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn host(name: &str, pes: u32, mips: f64, ram: u64) -> HostSpec {
    HostSpec {
        name: name.into(),
        pes,
        mips_per_pe: mips,
        ram_mb: ram,
    }
}

fn link(a: &str, b: &str, bw: f64) -> LinkSpec {
    LinkSpec {
        a: a.into(),
        b: b.into(),
        bandwidth_bps: bw,
    }
}

fn switch(name: &str) -> SwitchSpec {
    SwitchSpec {
        name: name.into(),
        tier: Tier::Edge,
    }
}

fn config(vms: VmFleet, options: Options) -> ScenarioConfig {
    ScenarioConfig {
        topology: "t.json".into(),
        workload: "w.csv".into(),
        mode: sdnsim::scenario::Mode::Both,
        seed: 0,
        policies: Policies::default(),
        vms,
        power: Default::default(),
        output: "out".into(),
        options,
    }
}

#[allow(clippy::too_many_arguments)]
fn job(id: u64, submit: f64, map_mi: f64, reduce_mi: f64, s2m: f64, m2r: f64, r2s: f64, nm: u32, nr: u32) -> Job {
    Job {
        id: JobId(id),
        user_id: 1,
        job_type: JobType::Custom("test".into()),
        submit_time: SimTime::from_secs(submit),
        map_mi_total: map_mi,
        reduce_mi_total: reduce_mi,
        storage_to_map_bits: s2m,
        map_to_reduce_bits: m2r,
        reduce_to_storage_bits: r2s,
        num_mappers: nm,
        num_reducers: nr,
    }
}

// 1 ------------------------------------------------------------------------

fn analytic_oracle() -> Outcome {
    const BW: f64 = 1.6e9;
    const MIPS: f64 = 1250.0;
    let (s2m, m2r, r2s, map_mi, reduce_mi) = (4e9, 2e9, 1e9, 5000.0, 3000.0);
    let doc = TopologyDoc {
        hosts: vec![host("h1", 1, MIPS, 8192), host("h2", 1, MIPS, 8192)],
        switches: vec![switch("s1"), switch("s2")],
        storage: vec![host("san", 1, MIPS, 8192)],
        links: vec![
            link("san", "s1", BW),
            link("s1", "h1", BW),
            link("s1", "s2", BW),
            link("s2", "h2", BW),
        ],
    };
    let topo = PhysicalTopology::from_doc(&doc).map_err(|e| e.to_string())?;
    let vms = VmFleet {
        count: 2,
        pes: 1,
        mips_per_pe: MIPS,
        ram_mb: 8192,
    };
    let jobs = vec![job(1, 0.0, map_mi, reduce_mi, s2m, m2r, r2s, 1, 1)];
    let scenario = Scenario::from_parts(config(vms, Options::default()), topo, jobs).map_err(|e| e.to_string())?;
    let expected = s2m / BW + map_mi / MIPS + m2r / BW + reduce_mi / MIPS + r2s / BW;
    let mut detail = Vec::new();
    for mode in [NetworkMode::Sdn, NetworkMode::Legacy] {
        let out = scenario.run(mode, 1).map_err(|e| e.to_string())?;
        let record = &out.jobs[0];
        let vms: BTreeSet<_> = record.tasks.iter().map(|t| t.vm).collect();
        ensure(vms.len() == 2, || format!("{mode}: mapper and reducer share a VM"))?;
        let m = &record.metrics;
        let wall = m.finish.since(m.submit);
        ensure(rel_err(m.j_ct, expected) <= ORACLE_REL_TOL, || {
            format!("{mode}: j_ct {} vs closed form {expected}", m.j_ct)
        })?;
        ensure(rel_err(wall, expected) <= ORACLE_REL_TOL, || {
            format!("{mode}: wall time {wall} vs closed form {expected}")
        })?;
        detail.push(format!("{mode} j_ct={:.6}", m.j_ct));
    }
    Ok(format!("closed form {expected:.6} s; {}", detail.join(", ")))
}

// 2 ------------------------------------------------------------------------

fn allocation_within_capacity(c: &Controller) -> Result<(), String> {
    let topo = c.topology();
    let mut used = vec![0.0; topo.link_count()];
    for ch in c.channels() {
        for l in &ch.route.links {
            used[l.0] += ch.bandwidth_bps;
        }
    }
    for (i, u) in used.iter().enumerate() {
        let cap = topo.link(LinkIx(i)).bandwidth_bps;
        ensure(*u <= cap * (1.0 + CAPACITY_SLACK), || {
            format!("link {i}: {u} allocated over {cap}")
        })?;
    }
    Ok(())
}

fn fair_share() -> Outcome {
    const SIZE: f64 = 2.5e9;
    const CAP: f64 = 1e9;
    let doc = TopologyDoc {
        hosts: vec![host("h", 8, 1000.0, 65536)],
        switches: vec![switch("s")],
        storage: vec![host("san", 1, 1000.0, 1024)],
        links: vec![link("san", "s", CAP), link("s", "h", CAP)],
    };
    let topo = Arc::new(PhysicalTopology::from_doc(&doc).map_err(|e| e.to_string())?);
    let h = topo.node_ix("h").expect("host exists");
    let mut events = 0;
    for n in [2u32, 3, 4, 8] {
        let mut c = Controller::new(topo.clone(), Box::new(SdnMaxBandwidth), Box::new(FairShare));
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from(n));
        for i in 0..n {
            let vm = Endpoint::Vm(VmId(i + 1));
            c.register_endpoint(vm, h);
            c.transmit_packet(
                SimTime::ZERO,
                Flow::new(Endpoint::Storage, vm, JobId(1)),
                SIZE,
                &mut rng,
            )
            .map_err(|e| e.to_string())?;
            allocation_within_capacity(&c)?;
            events += 1;
        }
        while let Some(t) = c.earliest_finish_time() {
            c.update_progress(t);
            c.reallocate_bandwidth();
            allocation_within_capacity(&c)?;
            events += 1;
        }
        let expected = f64::from(n) * SIZE / CAP;
        ensure(c.completed().len() == n as usize, || {
            format!("N={n}: not all packets finished")
        })?;
        for p in c.completed() {
            let f = p.finish.secs();
            ensure(rel_err(f, expected) <= FAIR_SHARE_REL_TOL, || {
                format!("N={n}: packet {} finished at {f}, expected {expected}", p.id)
            })?;
        }
    }
    Ok(format!(
        "N in {{2,3,4,8}} finish at N x size/capacity; {events} allocations within capacity"
    ))
}

// 3 ------------------------------------------------------------------------

fn random_graph(rng: &mut ChaCha8Rng) -> PhysicalTopology {
    let n = rng.gen_range(2..=8usize);
    let names: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let bws = [1e9, 2e9, 4e9, 10e9];
    let mut links = Vec::new();
    for i in 1..n {
        let j = rng.gen_range(0..i);
        links.push(link(&names[i], &names[j], bws[rng.gen_range(0..bws.len())]));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.3) {
                links.push(link(&names[i], &names[j], bws[rng.gen_range(0..bws.len())]));
            }
        }
    }
    let doc = TopologyDoc {
        hosts: vec![],
        switches: names.iter().map(|s| switch(s)).collect(),
        storage: vec![],
        links,
    };
    PhysicalTopology::from_doc(&doc).expect("generated graph is well formed")
}

fn bfs_hops(adj: &[Vec<(usize, usize)>], src: usize, dst: usize) -> Option<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[src] = 0;
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        for &(v, _) in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                q.push_back(v);
            }
        }
    }
    (dist[dst] != usize::MAX).then_some(dist[dst])
}

/// Every simple path as a list of link indices.
fn all_paths(adj: &[Vec<(usize, usize)>], src: usize, dst: usize) -> Vec<Vec<usize>> {
    fn walk(
        adj: &[Vec<(usize, usize)>],
        u: usize,
        dst: usize,
        seen: &mut Vec<bool>,
        path: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if u == dst {
            out.push(path.clone());
            return;
        }
        for &(v, l) in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                path.push(l);
                walk(adj, v, dst, seen, path, out);
                path.pop();
                seen[v] = false;
            }
        }
    }
    let mut seen = vec![false; adj.len()];
    seen[src] = true;
    let mut out = Vec::new();
    walk(adj, src, dst, &mut seen, &mut Vec::new(), &mut out);
    out
}

fn routing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut pairs = 0;
    for g in 0..ROUTING_GRAPHS {
        let topo = random_graph(&mut rng);
        let n = topo.node_count();
        let mut adj = vec![Vec::new(); n];
        for (i, l) in topo.links().iter().enumerate() {
            adj[l.a.0].push((l.b.0, i));
            adj[l.b.0].push((l.a.0, i));
        }
        let load: Vec<u32> = (0..topo.link_count()).map(|_| rng.gen_range(0..4)).collect();
        let avail = |l: usize| topo.link(LinkIx(l)).bandwidth_bps / f64::from(load[l] + 1);
        for s in 0..n {
            for d in 0..n {
                if s == d {
                    continue;
                }
                pairs += 1;
                let hops = bfs_hops(&adj, s, d).ok_or_else(|| format!("graph {g} disconnected"))?;
                let best = all_paths(&adj, s, d)
                    .iter()
                    .filter(|p| p.len() == hops)
                    .map(|p| p.iter().map(|&l| avail(l)).fold(f64::INFINITY, f64::min))
                    .fold(0.0, f64::max);
                let legacy = route_legacy(&topo, NodeIx(s), NodeIx(d), &mut rng).map_err(|e| e.to_string())?;
                let sdn = route_sdn(&topo, NodeIx(s), NodeIx(d), &load).map_err(|e| e.to_string())?;
                for (which, r) in [("legacy", &legacy), ("sdn", &sdn)] {
                    ensure(r.is_well_formed(&topo), || {
                        format!("graph {g} {s}->{d}: {which} route malformed")
                    })?;
                    ensure(r.source() == NodeIx(s) && r.destination() == NodeIx(d), || {
                        format!("graph {g} {s}->{d}: {which} route has wrong ends")
                    })?;
                    ensure(r.hops() == hops, || {
                        format!("graph {g} {s}->{d}: {which} {} hops, BFS {hops}", r.hops())
                    })?;
                }
                let got = sdn.links.iter().map(|l| avail(l.0)).fold(f64::INFINITY, f64::min);
                ensure(got == best, || {
                    format!("graph {g} {s}->{d}: sdn bottleneck {got}, best {best}")
                })?;
            }
        }
    }
    Ok(format!("{ROUTING_GRAPHS} graphs, {pairs} ordered pairs"))
}

// 4 ------------------------------------------------------------------------

fn usecase_direction() -> Outcome {
    let mut lines = Vec::new();
    let mut bad = Vec::new();
    for seed in USECASE_SEEDS {
        let scenario = usecase_scenario(seed).map_err(|e| e.to_string())?;
        let (sdn, legacy) = scenario.run_both(seed).map_err(|e| e.to_string())?;
        let sdn = RunReport::from_outcome(&sdn).map_err(|e| e.to_string())?;
        let legacy = RunReport::from_outcome(&legacy).map_err(|e| e.to_string())?;
        ensure(sdn.jobs.len() == 15, || {
            format!("seed {seed}: {} job rows", sdn.jobs.len())
        })?;
        let s = compare(&sdn, &legacy).map_err(|e| e.to_string())?;
        if sdn.mean_transmission_s() >= legacy.mean_transmission_s() {
            bad.push(format!("seed {seed} transmission"));
        }
        if sdn.mean_completion_s() >= legacy.mean_completion_s() {
            bad.push(format!("seed {seed} completion"));
        }
        if sdn.total_energy_j >= legacy.total_energy_j {
            bad.push(format!("seed {seed} energy"));
        }
        lines.push(format!(
            "seed {seed}: tr {:.1}% ct {:.1}% energy {:.1}%",
            s.transmission_pct, s.completion_pct, s.energy_pct
        ));
    }
    ensure(bad.is_empty(), || format!("SDN not lower: {}", bad.join(", ")))?;
    Ok(lines.join("; "))
}

// 5 ------------------------------------------------------------------------

fn parse_micros(s: &str) -> Result<i64, String> {
    let (neg, s) = s.strip_prefix('-').map_or((false, s), |r| (true, r));
    let (whole, frac) = s.split_once('.').ok_or_else(|| format!("no decimal point in '{s}'"))?;
    ensure(frac.len() == 6, || format!("'{s}' does not have six decimals"))?;
    let v = whole.parse::<i64>().map_err(|e| e.to_string())? * 1_000_000
        + frac.parse::<i64>().map_err(|e| e.to_string())?;
    Ok(if neg { -v } else { v })
}

type Rows = Vec<BTreeMap<String, String>>;

fn read_rows(path: &Path) -> Result<Rows, String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| e.to_string())?;
            Ok(header
                .iter()
                .zip(rec.iter())
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect())
        })
        .collect()
}

fn field(row: &BTreeMap<String, String>, k: &str) -> Result<i64, String> {
    parse_micros(row.get(k).ok_or_else(|| format!("missing column {k}"))?)
}

fn check_report_dir(dir: &Path) -> Result<usize, String> {
    let jobs = read_rows(&dir.join("jobs.csv"))?;
    let tx = read_rows(&dir.join("transmissions.csv"))?;
    let proc_ = read_rows(&dir.join("processing.csv"))?;
    // job -> leg -> slowest transfer
    let mut legs: BTreeMap<String, BTreeMap<String, i64>> = BTreeMap::new();
    for t in &tx {
        let d = field(t, "duration")?;
        ensure(d == field(t, "finish")? - field(t, "start")?, || {
            format!("packet {} duration", t["packet_id"])
        })?;
        let e = legs
            .entry(t["job_id"].clone())
            .or_default()
            .entry(t["leg"].clone())
            .or_insert(0);
        *e = (*e).max(d);
    }
    let mut phases: BTreeMap<String, (i64, i64)> = BTreeMap::new();
    for p in &proc_ {
        let d = field(p, "duration")?;
        ensure(d == field(p, "end")? - field(p, "start")?, || {
            format!("task {} duration", p["task_id"])
        })?;
        let e = phases.entry(p["job_id"].clone()).or_default();
        match p["kind"].as_str() {
            "map" => e.0 = e.0.max(d),
            "reduce" => e.1 = e.1.max(d),
            k => return Err(format!("unknown task kind {k}")),
        }
    }
    for j in &jobs {
        let id = &j["job_id"];
        let j_tr: i64 = legs.get(id).map_or(0, |l| l.values().sum());
        let (j_mp, j_rd) = phases.get(id).copied().unwrap_or_default();
        for (col, want) in [
            ("j_tr", j_tr),
            ("j_mp", j_mp),
            ("j_rd", j_rd),
            ("j_ct", j_tr + j_mp + j_rd),
        ] {
            let got = field(j, col)?;
            ensure(got == want, || {
                format!("{}: job {id} {col} {got} != recomputed {want}", dir.display())
            })?;
        }
    }
    Ok(jobs.len())
}

fn self_consistency() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut checked = 0;
    for seed in [42, 7] {
        let scenario = usecase_scenario(seed).map_err(|e| e.to_string())?;
        let (sdn, legacy) = scenario.run_both(seed).map_err(|e| e.to_string())?;
        for out in [sdn, legacy] {
            let dir = tmp.path().join(format!("{seed}-{}", out.mode));
            RunReport::from_outcome(&out)
                .map_err(|e| e.to_string())?
                .emit(&dir)
                .map_err(|e| e.to_string())?;
            checked += check_report_dir(&dir)?;
        }
    }
    Ok(format!(
        "{checked} job rows recomputed exactly from transfer and task rows"
    ))
}

// 6 ------------------------------------------------------------------------

fn bundled_scenario() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/usecase/usecase.json")
}

fn run_into(dir: &Path) -> Result<(), String> {
    let scenario = Scenario::load(&bundled_scenario()).map_err(|e| e.to_string())?;
    let seed = scenario.config.seed;
    let (sdn, legacy) = scenario.run_both(seed).map_err(|e| e.to_string())?;
    let sdn = RunReport::from_outcome(&sdn).map_err(|e| e.to_string())?;
    let legacy = RunReport::from_outcome(&legacy).map_err(|e| e.to_string())?;
    sdn.emit(&dir.join("sdn")).map_err(|e| e.to_string())?;
    legacy.emit(&dir.join("legacy")).map_err(|e| e.to_string())?;
    compare(&sdn, &legacy)
        .and_then(|c| c.write(&dir.join("comparison.csv")))
        .map_err(|e| e.to_string())
}

fn files_under(dir: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(|e| e.to_string())? {
            let p = entry.map_err(|e| e.to_string())?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).expect("under root").to_path_buf();
                out.insert(rel, fs::read(&p).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(out)
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_into(a.path())?;
    run_into(b.path())?;
    let (fa, fb) = (files_under(a.path())?, files_under(b.path())?);
    ensure(fa.len() == 13, || format!("expected 13 files, found {}", fa.len()))?;
    ensure(fa.keys().eq(fb.keys()), || "file sets differ".into())?;
    for (name, bytes) in &fa {
        ensure(fb[name] == *bytes, || format!("{} differs", name.display()))?;
    }
    Ok(format!("{} files byte-identical", fa.len()))
}

// 7 ------------------------------------------------------------------------

fn scheduler_oracles() -> Outcome {
    let t = SimTime::from_secs;
    let task = |i| TaskId::map(JobId(1), i);
    let spec = VmSpec::EVALUATION;

    let mut ts = SchedulerKind::TimeShared.build(&spec);
    ts.submit(task(0), 5000.0, t(0.0));
    ensure(ts.next_completion() == Some(t(1.0)), || {
        "time-shared single task".into()
    })?;
    ensure(ts.advance(t(1.0)) == vec![(task(0), t(0.0), t(1.0))], || {
        "time-shared single task".into()
    })?;

    let mut ts = SchedulerKind::TimeShared.build(&spec);
    ts.submit(task(0), 5000.0, t(0.0));
    ts.submit(task(1), 5000.0, t(0.0));
    ensure(ts.rates() == vec![(task(0), 2500.0), (task(1), 2500.0)], || {
        format!("rates {:?}", ts.rates())
    })?;
    let done = ts.advance(t(2.0));
    ensure(done.len() == 2 && done.iter().all(|d| d.2 == t(2.0)), || {
        format!("time-shared pair {done:?}")
    })?;

    let mut ss = SchedulerKind::SpaceShared.build(&spec);
    for i in 0..5 {
        ss.submit(task(i), 1250.0, t(0.0));
    }
    let mut ends: Vec<f64> = ss.advance(t(10.0)).iter().map(|d| d.2.secs()).collect();
    ends.sort_by(f64::total_cmp);
    ensure(ends == [1.0, 1.0, 1.0, 1.0, 2.0], || {
        format!("space-shared ends {ends:?}")
    })?;
    Ok("1 task in 1 s; 2 tasks at 2500 MIPS finish at 2 s; 5 tasks on 4 PEs end at 1,1,1,1,2 s".into())
}

// 8 ------------------------------------------------------------------------

fn diamond(rng: &mut ChaCha8Rng) -> PhysicalTopology {
    let bws = [0.5e9, 1e9, 2e9];
    let mut bw = || bws[rng.gen_range(0..bws.len())];
    let doc = TopologyDoc {
        hosts: vec![
            host("h1", 4, 1250.0, 16384),
            host("h2", 4, 1250.0, 16384),
            host("h3", 4, 1250.0, 16384),
        ],
        switches: ["a", "b", "c", "d"].iter().map(|s| switch(s)).collect(),
        storage: vec![host("san", 1, 1000.0, 1024)],
        links: vec![
            link("san", "a", bw()),
            link("a", "b", bw()),
            link("a", "c", bw()),
            link("b", "d", bw()),
            link("c", "d", bw()),
            link("d", "h1", bw()),
            link("d", "h2", bw()),
            link("a", "h3", bw()),
        ],
    };
    PhysicalTopology::from_doc(&doc).expect("diamond is well formed")
}

fn conservation() -> Outcome {
    let (mut packets, mut tasks) = (0, 0);
    for case in 0..CONSERVATION_SCENARIOS {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + case);
        let topo = diamond(&mut rng);
        let n_jobs = rng.gen_range(1..=4);
        let mut jobs = Vec::new();
        for id in 1..=n_jobs {
            let gb = |rng: &mut ChaCha8Rng| {
                if rng.gen_bool(0.1) {
                    0.0
                } else {
                    rng.gen_range(0.1..8.0) * 1e9
                }
            };
            jobs.push(job(
                id,
                rng.gen_range(0.0..5.0),
                rng.gen_range(1000.0..20000.0),
                rng.gen_range(1000.0..20000.0),
                gb(&mut rng),
                gb(&mut rng),
                gb(&mut rng),
                rng.gen_range(1..=3),
                rng.gen_range(1..=2),
            ));
        }
        let vms = VmFleet {
            count: rng.gen_range(1..=4),
            pes: 2,
            mips_per_pe: 1250.0,
            ram_mb: 8192,
        };
        let options = Options {
            vm_allocation: if rng.gen_bool(0.5) {
                sdnsim::bigdata::VmAllocation::FirstFit
            } else {
                sdnsim::bigdata::VmAllocation::Spread
            },
            ..Options::default()
        };
        let mut cfg = config(vms, options);
        if rng.gen_bool(0.5) {
            cfg.policies.vm_scheduler = SchedulerKind::SpaceShared;
        }
        let mode = if rng.gen_bool(0.5) {
            NetworkMode::Sdn
        } else {
            NetworkMode::Legacy
        };
        let scenario = Scenario::from_parts(cfg, topo, jobs).map_err(|e| format!("case {case}: {e}"))?;
        let out = scenario.run(mode, case).map_err(|e| format!("case {case}: {e}"))?;

        let mut arrivals: BTreeMap<TaskId, (usize, SimTime)> = BTreeMap::new();
        for p in &out.packets {
            packets += 1;
            let bits: f64 = p
                .intervals
                .iter()
                .map(|iv| iv.bandwidth_bps * (iv.end.secs() - iv.start.secs()))
                .sum();
            if !p.intervals.is_empty() {
                ensure(rel_err(bits, p.size_bits) <= CONSERVATION_REL_TOL, || {
                    format!("case {case} packet {}: {bits} bits integrated of {}", p.id, p.size_bits)
                })?;
                let contiguous = p.intervals.windows(2).all(|w| w[0].end == w[1].start)
                    && p.intervals[0].start == p.start
                    && p.intervals.last().map(|iv| iv.end) == Some(p.finish);
                ensure(contiguous, || {
                    format!("case {case} packet {}: intervals not contiguous", p.id)
                })?;
            } else {
                ensure(p.route.links.is_empty() && p.finish == p.start, || {
                    format!("case {case} packet {}: routed packet without intervals", p.id)
                })?;
            }
            if let Some(t) = p.flow.dst_task {
                let e = arrivals.entry(t).or_insert((0, SimTime::ZERO));
                e.0 += 1;
                e.1 = e.1.max(p.finish);
            }
        }
        for record in &out.jobs {
            let nm = record.job.num_mappers as usize;
            for t in &record.tasks {
                tasks += 1;
                let start = t.exec_start.ok_or_else(|| format!("case {case}: {} never ran", t.id))?;
                if let Some(&(count, last)) = arrivals.get(&t.id) {
                    ensure(start >= last, || {
                        format!("case {case}: {} starts before its input lands", t.id)
                    })?;
                    if t.id.kind == TaskKind::Reduce && record.job.map_to_reduce_bits > 0.0 {
                        ensure(count == nm, || {
                            format!("case {case}: {} got {count} of {nm} inputs", t.id)
                        })?;
                    }
                }
                if t.id.kind == TaskKind::Reduce {
                    for m in record.tasks.iter().filter(|m| m.id.kind == TaskKind::Map) {
                        let m_end = m.exec_end.ok_or_else(|| format!("case {case}: {} unfinished", m.id))?;
                        ensure(start >= m_end, || {
                            format!("case {case}: {} starts before {} ends", t.id, m.id)
                        })?;
                    }
                }
            }
        }
    }
    Ok(format!(
        "{CONSERVATION_SCENARIOS} scenarios, {packets} packets conserved, {tasks} tasks data-gated"
    ))
}
