use super::{HostSpec, LinkSpec, PhysicalTopology, SwitchSpec, Tier, TopologyDoc, TopologyError};

/// Generator for the three-tier (core / aggregation / edge) fabric with a
/// single storage node hanging off the first core switch.
///
/// Wiring, in order:
/// - `san` to `core1` by one link;
/// - cores are paired (`core1,core2`, `core3,core4`, ...); aggregation
///   switch `i` (1-based) is attached to every core of pair
///   `(i - 1) % pairs`, by two parallel links per core, so with two pairs
///   the odd aggregation switches hang off the first pair and the even ones
///   off the second;
/// - aggregation switches form pods of two (one when the count is odd) and
///   every aggregation switch of a pod links once to every edge switch of
///   that pod;
/// - hosts are spread evenly over the edge switches, one link each.
///
/// The default value reproduces the evaluation fabric: 4 cores, 8
/// aggregation, 8 edge switches, 16 hosts, 1 Gbps everywhere except the
/// 4 Gbps storage uplink.
#[derive(Clone, Debug, PartialEq)]
pub struct ThreeTier {
    pub cores: usize,
    pub aggs: usize,
    pub edges: usize,
    pub hosts: usize,
    pub core_agg_bps: f64,
    pub agg_edge_bps: f64,
    pub edge_host_bps: f64,
    pub san_core_bps: f64,
    pub host: HostResources,
    pub storage: HostResources,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HostResources {
    pub pes: u32,
    pub mips_per_pe: f64,
    pub ram_mb: u64,
}

impl HostResources {
    /// 8 CPUs, 10000 MIPS, 30 GB RAM.
    pub const EVALUATION: HostResources = HostResources {
        pes: 8,
        mips_per_pe: 10_000.0,
        ram_mb: 30 * 1024,
    };

    fn spec(&self, name: String) -> HostSpec {
        HostSpec {
            name,
            pes: self.pes,
            mips_per_pe: self.mips_per_pe,
            ram_mb: self.ram_mb,
        }
    }
}

const PARALLEL_CORE_LINKS: usize = 2;

impl Default for ThreeTier {
    fn default() -> Self {
        Self {
            cores: 4,
            aggs: 8,
            edges: 8,
            hosts: 16,
            core_agg_bps: 1e9,
            agg_edge_bps: 1e9,
            edge_host_bps: 1e9,
            san_core_bps: 4e9,
            host: HostResources::EVALUATION,
            storage: HostResources::EVALUATION,
        }
    }
}

impl ThreeTier {
    pub fn with_shape(cores: usize, aggs: usize, edges: usize, hosts: usize) -> Self {
        Self {
            cores,
            aggs,
            edges,
            hosts,
            ..Self::default()
        }
    }

    pub fn doc(&self) -> Result<TopologyDoc, TopologyError> {
        let shape = |msg: String| Err(TopologyError::Shape(msg));
        if self.cores == 0 || self.aggs == 0 || self.edges == 0 || self.hosts == 0 {
            return shape("every tier needs at least one node".into());
        }
        if !self.hosts.is_multiple_of(self.edges) {
            return shape(format!(
                "{} hosts cannot be split over {} edge switches",
                self.hosts, self.edges
            ));
        }
        if !self.edges.is_multiple_of(self.aggs) {
            return shape(format!(
                "{} edge switches cannot be split over {} aggregation switches",
                self.edges, self.aggs
            ));
        }
        let pairs = self.cores.div_ceil(2);
        if self.aggs < pairs {
            return shape(format!(
                "{} aggregation switches leave core pairs unconnected",
                self.aggs
            ));
        }

        let pod_width = if self.aggs.is_multiple_of(2) { 2 } else { 1 };
        let pods = self.aggs / pod_width;
        let edges_per_pod = self.edges / pods;
        let hosts_per_edge = self.hosts / self.edges;

        let core = |i: usize| format!("core{}", i + 1);
        let agg = |i: usize| format!("agg{}", i + 1);
        let edge = |i: usize| format!("edge{}", i + 1);
        let host = |i: usize| format!("host{}", i + 1);
        let link = |a: String, b: String, bw: f64| LinkSpec {
            a,
            b,
            bandwidth_bps: bw,
        };

        let mut doc = TopologyDoc {
            hosts: (0..self.hosts).map(|i| self.host.spec(host(i))).collect(),
            switches: Vec::new(),
            storage: vec![self.storage.spec("san".into())],
            links: Vec::new(),
        };
        let tiers = [
            (Tier::Core, self.cores, &core as &dyn Fn(usize) -> String),
            (Tier::Aggregation, self.aggs, &agg),
            (Tier::Edge, self.edges, &edge),
        ];
        for (tier, count, name) in tiers {
            doc.switches
                .extend((0..count).map(|i| SwitchSpec { name: name(i), tier }));
        }

        doc.links.push(link("san".into(), core(0), self.san_core_bps));
        for a in 0..self.aggs {
            let pair = a % pairs;
            for c in (2 * pair)..(2 * pair + 2).min(self.cores) {
                for _ in 0..PARALLEL_CORE_LINKS {
                    doc.links.push(link(core(c), agg(a), self.core_agg_bps));
                }
            }
        }
        for a in 0..self.aggs {
            let pod = a / pod_width;
            for e in (pod * edges_per_pod)..((pod + 1) * edges_per_pod) {
                doc.links.push(link(agg(a), edge(e), self.agg_edge_bps));
            }
        }
        for h in 0..self.hosts {
            doc.links
                .push(link(edge(h / hosts_per_edge), host(h), self.edge_host_bps));
        }
        Ok(doc)
    }

    pub fn build(&self) -> Result<PhysicalTopology, TopologyError> {
        PhysicalTopology::from_doc(&self.doc()?)
    }
}
