//! Bandwidth allocation across active channels.

use std::collections::BTreeMap;

use super::Route;
use crate::ids::ChannelId;
use crate::topology::PhysicalTopology;

pub trait TrafficPolicy: Send {
    fn name(&self) -> &'static str;

    /// Bandwidth for every channel given all channel routes.
    fn allocate(&self, topology: &PhysicalTopology, channels: &[(ChannelId, &Route)]) -> BTreeMap<ChannelId, f64>;
}

/// Every link's capacity is split equally among the channels crossing it;
/// a channel runs at the smallest share found along its route.
#[derive(Clone, Debug, Default)]
pub struct FairShare;

impl TrafficPolicy for FairShare {
    fn name(&self) -> &'static str {
        "fair_share"
    }

    fn allocate(&self, topology: &PhysicalTopology, channels: &[(ChannelId, &Route)]) -> BTreeMap<ChannelId, f64> {
        let mut sharing = vec![0u32; topology.link_count()];
        for (_, route) in channels {
            for l in &route.links {
                sharing[l.0] += 1;
            }
        }
        channels
            .iter()
            .map(|&(id, route)| {
                let bw = route
                    .links
                    .iter()
                    .map(|l| topology.link(*l).bandwidth_bps / f64::from(sharing[l.0]))
                    .fold(f64::INFINITY, f64::min);
                (id, bw)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{LinkIx, LinkSpec, NodeIx, SwitchSpec, Tier, TopologyDoc};

    fn chain(bws: &[f64]) -> PhysicalTopology {
        let names: Vec<String> = (0..=bws.len()).map(|i| format!("n{i}")).collect();
        let doc = TopologyDoc {
            switches: names
                .iter()
                .map(|n| SwitchSpec {
                    name: n.clone(),
                    tier: Tier::Edge,
                })
                .collect(),
            links: bws
                .iter()
                .enumerate()
                .map(|(i, &bw)| LinkSpec {
                    a: names[i].clone(),
                    b: names[i + 1].clone(),
                    bandwidth_bps: bw,
                })
                .collect(),
            ..Default::default()
        };
        PhysicalTopology::from_doc(&doc).unwrap()
    }

    fn route(links: &[usize]) -> Route {
        Route {
            nodes: (0..=links.len()).map(NodeIx).collect(),
            links: links.iter().map(|&l| LinkIx(l)).collect(),
        }
    }

    #[test]
    fn single_channel_gets_full_link() {
        let t = chain(&[1e9, 1e9]);
        let r = route(&[0, 1]);
        let alloc = FairShare.allocate(&t, &[(ChannelId(0), &r)]);
        assert_eq!(alloc[&ChannelId(0)], 1e9);
    }

    #[test]
    fn shared_4g_link_and_exclusive_1g_link() {
        // link 0: 4 Gbps shared by four channels, link 1: 1 Gbps used by channel 0 only
        let t = chain(&[4e9, 1e9]);
        let full = route(&[0, 1]);
        let short = route(&[0]);
        let chans = [
            (ChannelId(0), &full),
            (ChannelId(1), &short),
            (ChannelId(2), &short),
            (ChannelId(3), &short),
        ];
        let alloc = FairShare.allocate(&t, &chans);
        // min(4e9 / 4, 1e9 / 1)
        assert_eq!(alloc[&ChannelId(0)], 1e9);
        assert_eq!(alloc[&ChannelId(1)], 1e9);
    }

    #[test]
    fn two_channels_split_evenly() {
        let t = chain(&[1e9]);
        let r = route(&[0]);
        let alloc = FairShare.allocate(&t, &[(ChannelId(0), &r), (ChannelId(1), &r)]);
        assert_eq!(alloc.values().copied().collect::<Vec<_>>(), [0.5e9, 0.5e9]);
    }
}
