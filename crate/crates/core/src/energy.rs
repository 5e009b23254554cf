//! Host and switch power models and piecewise-constant energy accounting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::SimTime;

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("utilization {0} outside [0, 1]")]
    UtilizationOutOfRange(f64),
    #[error("power ledger of '{node}' does not cover [0, {run_end}] without gaps or overlaps")]
    GapInLedger { node: String, run_end: SimTime },
    #[error("invalid power model: {0}")]
    InvalidModel(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostPower {
    pub p_idle_w: f64,
    pub p_max_w: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchPower {
    pub p_static_w: f64,
    pub p_per_active_port_w: f64,
    pub p_idle_w: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerModel {
    pub host: HostPower,
    pub switch: SwitchPower,
    /// Nodes with nothing to do draw no power at all.
    pub idle_mode: bool,
}

impl Default for PowerModel {
    fn default() -> Self {
        Self {
            host: HostPower {
                p_idle_w: 100.0,
                p_max_w: 250.0,
            },
            switch: SwitchPower {
                p_static_w: 50.0,
                p_per_active_port_w: 5.0,
                p_idle_w: 50.0,
            },
            idle_mode: true,
        }
    }
}

impl PowerModel {
    pub fn validate(&self) -> Result<(), EnergyError> {
        let h = self.host;
        let s = self.switch;
        let all = [h.p_idle_w, h.p_max_w, s.p_static_w, s.p_per_active_port_w, s.p_idle_w];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(EnergyError::InvalidModel(
                "power constants must be finite and non-negative".into(),
            ));
        }
        if h.p_idle_w > h.p_max_w {
            return Err(EnergyError::InvalidModel("host p_idle_w exceeds p_max_w".into()));
        }
        Ok(())
    }
}

/// Linear host power in CPU utilization.
pub fn host_power(utilization: f64, model: &PowerModel) -> Result<f64, EnergyError> {
    if !(0.0..=1.0).contains(&utilization) {
        return Err(EnergyError::UtilizationOutOfRange(utilization));
    }
    let h = model.host;
    if utilization == 0.0 {
        return Ok(if model.idle_mode { 0.0 } else { h.p_idle_w });
    }
    Ok(h.p_idle_w + (h.p_max_w - h.p_idle_w) * utilization)
}

pub fn switch_power(active_ports: usize, model: &PowerModel) -> f64 {
    let s = model.switch;
    if active_ports == 0 {
        return if model.idle_mode { 0.0 } else { s.p_idle_w };
    }
    s.p_static_w + active_ports as f64 * s.p_per_active_port_w
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerInterval {
    pub start: SimTime,
    pub end: SimTime,
    pub power_w: f64,
    pub busy: bool,
}

impl PowerInterval {
    pub fn energy_j(&self) -> f64 {
        self.power_w * self.end.since(self.start)
    }
}

/// Power draw of one node as a step function starting at time zero.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerTrack {
    steps: Vec<(SimTime, f64, bool)>,
}

impl PowerTrack {
    pub fn new(initial_w: f64, busy: bool) -> Self {
        Self {
            steps: vec![(SimTime::ZERO, initial_w, busy)],
        }
    }

    /// Sets the power from `at` onwards. Calls must not go back in time.
    pub fn record(&mut self, at: SimTime, power_w: f64, busy: bool) {
        let &(last_t, last_w, last_busy) = self.steps.last().expect("track starts with a step");
        debug_assert!(at >= last_t);
        if last_w == power_w && last_busy == busy {
            return;
        }
        if at == last_t {
            self.steps.pop();
            if let Some(&(_, w, b)) = self.steps.last() {
                if w == power_w && b == busy {
                    return;
                }
            }
        }
        self.steps.push((at, power_w, busy));
    }

    /// Steps clipped to `[0, run_end]`, zero-length pieces dropped.
    pub fn intervals(&self, run_end: SimTime) -> Vec<PowerInterval> {
        let mut out = Vec::new();
        for (i, &(start, power_w, busy)) in self.steps.iter().enumerate() {
            if start >= run_end {
                break;
            }
            let end = self.steps.get(i + 1).map_or(run_end, |s| s.0.min(run_end));
            if end > start {
                out.push(PowerInterval {
                    start,
                    end,
                    power_w,
                    busy,
                });
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeLedger {
    pub name: String,
    pub kind: &'static str,
    pub intervals: Vec<PowerInterval>,
}

/// Per-node power intervals of a finished run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnergyLedger {
    pub run_end: SimTime,
    pub nodes: Vec<NodeLedger>,
}

impl EnergyLedger {
    pub fn new(run_end: SimTime) -> Self {
        Self {
            run_end,
            nodes: Vec::new(),
        }
    }

    pub fn push_track(&mut self, name: &str, kind: &'static str, track: &PowerTrack) {
        self.nodes.push(NodeLedger {
            name: name.to_string(),
            kind,
            intervals: track.intervals(self.run_end),
        });
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeEnergy {
    pub name: String,
    pub kind: &'static str,
    pub energy_j: f64,
    pub busy_s: f64,
    pub idle_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnergyTotals {
    pub nodes: Vec<NodeEnergy>,
    pub host_j: f64,
    pub switch_j: f64,
    pub total_j: f64,
}

pub fn total_energy(ledger: &EnergyLedger) -> Result<EnergyTotals, EnergyError> {
    let mut totals = EnergyTotals::default();
    for node in &ledger.nodes {
        let mut cursor = SimTime::ZERO;
        for iv in &node.intervals {
            if iv.start != cursor || iv.end < iv.start {
                return Err(EnergyError::GapInLedger {
                    node: node.name.clone(),
                    run_end: ledger.run_end,
                });
            }
            cursor = iv.end;
        }
        if cursor != ledger.run_end {
            return Err(EnergyError::GapInLedger {
                node: node.name.clone(),
                run_end: ledger.run_end,
            });
        }
        let energy_j: f64 = node.intervals.iter().map(PowerInterval::energy_j).sum();
        let busy_s: f64 = node
            .intervals
            .iter()
            .filter(|iv| iv.busy)
            .map(|iv| iv.end.since(iv.start))
            .sum();
        match node.kind {
            "switch" => totals.switch_j += energy_j,
            _ => totals.host_j += energy_j,
        }
        totals.total_j += energy_j;
        totals.nodes.push(NodeEnergy {
            name: node.name.clone(),
            kind: node.kind,
            energy_j,
            busy_s,
            idle_s: ledger.run_end.secs() - busy_s,
        });
    }
    Ok(totals)
}
