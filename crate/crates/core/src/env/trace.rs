use std::io::Write;

use serde::{Deserialize, Serialize};

use super::dynamics::StepOutcome;
use crate::error::Result;

/// One line of an episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    /// Inventory at the start of the interval.
    pub b: Vec<u32>,
    pub actions: Vec<[u32; 4]>,
    pub served: Vec<u32>,
    pub unmet: Vec<u32>,
    pub rewards: Vec<f64>,
}

impl TraceRecord {
    pub fn new(t: usize, inventory: &[u32], outcome: &StepOutcome) -> Self {
        Self {
            t,
            b: inventory.to_vec(),
            actions: outcome.actions.iter().map(|a| a.outflow).collect(),
            served: outcome.served.clone(),
            unmet: outcome.unmet.clone(),
            rewards: outcome.rewards.clone(),
        }
    }
}

/// Write records as JSON lines.
pub fn write_trace<W: Write>(mut out: W, records: &[TraceRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace(text: &str) -> Result<Vec<TraceRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Into::into))
        .collect()
}

/// Service ratio recomputed from a trace.
pub fn trace_service_ratio(records: &[TraceRecord]) -> f64 {
    let unmet: u64 = records
        .iter()
        .flat_map(|r| &r.unmet)
        .map(|&u| u as u64)
        .sum();
    let demand: u64 = records
        .iter()
        .flat_map(|r| r.served.iter().zip(&r.unmet))
        .map(|(&s, &u)| (s + u) as u64)
        .sum();
    if demand == 0 {
        1.0
    } else {
        1.0 - unmet as f64 / demand as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::dynamics::AgentAction;

    #[test]
    fn trace_roundtrip_and_metric() {
        let outcome = StepOutcome {
            inventory_next: vec![1, 2],
            served: vec![3, 1],
            unmet: vec![1, 0],
            rewards: vec![0.5, -1.0],
            pre_demand_inventory: vec![3, 1],
            actions: vec![AgentAction::new([0, 0, 1, 0]), AgentAction::IDLE],
        };
        let recs = vec![TraceRecord::new(0, &[4, 0], &outcome)];
        let mut buf = Vec::new();
        write_trace(&mut buf, &recs).unwrap();
        let back = read_trace(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, recs);
        assert!((trace_service_ratio(&back) - 0.8).abs() < 1e-12);
    }
}
