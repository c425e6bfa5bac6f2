use super::dynamics::StepOutcome;

/// Fulfilled service ratio `1 − ΣU / Σd` over an episode.
///
/// An episode without demand is reported as fully served.
pub fn avail_metric(outcomes: &[StepOutcome]) -> f64 {
    let (mut unmet, mut demand) = (0u64, 0u64);
    for o in outcomes {
        for (s, u) in o.served.iter().zip(&o.unmet) {
            unmet += *u as u64;
            demand += (*s + *u) as u64;
        }
    }
    if demand == 0 {
        log::warn!("episode had no demand; service ratio defined as 1");
        return 1.0;
    }
    1.0 - unmet as f64 / demand as f64
}

/// Total bikes moved by all agents over an episode.
pub fn total_rebalanced(outcomes: &[StepOutcome]) -> u64 {
    outcomes.iter().map(StepOutcome::relocated).sum()
}

/// Net bikes shipped from `from` into `to` over an episode (negative when
/// the flow runs the other way). Only defined for adjacent regions.
pub fn net_flow(
    outcomes: &[StepOutcome],
    from: usize,
    to: usize,
    grid: &crate::ingest::RegionGrid,
) -> i64 {
    use crate::ingest::Direction;
    let Some(dir) = Direction::ALL
        .into_iter()
        .find(|&d| grid.neighbor(from, d) == Some(to))
    else {
        return 0;
    };
    outcomes
        .iter()
        .map(|o| {
            o.actions[from].outflow[dir.index()] as i64
                - o.actions[to].outflow[dir.opposite().index()] as i64
        })
        .sum()
}
