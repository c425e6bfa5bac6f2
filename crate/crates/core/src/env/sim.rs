use serde::{Deserialize, Serialize};

use super::dynamics::{
    initial_inventory, sanitize_action, step, AgentAction, EnvConfig, EnvState, StepOutcome,
};
use crate::error::{Error, Result};
use crate::ingest::{DemandSeries, FeatureScales, HistoryMode, RegionGrid, StateFeatures};

/// How the state presents pick-up history to the agents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationConfig {
    pub history: usize,
    pub history_mode: HistoryMode,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self {
            history: crate::ingest::features::DEFAULT_HISTORY,
            history_mode: HistoryMode::MeanStd,
        }
    }
}

/// One replay of a demand series with one agent per region.
#[derive(Debug, Clone)]
pub struct Environment {
    grid: RegionGrid,
    series: DemandSeries,
    cfg: EnvConfig,
    obs: ObservationConfig,
    scales: FeatureScales,
    horizon: usize,
    state: EnvState,
    initial: Vec<u32>,
}

impl Environment {
    /// `scales` come from the reference (historical) series so that all
    /// resampled episodes share one normalization.
    pub fn new(
        grid: RegionGrid,
        series: DemandSeries,
        cfg: EnvConfig,
        obs: ObservationConfig,
        scales: FeatureScales,
    ) -> Result<Self> {
        cfg.validate()?;
        if series.regions != grid.len() {
            return Err(Error::Config(format!(
                "demand has {} regions but grid has {}",
                series.regions,
                grid.len()
            )));
        }
        let horizon = cfg
            .horizon
            .unwrap_or(series.intervals)
            .min(series.intervals);
        let initial = initial_inventory(&series, cfg.fleet_size);
        let state = EnvState {
            t: 0,
            inventory: initial.clone(),
        };
        Ok(Self {
            grid,
            series,
            cfg,
            obs,
            scales,
            horizon,
            state,
            initial,
        })
    }

    /// Use a fixed starting inventory instead of the demand-proportional one.
    pub fn with_initial_inventory(mut self, inventory: Vec<u32>) -> Result<Self> {
        if inventory.len() != self.grid.len() {
            return Err(Error::Config(
                "initial inventory length differs from region count".into(),
            ));
        }
        self.initial = inventory.clone();
        self.state = EnvState { t: 0, inventory };
        Ok(self)
    }

    /// Same grid, config, scales and starting inventory over another series.
    pub fn with_series(&self, series: DemandSeries) -> Result<Self> {
        if series.regions != self.grid.len() {
            return Err(Error::ShapeMismatch {
                expected: self.grid.len(),
                got: series.regions,
            });
        }
        let horizon = self
            .cfg
            .horizon
            .unwrap_or(series.intervals)
            .min(series.intervals);
        Ok(Self {
            grid: self.grid.clone(),
            series,
            cfg: self.cfg.clone(),
            obs: self.obs,
            scales: self.scales,
            horizon,
            state: EnvState {
                t: 0,
                inventory: self.initial.clone(),
            },
            initial: self.initial.clone(),
        })
    }

    pub fn initial_inventory(&self) -> &[u32] {
        &self.initial
    }

    pub fn reset(&mut self) {
        self.state = EnvState {
            t: 0,
            inventory: self.initial.clone(),
        };
    }

    pub fn grid(&self) -> &RegionGrid {
        &self.grid
    }

    pub fn series(&self) -> &DemandSeries {
        &self.series
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn observation_config(&self) -> &ObservationConfig {
        &self.obs
    }

    pub fn scales(&self) -> &FeatureScales {
        &self.scales
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn agents(&self) -> usize {
        self.grid.len()
    }

    pub fn done(&self) -> bool {
        self.state.t >= self.horizon
    }

    pub fn observe(&self) -> StateFeatures {
        StateFeatures::build(
            &self.series,
            &self.grid,
            self.state.t,
            &self.state.inventory,
            self.obs.history,
            self.obs.history_mode,
        )
    }

    /// Which directions each agent may ship toward.
    pub fn open_directions(&self, agent: usize) -> [bool; 4] {
        self.grid.open_directions(agent)
    }

    /// Sanitize the raw joint action, advance one interval, and return the outcome.
    pub fn step(&mut self, raw: &[[u32; 4]]) -> Result<StepOutcome> {
        if self.done() {
            return Err(Error::Validation("episode already finished".into()));
        }
        if raw.len() != self.agents() {
            return Err(Error::ShapeMismatch {
                expected: self.agents(),
                got: raw.len(),
            });
        }
        let actions: Vec<AgentAction> = raw
            .iter()
            .enumerate()
            .map(|(i, &a)| sanitize_action(a, i, self.state.inventory[i], &self.cfg, &self.grid))
            .collect();
        let t = self.state.t;
        let outcome = step(
            &self.state,
            &actions,
            self.series.pickups(t),
            self.series.dropoffs(t),
            &self.cfg,
            &self.grid,
        );
        self.state = EnvState {
            t: t + 1,
            inventory: outcome.inventory_next.clone(),
        };
        Ok(outcome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn episode_runs_to_horizon() {
        let grid = RegionGrid::rectangular(1, 2).unwrap();
        let series = DemandSeries::from_rows(vec![vec![2, 0]; 3], vec![vec![0, 2]; 3]).unwrap();
        let cfg = EnvConfig {
            fleet_size: 4,
            ..Default::default()
        };
        let scales = FeatureScales::from_data(&series, &grid, 4);
        let mut env =
            Environment::new(grid, series, cfg, ObservationConfig::default(), scales).unwrap();
        assert_eq!(env.state().inventory, vec![4, 0]);
        let mut steps = 0;
        while !env.done() {
            env.step(&[[0; 4], [0, 0, 0, 5]]).unwrap();
            steps += 1;
        }
        assert_eq!(steps, 3);
        assert!(env.step(&[[0; 4]; 2]).is_err());
        env.reset();
        assert_eq!(env.state().t, 0);
    }
}
