use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::demand::DemandSeries;
use super::grid::RegionGrid;
use crate::error::{Error, Result};

/// Default number of past intervals summarized by the pick-up statistics.
pub const DEFAULT_HISTORY: usize = 8;

/// `[sin 2πh/24, cos 2πh/24, sin 2πd/7, cos 2πd/7]`.
pub fn temporal_encode(hour: f64, weekday: u32) -> Result<[f64; 4]> {
    if !(0.0..24.0).contains(&hour) {
        return Err(Error::Validation(format!("hour {hour} outside [0, 24)")));
    }
    if weekday > 6 {
        return Err(Error::Validation(format!(
            "weekday {weekday} outside 0..=6"
        )));
    }
    let h = 2.0 * PI * hour / 24.0;
    let d = 2.0 * PI * weekday as f64 / 7.0;
    Ok([h.sin(), h.cos(), d.sin(), d.cos()])
}

/// Interleaved `[μ_1, σ_1, …, μ_K, σ_K]` of pick-ups over intervals
/// `max(0, t−H)..t`. Population standard deviation; zeros when `t == 0`.
pub fn pickup_stats(series: &DemandSeries, t: usize, history: usize) -> Vec<f64> {
    let k = series.regions;
    let mut out = vec![0.0; 2 * k];
    let lo = t.saturating_sub(history.max(1));
    let hi = t.min(series.intervals);
    if hi <= lo {
        return out;
    }
    let n = (hi - lo) as f64;
    for region in 0..k {
        let mean = (lo..hi)
            .map(|s| series.pickups(s)[region] as f64)
            .sum::<f64>()
            / n;
        let var = (lo..hi)
            .map(|s| {
                let dev = series.pickups(s)[region] as f64 - mean;
                dev * dev
            })
            .sum::<f64>()
            / n;
        out[2 * region] = mean;
        out[2 * region + 1] = var.sqrt();
    }
    out
}

/// Pick-ups of the previous interval per region (zeros at `t == 0`).
pub fn last_pickups(series: &DemandSeries, t: usize) -> Vec<f64> {
    if t == 0 || t > series.intervals {
        return vec![0.0; series.regions];
    }
    series.pickups(t - 1).iter().map(|&x| x as f64).collect()
}

/// How pick-up history enters the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryMode {
    /// Mean and standard deviation over the last H intervals (2K values).
    #[default]
    MeanStd,
    /// Previous interval's pick-ups only (K values).
    LastStep,
}

/// Read a per-region `[roads, bike lanes, POIs]` table.
///
/// A missing file yields all zeros with a warning. Row count must equal K
/// and every entry must be a nonnegative integer.
pub fn load_static_features(path: &Path, grid: &RegionGrid) -> Result<Vec<[u32; 3]>> {
    if !path.exists() {
        log::warn!(
            "static feature file {} not found; using zeros",
            path.display()
        );
        return Ok(vec![[0; 3]; grid.len()]);
    }
    let text = std::fs::read_to_string(path)?;
    parse_static_features(&text, grid.len())
}

pub fn parse_static_features(text: &str, regions: usize) -> Result<Vec<[u32; 3]>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 3 {
            return Err(Error::Config(format!(
                "static feature row {i} has {} columns, expected 3",
                record.len()
            )));
        }
        let mut row = [0u32; 3];
        for (slot, raw) in row.iter_mut().zip(record.iter()) {
            let v: i64 = raw.parse().map_err(|_| {
                Error::Config(format!("static feature row {i}: {raw:?} is not an integer"))
            })?;
            if v < 0 {
                return Err(Error::Config(format!(
                    "static feature row {i}: negative count {v}"
                )));
            }
            *slot = u32::try_from(v)
                .map_err(|_| Error::Config(format!("static feature row {i}: {v} too large")))?;
        }
        rows.push(row);
    }
    if rows.len() != regions {
        return Err(Error::Config(format!(
            "static feature file has {} rows, grid has {regions} regions",
            rows.len()
        )));
    }
    Ok(rows)
}

/// Raw (unscaled) global state at one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct StateFeatures {
    pub temporal: [f64; 4],
    pub availability: Vec<f64>,
    /// `[μ, σ]` pairs, or last-step pick-ups under [`HistoryMode::LastStep`].
    pub pickup_stats: Vec<f64>,
    pub static_features: Vec<f64>,
    pub history: usize,
}

impl StateFeatures {
    pub fn build(
        series: &DemandSeries,
        grid: &RegionGrid,
        t: usize,
        inventory: &[u32],
        history: usize,
        mode: HistoryMode,
    ) -> Self {
        // Intervals are whole days, so the representative hour is midnight.
        let temporal = temporal_encode(0.0, series.weekday(t)).expect("weekday in range");
        let pickup_stats = match mode {
            HistoryMode::MeanStd => pickup_stats(series, t, history),
            HistoryMode::LastStep => last_pickups(series, t),
        };
        Self {
            temporal,
            availability: inventory.iter().map(|&b| b as f64).collect(),
            pickup_stats,
            static_features: grid
                .static_features()
                .iter()
                .flatten()
                .map(|&x| x as f64)
                .collect(),
            history,
        }
    }

    /// Scaled network input: temporal, availability, pick-up history, static.
    pub fn to_input(&self, scales: &FeatureScales) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.temporal);
        v.extend(self.availability.iter().map(|b| b / scales.inventory));
        v.extend(self.pickup_stats.iter().map(|x| x / scales.demand));
        v.extend(
            self.static_features
                .chunks(3)
                .flat_map(|c| c.iter().zip(scales.static_features).map(|(x, s)| x / s)),
        );
        v
    }

    /// Scaled per-region slice `[temporal(4), b, history.., static(3)]`.
    pub fn region_slice(&self, region: usize, scales: &FeatureScales) -> Vec<f64> {
        let per = self.pickup_stats.len() / self.availability.len().max(1);
        let mut v = Vec::with_capacity(8 + per);
        v.extend_from_slice(&self.temporal);
        v.push(self.availability[region] / scales.inventory);
        v.extend(
            self.pickup_stats[region * per..(region + 1) * per]
                .iter()
                .map(|x| x / scales.demand),
        );
        v.extend(
            self.static_features[region * 3..region * 3 + 3]
                .iter()
                .zip(scales.static_features)
                .map(|(x, s)| x / s),
        );
        v
    }

    pub fn dim(&self) -> usize {
        4 + self.availability.len() + self.pickup_stats.len() + self.static_features.len()
    }
}

/// Length of the global state vector for `regions` regions.
pub fn state_dim(regions: usize, mode: HistoryMode) -> usize {
    let per = match mode {
        HistoryMode::MeanStd => 2,
        HistoryMode::LastStep => 1,
    };
    4 + regions * (1 + per + 3)
}

/// Length of a per-region state slice.
pub fn region_slice_dim(mode: HistoryMode) -> usize {
    match mode {
        HistoryMode::MeanStd => 10,
        HistoryMode::LastStep => 9,
    }
}

/// Divisors applied to raw features before they reach a network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScales {
    pub inventory: f64,
    pub demand: f64,
    pub static_features: [f64; 3],
}

impl FeatureScales {
    pub fn from_data(series: &DemandSeries, grid: &RegionGrid, fleet_size: u64) -> Self {
        let k = series.regions.max(1) as f64;
        let cells = (series.intervals * series.regions).max(1) as f64;
        let mut stat = [1.0f64; 3];
        for row in grid.static_features() {
            for (s, &x) in stat.iter_mut().zip(row) {
                *s = s.max(x as f64);
            }
        }
        Self {
            inventory: (fleet_size as f64 / k).max(1.0),
            demand: (series.total_pickups() as f64 / cells).max(1.0),
            static_features: stat,
        }
    }
}
