use std::path::Path;

use chrono::NaiveDate;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::grid::RegionGrid;
use super::trips::{ReadReport, TripRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    Day,
}

/// Per-interval, per-region pick-ups `d` and drop-offs `o`, stored row-major
/// as `T × K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandSeries {
    pub intervals: usize,
    pub regions: usize,
    pub interval_kind: IntervalKind,
    /// Calendar date of interval 0, when the series came from real trips.
    pub start_date: Option<NaiveDate>,
    d: Vec<u32>,
    o: Vec<u32>,
}

impl DemandSeries {
    pub fn zeros(intervals: usize, regions: usize) -> Self {
        Self {
            intervals,
            regions,
            interval_kind: IntervalKind::Day,
            start_date: None,
            d: vec![0; intervals * regions],
            o: vec![0; intervals * regions],
        }
    }

    /// Build from nested `[t][k]` tables.
    pub fn from_rows(d: Vec<Vec<u32>>, o: Vec<Vec<u32>>) -> Result<Self> {
        if d.len() != o.len() {
            return Err(Error::Validation(
                "pick-up and drop-off tables differ in length".into(),
            ));
        }
        let regions = d.first().map_or(0, Vec::len);
        if d.iter().chain(o.iter()).any(|row| row.len() != regions) {
            return Err(Error::Validation("ragged demand table".into()));
        }
        let mut series = Self::zeros(d.len(), regions);
        series.d = d.into_iter().flatten().collect();
        series.o = o.into_iter().flatten().collect();
        Ok(series)
    }

    pub fn pickups(&self, t: usize) -> &[u32] {
        &self.d[t * self.regions..(t + 1) * self.regions]
    }

    pub fn dropoffs(&self, t: usize) -> &[u32] {
        &self.o[t * self.regions..(t + 1) * self.regions]
    }

    pub fn pickups_mut(&mut self, t: usize) -> &mut [u32] {
        &mut self.d[t * self.regions..(t + 1) * self.regions]
    }

    pub fn dropoffs_mut(&mut self, t: usize) -> &mut [u32] {
        &mut self.o[t * self.regions..(t + 1) * self.regions]
    }

    pub fn total_pickups(&self) -> u64 {
        self.d.iter().map(|&x| x as u64).sum()
    }

    pub fn total_dropoffs(&self) -> u64 {
        self.o.iter().map(|&x| x as u64).sum()
    }

    /// Mean pick-ups per interval for each region.
    pub fn mean_pickups(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.regions];
        for t in 0..self.intervals {
            for (m, &x) in mean.iter_mut().zip(self.pickups(t)) {
                *m += x as f64;
            }
        }
        let denom = self.intervals.max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= denom);
        mean
    }

    /// Day of week (0 = Monday) of interval `t`; synthetic series start on a Monday.
    pub fn weekday(&self, t: usize) -> u32 {
        use chrono::Datelike;
        let offset = self
            .start_date
            .map_or(0, |d| d.weekday().num_days_from_monday());
        ((offset as usize + t) % 7) as u32
    }

    /// Poisson resample of every entry with the stored value as its mean.
    pub fn resample<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let mut out = self.clone();
        for x in out.d.iter_mut().chain(out.o.iter_mut()) {
            if *x > 0 {
                *x = Poisson::new(*x as f64).expect("positive mean").sample(rng) as u32;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub trips_in: usize,
    pub trips_used: usize,
    pub dropped_out_of_bounds: usize,
    pub dropped_out_of_window: usize,
    /// Drop-offs after the last interval, folded into the last interval.
    pub dropoffs_clamped: usize,
}

/// Restrict aggregation to `days` calendar days starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayWindow {
    pub start: NaiveDate,
    pub days: usize,
}

/// Aggregate trips into daily pick-up and drop-off counts.
///
/// The horizon is the span of start dates (or `window`). A trip is dropped
/// entirely when either endpoint lies outside the grid. Drop-offs that land
/// after the final interval are counted in the final interval so that
/// pick-ups and drop-offs stay balanced.
pub fn aggregate(
    trips: &[TripRecord],
    grid: &RegionGrid,
    window: Option<DayWindow>,
) -> (DemandSeries, AggregateReport) {
    let mut report = AggregateReport {
        trips_in: trips.len(),
        ..Default::default()
    };
    let k = grid.len();

    let (start, days) = match window {
        Some(w) => (Some(w.start), w.days),
        None => {
            let first = trips.iter().map(|t| t.start_time.date()).min();
            let last = trips.iter().map(|t| t.start_time.date()).max();
            match (first, last) {
                (Some(a), Some(b)) => (Some(a), (b - a).num_days() as usize + 1),
                _ => (None, 0),
            }
        }
    };
    let Some(start) = start else {
        log::warn!("no trips to aggregate; producing an empty series");
        return (DemandSeries::zeros(0, k), report);
    };

    let mut series = DemandSeries::zeros(days, k);
    series.start_date = Some(start);
    for trip in trips {
        let day = (trip.start_time.date() - start).num_days();
        if day < 0 || day as usize >= days {
            report.dropped_out_of_window += 1;
            continue;
        }
        let (Ok(from), Ok(to)) = (
            grid.assign_region(trip.start_lat, trip.start_lon),
            grid.assign_region(trip.end_lat, trip.end_lon),
        ) else {
            report.dropped_out_of_bounds += 1;
            continue;
        };
        let mut end_day = (trip.end_time.date() - start).num_days() as usize;
        if end_day >= days {
            end_day = days - 1;
            report.dropoffs_clamped += 1;
        }
        series.pickups_mut(day as usize)[from] += 1;
        series.dropoffs_mut(end_day)[to] += 1;
        report.trips_used += 1;
    }
    if report.trips_used == 0 {
        log::warn!("every trip was dropped during aggregation");
    }
    (series, report)
}

/// Summary written next to an ingested series.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_malformed: usize,
    pub rows_out_of_bounds: usize,
    pub rows_out_of_window: usize,
    pub rows_dropped: usize,
    pub trips_used: usize,
    pub dropoffs_clamped: usize,
    pub intervals: usize,
    pub regions: usize,
}

impl IngestReport {
    pub fn new(read: &ReadReport, agg: &AggregateReport, series: &DemandSeries) -> Self {
        Self {
            rows_read: read.rows_read,
            rows_malformed: read.rows_malformed,
            rows_out_of_bounds: agg.dropped_out_of_bounds,
            rows_out_of_window: agg.dropped_out_of_window,
            rows_dropped: read.rows_malformed
                + agg.dropped_out_of_bounds
                + agg.dropped_out_of_window,
            trips_used: agg.trips_used,
            dropoffs_clamped: agg.dropoffs_clamped,
            intervals: series.intervals,
            regions: series.regions,
        }
    }
}

pub const DEMAND_ARTIFACT_VERSION: u32 = 1;

/// On-disk form of an ingested (or synthesized) demand series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandArtifact {
    pub version: u32,
    pub grid: RegionGrid,
    pub series: DemandSeries,
    #[serde(default)]
    pub report: IngestReport,
}

impl DemandArtifact {
    pub fn new(grid: RegionGrid, series: DemandSeries, report: IngestReport) -> Self {
        Self {
            version: DEMAND_ARTIFACT_VERSION,
            grid,
            series,
            report,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::util::write_atomic(path, serde_json::to_string(self)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let artifact: Self = serde_json::from_str(&text)?;
        if artifact.version != DEMAND_ARTIFACT_VERSION {
            return Err(Error::Config(format!(
                "demand artifact version {} is not supported (expected {})",
                artifact.version, DEMAND_ARTIFACT_VERSION
            )));
        }
        if artifact.series.regions != artifact.grid.len()
            || artifact.series.d.len() != artifact.series.intervals * artifact.series.regions
            || artifact.series.o.len() != artifact.series.d.len()
        {
            return Err(Error::Config(
                "demand artifact tensors do not match its grid".into(),
            ));
        }
        Ok(artifact)
    }
}
