//! Synthetic demand scenarios for smoke tests and desk-scale comparisons.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DemandSeries, RegionGrid};
use crate::seed::{stream, SeedTree};

/// Role of a region in the archetype scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Archetype {
    /// Many pick-ups, few drop-offs.
    Sink,
    /// Few pick-ups, many drop-offs.
    Source,
    /// Pick-ups and drop-offs in balance.
    Balanced,
}

impl Archetype {
    /// Mean daily `(pick-ups, drop-offs)`.
    pub fn rates(self) -> (f64, f64) {
        match self {
            Archetype::Sink => (6.0, 1.0),
            Archetype::Source => (1.0, 6.0),
            Archetype::Balanced => (3.0, 3.0),
        }
    }

    /// Typical `[roads, bike lanes, POIs]` counts.
    pub fn static_features(self) -> [u32; 3] {
        match self {
            Archetype::Sink => [12, 4, 30],
            Archetype::Source => [8, 2, 6],
            Archetype::Balanced => [10, 3, 15],
        }
    }
}

/// Which synthetic world to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Scenario {
    /// Two regions: the west one only sees pick-ups, the east one only drop-offs.
    Toy {
        #[serde(default = "default_days")]
        days: usize,
        #[serde(default = "default_toy_rate")]
        rate: u32,
    },
    /// Column stripes of sources, sinks and balanced regions.
    Archetypes {
        #[serde(default = "default_side")]
        rows: usize,
        #[serde(default = "default_side")]
        cols: usize,
        #[serde(default = "default_days")]
        days: usize,
    },
}

fn default_days() -> usize {
    31
}

fn default_toy_rate() -> u32 {
    6
}

fn default_side() -> usize {
    6
}

/// Grid, demand and fleet size of a generated world.
#[derive(Debug, Clone)]
pub struct World {
    pub grid: RegionGrid,
    pub series: DemandSeries,
    pub fleet_size: u64,
    pub archetypes: Vec<Archetype>,
}

impl Scenario {
    pub fn generate(&self, seed: u64) -> Result<World> {
        match *self {
            Scenario::Toy { days, rate } => toy(days, rate),
            Scenario::Archetypes { rows, cols, days } => archetypes(rows, cols, days, seed),
        }
    }
}

fn toy(days: usize, rate: u32) -> Result<World> {
    if days == 0 {
        return Err(Error::Config("scenario needs at least one day".into()));
    }
    let mut grid = RegionGrid::rectangular(1, 2)?;
    let archetypes = vec![Archetype::Sink, Archetype::Source];
    grid.set_static_features(archetypes.iter().map(|a| a.static_features()).collect())?;
    let series = DemandSeries::from_rows(vec![vec![rate, 0]; days], vec![vec![0, rate]; days])?;
    Ok(World {
        grid,
        series,
        fleet_size: u64::from(2 * rate),
        archetypes,
    })
}

/// Archetype of column `c` in a `cols`-wide grid: sources on both edges
/// feed the sink columns next to them; the middle is balanced.
pub fn column_archetype(c: usize, cols: usize) -> Archetype {
    let edge = c.min(cols - 1 - c);
    match edge {
        0 => Archetype::Source,
        1 => Archetype::Sink,
        _ => Archetype::Balanced,
    }
}

fn archetypes(rows: usize, cols: usize, days: usize, seed: u64) -> Result<World> {
    if days == 0 || rows == 0 || cols < 2 {
        return Err(Error::Config(
            "archetype scenario needs rows >= 1, cols >= 2 and days >= 1".into(),
        ));
    }
    let mut grid = RegionGrid::rectangular(rows, cols)?;
    let archetypes: Vec<Archetype> = (0..rows * cols)
        .map(|k| column_archetype(k % cols, cols))
        .collect();
    grid.set_static_features(archetypes.iter().map(|a| a.static_features()).collect())?;
    let mut rng = SeedTree::new(seed).rng(stream::SYNTH);
    let mut series = DemandSeries::zeros(days, rows * cols);
    for t in 0..days {
        for (k, a) in archetypes.iter().enumerate() {
            let (d, o) = a.rates();
            series.pickups_mut(t)[k] = poisson(d, &mut rng);
            series.dropoffs_mut(t)[k] = poisson(o, &mut rng);
        }
    }
    let mean_daily: f64 = archetypes.iter().map(|a| a.rates().0).sum();
    Ok(World {
        grid,
        series,
        fleet_size: (3.0 * mean_daily).round() as u64,
        archetypes,
    })
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u32 {
    Poisson::new(mean).expect("positive mean").sample(rng) as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_is_one_sided() {
        let w = Scenario::Toy { days: 31, rate: 6 }.generate(0).unwrap();
        assert_eq!(w.series.intervals, 31);
        assert_eq!(w.series.pickups(0), &[6, 0]);
        assert_eq!(w.series.dropoffs(0), &[0, 6]);
    }

    #[test]
    fn archetype_layout() {
        let w = Scenario::Archetypes {
            rows: 6,
            cols: 6,
            days: 31,
        }
        .generate(3)
        .unwrap();
        assert_eq!(w.grid.len(), 36);
        let row: Vec<Archetype> = (0..6).map(|c| w.archetypes[c]).collect();
        use Archetype::*;
        assert_eq!(row, vec![Source, Sink, Balanced, Balanced, Sink, Source]);
        let again = Scenario::Archetypes {
            rows: 6,
            cols: 6,
            days: 31,
        }
        .generate(3)
        .unwrap();
        assert_eq!(w.series, again.series);
    }
}
