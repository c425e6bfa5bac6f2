use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kilometers per degree of latitude (spherical earth, mean radius).
pub const KM_PER_DEG_LAT: f64 = 111.195;

/// Compass direction toward an adjacent region. The discriminant is the
/// position inside every 4-vector indexed by direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    North = 0,
    South = 1,
    East = 2,
    West = 3,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::North,
        Direction::South,
        Direction::East,
        Direction::West,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::North => Direction::South,
            Direction::South => Direction::North,
            Direction::East => Direction::West,
            Direction::West => Direction::East,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BoundingBox {
    /// Box whose south-west corner is `(lat, lon)` and which spans the given
    /// kilometers northward and eastward.
    pub fn from_corner_km(lat: f64, lon: f64, north_km: f64, east_km: f64) -> Self {
        let dlat = north_km / KM_PER_DEG_LAT;
        let dlon = east_km / (KM_PER_DEG_LAT * lat.to_radians().cos());
        Self {
            lat_min: lat,
            lat_max: lat + dlat,
            lon_min: lon,
            lon_max: lon + dlon,
        }
    }

    fn validate(&self) -> Result<()> {
        let vals = [self.lat_min, self.lat_max, self.lon_min, self.lon_max];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("bounding box has non-finite corner".into()));
        }
        if self.lat_max <= self.lat_min || self.lon_max <= self.lon_min {
            return Err(Error::Config(format!(
                "degenerate bounding box: lat [{}, {}], lon [{}, {}]",
                self.lat_min, self.lat_max, self.lon_min, self.lon_max
            )));
        }
        if self.lat_min < -90.0 || self.lat_max > 90.0 {
            return Err(Error::Config("latitude outside [-90, 90]".into()));
        }
        Ok(())
    }

    pub fn height_km(&self) -> f64 {
        (self.lat_max - self.lat_min) * KM_PER_DEG_LAT
    }

    pub fn width_km(&self) -> f64 {
        let mid = 0.5 * (self.lat_min + self.lat_max);
        (self.lon_max - self.lon_min) * KM_PER_DEG_LAT * mid.to_radians().cos()
    }
}

/// Point could not be placed in any region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutOfBounds;

/// Rectangular partition of the service area.
///
/// Regions are numbered row-major with row 0 at the southern edge, so the
/// northern neighbor of region `k` is `k + cols`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionGrid {
    pub bbox: BoundingBox,
    pub cell_km: f64,
    pub rows: usize,
    pub cols: usize,
    neighbors: Vec<[Option<usize>; 4]>,
    static_features: Vec<[u32; 3]>,
}

impl RegionGrid {
    /// Tile `bbox` with cells of roughly `cell_km` on a side.
    ///
    /// Row and column counts round up so the whole box is covered; the cells
    /// are then stretched slightly so that they tile the box exactly.
    pub fn build(bbox: BoundingBox, cell_km: f64) -> Result<Self> {
        bbox.validate()?;
        if !(cell_km.is_finite() && cell_km > 0.0) {
            return Err(Error::Config(format!(
                "cell size must be positive, got {cell_km}"
            )));
        }
        let rows = cells_along(bbox.height_km(), cell_km);
        let cols = cells_along(bbox.width_km(), cell_km);
        Ok(Self::with_shape(bbox, cell_km, rows, cols))
    }

    /// Grid with an explicit shape and a nominal 1 km cell; used for
    /// synthetic scenarios that have no real geography.
    pub fn rectangular(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config(
                "grid needs at least one row and column".into(),
            ));
        }
        let bbox = BoundingBox::from_corner_km(40.7, -74.0, rows as f64, cols as f64);
        Ok(Self::with_shape(bbox, 1.0, rows, cols))
    }

    fn with_shape(bbox: BoundingBox, cell_km: f64, rows: usize, cols: usize) -> Self {
        let k = rows * cols;
        let mut neighbors = vec![[None; 4]; k];
        for r in 0..rows {
            for c in 0..cols {
                let idx = r * cols + c;
                let n = &mut neighbors[idx];
                n[Direction::North.index()] = (r + 1 < rows).then(|| idx + cols);
                n[Direction::South.index()] = (r > 0).then(|| idx - cols);
                n[Direction::East.index()] = (c + 1 < cols).then(|| idx + 1);
                n[Direction::West.index()] = (c > 0).then(|| idx - 1);
            }
        }
        Self {
            bbox,
            cell_km,
            rows,
            cols,
            neighbors,
            static_features: vec![[0; 3]; k],
        }
    }

    /// Number of regions K.
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn neighbor(&self, region: usize, dir: Direction) -> Option<usize> {
        self.neighbors[region][dir.index()]
    }

    pub fn neighbors(&self, region: usize) -> &[Option<usize>; 4] {
        &self.neighbors[region]
    }

    /// Which of the four directions lead to an existing region.
    pub fn open_directions(&self, region: usize) -> [bool; 4] {
        self.neighbors[region].map(|n| n.is_some())
    }

    pub fn row_col(&self, region: usize) -> (usize, usize) {
        (region / self.cols, region % self.cols)
    }

    pub fn static_features(&self) -> &[[u32; 3]] {
        &self.static_features
    }

    pub fn set_static_features(&mut self, features: Vec<[u32; 3]>) -> Result<()> {
        if features.len() != self.len() {
            return Err(Error::Config(format!(
                "static features have {} rows, grid has {} regions",
                features.len(),
                self.len()
            )));
        }
        self.static_features = features;
        Ok(())
    }

    /// Region containing `(lat, lon)`.
    ///
    /// Cells are half-open `[lo, hi)` along both axes, so a point on a shared
    /// edge belongs to the cell with the larger row/column index. Points on
    /// the outer north or east edge of the box belong to the last row/column.
    pub fn assign_region(&self, lat: f64, lon: f64) -> Result<usize, OutOfBounds> {
        if !(lat.is_finite() && lon.is_finite()) {
            return Err(OutOfBounds);
        }
        let row = axis_cell(lat, self.bbox.lat_min, self.bbox.lat_max, self.rows)?;
        let col = axis_cell(lon, self.bbox.lon_min, self.bbox.lon_max, self.cols)?;
        Ok(row * self.cols + col)
    }

    /// Center coordinate of a region, `(lat, lon)`.
    pub fn cell_center(&self, region: usize) -> (f64, f64) {
        let (r, c) = self.row_col(region);
        let dlat = (self.bbox.lat_max - self.bbox.lat_min) / self.rows as f64;
        let dlon = (self.bbox.lon_max - self.bbox.lon_min) / self.cols as f64;
        (
            self.bbox.lat_min + (r as f64 + 0.5) * dlat,
            self.bbox.lon_min + (c as f64 + 0.5) * dlon,
        )
    }
}

fn cells_along(extent_km: f64, cell_km: f64) -> usize {
    // Tolerance absorbs float noise when the extent is an exact multiple.
    ((extent_km / cell_km) - 1e-6).ceil().max(1.0) as usize
}

fn axis_cell(x: f64, lo: f64, hi: f64, n: usize) -> Result<usize, OutOfBounds> {
    if x < lo || x > hi {
        return Err(OutOfBounds);
    }
    let width = (hi - lo) / n as f64;
    let mut idx = ((x - lo) / width).floor() as usize;
    // Division rounding can land one cell off near an edge; snap to the
    // half-open definition.
    if idx > 0 && x < lo + idx as f64 * width {
        idx -= 1;
    }
    if idx + 1 < n && x >= lo + (idx + 1) as f64 * width {
        idx += 1;
    }
    Ok(idx.min(n - 1))
}
