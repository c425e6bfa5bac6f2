//! Trip ingestion: region grid, daily demand tensors and state features.

pub mod demand;
pub mod features;
pub mod grid;
pub mod trips;

pub use demand::{aggregate, DayWindow, DemandArtifact, DemandSeries, IngestReport};
pub use features::{
    load_static_features, pickup_stats, temporal_encode, FeatureScales, HistoryMode, StateFeatures,
};
pub use grid::{BoundingBox, Direction, OutOfBounds, RegionGrid};
pub use trips::{read_trips, read_trips_file, TripRecord};
