use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synth::Scenario;
use crate::env::{EnvConfig, ObservationConfig};
use crate::error::{Error, Result};
use crate::group::{ControllerConfig, GroupCaps};
use crate::ingest::BoundingBox;
use crate::ppo::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Hagps,
    NoShare,
    ShareAll,
    StaticGroups,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "hagps" => Ok(Mode::Hagps),
            "no-share" => Ok(Mode::NoShare),
            "share-all" => Ok(Mode::ShareAll),
            "static-groups" => Ok(Mode::StaticGroups),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Hagps => "hagps",
            Mode::NoShare => "no-share",
            Mode::ShareAll => "share-all",
            Mode::StaticGroups => "static-groups",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    pub no_id: bool,
    pub no_splitmerge: bool,
    pub no_hier: bool,
    pub no_arp: bool,
}

impl Ablations {
    pub fn any(&self) -> bool {
        self.no_id || self.no_splitmerge || self.no_hier || self.no_arp
    }
}

/// Service-area rectangle and cell size used by `ingest`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    #[serde(default = "default_cell_km")]
    pub cell_km: f64,
}

fn default_cell_km() -> f64 {
    1.0
}

impl GridSpec {
    pub fn bbox(&self) -> BoundingBox {
        BoundingBox {
            lat_min: self.lat_min,
            lat_max: self.lat_max,
            lon_min: self.lon_min,
            lon_max: self.lon_max,
        }
    }
}

/// Where demand comes from: an ingested artifact or a synthetic scenario.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub trips: Option<PathBuf>,
    pub demand: Option<PathBuf>,
    pub static_features: Option<PathBuf>,
    pub synthetic: Option<Scenario>,
}

/// Everything one run needs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub grid: Option<GridSpec>,
    pub env: EnvConfig,
    pub observation: ObservationConfig,
    pub train: TrainConfig,
    pub controller: ControllerConfig,
    pub caps: GroupCaps,
    /// Number of spatial districts (global groups) at start.
    pub g_init: Option<usize>,
    pub mode: Mode,
    pub ablations: Ablations,
    /// Row label in reports; derived from mode and ablations when absent.
    pub method: Option<String>,
    pub out: Option<PathBuf>,
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn g_init(&self) -> usize {
        self.g_init.unwrap_or(2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode != Mode::Hagps && self.ablations.any() {
            return Err(Error::Config(format!(
                "ablation flags require mode hagps, got {}",
                self.mode.as_str()
            )));
        }
        self.env.validate()?;
        self.train.validate()?;
        self.controller.validate()?;
        self.caps.validate()?;
        if self.g_init() == 0 || self.g_init() > self.caps.g_max {
            return Err(Error::Config(format!(
                "g_init {} outside [1, g_max = {}]",
                self.g_init(),
                self.caps.g_max
            )));
        }
        if self.observation.history == 0 {
            return Err(Error::Config(
                "observation history must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Report label, e.g. `HAG-PS w/o ID`.
    pub fn method_label(&self) -> String {
        if let Some(m) = &self.method {
            return m.clone();
        }
        match self.mode {
            Mode::NoShare => "No-Share".into(),
            Mode::ShareAll => "Share-All".into(),
            Mode::StaticGroups => "Static-Groups".into(),
            Mode::Hagps => {
                let a = self.ablations;
                let mut tags = Vec::new();
                if a.no_id {
                    tags.push("ID");
                }
                if a.no_splitmerge {
                    tags.push("SM");
                }
                if a.no_hier {
                    tags.push("HG");
                }
                if a.no_arp {
                    tags.push("ARP");
                }
                if tags.is_empty() {
                    "HAG-PS".into()
                } else {
                    format!("HAG-PS w/o {}", tags.join("+"))
                }
            }
        }
    }
}
