use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{GridSpec, Mode, RunConfig};
use super::model::build_trainer;
use crate::checkpoint;
use crate::env::{EnvConfig, Environment};
use crate::error::{Error, Result};
use crate::group::{write_events, GroupTree};
use crate::ingest::features::state_dim;
use crate::ingest::{
    aggregate, load_static_features, read_trips_file, DemandArtifact, FeatureScales, IngestReport,
};
use crate::ingest::{DemandSeries, RegionGrid};
use crate::ppo::{collect_rollout, ActionSelect, EpochMetrics};
use crate::util::write_atomic;

/// Largest tolerated share of unparseable trip rows.
pub const MALFORMED_THRESHOLD: f64 = 0.01;

pub const DEMAND_FILE: &str = "demand.json";
pub const INGEST_REPORT_FILE: &str = "ingest_report.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const CONFIG_FILE: &str = "config.toml";
pub const EVAL_FILE: &str = "eval.json";
pub const REPORT_FILE: &str = "report.csv";
pub const CURVES_FILE: &str = "curves.csv";

/// Row order of the comparison table. Unlisted labels follow in name order.
pub const METHOD_ORDER: [&str; 11] = [
    "No-Share",
    "Share-All",
    "CDS",
    "SePS",
    "DyPS",
    "Static-Groups",
    "HAG-PS w/o ID",
    "HAG-PS w/o SM",
    "HAG-PS w/o HG",
    "HAG-PS w/o ARP",
    "HAG-PS",
];

pub fn build_id() -> String {
    let profile = if cfg!(debug_assertions) {
        "debug"
    } else {
        "release"
    };
    format!(
        "{} {} ({profile})",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION")
    )
}

/// Read trips, aggregate them on the configured grid and write the demand
/// artifact plus its report into `out`.
pub fn cmd_ingest(
    trips: &Path,
    spec: &GridSpec,
    static_features: Option<&Path>,
    out: &Path,
) -> Result<IngestReport> {
    let (records, read) = read_trips_file(trips)?;
    if read.malformed_fraction() > MALFORMED_THRESHOLD {
        return Err(Error::Ingest(format!(
            "{} of {} rows are malformed ({:.2}%), above the {:.0}% limit",
            read.rows_malformed,
            read.rows_read,
            100.0 * read.malformed_fraction(),
            100.0 * MALFORMED_THRESHOLD
        )));
    }
    let mut grid = RegionGrid::build(spec.bbox(), spec.cell_km)?;
    if let Some(path) = static_features {
        let feats = load_static_features(path, &grid)?;
        grid.set_static_features(feats)?;
    }
    let (series, agg) = aggregate(&records, &grid, None);
    let report = IngestReport::new(&read, &agg, &series);
    DemandArtifact::new(grid, series, report.clone()).save(&out.join(DEMAND_FILE))?;
    write_atomic(
        &out.join(INGEST_REPORT_FILE),
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    log::info!(
        "ingested {} trips into {} intervals x {} regions",
        report.trips_used,
        report.intervals,
        report.regions
    );
    Ok(report)
}

/// Fleet size used when the configuration leaves it at zero: one bike per
/// mean daily pick-up.
pub fn default_fleet(series: &DemandSeries) -> u64 {
    let days = series.intervals.max(1) as u64;
    (series.total_pickups() / days).max(series.regions as u64)
}

/// Environment described by the data section of `cfg`.
pub fn load_environment(cfg: &RunConfig) -> Result<Environment> {
    let (mut grid, series, fallback_fleet) = if let Some(scenario) = &cfg.data.synthetic {
        let world = scenario.generate(cfg.env.seed)?;
        (world.grid, world.series, world.fleet_size)
    } else if let Some(path) = &cfg.data.demand {
        let artifact = DemandArtifact::load(path)?;
        let fleet = default_fleet(&artifact.series);
        (artifact.grid, artifact.series, fleet)
    } else {
        return Err(Error::Config(
            "no demand source: set data.demand or data.synthetic".into(),
        ));
    };
    if let Some(path) = &cfg.data.static_features {
        let feats = load_static_features(path, &grid)?;
        grid.set_static_features(feats)?;
    }
    let fleet_size = if cfg.env.fleet_size > 0 {
        cfg.env.fleet_size
    } else {
        fallback_fleet
    };
    let env_cfg = EnvConfig {
        fleet_size,
        ..cfg.env.clone()
    };
    let scales = FeatureScales::from_data(&series, &grid, fleet_size);
    Environment::new(grid, series, env_cfg, cfg.observation, scales)
}

/// Metrics of one deterministic greedy pass over the whole horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub service_ratio: f64,
    pub rebalanced: u64,
    pub mean_reward: f64,
    pub steps: usize,
}

pub fn evaluate_greedy(tree: &GroupTree, env: &Environment) -> Result<EvalRecord> {
    let mut env = env.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ep = collect_rollout(&mut env, tree, usize::MAX, ActionSelect::Greedy, &mut rng)?;
    Ok(EvalRecord {
        service_ratio: ep.stats.service_ratio,
        rebalanced: ep.stats.rebalanced,
        mean_reward: ep.stats.mean_reward,
        steps: ep.stats.steps,
    })
}

/// Written last into every run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub method: String,
    pub mode: Mode,
    pub seed: u64,
    pub build: String,
    pub started_at: String,
    pub elapsed_secs: f64,
    pub episodes: usize,
    pub global_groups: usize,
    pub local_groups: usize,
    /// Validation ratio of the last epoch.
    pub final_val_service_ratio: f64,
    pub eval: EvalRecord,
    pub config: RunConfig,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Config(format!("missing manifest {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn metrics_csv(metrics: &[EpochMetrics]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for m in metrics {
        w.serialize(m)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn read_metrics(dir: &Path) -> Result<Vec<EpochMetrics>> {
    let mut r = csv::Reader::from_path(dir.join(METRICS_FILE))?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Train the configured mode and write the run directory.
pub fn cmd_train(cfg: &RunConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| Error::Config("train needs an output directory".into()))?;
    let started_at = chrono::Utc::now().to_rfc3339();
    let clock = Instant::now();
    let env = load_environment(cfg)?;
    let mut trainer = build_trainer(cfg, &env)?;
    trainer.train(&env)?;

    let eval = evaluate_greedy(trainer.tree(), &env)?;
    std::fs::create_dir_all(&out)?;
    write_atomic(&out.join(CONFIG_FILE), cfg.to_toml()?.as_bytes())?;
    write_atomic(&out.join(METRICS_FILE), &metrics_csv(trainer.metrics())?)?;
    write_events(&out.join(EVENTS_FILE), trainer.events())?;

    let last = trainer.metrics().last();
    let manifest = RunManifest {
        method: cfg.method_label(),
        mode: cfg.mode,
        seed: cfg.seed,
        build: build_id(),
        started_at,
        elapsed_secs: clock.elapsed().as_secs_f64(),
        episodes: trainer.episodes_done(),
        global_groups: trainer.tree().globals().len(),
        local_groups: trainer.tree().locals().len(),
        final_val_service_ratio: last.map_or(f64::NAN, |m| m.val_service_ratio),
        eval,
        config: cfg.clone(),
    };
    let meta =
        serde_json::json!({ "method": manifest.method, "seed": cfg.seed, "build": manifest.build });
    let (tree, grouping, encoder) = trainer.into_parts();
    checkpoint::save(
        &out.join(CHECKPOINT_FILE),
        &tree,
        &grouping,
        encoder.as_ref(),
        meta,
    )?;
    write_atomic(
        &out.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    Ok(manifest)
}

/// Greedy evaluation of a saved model on the demand described by `cfg`.
pub fn cmd_eval(checkpoint_path: &Path, cfg: &RunConfig) -> Result<EvalRecord> {
    let ckpt = checkpoint::load(checkpoint_path)?;
    let env = load_environment(cfg)?;
    let dims = ckpt.tree.dims();
    let expected = state_dim(env.agents(), env.observation_config().history_mode);
    if ckpt.tree.agents() != env.agents() || dims.state_dim != expected {
        return Err(Error::ShapeMismatch {
            expected: dims.state_dim,
            got: expected,
        });
    }
    if dims.m_dir != env.config().max_per_direction() {
        return Err(Error::Config(format!(
            "checkpoint was trained with {} bikes per direction, environment allows {}",
            dims.m_dir,
            env.config().max_per_direction()
        )));
    }
    let record = evaluate_greedy(&ckpt.tree, &env)?;
    if let Some(out) = &cfg.out {
        write_atomic(
            &out.join(EVAL_FILE),
            serde_json::to_string_pretty(&record)?.as_bytes(),
        )?;
    }
    Ok(record)
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub seed: u64,
    pub service_ratio_pct: f64,
    pub total_rebalanced: u64,
    /// Static one-shot clustering standing in for an external baseline.
    pub proxy: bool,
    pub run: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct CurveRow<'a> {
    method: &'a str,
    seed: u64,
    epoch: usize,
    episodes: usize,
    train_service_ratio: f64,
    val_service_ratio: f64,
    local_groups: usize,
}

fn method_rank(method: &str) -> usize {
    METHOD_ORDER
        .iter()
        .position(|m| *m == method)
        .unwrap_or(METHOD_ORDER.len())
}

/// Comparison table over completed runs, sorted by method order. When `out`
/// is given the table and the training curves are written there.
pub fn cmd_report(run_dirs: &[PathBuf], out: Option<&Path>) -> Result<Vec<ReportRow>> {
    if run_dirs.is_empty() {
        return Err(Error::Config(
            "report needs at least one run directory".into(),
        ));
    }
    let mut runs = Vec::with_capacity(run_dirs.len());
    for dir in run_dirs {
        let manifest = RunManifest::load(dir)?;
        let metrics = read_metrics(dir)?;
        runs.push((dir.display().to_string(), manifest, metrics));
    }
    runs.sort_by(|a, b| {
        (method_rank(&a.1.method), &a.1.method, a.1.seed, &a.0).cmp(&(
            method_rank(&b.1.method),
            &b.1.method,
            b.1.seed,
            &b.0,
        ))
    });
    let rows: Vec<ReportRow> = runs
        .iter()
        .map(|(dir, m, _)| ReportRow {
            method: m.method.clone(),
            seed: m.seed,
            service_ratio_pct: 100.0 * m.eval.service_ratio,
            total_rebalanced: m.eval.rebalanced,
            proxy: m.mode == Mode::StaticGroups,
            run: dir.clone(),
        })
        .collect();
    if let Some(out) = out {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &rows {
            w.serialize(r)?;
        }
        write_atomic(
            &out.join(REPORT_FILE),
            &w.into_inner().map_err(|e| Error::Io(e.into_error()))?,
        )?;
        let mut w = csv::Writer::from_writer(Vec::new());
        for (_, m, metrics) in &runs {
            for e in metrics {
                w.serialize(CurveRow {
                    method: &m.method,
                    seed: m.seed,
                    epoch: e.epoch,
                    episodes: e.episodes,
                    train_service_ratio: e.train_service_ratio,
                    val_service_ratio: e.val_service_ratio,
                    local_groups: e.local_groups,
                })?;
            }
        }
        write_atomic(
            &out.join(CURVES_FILE),
            &w.into_inner().map_err(|e| Error::Io(e.into_error()))?,
        )?;
    }
    Ok(rows)
}
