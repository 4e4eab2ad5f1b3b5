//! Runs the framework × T* × slack × map × trial grid and writes artifacts.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use planlab_core::agents::{run_episode, EpisodeResult};
use planlab_core::oracle::DistanceTable;
use planlab_core::sokoban::{generate_instance, GeneratorConfig, SokobanInstance};
use planlab_core::{Budget, RngStream};
use rayon::prelude::*;

use crate::bounds_grid::{self, BoundRow};
use crate::config::{ExperimentConfig, ExperimentKind, MapSource};
use crate::error::HarnessError;
use crate::stats::{CellKey, CellSummary, ResultTable};

pub const WORKERS_ENV: &str = "PLANLAB_WORKERS";

pub struct MapEntry {
    pub map_id: u32,
    pub instance: SokobanInstance,
    pub oracle: Arc<DistanceTable>,
}

pub struct MapGroup {
    pub t_star: u32,
    pub maps: Vec<MapEntry>,
}

pub struct ExperimentOutput {
    pub table: ResultTable,
    pub bounds: Vec<BoundRow>,
    pub output_dir: PathBuf,
}

/// `count` maps with oracle-optimal length `t_star`; map `i` depends only on
/// `(master_seed, t_star, i)`.
pub fn generate_maps(
    master_seed: u64,
    t_star: u32,
    count: u32,
    generator: &GeneratorConfig,
) -> Result<Vec<SokobanInstance>, HarnessError> {
    let cfg = GeneratorConfig {
        target_optimal: t_star,
        ..generator.clone()
    };
    let stream = RngStream::new(master_seed, format!("maps/T{t_star}"));
    (0..count)
        .into_par_iter()
        .map(|i| {
            generate_instance(&stream.with_counter(u64::from(i)), &cfg)
                .map_err(|source| HarnessError::Generation { t_star, source })
        })
        .collect()
}

pub fn load_instance(path: &Path) -> Result<SokobanInstance, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    SokobanInstance::from_json(&text).map_err(|source| HarnessError::Instance {
        path: path.to_path_buf(),
        source,
    })
}

fn with_oracles(t_star: u32, instances: Vec<(u32, SokobanInstance)>) -> MapGroup {
    let maps = instances
        .into_par_iter()
        .map(|(map_id, instance)| MapEntry {
            map_id,
            oracle: Arc::new(DistanceTable::build(&instance.initial)),
            instance,
        })
        .collect();
    MapGroup { t_star, maps }
}

pub fn load_maps(cfg: &ExperimentConfig) -> Result<Vec<MapGroup>, HarnessError> {
    match &cfg.maps {
        None => Ok(Vec::new()),
        Some(MapSource::Generate(g)) => g
            .t_star
            .iter()
            .map(|&t| {
                let maps = generate_maps(cfg.master_seed, t, g.count, &g.generator)?;
                Ok(with_oracles(t, (0u32..).zip(maps).collect()))
            })
            .collect(),
        Some(MapSource::Files(files)) => {
            let mut groups: BTreeMap<u32, Vec<(u32, SokobanInstance)>> = BTreeMap::new();
            for (i, path) in files.iter().enumerate() {
                let inst = load_instance(path)?;
                groups.entry(inst.optimal_length).or_default().push((i as u32, inst));
            }
            Ok(groups.into_iter().map(|(t, v)| with_oracles(t, v)).collect())
        }
    }
}

fn worker_pool() -> Result<rayon::ThreadPool, HarnessError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(WORKERS_ENV) {
        let n: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| HarnessError::config(WORKERS_ENV, format!("must be a positive integer, got {raw:?}")))?;
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::io(path, e))
}

/// Executes every cell and writes `episodes.csv`, `summary.csv` and one
/// JSONL trajectory log per cell under `output_dir`. Cells are written as
/// they finish, so an interrupted run leaves complete cells on disk.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    cfg.validate().map_err(|m| HarnessError::config("experiment", m))?;
    let out_dir = cfg.output_dir.clone();
    fs::create_dir_all(&out_dir).map_err(|e| HarnessError::io(&out_dir, e))?;
    let pool = worker_pool()?;
    pool.install(|| {
        if cfg.experiment == ExperimentKind::BoundsGrid {
            let grid = cfg.bounds.as_ref().expect("validated");
            let rows = grid.rows().map_err(|m| HarnessError::config("bounds", m))?;
            let path = out_dir.join("bounds.csv");
            bounds_grid::write_csv(&rows, create(&path)?)?;
            return Ok(ExperimentOutput {
                table: ResultTable::default(),
                bounds: rows,
                output_dir: out_dir.clone(),
            });
        }
        let groups = load_maps(cfg)?;
        let log_dir = out_dir.join("episodes");
        fs::create_dir_all(&log_dir).map_err(|e| HarnessError::io(&log_dir, e))?;
        let episodes_path = out_dir.join("episodes.csv");
        let mut episodes = csv::Writer::from_path(&episodes_path)?;
        episodes.write_record([
            "framework",
            "map_id",
            "trial",
            "T_star",
            "budget",
            "success",
            "steps_used",
            "replans",
            "planning_err_steps",
            "sampling_err_steps",
        ])?;
        let mut table = ResultTable::default();
        for group in &groups {
            for &slack in &cfg.slack {
                let budget = group.t_star + slack;
                let instances: Vec<SokobanInstance> = group
                    .maps
                    .iter()
                    .map(|m| SokobanInstance {
                        budget: Budget::steps(budget),
                        ..m.instance.clone()
                    })
                    .collect();
                let jobs: Vec<(usize, u32)> = (0..group.maps.len())
                    .flat_map(|m| (0..cfg.trials_per_cell).map(move |t| (m, t)))
                    .collect();
                for entry in &cfg.frameworks {
                    let key = CellKey::new(&entry.label, group.t_star, slack);
                    let results: Vec<EpisodeResult> = jobs
                        .par_iter()
                        .map(|&(m, trial)| {
                            let map = &group.maps[m];
                            let stream = RngStream::new(cfg.master_seed, format!("episode/T{}/map{}", group.t_star, map.map_id))
                                .with_counter(u64::from(trial));
                            run_episode(&instances[m], &entry.agent, map.oracle.as_ref(), &stream)
                                .expect("agent configs validated")
                        })
                        .collect();
                    let log_path = log_dir.join(format!("{}.jsonl", key.file_stem()));
                    let mut log = create(&log_path)?;
                    for (&(m, trial), r) in jobs.iter().zip(&results) {
                        episodes.write_record([
                            entry.label.clone(),
                            group.maps[m].map_id.to_string(),
                            trial.to_string(),
                            group.t_star.to_string(),
                            budget.to_string(),
                            u8::from(r.success()).to_string(),
                            r.steps_used.to_string(),
                            r.replans.to_string(),
                            r.planning_err_steps.to_string(),
                            r.sampling_err_steps.to_string(),
                        ])?;
                        writeln!(log, "{}", r.record.to_jsonl()).map_err(|e| HarnessError::io(&log_path, e))?;
                    }
                    log.flush().map_err(|e| HarnessError::io(&log_path, e))?;
                    episodes.flush().map_err(|e| HarnessError::io(&episodes_path, e))?;
                    table.rows.push(CellSummary::from_episodes(key, &results));
                }
            }
        }
        table.write_csv(&out_dir.join("summary.csv"))?;
        Ok(ExperimentOutput {
            table,
            bounds: Vec::new(),
            output_dir: out_dir.clone(),
        })
    })
}
