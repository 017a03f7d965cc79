//! The `init-pop`, `train`, `compare` and `eval` subcommands.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use accordion_core::baseline::Backprop;
use accordion_core::genome::{decode, encode, Granularity};
use accordion_core::nn::{glorot_init, Evaluation, Network, NetworkSpec};
use accordion_core::rng::derive_seed;
use accordion_core::schemes::{evaluate_population, init_population, Engine, MetricsRecord};
use serde::Serialize;

use crate::codec::PopulationFile;
use crate::compare::{load_runs, write_comparison, Series};
use crate::config::{RunConfig, SplitName};
use crate::error::{io_err, Error, Result};
use crate::metrics::MetricsWriter;
use crate::parallel::Workers;

pub const FINAL_FILE: &str = "final.pop";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const CONFIG_FILE: &str = "config.toml";

/// Where data lives and how many evaluation workers to use.
#[derive(Debug, Clone)]
pub struct Environment {
    pub dataset_root: Option<PathBuf>,
    /// 1 evaluates serially; 0 uses every CPU.
    pub workers: usize,
}

impl Default for Environment {
    fn default() -> Self {
        Self { dataset_root: None, workers: 1 }
    }
}

impl Environment {
    fn workers(&self) -> Result<Workers> {
        Workers::new(self.workers).map_err(|e| Error::Config(format!("workers: {e}")))
    }
}

pub fn checkpoint_path(out: &Path, generation: u64) -> PathBuf {
    out.join(CHECKPOINT_DIR).join(format!("gen-{generation:06}.pop"))
}

/// Creates the shared initial population (generation 0, unevaluated).
pub fn init_pop(cfg: &RunConfig, out: &Path) -> Result<PopulationFile> {
    let spec = cfg.architecture()?;
    let chromosomes = init_population(spec.clone(), cfg.ga.pop_size, cfg.seed)?;
    let file = PopulationFile::initial(spec, cfg.seed, chromosomes);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    file.save(out)?;
    Ok(file)
}

fn load_population_for(spec: &NetworkSpec, path: &Path) -> Result<PopulationFile> {
    let file = PopulationFile::load(path)?;
    if *file.spec != *spec {
        return Err(Error::Config(format!(
            "{} holds `{}` networks, the config asks for `{}`",
            path.display(),
            file.spec.name,
            spec.name
        )));
    }
    Ok(file)
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub out: PathBuf,
    /// Overrides the config's `population`.
    pub population: Option<PathBuf>,
    /// Checkpoint file, or a run directory whose newest checkpoint is used.
    pub resume: Option<PathBuf>,
}

struct Clock {
    start: Instant,
    offset: f64,
    enabled: bool,
}

impl Clock {
    fn stamp(&self, mut r: MetricsRecord) -> MetricsRecord {
        r.wall_clock_seconds = if self.enabled { self.offset + self.start.elapsed().as_secs_f64() } else { 0.0 };
        r
    }
}

fn newest_checkpoint(dir: &Path) -> Result<PathBuf> {
    let cdir = dir.join(CHECKPOINT_DIR);
    let mut found: Vec<PathBuf> = fs::read_dir(&cdir)
        .map_err(io_err(&cdir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "pop"))
        .collect();
    found.sort();
    found.pop().ok_or_else(|| Error::Config(format!("{}: no checkpoints to resume from", cdir.display())))
}

/// Runs the configured scheme or baseline, writing metrics, checkpoints and
/// the final population into `opts.out`. Returns every metrics record.
pub fn train(cfg: &RunConfig, env: &Environment, opts: &TrainOptions) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    let out = &opts.out;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let cfg_path = out.join(CONFIG_FILE);
    fs::write(&cfg_path, cfg.to_toml()).map_err(io_err(&cfg_path))?;
    let spec = cfg.architecture()?;
    let splits = cfg.splits(env.dataset_root.as_deref())?;
    let fitness = splits.get(cfg.fitness_split);
    let population = opts.population.as_ref().or(cfg.population.as_ref());
    match cfg.scheme.scheme() {
        Some(scheme) => {
            let scfg = cfg.scheme_config(scheme);
            let workers = env.workers()?;
            let start = Instant::now();
            let (mut engine, mut history) = match &opts.resume {
                Some(path) => {
                    let path = if path.is_dir() { newest_checkpoint(path)? } else { path.clone() };
                    let file = load_population_for(&spec, &path)?;
                    if file.seed != cfg.seed {
                        return Err(Error::Config(format!(
                            "checkpoint seed {} differs from config seed {}",
                            file.seed, cfg.seed
                        )));
                    }
                    (Engine::resume(scfg, fitness, cfg.seed, file.state, workers)?, file.history)
                }
                None => {
                    let initial = match population {
                        Some(p) => load_population_for(&spec, p)?.chromosomes(),
                        None => init_population(spec.clone(), scfg.pop_size, cfg.seed)?,
                    };
                    (Engine::new(scfg, fitness, cfg.seed, initial, workers)?, Vec::new())
                }
            };
            let clock = Clock {
                start,
                offset: history.last().map_or(0.0, |r| r.wall_clock_seconds),
                enabled: cfg.record_wall_clock,
            };
            let mut writer = MetricsWriter::create(out)?;
            for r in &history {
                writer.push(r)?;
            }
            if history.is_empty() {
                let r = clock.stamp(engine.record());
                writer.push(&r)?;
                history.push(r);
            }
            let save = |engine: &Engine<'_, Workers>, history: &[MetricsRecord], path: &Path| {
                PopulationFile { spec: spec.clone(), seed: cfg.seed, state: engine.state(), history: history.to_vec() }
                    .save(path)
            };
            while !engine.should_stop() {
                engine.step()?;
                let r = clock.stamp(engine.record());
                writer.push(&r)?;
                history.push(r);
                if cfg.checkpoint_interval > 0 && engine.generation() % cfg.checkpoint_interval == 0 {
                    let cdir = out.join(CHECKPOINT_DIR);
                    fs::create_dir_all(&cdir).map_err(io_err(&cdir))?;
                    save(&engine, &history, &checkpoint_path(out, engine.generation()))?;
                }
            }
            save(&engine, &history, &out.join(FINAL_FILE))?;
            Ok(history)
        }
        None => {
            if opts.resume.is_some() {
                return Err(Error::Config("--resume applies to genetic-algorithm schemes only".into()));
            }
            let start = Instant::now();
            let net = match population {
                Some(p) => fittest_member(&load_population_for(&spec, p)?, fitness, cfg.ga.batch_size, env)?,
                None => glorot_init(spec.clone(), derive_seed(cfg.seed, 0))?,
            };
            let clock = Clock { start, offset: 0.0, enabled: cfg.record_wall_clock };
            let mut trainer = Backprop::new(cfg.backprop, net, &splits.train, fitness, cfg.seed)?;
            let mut writer = MetricsWriter::create(out)?;
            let mut history = Vec::new();
            let mut record = |trainer: &Backprop<'_>, history: &mut Vec<MetricsRecord>| -> Result<bool> {
                let r = clock.stamp(trainer.record()?);
                writer.push(&r)?;
                history.push(r);
                Ok(trainer.target_reached(&r))
            };
            let interval = trainer.eval_interval() as u64;
            if !record(&trainer, &mut history)? {
                while trainer.step()?.is_some() {
                    if (trainer.steps() % interval == 0 || trainer.finished()) && record(&trainer, &mut history)? {
                        break;
                    }
                }
            }
            if history.last().map(|r| r.generation) != Some(trainer.steps()) {
                record(&trainer, &mut history)?;
            }
            let last = *history.last().expect("at least one record");
            let mut file = PopulationFile::initial(spec.clone(), cfg.seed, vec![encode(trainer.network(), Granularity::Folded)]);
            file.state.population.generation = trainer.steps();
            file.state.evaluations = last.evaluations_so_far;
            file.state.population.members[0].evaluation =
                Some(Evaluation { accuracy: last.best_fitness, loss: last.best_evaluation_loss });
            file.history = history.clone();
            file.save(&out.join(FINAL_FILE))?;
            Ok(history)
        }
    }
}

/// Evaluates every member on `data` and decodes the best one.
pub fn fittest_member(file: &PopulationFile, data: &accordion_core::data::Dataset, batch_size: usize, env: &Environment) -> Result<Network> {
    let table = evaluate_population(&file.state.population, data, batch_size, &env.workers()?)?;
    let best = table.best().ok_or_else(|| Error::Config("population is empty".into()))?;
    let member = file.state.population.member(best.id).expect("table ids come from the population");
    Ok(decode(&member.chromosome, &file.spec)?)
}

pub fn compare(runs: &[PathBuf], out: &Path) -> Result<Vec<Series>> {
    let series = load_runs(runs)?;
    write_comparison(&series, out)?;
    Ok(series)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub member: u64,
    pub split: SplitName,
    pub examples: usize,
    pub accuracy: f64,
    pub loss: f64,
}

/// Scores one member of a population file on a split. Without `member`, the
/// member with the best stored fitness is used.
pub fn eval(
    cfg: &RunConfig,
    env: &Environment,
    population: &Path,
    member: Option<u64>,
    split: SplitName,
) -> Result<EvalReport> {
    let spec: Arc<NetworkSpec> = cfg.architecture()?;
    let file = load_population_for(&spec, population)?;
    let members = &file.state.population.members;
    let chosen = match member {
        Some(id) => members
            .iter()
            .find(|m| m.id == id)
            .ok_or_else(|| Error::Config(format!("no member {id} in {}", population.display())))?,
        None => {
            let table = file.state.population.fitness_table()?;
            if members.iter().any(|m| m.evaluation.is_none()) {
                return Err(Error::Config(format!(
                    "{} has unevaluated members; pass --member",
                    population.display()
                )));
            }
            let id = table.best().expect("non-empty").id;
            members.iter().find(|m| m.id == id).expect("table ids come from the population")
        }
    };
    let splits = cfg.splits(env.dataset_root.as_deref())?;
    let data = splits.get(split);
    let e = decode(&chosen.chromosome, &spec)?.evaluate(data, cfg.ga.batch_size)?;
    Ok(EvalReport { member: chosen.id, split, examples: data.len(), accuracy: e.accuracy, loss: e.loss })
}
