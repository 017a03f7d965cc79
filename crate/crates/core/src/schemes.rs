//! Steady-state, generational and elitism training engines.
//!
//! An [`Engine`] owns a fixed-size population and advances it one
//! generation per [`Engine::step`]. Every generation draws from its own
//! random stream `(seed, generation)`, so an engine rebuilt from an
//! [`EngineState`] continues exactly where the original left off.

use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::data::Dataset;
use crate::error::{contract, Error, Result};
use crate::genome::{decode, encode_with, refold, Chromosome, GeneLayout, Granularity};
use crate::nn::{glorot_init, Evaluation, NetworkSpec};
use crate::operators::{build_fitness_table, crossover, roulette_select, FitnessTable, Mutation, FILTER_NOISE_SD};
use crate::rng::{derive_seed, RngStream, STREAM_GENERATION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "kebab-case"))]
pub enum Scheme {
    /// One child per generation replaces the least fit member.
    SteadyState,
    /// Complementary children replace the whole population.
    Generational,
    /// Elites survive unchanged; the rest is bred from a small mating pool.
    Elitism,
}

/// Chromosome representation used during evolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "kebab-case"))]
pub enum Encoding {
    /// Stored folded (one gene per layer), operated on semi-folded.
    #[default]
    Accordion,
    /// One gene per scalar.
    Traditional,
}

impl Encoding {
    pub fn storage(self) -> Granularity {
        match self {
            Encoding::Accordion => Granularity::Folded,
            Encoding::Traditional => Granularity::Flat,
        }
    }

    pub fn operator_view(self) -> Granularity {
        match self {
            Encoding::Accordion => Granularity::SemiFolded,
            Encoding::Traditional => Granularity::Flat,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub pop_size: usize,
    /// Steady-state probability of breeding by crossover instead of mutation.
    pub crossover_share: f64,
    /// Fraction of each section's genes a mutation touches.
    pub mutation_ratio: f64,
    /// Per-child mutation probability in the generational and elitism schemes.
    pub mutation_probability: f64,
    pub elite_count: usize,
    pub pool_size: usize,
    pub encoding: Encoding,
    /// Images per forward pass during evaluation.
    pub batch_size: usize,
    pub filter_noise_sd: f64,
    pub max_generations: Option<u64>,
    pub target_accuracy: Option<f64>,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::SteadyState,
            pop_size: 100,
            crossover_share: 0.7,
            mutation_ratio: 0.1,
            mutation_probability: 0.2,
            elite_count: 10,
            pool_size: 20,
            encoding: Encoding::Accordion,
            batch_size: 32,
            filter_noise_sd: FILTER_NOISE_SD,
            max_generations: None,
            target_accuracy: None,
        }
    }
}

fn config_err(field: &'static str, message: impl Into<alloc::string::String>) -> Error {
    Error::Config { field, message: message.into() }
}

impl SchemeConfig {
    pub fn with_scheme(scheme: Scheme) -> Self {
        Self { scheme, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |field, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(config_err(field, alloc::format!("{v} is outside [0, 1]")))
            }
        };
        if self.pop_size < 2 {
            return Err(config_err("pop_size", "population needs at least two members"));
        }
        unit("crossover_share", self.crossover_share)?;
        unit("mutation_ratio", self.mutation_ratio)?;
        unit("mutation_probability", self.mutation_probability)?;
        if let Some(t) = self.target_accuracy {
            unit("target_accuracy", t)?;
        }
        if self.batch_size == 0 {
            return Err(config_err("batch_size", "must be positive"));
        }
        if !(self.filter_noise_sd >= 0.0 && self.filter_noise_sd.is_finite()) {
            return Err(config_err("filter_noise_sd", "must be a non-negative number"));
        }
        match self.scheme {
            Scheme::Generational if self.pop_size % 2 != 0 => {
                Err(config_err("pop_size", alloc::format!("generational scheme pairs members; {} is odd", self.pop_size)))
            }
            Scheme::Elitism if self.elite_count >= self.pop_size => Err(config_err(
                "elite_count",
                alloc::format!("{} elites leave no room for children in {}", self.elite_count, self.pop_size),
            )),
            Scheme::Elitism if self.pool_size < 2 => {
                Err(config_err("pool_size", "mating pool needs at least two members"))
            }
            _ => Ok(()),
        }
    }

    /// Networks evaluated by one call to [`Engine::step`].
    pub fn evaluations_per_step(&self) -> usize {
        match self.scheme {
            Scheme::SteadyState => 1,
            Scheme::Generational => self.pop_size,
            Scheme::Elitism => self.pop_size - self.elite_count,
        }
    }

    fn mutation(&self) -> Mutation {
        Mutation { ratio: self.mutation_ratio, filter_sd: self.filter_noise_sd }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    /// Unique within a run; later members have larger ids.
    pub id: u64,
    pub chromosome: Chromosome,
    /// Cached fitness inputs; `None` until evaluated.
    pub evaluation: Option<Evaluation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub generation: u64,
    pub members: Vec<Member>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member(&self, id: u64) -> Option<&Member> {
        self.members.iter().find(|m| m.id == id)
    }

    /// Fitness table over evaluated members.
    pub fn fitness_table(&self) -> Result<FitnessTable> {
        build_fitness_table(self.members.iter().map(|m| {
            let e = m.evaluation.unwrap_or(Evaluation { accuracy: 0.0, loss: f64::INFINITY });
            (m.id, e.loss, e.accuracy)
        }))
    }
}

/// Fans work out over members. Implementations must return results in input
/// order.
pub trait Executor {
    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send;
}

/// Evaluates on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl Executor for Serial {
    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        items.iter().map(f).collect()
    }
}

impl<E: Executor + ?Sized> Executor for &E {
    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        (**self).map(items, f)
    }
}

/// Decodes a chromosome and scores it on `data`.
pub fn evaluate_chromosome(chrom: &Chromosome, data: &Dataset, batch_size: usize) -> Result<Evaluation> {
    decode(chrom, chrom.spec())?.evaluate(data, batch_size)
}

fn evaluate_members<X: Executor>(
    members: &[(u64, &Chromosome)],
    data: &Dataset,
    batch_size: usize,
    executor: &X,
) -> Result<Vec<Evaluation>> {
    executor
        .map(members, |(id, chrom)| {
            evaluate_chromosome(chrom, data, batch_size)
                .map_err(|e| Error::Evaluation { member: *id, source: Box::new(e) })
        })
        .into_iter()
        .collect()
}

/// Scores every member on `data` and returns the resulting fitness table.
pub fn evaluate_population<X: Executor>(
    pop: &Population,
    data: &Dataset,
    batch_size: usize,
    executor: &X,
) -> Result<FitnessTable> {
    let items: Vec<(u64, &Chromosome)> = pop.members.iter().map(|m| (m.id, &m.chromosome)).collect();
    let evals = evaluate_members(&items, data, batch_size, executor)?;
    build_fitness_table(pop.members.iter().zip(evals).map(|(m, e)| (m.id, e.loss, e.accuracy)))
}

/// `pop_size` Glorot-initialized networks, folded, member `i` seeded with
/// `derive_seed(seed, i)`.
pub fn init_population(spec: Arc<NetworkSpec>, pop_size: usize, seed: u64) -> Result<Vec<Chromosome>> {
    let layout = Arc::new(GeneLayout::new(spec.clone())?);
    (0..pop_size as u64)
        .map(|i| {
            let net = glorot_init(spec.clone(), derive_seed(seed, i))?;
            Ok(encode_with(layout.clone(), &net, Granularity::Folded))
        })
        .collect()
}

/// Per-generation summary.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct MetricsRecord {
    pub generation: u64,
    /// Cumulative number of network evaluations, including generation 0.
    pub evaluations_so_far: u64,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub worst_fitness: f64,
    /// Cross-entropy of the fittest member.
    pub best_evaluation_loss: f64,
    pub wall_clock_seconds: f64,
    /// `log10(evaluations_so_far)`
    pub log10_iterations: f64,
}

impl MetricsRecord {
    pub fn from_table(generation: u64, evaluations_so_far: u64, table: &FitnessTable) -> Self {
        let rows = table.rows();
        let best = rows.first().copied();
        let n = rows.len().max(1) as f64;
        Self {
            generation,
            evaluations_so_far,
            best_fitness: best.map_or(0.0, |r| r.fitness),
            mean_fitness: rows.iter().map(|r| r.fitness).sum::<f64>() / n,
            worst_fitness: rows.last().map_or(0.0, |r| r.fitness),
            best_evaluation_loss: best.map_or(f64::NAN, |r| r.evaluation),
            wall_clock_seconds: 0.0,
            log10_iterations: libm::log10(evaluations_so_far.max(1) as f64),
        }
    }
}

/// Metrics for every generation plus the final population.
#[derive(Debug, Clone, PartialEq)]
pub struct RunHistory {
    pub records: Vec<MetricsRecord>,
    pub population: Population,
}

/// Everything needed to continue a run besides config, data and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineState {
    pub population: Population,
    pub next_id: u64,
    pub evaluations: u64,
}

pub struct Engine<'d, X: Executor = Serial> {
    config: SchemeConfig,
    data: &'d Dataset,
    executor: X,
    seed: u64,
    population: Population,
    next_id: u64,
    evaluations: u64,
}

impl<'d, X: Executor> Engine<'d, X> {
    /// Starts generation 0 from `initial` (any granularity; values are kept)
    /// and evaluates every member.
    pub fn new(config: SchemeConfig, data: &'d Dataset, seed: u64, initial: Vec<Chromosome>, executor: X) -> Result<Self> {
        config.validate()?;
        if initial.len() != config.pop_size {
            return Err(config_err(
                "pop_size",
                alloc::format!("initial population has {} members, config asks for {}", initial.len(), config.pop_size),
            ));
        }
        let storage = config.encoding.storage();
        let members = initial
            .iter()
            .enumerate()
            .map(|(i, c)| Member { id: i as u64, chromosome: refold(c, storage), evaluation: None })
            .collect();
        Self::resume(
            config,
            data,
            seed,
            EngineState {
                population: Population { generation: 0, members },
                next_id: initial.len() as u64,
                evaluations: 0,
            },
            executor,
        )
    }

    /// Continues from a saved state; unevaluated members are evaluated now.
    pub fn resume(config: SchemeConfig, data: &'d Dataset, seed: u64, state: EngineState, executor: X) -> Result<Self> {
        config.validate()?;
        if state.population.len() != config.pop_size {
            return Err(config_err(
                "pop_size",
                alloc::format!("population has {} members, config asks for {}", state.population.len(), config.pop_size),
            ));
        }
        if let Some(first) = state.population.members.first() {
            let [h, w, c] = first.chromosome.spec().input;
            if data.image_shape() != [h, w, c] {
                return Err(Error::Data(alloc::format!(
                    "`{}` expects {h}x{w}x{c} images, dataset has {:?}",
                    first.chromosome.spec().name,
                    data.image_shape()
                )));
            }
            if data.class_count() != first.chromosome.spec().class_count {
                return Err(Error::Data(alloc::format!(
                    "`{}` has {} outputs, dataset has {} classes",
                    first.chromosome.spec().name,
                    first.chromosome.spec().class_count,
                    data.class_count()
                )));
            }
        }
        let mut engine = Self {
            config,
            data,
            executor,
            seed,
            population: state.population,
            next_id: state.next_id,
            evaluations: state.evaluations,
        };
        let pending: Vec<usize> = (0..engine.population.len())
            .filter(|&i| engine.population.members[i].evaluation.is_none())
            .collect();
        if !pending.is_empty() {
            let items: Vec<(u64, &Chromosome)> = pending
                .iter()
                .map(|&i| (engine.population.members[i].id, &engine.population.members[i].chromosome))
                .collect();
            let evals = evaluate_members(&items, data, config.batch_size, &engine.executor)?;
            for (i, e) in pending.iter().zip(evals) {
                engine.population.members[*i].evaluation = Some(e);
            }
            engine.evaluations += pending.len() as u64;
        }
        Ok(engine)
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn generation(&self) -> u64 {
        self.population.generation
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    pub fn state(&self) -> EngineState {
        EngineState { population: self.population.clone(), next_id: self.next_id, evaluations: self.evaluations }
    }

    pub fn into_population(self) -> Population {
        self.population
    }

    pub fn fitness_table(&self) -> FitnessTable {
        self.population.fitness_table().expect("accuracies are within [0, 1]")
    }

    pub fn record(&self) -> MetricsRecord {
        MetricsRecord::from_table(self.population.generation, self.evaluations, &self.fitness_table())
    }

    /// Whether the configured stop condition holds.
    pub fn should_stop(&self) -> bool {
        let by_generation = self.config.max_generations.is_some_and(|g| self.population.generation >= g);
        let by_accuracy = self
            .config
            .target_accuracy
            .is_some_and(|t| self.fitness_table().best().is_some_and(|b| b.fitness >= t));
        by_generation || by_accuracy
    }

    /// Advances one generation.
    pub fn step(&mut self) -> Result<()> {
        let generation = self.population.generation + 1;
        let mut rng = RngStream::new(self.seed, STREAM_GENERATION | generation);
        let table = self.fitness_table();
        match self.config.scheme {
            Scheme::SteadyState => self.steady_state_step(&table, &mut rng)?,
            Scheme::Generational => self.generational_step(&table, &mut rng)?,
            Scheme::Elitism => self.elitism_step(&table, &mut rng)?,
        }
        self.population.generation = generation;
        Ok(())
    }

    fn operand(&self, id: u64) -> Chromosome {
        let member = self.population.member(id).expect("table ids come from the population");
        refold(&member.chromosome, self.config.encoding.operator_view())
    }

    fn maybe_mutate(&self, child: Chromosome, rng: &mut RngStream) -> Result<Chromosome> {
        if rng.random::<f64>() < self.config.mutation_probability {
            self.config.mutation().apply(&child, rng)
        } else {
            Ok(child)
        }
    }

    fn admit(&mut self, children: Vec<Chromosome>) -> Result<Vec<Member>> {
        let storage = self.config.encoding.storage();
        let first_id = self.next_id;
        let children: Vec<(u64, Chromosome)> =
            children.into_iter().enumerate().map(|(i, c)| (first_id + i as u64, refold(&c, storage))).collect();
        let items: Vec<(u64, &Chromosome)> = children.iter().map(|(id, c)| (*id, c)).collect();
        let evals = evaluate_members(&items, self.data, self.config.batch_size, &self.executor)?;
        self.next_id += children.len() as u64;
        self.evaluations += children.len() as u64;
        Ok(children
            .into_iter()
            .zip(evals)
            .map(|((id, chromosome), e)| Member { id, chromosome, evaluation: Some(e) })
            .collect())
    }

    fn steady_state_step(&mut self, table: &FitnessTable, rng: &mut RngStream) -> Result<()> {
        let child = if rng.random::<f64>() < self.config.crossover_share {
            let a = roulette_select(table, rng)?;
            let b = roulette_select(table, rng)?;
            crossover(&self.operand(a), &self.operand(b), rng, false)?.0
        } else {
            let p = roulette_select(table, rng)?;
            self.config.mutation().apply(&self.operand(p), rng)?
        };
        let child = self.admit(alloc::vec![child])?.pop().expect("one child");
        // rows run fitness descending then id ascending, so the last row is
        // the least fit member and, among equals, the newest
        let victim = table.rows().last().map(|r| r.id).ok_or_else(|| contract!("empty population"))?;
        let slot = self.population.members.iter().position(|m| m.id == victim).expect("victim is a member");
        self.population.members[slot] = child;
        Ok(())
    }

    fn generational_step(&mut self, table: &FitnessTable, rng: &mut RngStream) -> Result<()> {
        let mut pool = (0..self.config.pop_size).map(|_| roulette_select(table, rng)).collect::<Result<Vec<u64>>>()?;
        pool.shuffle(rng);
        let mut children = Vec::with_capacity(self.config.pop_size);
        for pair in pool.chunks_exact(2) {
            let (first, second) = crossover(&self.operand(pair[0]), &self.operand(pair[1]), rng, true)?;
            let second = second.expect("complement requested");
            children.push(self.maybe_mutate(first, rng)?);
            children.push(self.maybe_mutate(second, rng)?);
        }
        self.population.members = self.admit(children)?;
        Ok(())
    }

    fn elitism_step(&mut self, table: &FitnessTable, rng: &mut RngStream) -> Result<()> {
        let elites: Vec<Member> = table.rows()[..self.config.elite_count]
            .iter()
            .map(|r| self.population.member(r.id).expect("table ids come from the population").clone())
            .collect();
        let pool = (0..self.config.pool_size).map(|_| roulette_select(table, rng)).collect::<Result<Vec<u64>>>()?;
        let needed = self.config.pop_size - self.config.elite_count;
        let mut children = Vec::with_capacity(needed);
        for _ in 0..needed {
            let picks = index::sample(rng, pool.len(), 2);
            let (a, b) = (pool[picks.index(0)], pool[picks.index(1)]);
            let child = crossover(&self.operand(a), &self.operand(b), rng, false)?.0;
            children.push(self.maybe_mutate(child, rng)?);
        }
        let mut next = elites;
        next.extend(self.admit(children)?);
        self.population.members = next;
        Ok(())
    }
}

/// Evolves `initial` (or a fresh Glorot population seeded from `seed`)
/// until the stop condition holds.
pub fn run<X: Executor>(
    config: &SchemeConfig,
    spec: Arc<NetworkSpec>,
    data: &Dataset,
    seed: u64,
    initial: Option<Vec<Chromosome>>,
    executor: X,
) -> Result<RunHistory> {
    if config.max_generations.is_none() && config.target_accuracy.is_none() {
        return Err(config_err("max_generations", "a stop condition (max_generations or target_accuracy) is required"));
    }
    let initial = match initial {
        Some(pop) => pop,
        None => init_population(spec, config.pop_size, seed)?,
    };
    let mut engine = Engine::new(*config, data, seed, initial, executor)?;
    let mut records = alloc::vec![engine.record()];
    while !engine.should_stop() {
        engine.step()?;
        records.push(engine.record());
    }
    Ok(RunHistory { records, population: engine.into_population() })
}
