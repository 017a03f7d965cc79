//! Selection, crossover and mutation.
//!
//! Operators take chromosomes by reference and return fresh values, so a
//! parent is never modified. All randomness comes from the caller's stream.

use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{contract, Result};
use crate::genome::{Chromosome, Granularity};
use crate::nn::{Section, TruncatedGlorot};

/// Standard deviation of the Gaussian that replaces mutated filter values.
pub const FILTER_NOISE_SD: f64 = 0.5;

/// One member's row in the per-generation fitness table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessRow {
    pub id: u64,
    /// Cross-entropy on the fitness set.
    pub evaluation: f64,
    /// Accuracy on the fitness set.
    pub fitness: f64,
    pub probability: f64,
}

/// Members sorted by fitness (descending, ties by ascending id) with their
/// roulette-wheel selection probabilities `f_i / Σ f_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitnessTable {
    rows: Vec<FitnessRow>,
}

impl FitnessTable {
    pub fn rows(&self) -> &[FitnessRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn best(&self) -> Option<&FitnessRow> {
        self.rows.first()
    }

    pub fn probability_of(&self, id: u64) -> Option<f64> {
        self.rows.iter().find(|r| r.id == id).map(|r| r.probability)
    }
}

/// Builds the table from `(id, evaluation, fitness)` triples.
///
/// An all-zero fitness vector falls back to uniform probabilities.
pub fn build_fitness_table(entries: impl IntoIterator<Item = (u64, f64, f64)>) -> Result<FitnessTable> {
    let mut rows: Vec<FitnessRow> = entries
        .into_iter()
        .map(|(id, evaluation, fitness)| FitnessRow { id, evaluation, fitness, probability: 0.0 })
        .collect();
    if let Some(bad) = rows.iter().find(|r| !(r.fitness >= 0.0) || !r.fitness.is_finite()) {
        return Err(contract!("member {} has invalid fitness {}", bad.id, bad.fitness));
    }
    rows.sort_by(|a, b| b.fitness.total_cmp(&a.fitness).then(a.id.cmp(&b.id)));
    let total: f64 = rows.iter().map(|r| r.fitness).sum();
    let n = rows.len() as f64;
    for r in &mut rows {
        r.probability = if total > 0.0 { r.fitness / total } else { 1.0 / n };
    }
    Ok(FitnessTable { rows })
}

/// Fitness-proportional selection by inverting the cumulative distribution
/// at one uniform draw.
pub fn roulette_select<R: Rng + ?Sized>(table: &FitnessTable, rng: &mut R) -> Result<u64> {
    if table.rows.is_empty() {
        return Err(contract!("cannot select from an empty fitness table"));
    }
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    for row in &table.rows {
        cumulative += row.probability;
        if u < cumulative {
            return Ok(row.id);
        }
    }
    // rounding left the cumulative sum just below 1
    let last = table.rows.iter().rev().find(|r| r.probability > 0.0).unwrap_or(&table.rows[0]);
    Ok(last.id)
}

fn check_operable(c: &Chromosome) -> Result<()> {
    match c.granularity() {
        Granularity::SemiFolded | Granularity::Flat => Ok(()),
        Granularity::Folded => Err(contract!("operators need a semi-folded or flat chromosome; refold first")),
    }
}

/// Per-gene uniform crossover.
///
/// For each gene a fair coin picks the donor (`< 0.5` → `parent_a`). With
/// `emit_complement` the second child takes the other parent's gene at every
/// position.
pub fn crossover<R: Rng + ?Sized>(
    parent_a: &Chromosome,
    parent_b: &Chromosome,
    rng: &mut R,
    emit_complement: bool,
) -> Result<(Chromosome, Option<Chromosome>)> {
    check_operable(parent_a)?;
    if parent_a.granularity() != parent_b.granularity() || !parent_a.compatible_with(parent_b) {
        return Err(contract!(
            "crossover parents differ: `{}` {:?} vs `{}` {:?}",
            parent_a.spec().name,
            parent_a.granularity(),
            parent_b.spec().name,
            parent_b.granularity()
        ));
    }
    let mut first = parent_a.clone();
    let mut second = emit_complement.then(|| parent_b.clone());
    for i in 0..parent_a.len() {
        let heads = rng.random::<f64>() < 0.5;
        if heads {
            continue;
        }
        let range = parent_a.gene_range(i);
        first.values_mut()[range.clone()].copy_from_slice(&parent_b.values()[range.clone()]);
        if let Some(second) = second.as_mut() {
            second.values_mut()[range.clone()].copy_from_slice(&parent_a.values()[range]);
        }
    }
    Ok((first, second))
}

/// Genes to mutate in a section: `floor(section_len × ratio)`.
pub fn mutation_target_count(section_len: usize, mutation_ratio: f64) -> usize {
    libm::floor(section_len as f64 * mutation_ratio) as usize
}

/// Section-wise mutation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mutation {
    /// Fraction of each section's genes to mutate.
    pub ratio: f64,
    /// Standard deviation of the noise around mutated filter values.
    pub filter_sd: f64,
}

impl Mutation {
    pub fn new(ratio: f64) -> Self {
        Self { ratio, filter_sd: FILTER_NOISE_SD }
    }

    /// Returns a mutated copy of `parent`.
    ///
    /// In each section `mutation_target_count` genes are drawn uniformly
    /// without replacement. Feature-extraction values `v` become a draw from
    /// `Normal(v, filter_sd)`; classification weights `w` become
    /// `w + x` with `x` drawn independently per weight from the layer's
    /// truncated Glorot-normal initializer.
    pub fn apply<R: Rng + ?Sized>(&self, parent: &Chromosome, rng: &mut R) -> Result<Chromosome> {
        check_operable(parent)?;
        if !(0.0..=1.0).contains(&self.ratio) {
            return Err(contract!("mutation ratio {} outside [0, 1]", self.ratio));
        }
        if !(self.filter_sd >= 0.0 && self.filter_sd.is_finite()) {
            return Err(contract!("filter noise sd {} must be non-negative", self.filter_sd));
        }
        let glorot: Vec<TruncatedGlorot> = parent.layout().param_layers().map(TruncatedGlorot::for_layer).collect();
        let boundary = parent.section_boundary();
        let len = parent.len();
        let mut child = parent.clone();
        let feature = index::sample(rng, boundary, mutation_target_count(boundary, self.ratio)).into_vec();
        let classifier = index::sample(rng, len - boundary, mutation_target_count(len - boundary, self.ratio))
            .into_iter()
            .map(|i| i + boundary)
            .collect::<Vec<_>>();
        for gene in feature.into_iter().chain(classifier) {
            let (range, _, layer, section) = parent.layout().gene_info(parent.granularity(), gene);
            let values = &mut child.values_mut()[range];
            match section {
                Section::FeatureExtraction => {
                    for v in values {
                        let z: f64 = StandardNormal.sample(rng);
                        *v = (*v as f64 + self.filter_sd * z) as f32;
                    }
                }
                Section::Classification => {
                    let dist = glorot[layer];
                    for w in values {
                        *w = (*w as f64 + dist.sample(rng)) as f32;
                    }
                }
            }
        }
        Ok(child)
    }
}

/// [`Mutation::apply`] with the default filter noise.
pub fn mutate<R: Rng + ?Sized>(parent: &Chromosome, mutation_ratio: f64, rng: &mut R) -> Result<Chromosome> {
    Mutation::new(mutation_ratio).apply(parent, rng)
}
