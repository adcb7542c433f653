//! Evolutionary search in the generator's latent space.
//!
//! Goal: find a latent point whose decoded sample makes the sealed oracle
//! answer with (nearly) a one-hot distribution for a chosen target class.
//! The loop is a small elitist evolution strategy:
//!
//! * start from `K` latents drawn uniformly from `[-u, u]^L`,
//! * while the best objective is still at or above the threshold `t` and
//!   generations remain: keep the `k` fittest members unchanged, refill the
//!   other `K−k` slots with uniformly chosen elite copies perturbed by
//!   Gaussian noise, and re-evaluate only the fresh copies.
//!
//! The objective for a candidate `v` is the squared distance between the
//! oracle's answer for the decoded sample and the one-hot target:
//! `Σ_j (ŷ_j − y_j)²` — lower is better, zero is a perfectly confident hit.
//!
//! Query accounting is exact and central to the attack's economics: a run
//! that executes `g` generations costs `K + g·(K−k)` oracle samples, nothing
//! more. Elites are never re-evaluated; their objective values are cached.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use std::path::Path;

use crate::error::{Error, Result};
use crate::oracle::BlackBoxOracle;
use crate::tensor::Tensor;
use crate::vae::LatentGenerator;

#[derive(Debug, Clone)]
pub struct EvolutionConfig {
    /// Population size `K`.
    pub population_size: usize,
    /// Number of elites `k` carried over unchanged each generation.
    pub elite_size: usize,
    /// Init boundary `u`: starting latents are uniform in `[-u, u]`.
    pub latent_boundary: f64,
    /// Stop as soon as the best objective drops below this threshold `t`.
    pub fitness_threshold: f64,
    /// Hard cap on generations after the initial evaluation.
    pub max_generations: u32,
    /// Std-dev of the Gaussian mutation added to elite copies.
    pub mutation_std: f64,
    pub seed: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            population_size: 30,
            elite_size: 10,
            latent_boundary: 3.0,
            fitness_threshold: 0.02,
            max_generations: 10,
            mutation_std: 1.0,
            seed: 0,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.elite_size < 1 || self.elite_size >= self.population_size {
            return Err(Error::invalid(format!(
                "elite/population sizes must satisfy 1 <= k < K, got k={} K={}",
                self.elite_size, self.population_size
            )));
        }
        if !(self.latent_boundary > 0.0 && self.latent_boundary.is_finite()) {
            return Err(Error::invalid(format!(
                "latent boundary must be positive and finite, got {}",
                self.latent_boundary
            )));
        }
        if !(self.fitness_threshold > 0.0 && self.fitness_threshold.is_finite()) {
            return Err(Error::invalid(format!(
                "fitness threshold must be positive and finite, got {}",
                self.fitness_threshold
            )));
        }
        if !(self.mutation_std > 0.0 && self.mutation_std.is_finite()) {
            return Err(Error::invalid(format!(
                "mutation std must be positive and finite, got {}",
                self.mutation_std
            )));
        }
        Ok(())
    }
}

/// Snapshot of the population's best member, taken after the initial
/// evaluation (`generation` 0) and after every completed generation.
#[derive(Debug, Clone)]
pub struct GenerationRecord {
    pub generation: u32,
    pub best_fitness: f64,
    /// Oracle samples consumed by this search up to and including the
    /// evaluation that produced this record.
    pub oracle_samples: u64,
    pub best_latent: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub target_class: usize,
    pub best_latent: Vec<f64>,
    pub best_sample: Vec<f64>,
    pub best_fitness: f64,
    /// Generations actually executed (excluding the initial evaluation).
    pub generations: u32,
    /// Exactly `K + generations·(K−k)`.
    pub oracle_samples: u64,
    pub reached_threshold: bool,
    pub history: Vec<GenerationRecord>,
}

/// Squared distance between the oracle's answer for the decoded latent and
/// the one-hot target. Costs exactly one oracle sample.
pub fn fitness(
    latent: &[f64],
    target_class: usize,
    oracle: &BlackBoxOracle,
    generator: &dyn LatentGenerator,
) -> Result<f64> {
    let sample = generator.decode(latent)?;
    let sample = Tensor::new(vec![1, sample.len()], sample)?;
    let probs = oracle.query(&sample)?;
    fitness_of_row(probs.row(0), target_class)
}

fn fitness_of_row(probs: &[f64], target_class: usize) -> Result<f64> {
    if target_class >= probs.len() {
        return Err(Error::invalid(format!(
            "target class {target_class} out of range; oracle answers {} classes",
            probs.len()
        )));
    }
    let mut sum = 0.0;
    for (j, &p) in probs.iter().enumerate() {
        let y = if j == target_class { 1.0 } else { 0.0 };
        let d = p - y;
        sum += d * d;
    }
    Ok(sum)
}

struct Member {
    latent: Vec<f64>,
    fitness: f64,
}

/// Runs the elitist search for one target class.
pub fn evolve(
    target_class: usize,
    oracle: &BlackBoxOracle,
    generator: &dyn LatentGenerator,
    cfg: &EvolutionConfig,
) -> Result<EvolutionResult> {
    cfg.validate()?;
    let latent_dim = generator.latent_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = Uniform::new_inclusive(-cfg.latent_boundary, cfg.latent_boundary)
        .map_err(|e| Error::invalid(e.to_string()))?;
    let mutation = Normal::new(0.0, cfg.mutation_std).map_err(|e| Error::invalid(e.to_string()))?;

    let k = cfg.population_size;
    let elite = cfg.elite_size;
    let mut spent: u64 = 0;

    let latents: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..latent_dim).map(|_| init.sample(&mut rng)).collect())
        .collect();
    let fitnesses = evaluate(&latents, target_class, oracle, generator, &mut spent)?;
    let mut population: Vec<Member> = latents
        .into_iter()
        .zip(fitnesses)
        .map(|(latent, fitness)| Member { latent, fitness })
        .collect();
    // Stable ascending sort: ties keep insertion order, so a fixed seed
    // always yields the same elite set.
    population.sort_by(|a, b| a.fitness.partial_cmp(&b.fitness).unwrap());

    let mut history = vec![GenerationRecord {
        generation: 0,
        best_fitness: population[0].fitness,
        oracle_samples: spent,
        best_latent: population[0].latent.clone(),
    }];

    let mut generation = 0u32;
    while population[0].fitness >= cfg.fitness_threshold && generation < cfg.max_generations {
        let mut fresh: Vec<Vec<f64>> = Vec::with_capacity(k - elite);
        for _ in 0..k - elite {
            let parent = rng.random_range(0..elite);
            let child: Vec<f64> = population[parent]
                .latent
                .iter()
                .map(|v| v + mutation.sample(&mut rng))
                .collect();
            fresh.push(child);
        }
        let fresh_fitness = evaluate(&fresh, target_class, oracle, generator, &mut spent)?;
        population.truncate(elite);
        for (latent, fitness) in fresh.into_iter().zip(fresh_fitness) {
            population.push(Member { latent, fitness });
        }
        population.sort_by(|a, b| a.fitness.partial_cmp(&b.fitness).unwrap());
        generation += 1;
        history.push(GenerationRecord {
            generation,
            best_fitness: population[0].fitness,
            oracle_samples: spent,
            best_latent: population[0].latent.clone(),
        });
    }

    let best = &population[0];
    let best_sample = generator.decode(&best.latent)?;
    Ok(EvolutionResult {
        target_class,
        best_latent: best.latent.clone(),
        best_sample,
        best_fitness: best.fitness,
        generations: generation,
        oracle_samples: spent,
        reached_threshold: best.fitness < cfg.fitness_threshold,
        history,
    })
}

/// Batched candidate evaluation: one decode and one oracle query for the
/// whole slice. Per-row arithmetic is identical to the single-latent
/// [`fitness`] path, so cached values can be recomputed bit-for-bit.
fn evaluate(
    latents: &[Vec<f64>],
    target_class: usize,
    oracle: &BlackBoxOracle,
    generator: &dyn LatentGenerator,
    spent: &mut u64,
) -> Result<Vec<f64>> {
    let batch = generator.decode_batch(&Tensor::from_rows(latents)?)?;
    let probs = oracle.query(&batch)?;
    *spent += latents.len() as u64;
    (0..probs.rows())
        .map(|r| fitness_of_row(probs.row(r), target_class))
        .collect()
}

/// One synthesized training batch: each element is the best sample of an
/// independent search plus the oracle's soft label for it.
#[derive(Debug)]
pub struct EvolvedBatch {
    pub samples: Tensor,
    pub soft_targets: Tensor,
    pub target_classes: Vec<usize>,
    pub results: Vec<EvolutionResult>,
}

/// Synthesizes `batch_size` samples. Target classes are drawn uniformly
/// from `0..n_classes` and each element runs its own seeded search; the
/// final soft label costs one extra oracle sample per element, so a batch
/// consumes `Σᵢ (K + gᵢ·(K−k)) + batch_size` samples total.
pub fn evolve_batch(
    oracle: &BlackBoxOracle,
    generator: &dyn LatentGenerator,
    cfg: &EvolutionConfig,
    batch_size: usize,
    n_classes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EvolvedBatch> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    if n_classes == 0 {
        return Err(Error::invalid("need at least one target class"));
    }
    let mut samples: Vec<Vec<f64>> = Vec::with_capacity(batch_size);
    let mut targets: Vec<Vec<f64>> = Vec::with_capacity(batch_size);
    let mut classes = Vec::with_capacity(batch_size);
    let mut results = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let target_class = rng.random_range(0..n_classes);
        let sub = EvolutionConfig {
            seed: rng.next_u64(),
            ..cfg.clone()
        };
        let result = evolve(target_class, oracle, generator, &sub)?;
        let sample = Tensor::new(vec![1, result.best_sample.len()], result.best_sample.clone())?;
        let label = oracle.query(&sample)?;
        samples.push(result.best_sample.clone());
        targets.push(label.row(0).to_vec());
        classes.push(target_class);
        results.push(result);
    }
    Ok(EvolvedBatch {
        samples: Tensor::from_rows(&samples)?,
        soft_targets: Tensor::from_rows(&targets)?,
        target_classes: classes,
        results,
    })
}

/// Appends one CSV line per generation record of each search. The
/// `batch_index` column is the element's position in `results`;
/// `oracle_samples_cumulative` counts every sample spent across the whole
/// trace, including the final labelling query after each element when
/// `label_query_per_element` is set.
pub fn write_trace_csv(
    path: &Path,
    results: &[EvolutionResult],
    label_query_per_element: bool,
) -> Result<()> {
    let mut text = String::from(
        "batch_index,target_class,generation,best_fitness,oracle_samples_cumulative\n",
    );
    let mut offset: u64 = 0;
    for (i, result) in results.iter().enumerate() {
        for record in &result.history {
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                i,
                result.target_class,
                record.generation,
                record.best_fitness,
                offset + record.oracle_samples
            ));
        }
        offset += result.oracle_samples + u64::from(label_query_per_element);
    }
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Dumps the decoded best sample of every generation as `gen_NNN.pgm`, a
/// visual record of the search homing in on the target class.
pub fn export_progression(
    dir: &Path,
    result: &EvolutionResult,
    generator: &dyn LatentGenerator,
    side: usize,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    for record in &result.history {
        let sample = generator.decode(&record.best_latent)?;
        let path = dir.join(format!("gen_{:03}.pgm", record.generation));
        crate::data::export_pgm(&path, &sample, side)?;
    }
    Ok(())
}
