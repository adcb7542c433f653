//! Acceptance gate. Each test covers one numbered criterion and prints a
//! single verdict line (visible with `cargo test --test acceptance --
//! --nocapture`); the assertion carries the same line so failures are
//! self-describing.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ripper::config::ExperimentConfig;
use ripper::distill::DistillMode;
use ripper::evolution::{evolve, evolve_batch, EvolutionConfig};
use ripper::nn::{gradient_check, softmax, Classifier};
use ripper::oracle::{BlackBoxOracle, ResponseMode};
use ripper::pipeline::{artifact_paths, run_stage, ExperimentReport, Stage};
use ripper::tensor::Tensor;
use ripper::vae::{LatentGenerator, Vae};

fn verdict(n: u32, slug: &str, pass: bool, detail: String) {
    let status = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {n:02} {slug}: {status} ({detail})");
    println!("{line}");
    assert!(pass, "{line}");
}

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(0.0..1.0)).collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

fn random_soft_targets(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let mut rows_out = Vec::with_capacity(rows);
    for _ in 0..rows {
        let logits: Vec<f64> = (0..cols).map(|_| rng.random_range(-2.0..2.0)).collect();
        rows_out.push(softmax(&logits));
    }
    Tensor::from_rows(&rows_out).unwrap()
}

// ---------------------------------------------------------------- fixtures

struct SeedRun {
    _dir: tempfile::TempDir,
    cfg: ExperimentConfig,
    report: ExperimentReport,
}

const DEFAULT_SEEDS: [u64; 5] = [11, 12, 13, 14, 15];

/// Five full default-experiment pipelines (data → teacher → generator →
/// rip → gen-random ablation → evaluate), shared by criteria 6, 8, 9, 10.
static DEFAULT_RUNS: OnceLock<(Vec<SeedRun>, Duration)> = OnceLock::new();

fn default_runs() -> &'static (Vec<SeedRun>, Duration) {
    DEFAULT_RUNS.get_or_init(|| {
        let started = Instant::now();
        let runs = DEFAULT_SEEDS
            .iter()
            .map(|&seed| {
                let dir = tempfile::tempdir().unwrap();
                let mut cfg = ExperimentConfig::default();
                cfg.seed = seed;
                cfg.deterministic = true;
                cfg.output_dir = dir.path().display().to_string();
                for stage in [
                    Stage::Data,
                    Stage::Teacher,
                    Stage::Generator,
                    Stage::Rip,
                    Stage::Baseline(DistillMode::GenRandom),
                    Stage::Evaluate,
                ] {
                    run_stage(&cfg, stage)
                        .unwrap_or_else(|e| panic!("seed {seed} stage {}: {e}", stage.name()));
                }
                let report =
                    ExperimentReport::read_json(&artifact_paths(&cfg).experiment_report).unwrap();
                SeedRun { _dir: dir, cfg, report }
            })
            .collect();
        (runs, started.elapsed())
    })
}

fn mode_accuracy(run: &SeedRun, mode: DistillMode) -> f64 {
    run.report
        .mode(mode)
        .unwrap_or_else(|| panic!("mode {} missing from report", mode.as_str()))
        .accuracy
}

// A cheap deterministic generator for isolated search tests: a fixed
// random linear map squashed into (0, 1).
struct SigmoidGenerator {
    latent_dim: usize,
    sample_dim: usize,
    weights: Vec<f64>,
}

impl SigmoidGenerator {
    fn new(latent_dim: usize, sample_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..latent_dim * sample_dim)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        SigmoidGenerator { latent_dim, sample_dim, weights }
    }
}

impl LatentGenerator for SigmoidGenerator {
    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn sample_dim(&self) -> usize {
        self.sample_dim
    }

    fn decode(&self, latent: &[f64]) -> ripper::Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.sample_dim);
        for i in 0..self.sample_dim {
            let mut z = 0.0;
            for (j, &l) in latent.iter().enumerate() {
                z += self.weights[i * self.latent_dim + j] * l;
            }
            out.push(1.0 / (1.0 + (-z).exp()));
        }
        Ok(out)
    }
}

fn random_search_config(rng: &mut ChaCha8Rng) -> EvolutionConfig {
    let population_size = rng.random_range(2..=40);
    EvolutionConfig {
        population_size,
        elite_size: rng.random_range(1..population_size),
        latent_boundary: rng.random_range(0.5..4.0),
        // Mostly unreachable thresholds so the loop actually iterates;
        // sometimes a reachable one to cover early stopping.
        fitness_threshold: if rng.random_bool(0.3) {
            rng.random_range(0.005..0.2)
        } else {
            1e-12
        },
        max_generations: rng.random_range(1..=8),
        mutation_std: rng.random_range(0.1..1.5),
        seed: rng.next_u64(),
    }
}

/// Runs `n` seeded searches with random valid configs against a fixed
/// small oracle; returns (config, result, counter delta) per run.
fn random_searches(n: usize) -> Vec<(EvolutionConfig, ripper::evolution::EvolutionResult, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let generator = SigmoidGenerator::new(3, 6, 99);
    let teacher = Classifier::new(&[6, 5, 4], 17).unwrap();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let cfg = random_search_config(&mut rng);
        let oracle = BlackBoxOracle::new(teacher.clone(), ResponseMode::FullProbabilities);
        let target = rng.random_range(0..4);
        let result = evolve(target, &oracle, &generator, &cfg).unwrap();
        out.push((cfg, result, oracle.call_count()));
    }
    out
}

// ---------------------------------------------------------------- criteria

#[test]
fn criterion_01_gradient_correctness() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let mut model = Classifier::new(&[12, 10, 5], 1).unwrap();
    let batch = random_tensor(&mut rng, 8, 12);
    let targets = random_soft_targets(&mut rng, 8, 5);
    let classifier_err = gradient_check(&mut model, &batch, &targets, 1e-5, 2).unwrap();

    let mut vae = Vae::new(18, 14, 4, 3).unwrap();
    let vae_batch = random_tensor(&mut rng, 8, 18);
    let (encoder_err, decoder_err) = vae.gradient_check(&vae_batch, 1e-5, 4).unwrap();

    let elapsed = started.elapsed();
    let pass = classifier_err < 1e-4
        && encoder_err < 1e-4
        && decoder_err < 1e-4
        && elapsed < Duration::from_secs(10);
    verdict(
        1,
        "gradient-correctness",
        pass,
        format!(
            "classifier {classifier_err:.2e}, encoder {encoder_err:.2e}, \
             decoder {decoder_err:.2e}, {elapsed:.2?}"
        ),
    );
}

#[test]
fn criterion_02_elitism_monotonicity() {
    let started = Instant::now();
    let runs = random_searches(100);
    let mut violations = 0usize;
    let mut generations_seen = 0usize;
    for (_, result, _) in &runs {
        for window in result.history.windows(2) {
            generations_seen += 1;
            if window[1].best_fitness > window[0].best_fitness {
                violations += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    let pass = violations == 0 && runs.len() == 100 && elapsed < Duration::from_secs(30);
    verdict(
        2,
        "elitism-monotonicity",
        pass,
        format!(
            "{} runs, {generations_seen} generation steps, {violations} violations, {elapsed:.2?}",
            runs.len()
        ),
    );
}

#[test]
fn criterion_03_oracle_budget_exactness() {
    let mut mismatches = 0usize;
    let runs = random_searches(100);
    for (cfg, result, counted) in &runs {
        let expected = cfg.population_size as u64
            + u64::from(result.generations)
                * (cfg.population_size - cfg.elite_size) as u64;
        if result.oracle_samples != expected || *counted != expected {
            mismatches += 1;
        }
    }

    // Batched synthesis additionally pays one labelling query per element.
    let generator = SigmoidGenerator::new(3, 6, 99);
    let teacher = Classifier::new(&[6, 5, 4], 17).unwrap();
    let oracle = BlackBoxOracle::new(teacher, ResponseMode::FullProbabilities);
    let cfg = EvolutionConfig {
        population_size: 6,
        elite_size: 2,
        max_generations: 3,
        fitness_threshold: 1e-12,
        ..EvolutionConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let batch = evolve_batch(&oracle, &generator, &cfg, 16, 4, &mut rng).unwrap();
    let per_element: u64 = batch.results.iter().map(|r| r.oracle_samples).sum();
    let batch_ok = oracle.call_count() == per_element + 16;

    let pass = mismatches == 0 && batch_ok;
    verdict(
        3,
        "oracle-budget-exactness",
        pass,
        format!(
            "{} searches with {mismatches} mismatches; batch of 16 consumed {} = {per_element} + 16",
            runs.len(),
            oracle.call_count()
        ),
    );
}

#[test]
fn criterion_04_probability_hygiene() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut vectors = 0usize;
    let mut worst: f64 = 0.0;
    let mut check = |probs: &[f64]| {
        let sum: f64 = probs.iter().sum();
        worst = worst.max((sum - 1.0).abs());
        vectors += 1;
    };

    for _ in 0..4000 {
        let dim = rng.random_range(1..=16);
        let logits: Vec<f64> = (0..dim).map(|_| rng.random_range(-50.0..50.0)).collect();
        check(&softmax(&logits));
    }

    let teacher = Classifier::new(&[7, 6, 5], 23).unwrap();
    let full = BlackBoxOracle::new(teacher.clone(), ResponseMode::FullProbabilities);
    let top = BlackBoxOracle::new(teacher, ResponseMode::TopLabel);
    for _ in 0..30 {
        let batch = random_tensor(&mut rng, 50, 7);
        let a = full.query(&batch).unwrap();
        let b = top.query(&batch).unwrap();
        for r in 0..50 {
            check(a.row(r));
            check(b.row(r));
        }
    }

    let vae = Vae::new(7, 10, 3, 31).unwrap();
    for round in 0..60 {
        let latents = vae.sample_prior(50, 1000 + round);
        let decoded = vae.decode_batch(&latents).unwrap();
        let answers = full.query(&decoded).unwrap();
        for r in 0..50 {
            check(answers.row(r));
        }
    }

    let pass = vectors >= 10_000 && worst <= 1e-9;
    verdict(
        4,
        "probability-hygiene",
        pass,
        format!("{vectors} vectors, worst |sum - 1| = {worst:.2e}"),
    );
}

#[test]
fn criterion_05_determinism() {
    let bin = env!("CARGO_BIN_EXE_ripper");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        for stage in [
            vec!["data"],
            vec!["teacher"],
            vec!["generator"],
            vec!["rip"],
            vec!["baseline", "--mode", "knockoff"],
            vec!["baseline", "--mode", "gen-random"],
            vec!["evaluate"],
        ] {
            let out = std::process::Command::new(bin)
                .arg("--deterministic")
                .args(["--seed", "42"])
                .args(["--out", dir.path().to_str().unwrap()])
                .args(&stage)
                .output()
                .expect("spawn pipeline binary");
            assert!(
                out.status.success(),
                "stage {stage:?}: {}",
                String::from_utf8_lossy(&out.stderr)
            );
        }
    }
    let report_a = std::fs::read(dirs[0].path().join("experiment_report.json")).unwrap();
    let report_b = std::fs::read(dirs[1].path().join("experiment_report.json")).unwrap();
    let mut identical = report_a == report_b;
    // The checkpoints behind the report must agree too.
    for name in [
        "teacher.bbr",
        "vae.bbr",
        "student_ripper.bbr",
        "student_knockoff.bbr",
        "student_gen_random.bbr",
    ] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        identical &= a == b;
    }
    verdict(
        5,
        "determinism",
        identical,
        format!("two full pipeline runs, report {} bytes, all checkpoints bitwise equal", report_a.len()),
    );
}

#[test]
fn criterion_06_ablation_gap_and_teacher_fraction() {
    let (runs, elapsed) = default_runs();
    let first3 = &runs[..3];
    let teacher_ok = first3.iter().all(|r| r.report.teacher_accuracy >= 0.90);
    let mean_gap = first3
        .iter()
        .map(|r| mode_accuracy(r, DistillMode::Ripper) - mode_accuracy(r, DistillMode::GenRandom))
        .sum::<f64>()
        / 3.0;
    let mean_fraction = first3
        .iter()
        .map(|r| mode_accuracy(r, DistillMode::Ripper) / r.report.teacher_accuracy)
        .sum::<f64>()
        / 3.0;
    let in_budget = *elapsed < Duration::from_secs(15 * 60);
    let pass = teacher_ok && mean_gap >= 0.05 && mean_fraction >= 0.85 && in_budget;
    verdict(
        6,
        "ablation-gap",
        pass,
        format!(
            "teacher >= 0.90: {teacher_ok}, mean ripper-vs-gen-random gap {:.1} pts, \
             mean teacher fraction {:.1}%, 5 seeds in {elapsed:.2?}",
            mean_gap * 100.0,
            mean_fraction * 100.0
        ),
    );
}

#[test]
fn criterion_07_proxy_discrepancy_robustness() {
    let mut gaps = Vec::new();
    for seed in [21, 22, 23] {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::default();
        cfg.seed = seed;
        cfg.deterministic = true;
        cfg.output_dir = dir.path().display().to_string();
        cfg.data.proxy_classes = 2;
        for stage in [
            Stage::Data,
            Stage::Teacher,
            Stage::Generator,
            Stage::Rip,
            Stage::Baseline(DistillMode::Knockoff),
            Stage::Evaluate,
        ] {
            run_stage(&cfg, stage)
                .unwrap_or_else(|e| panic!("seed {seed} stage {}: {e}", stage.name()));
        }
        let report =
            ExperimentReport::read_json(&artifact_paths(&cfg).experiment_report).unwrap();
        let ripper = report.mode(DistillMode::Ripper).unwrap().accuracy;
        let knockoff = report.mode(DistillMode::Knockoff).unwrap().accuracy;
        gaps.push(ripper - knockoff);
    }
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let pass = mean_gap >= 0.05;
    verdict(
        7,
        "proxy-discrepancy-robustness",
        pass,
        format!(
            "proxy restricted to 2 of 4 classes; ripper-vs-knockoff gaps {:?} pts, mean {:.1} pts",
            gaps.iter().map(|g| (g * 100.0 * 10.0).round() / 10.0).collect::<Vec<_>>(),
            mean_gap * 100.0
        ),
    );
}

#[test]
fn criterion_08_stability_across_seeds() {
    let (runs, _) = default_runs();
    let accuracies: Vec<f64> = runs
        .iter()
        .map(|r| mode_accuracy(r, DistillMode::Ripper))
        .collect();
    let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    let var = accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>()
        / (accuracies.len() - 1) as f64;
    let std = var.sqrt();
    let pass = accuracies.len() == 5 && std <= 0.03;
    verdict(
        8,
        "stability",
        pass,
        format!(
            "ripper accuracies over 5 seeds {:?}, std {:.2} pts",
            accuracies, std * 100.0
        ),
    );
}

#[test]
fn criterion_09_vae_training_improves() {
    let (runs, _) = default_runs();
    let elbo_path = artifact_paths(&runs[0].cfg).vae_elbo;
    let text = std::fs::read_to_string(&elbo_path).unwrap();
    let values: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let (first, last) = (values[0], *values.last().unwrap());
    let improvement = (first - last) / first.abs();
    let pass = values.len() >= 2 && improvement >= 0.05;
    verdict(
        9,
        "vae-training",
        pass,
        format!(
            "negative ELBO {first:.3} -> {last:.3} over {} epochs ({:.1}% improvement)",
            values.len(),
            improvement * 100.0
        ),
    );
}

#[test]
fn criterion_10_evolution_effectiveness_per_class() {
    let (runs, _) = default_runs();
    let paths = artifact_paths(&runs[0].cfg);
    let teacher = Classifier::load(&paths.teacher).unwrap();
    let vae = Vae::load(&paths.vae).unwrap();
    let n_classes = teacher.n_classes();
    let oracle = BlackBoxOracle::new(teacher, ResponseMode::FullProbabilities);

    let mut rates = Vec::with_capacity(n_classes);
    let mut all_ok = true;
    for class in 0..n_classes {
        let mut successes = 0usize;
        for attempt in 0..20u64 {
            let cfg = runs[0]
                .cfg
                .evolution_config(5000 + class as u64 * 100 + attempt);
            let result = evolve(class, &oracle, &vae, &cfg).unwrap();
            if result.reached_threshold {
                successes += 1;
            }
        }
        let rate = successes as f64 / 20.0;
        all_ok &= rate >= 0.80;
        rates.push(rate);
    }
    verdict(
        10,
        "evolution-effectiveness",
        all_ok,
        format!("per-class success over 20 seeded searches each: {rates:?}"),
    );
}
