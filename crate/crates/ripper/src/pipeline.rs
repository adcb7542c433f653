//! Stage orchestration behind the CLI. Each stage reads its input
//! artifacts from the output directory, checks that they were produced by
//! the *same* configuration (via the embedded config hash), does its work,
//! and writes its own artifacts back. Running a stage before its inputs
//! exist is a hard error naming the stage to run first.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::{stage_seed, ExperimentConfig, Family};
use crate::data::{generate, LabeledDataset, Role};
use crate::distill::{
    distill_gen_random, distill_knockoff, distill_ripper, teacher_argmax, DistillConfig,
    DistillMode, EvalContext, RipTrace, TrainingReport,
};
use crate::error::{Error, Result};
use crate::evolution::{export_progression, write_trace_csv};
use crate::nn::{accuracy, fit_classifier, one_hot, Classifier, FitConfig};
use crate::oracle::{BlackBoxOracle, ResponseMode};
use crate::vae::{Vae, VaeTrainConfig};

/// Teacher topology (input and class count come from the data config).
const TEACHER_HIDDEN: [usize; 2] = [64, 64];
/// Student topology: deliberately smaller than the teacher.
const STUDENT_HIDDEN: [usize; 1] = [32];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Data,
    Teacher,
    Generator,
    Rip,
    Baseline(DistillMode),
    Evaluate,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Data => "data",
            Stage::Teacher => "teacher",
            Stage::Generator => "generator",
            Stage::Rip => "rip",
            Stage::Baseline(DistillMode::Knockoff) => "baseline --mode knockoff",
            Stage::Baseline(DistillMode::GenRandom) => "baseline --mode gen-random",
            Stage::Baseline(DistillMode::Ripper) => "rip",
            Stage::Evaluate => "evaluate",
        }
    }
}

/// Fixed on-disk layout inside the output directory.
pub struct ArtifactPaths {
    pub root: PathBuf,
    pub true_train: PathBuf,
    pub true_test: PathBuf,
    pub proxy: PathBuf,
    pub teacher: PathBuf,
    pub vae: PathBuf,
    pub vae_elbo: PathBuf,
    pub rip_trace: PathBuf,
    pub progression_dir: PathBuf,
    pub previews_dir: PathBuf,
    pub experiment_report: PathBuf,
}

impl ArtifactPaths {
    pub fn new(out: &Path) -> Self {
        ArtifactPaths {
            root: out.to_path_buf(),
            true_train: out.join("true_train.bbr"),
            true_test: out.join("true_test.bbr"),
            proxy: out.join("proxy.bbr"),
            teacher: out.join("teacher.bbr"),
            vae: out.join("vae.bbr"),
            vae_elbo: out.join("vae_elbo.csv"),
            rip_trace: out.join("rip_trace.csv"),
            progression_dir: out.join("progression"),
            previews_dir: out.join("previews"),
            experiment_report: out.join("experiment_report.json"),
        }
    }

    fn mode_slug(mode: DistillMode) -> String {
        mode.as_str().replace('-', "_")
    }

    pub fn student(&self, mode: DistillMode) -> PathBuf {
        self.root.join(format!("student_{}.bbr", Self::mode_slug(mode)))
    }

    pub fn report_csv(&self, mode: DistillMode) -> PathBuf {
        self.root.join(format!("report_{}.csv", Self::mode_slug(mode)))
    }

    pub fn report_json(&self, mode: DistillMode) -> PathBuf {
        self.root.join(format!("report_{}.json", Self::mode_slug(mode)))
    }
}

pub fn artifact_paths(cfg: &ExperimentConfig) -> ArtifactPaths {
    ArtifactPaths::new(Path::new(&cfg.output_dir))
}

fn require(stage: Stage, path: &Path, producer: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::StageOrder {
            stage: stage.name().to_string(),
            missing: path.to_path_buf(),
            hint: producer.to_string(),
        })
    }
}

/// Artifacts record the hash of the config that made them; consuming an
/// artifact from a different config is a stage-order problem (the current
/// config's producing stage has effectively not run yet).
fn check_hash(
    stage: Stage,
    path: &Path,
    meta: &[(String, String)],
    expected: &str,
    producer: &str,
) -> Result<()> {
    let found = meta
        .iter()
        .find(|(k, _)| k == "config")
        .map(|(_, v)| v.as_str());
    if found == Some(expected) {
        Ok(())
    } else {
        Err(Error::StageOrder {
            stage: stage.name().to_string(),
            missing: path.to_path_buf(),
            hint: format!("{producer} (artifact was produced by a different config)"),
        })
    }
}

fn config_meta(cfg: &ExperimentConfig) -> Vec<(String, String)> {
    vec![("config".to_string(), cfg.hash())]
}

fn load_dataset_checked(
    cfg: &ExperimentConfig,
    stage: Stage,
    path: &Path,
    role: Role,
    producer: &str,
) -> Result<LabeledDataset> {
    require(stage, path, producer)?;
    let ds = LabeledDataset::load_role(path, role)?;
    let container = crate::checkpoint::read_container(path)?;
    check_hash(stage, path, &container.meta, &cfg.hash(), producer)?;
    Ok(ds)
}

pub fn run_stage(cfg: &ExperimentConfig, stage: Stage) -> Result<()> {
    match stage {
        Stage::Data => run_data(cfg),
        Stage::Teacher => run_teacher(cfg),
        Stage::Generator => run_generator(cfg),
        Stage::Rip => run_distill(cfg, DistillMode::Ripper),
        Stage::Baseline(mode) => run_distill(cfg, mode),
        Stage::Evaluate => run_evaluate(cfg),
    }
}

fn run_data(cfg: &ExperimentConfig) -> Result<()> {
    let paths = artifact_paths(cfg);
    std::fs::create_dir_all(&paths.root)
        .map_err(|e| Error::io(paths.root.display().to_string(), e))?;
    let (true_spec, proxy_spec) = cfg.dataset_specs();
    let full_true = generate(&true_spec)?;
    let (train, test) = full_true.split(cfg.data.test_fraction, stage_seed(cfg.seed, "split"))?;
    let proxy = generate(&proxy_spec)?;
    let meta = config_meta(cfg);
    train.save(&paths.true_train, &meta)?;
    test.save(&paths.true_test, &meta)?;
    proxy.save(&paths.proxy, &meta)?;
    // One preview image per class for the imagery family.
    if cfg.data.family == Family::Shapes {
        std::fs::create_dir_all(&paths.previews_dir)
            .map_err(|e| Error::io(paths.previews_dir.display().to_string(), e))?;
        for ds in [&train, &proxy] {
            if let Some(side) = ds.side() {
                for class in 0..ds.n_classes() {
                    if let Some(i) = ds.labels().iter().position(|&l| l == class) {
                        let name = format!(
                            "{}_{}.pgm",
                            ds.role().as_str(),
                            ds.class_names()[class]
                        );
                        crate::data::export_pgm(
                            &paths.previews_dir.join(name),
                            ds.image(i),
                            side,
                        )?;
                    }
                }
            }
        }
    }
    Ok(())
}

fn run_teacher(cfg: &ExperimentConfig) -> Result<()> {
    let stage = Stage::Teacher;
    let paths = artifact_paths(cfg);
    let train = load_dataset_checked(cfg, stage, &paths.true_train, Role::TrueTrain, "data")?;
    let mut dims = vec![train.dim()];
    dims.extend_from_slice(&TEACHER_HIDDEN);
    dims.push(train.n_classes());
    let mut teacher = Classifier::new(&dims, stage_seed(cfg.seed, "teacher-init"))?;
    let targets = one_hot(train.labels(), train.n_classes())?;
    fit_classifier(
        &mut teacher,
        train.images(),
        &targets,
        &FitConfig {
            epochs: cfg.teacher.epochs,
            batch_size: cfg.teacher.batch_size,
            learning_rate: cfg.teacher.learning_rate,
            seed: stage_seed(cfg.seed, "teacher-train"),
        },
    )?;
    teacher.save(&paths.teacher, &config_meta(cfg))
}

fn run_generator(cfg: &ExperimentConfig) -> Result<()> {
    let stage = Stage::Generator;
    let paths = artifact_paths(cfg);
    let proxy = load_dataset_checked(cfg, stage, &paths.proxy, Role::Proxy, "data")?;
    let mut vae = Vae::new(
        proxy.dim(),
        cfg.generator.hidden_dim,
        cfg.generator.latent_dim,
        stage_seed(cfg.seed, "generator-init"),
    )?;
    let losses = vae.fit(
        &proxy,
        &VaeTrainConfig {
            epochs: cfg.generator.epochs,
            batch_size: cfg.generator.batch_size,
            learning_rate: cfg.generator.learning_rate,
            seed: stage_seed(cfg.seed, "generator-train"),
        },
    )?;
    vae.save(&paths.vae, &config_meta(cfg))?;
    let mut csv = String::from("epoch,negative_elbo\n");
    for (i, loss) in losses.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", i + 1, loss));
    }
    std::fs::write(&paths.vae_elbo, csv)
        .map_err(|e| Error::io(paths.vae_elbo.display().to_string(), e))
}

fn load_teacher_checked(cfg: &ExperimentConfig, stage: Stage) -> Result<Classifier> {
    let paths = artifact_paths(cfg);
    require(stage, &paths.teacher, "teacher")?;
    let (teacher, meta) = Classifier::load_with_meta(&paths.teacher)?;
    check_hash(stage, &paths.teacher, &meta, &cfg.hash(), "teacher")?;
    Ok(teacher)
}

fn load_vae_checked(cfg: &ExperimentConfig, stage: Stage) -> Result<Vae> {
    let paths = artifact_paths(cfg);
    require(stage, &paths.vae, "generator")?;
    let (vae, meta) = Vae::load_with_meta(&paths.vae)?;
    check_hash(stage, &paths.vae, &meta, &cfg.hash(), "generator")?;
    Ok(vae)
}

fn run_distill(cfg: &ExperimentConfig, mode: DistillMode) -> Result<()> {
    let stage = match mode {
        DistillMode::Ripper => Stage::Rip,
        other => Stage::Baseline(other),
    };
    let paths = artifact_paths(cfg);
    let train = load_dataset_checked(cfg, stage, &paths.true_train, Role::TrueTrain, "data")?;
    let test = load_dataset_checked(cfg, stage, &paths.true_test, Role::TrueTest, "data")?;
    let teacher = load_teacher_checked(cfg, stage)?;

    // Two views of the same weights: the attack oracle pays for every
    // sample the attack sends; the probe oracle serves held-out evaluation
    // without contaminating the budget.
    let attack = BlackBoxOracle::new(teacher.clone(), cfg.oracle.response_mode);
    let probe = BlackBoxOracle::new(teacher, ResponseMode::FullProbabilities);
    let eval = EvalContext::new(
        test.images(),
        test.labels(),
        teacher_argmax(&probe, test.images())?,
    )?;

    let mut dims = vec![train.dim()];
    dims.extend_from_slice(&STUDENT_HIDDEN);
    dims.push(train.n_classes());
    let mut student = Classifier::new(
        &dims,
        stage_seed(cfg.seed, &format!("student-{}", mode.as_str())),
    )?;
    let dcfg = DistillConfig {
        epochs: cfg.distill.epochs,
        steps_per_epoch: train.len().div_ceil(cfg.distill.batch_size),
        batch_size: cfg.distill.batch_size,
        learning_rate: cfg.distill.learning_rate,
        sample_bank: cfg.distill.sample_bank,
        seed: stage_seed(cfg.seed, &format!("distill-{}", mode.as_str())),
    };

    let started = Instant::now();
    let mut trace = RipTrace::default();
    let mut report = match mode {
        DistillMode::Ripper => {
            let vae = load_vae_checked(cfg, stage)?;
            let evo = cfg.evolution_config(0); // per-element seeds come from the distill stream
            distill_ripper(
                &mut student,
                &attack,
                &vae,
                &evo,
                &dcfg,
                &eval,
                cfg.evolution.trace.then_some(&mut trace),
            )?
        }
        DistillMode::Knockoff => {
            let proxy = load_dataset_checked(cfg, stage, &paths.proxy, Role::Proxy, "data")?;
            distill_knockoff(&mut student, &attack, &proxy, &dcfg, &eval)?
        }
        DistillMode::GenRandom => {
            let vae = load_vae_checked(cfg, stage)?;
            distill_gen_random(&mut student, &attack, &vae, &dcfg, &eval)?
        }
    };
    report.config_hash = cfg.hash();
    report.wall_time_seconds = if cfg.deterministic {
        0.0
    } else {
        started.elapsed().as_secs_f64()
    };

    let mut meta = config_meta(cfg);
    meta.push(("mode".to_string(), mode.as_str().to_string()));
    student.save(&paths.student(mode), &meta)?;
    report.write_csv(&paths.report_csv(mode))?;
    report.write_json(&paths.report_json(mode))?;

    if mode == DistillMode::Ripper && cfg.evolution.trace {
        write_trace_csv(&paths.rip_trace, &trace.results, true)?;
        if let (Some(side), Some(first)) = (test.side(), trace.results.first()) {
            let vae = load_vae_checked(cfg, stage)?;
            export_progression(&paths.progression_dir, first, &vae, side)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: DistillMode,
    pub accuracy: f64,
    pub agreement: f64,
    pub oracle_samples: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub ripper_minus_knockoff: Option<f64>,
    pub ripper_minus_gen_random: Option<f64>,
}

/// Final cross-mode comparison written by the evaluate stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub seed: u64,
    pub deterministic: bool,
    pub teacher_accuracy: f64,
    pub modes: Vec<ModeSummary>,
    pub deltas: DeltaSummary,
}

impl ExperimentReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn read_json(path: &Path) -> Result<ExperimentReport> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::format(path.display().to_string(), e.to_string()))
    }

    pub fn mode(&self, mode: DistillMode) -> Option<&ModeSummary> {
        self.modes.iter().find(|m| m.mode == mode)
    }
}

fn run_evaluate(cfg: &ExperimentConfig) -> Result<()> {
    let stage = Stage::Evaluate;
    let paths = artifact_paths(cfg);
    let test = load_dataset_checked(cfg, stage, &paths.true_test, Role::TrueTest, "data")?;
    let teacher = load_teacher_checked(cfg, stage)?;
    let teacher_accuracy = accuracy(&teacher, test.images(), test.labels())?;
    let probe = BlackBoxOracle::new(teacher, ResponseMode::FullProbabilities);

    let mut modes = Vec::new();
    for mode in [DistillMode::Ripper, DistillMode::Knockoff, DistillMode::GenRandom] {
        let student_path = paths.student(mode);
        let report_path = paths.report_json(mode);
        if !student_path.exists() && !report_path.exists() {
            continue;
        }
        // Half-written mode outputs are an ordering problem too.
        require(stage, &student_path, mode_producer(mode))?;
        require(stage, &report_path, mode_producer(mode))?;
        let (student, meta) = Classifier::load_with_meta(&student_path)?;
        check_hash(stage, &student_path, &meta, &cfg.hash(), mode_producer(mode))?;
        let report = TrainingReport::read_json(&report_path)?;
        if report.config_hash != cfg.hash() {
            return Err(Error::StageOrder {
                stage: stage.name().to_string(),
                missing: report_path.clone(),
                hint: format!(
                    "{} (report was produced by a different config)",
                    mode_producer(mode)
                ),
            });
        }
        modes.push(ModeSummary {
            mode,
            accuracy: accuracy(&student, test.images(), test.labels())?,
            agreement: crate::distill::agreement(&student, &probe, test.images())?,
            oracle_samples: report.oracle_samples_total,
        });
    }
    if modes.is_empty() {
        return Err(Error::StageOrder {
            stage: stage.name().to_string(),
            missing: paths.student(DistillMode::Ripper),
            hint: "rip".to_string(),
        });
    }

    let get = |m: DistillMode| -> Option<f64> {
        modes.iter().find(|s| s.mode == m).map(|s| s.accuracy)
    };
    let ripper = get(DistillMode::Ripper);
    let deltas = DeltaSummary {
        ripper_minus_knockoff: match (ripper, get(DistillMode::Knockoff)) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        },
        ripper_minus_gen_random: match (ripper, get(DistillMode::GenRandom)) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        },
    };
    let report = ExperimentReport {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        deterministic: cfg.deterministic,
        teacher_accuracy,
        modes,
        deltas,
    };
    report.write_json(&paths.experiment_report)
}

fn mode_producer(mode: DistillMode) -> &'static str {
    match mode {
        DistillMode::Ripper => "rip",
        DistillMode::Knockoff => "baseline --mode knockoff",
        DistillMode::GenRandom => "baseline --mode gen-random",
    }
}

/// Human-readable comparison table for a final report. The best student
/// row (highest accuracy among the non-teacher rows) is marked with `*`.
pub fn compare_report(report: &ExperimentReport) -> String {
    let best = report
        .modes
        .iter()
        .max_by(|a, b| a.accuracy.total_cmp(&b.accuracy))
        .map(|m| m.mode);
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:>9} {:>10} {:>15}\n",
        "model", "accuracy", "agreement", "oracle samples"
    ));
    out.push_str(&format!(
        "{:<12} {:>9.4} {:>10} {:>15}\n",
        "teacher", report.teacher_accuracy, "-", "-"
    ));
    for mode in [DistillMode::Knockoff, DistillMode::GenRandom, DistillMode::Ripper] {
        let Some(m) = report.mode(mode) else { continue };
        let marker = if best == Some(m.mode) { " *" } else { "" };
        out.push_str(&format!(
            "{:<12} {:>9.4} {:>10.4} {:>15}{marker}\n",
            m.mode.as_str(),
            m.accuracy,
            m.agreement,
            m.oracle_samples
        ));
    }
    out.push_str("(* = best student accuracy)\n");
    if let Some(d) = report.deltas.ripper_minus_knockoff {
        out.push_str(&format!("\nripper - knockoff   = {:+.1} pts", d * 100.0));
    }
    if let Some(d) = report.deltas.ripper_minus_gen_random {
        out.push_str(&format!("\nripper - gen-random = {:+.1} pts", d * 100.0));
    }
    out.push('\n');
    out
}
