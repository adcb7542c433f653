//! Experiment configuration: a plain-text `key = value` format with
//! `[section]` headers. Unknown sections, unknown keys, duplicate keys and
//! unparsable values are hard errors carrying the 1-based line number.
//! Omitted keys fall back to the reference defaults, so an empty file is a
//! complete experiment description.
//!
//! The canonical serialization (fixed section and key order) feeds a
//! SHA-256 config hash that is stamped into every artifact this config
//! produces; downstream stages use it to refuse mixed-config artifacts.

use sha2::{Digest, Sha256};
use std::path::Path;

use crate::data::{Catalog, DatasetSpec, MixtureSpec, ShapesSpec, PROXY_SHAPES, TRUE_SHAPES};
use crate::error::{Error, Result};
use crate::evolution::EvolutionConfig;
use crate::oracle::ResponseMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Shapes,
    GaussianMixture,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Shapes => "shapes",
            Family::GaussianMixture => "gaussian-mixture",
        }
    }

    fn from_str(s: &str) -> Option<Family> {
        match s {
            "shapes" => Some(Family::Shapes),
            "gaussian-mixture" => Some(Family::GaussianMixture),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSection {
    pub family: Family,
    pub true_classes: usize,
    pub proxy_classes: usize,
    pub samples_per_class: usize,
    pub image_side: usize,
    pub dimension: usize,
    pub noise_std: f64,
    pub test_fraction: f64,
    pub jitter: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSection {
    pub response_mode: ResponseMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub latent_dim: usize,
    pub hidden_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionSection {
    pub population_size: usize,
    pub elite_size: usize,
    pub latent_boundary: f64,
    pub fitness_threshold: f64,
    pub max_generations: u32,
    pub mutation_std: f64,
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub sample_bank: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: String,
    pub deterministic: bool,
    pub data: DataSection,
    pub oracle: OracleSection,
    pub teacher: TrainSection,
    pub generator: GeneratorSection,
    pub evolution: EvolutionSection,
    pub distill: DistillSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            output_dir: "out".into(),
            deterministic: false,
            data: DataSection {
                family: Family::Shapes,
                true_classes: 4,
                proxy_classes: 4,
                samples_per_class: 800,
                image_side: 10,
                dimension: 100,
                noise_std: 0.15,
                test_fraction: 0.5,
                jitter: 1,
            },
            oracle: OracleSection {
                response_mode: ResponseMode::FullProbabilities,
            },
            teacher: TrainSection {
                epochs: 200,
                batch_size: 64,
                learning_rate: 1e-3,
            },
            generator: GeneratorSection {
                epochs: 200,
                batch_size: 64,
                learning_rate: 1e-3,
                latent_dim: 8,
                hidden_dim: 64,
            },
            evolution: EvolutionSection {
                population_size: 30,
                elite_size: 10,
                latent_boundary: 3.0,
                fitness_threshold: 0.02,
                max_generations: 10,
                mutation_std: 1.0,
                trace: false,
            },
            distill: DistillSection {
                epochs: 200,
                batch_size: 64,
                learning_rate: 1e-3,
                // Generate the transfer set once, then distill it for the
                // full epoch budget (rather than querying fresh samples
                // every step).
                sample_bank: true,
            },
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        // An unreadable config file is a configuration problem, not a
        // generic I/O failure: it shares the config-error exit code.
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })?;
        ExperimentConfig::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<ExperimentConfig> {
        Parser::new(origin).parse(text)
    }

    /// Canonical text form: fixed section and key order, so equal configs
    /// always serialize to identical bytes.
    pub fn serialize(&self) -> String {
        let d = &self.data;
        let e = &self.evolution;
        format!(
            "[experiment]\n\
             seed = {}\n\
             output_dir = {}\n\
             deterministic = {}\n\
             \n\
             [data]\n\
             family = {}\n\
             true_classes = {}\n\
             proxy_classes = {}\n\
             samples_per_class = {}\n\
             image_side = {}\n\
             dimension = {}\n\
             noise_std = {}\n\
             test_fraction = {}\n\
             jitter = {}\n\
             \n\
             [oracle]\n\
             response_mode = {}\n\
             \n\
             [teacher]\n\
             epochs = {}\n\
             batch_size = {}\n\
             learning_rate = {}\n\
             \n\
             [generator]\n\
             epochs = {}\n\
             batch_size = {}\n\
             learning_rate = {}\n\
             latent_dim = {}\n\
             hidden_dim = {}\n\
             \n\
             [evolution]\n\
             population_size = {}\n\
             elite_size = {}\n\
             latent_boundary = {}\n\
             fitness_threshold = {}\n\
             max_generations = {}\n\
             mutation_std = {}\n\
             trace = {}\n\
             \n\
             [distill]\n\
             epochs = {}\n\
             batch_size = {}\n\
             learning_rate = {}\n\
             sample_bank = {}\n",
            self.seed,
            self.output_dir,
            self.deterministic,
            d.family.as_str(),
            d.true_classes,
            d.proxy_classes,
            d.samples_per_class,
            d.image_side,
            d.dimension,
            d.noise_std,
            d.test_fraction,
            d.jitter,
            self.oracle.response_mode.as_str(),
            self.teacher.epochs,
            self.teacher.batch_size,
            self.teacher.learning_rate,
            self.generator.epochs,
            self.generator.batch_size,
            self.generator.learning_rate,
            self.generator.latent_dim,
            self.generator.hidden_dim,
            e.population_size,
            e.elite_size,
            e.latent_boundary,
            e.fitness_threshold,
            e.max_generations,
            e.mutation_std,
            e.trace,
            self.distill.epochs,
            self.distill.batch_size,
            self.distill.learning_rate,
            self.distill.sample_bank,
        )
    }

    /// SHA-256 over the canonical serialization, as lowercase hex.
    ///
    /// The hash identifies the *experiment*, so fields that only say where
    /// results are stored or how timings are reported (`output_dir`,
    /// `deterministic`) are normalized out: the same experiment run into
    /// two directories produces artifacts with the same hash.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output_dir = ExperimentConfig::default().output_dir;
        canon.deterministic = false;
        let digest = Sha256::digest(canon.serialize().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Specs for the true-catalog and proxy-catalog datasets.
    pub fn dataset_specs(&self) -> (DatasetSpec, DatasetSpec) {
        let d = &self.data;
        match d.family {
            Family::Shapes => (
                DatasetSpec::Shapes(ShapesSpec {
                    classes: TRUE_SHAPES[..d.true_classes].to_vec(),
                    samples_per_class: d.samples_per_class,
                    side: d.image_side,
                    noise_std: d.noise_std,
                    jitter: d.jitter,
                    seed: stage_seed(self.seed, "data-true"),
                }),
                DatasetSpec::Shapes(ShapesSpec {
                    classes: PROXY_SHAPES[..d.proxy_classes].to_vec(),
                    samples_per_class: d.samples_per_class,
                    side: d.image_side,
                    noise_std: d.noise_std,
                    jitter: d.jitter,
                    seed: stage_seed(self.seed, "data-proxy"),
                }),
            ),
            Family::GaussianMixture => (
                DatasetSpec::Mixture(MixtureSpec {
                    catalog: Catalog::True,
                    class_count: d.true_classes,
                    samples_per_class: d.samples_per_class,
                    dimension: d.dimension,
                    noise_std: d.noise_std,
                    seed: stage_seed(self.seed, "data-true"),
                }),
                DatasetSpec::Mixture(MixtureSpec {
                    catalog: Catalog::Proxy,
                    class_count: d.proxy_classes,
                    samples_per_class: d.samples_per_class,
                    dimension: d.dimension,
                    noise_std: d.noise_std,
                    seed: stage_seed(self.seed, "data-proxy"),
                }),
            ),
        }
    }

    /// Search configuration with a stage-derived seed filled in.
    pub fn evolution_config(&self, seed: u64) -> EvolutionConfig {
        let e = &self.evolution;
        EvolutionConfig {
            population_size: e.population_size,
            elite_size: e.elite_size,
            latent_boundary: e.latent_boundary,
            fitness_threshold: e.fitness_threshold,
            max_generations: e.max_generations,
            mutation_std: e.mutation_std,
            seed,
        }
    }
}

/// FNV-1a over the stage name mixed into the global seed, finalized with a
/// SplitMix64 round: distinct stages get decorrelated streams while the
/// whole experiment remains a function of one seed.
pub fn stage_seed(global_seed: u64, stage: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in stage.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    let mut z = global_seed ^ h;
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

struct Parser<'a> {
    origin: &'a str,
    cfg: ExperimentConfig,
    /// Line on which each `(section, key)` was explicitly set.
    set_lines: std::collections::HashMap<(String, String), usize>,
}

impl<'a> Parser<'a> {
    fn new(origin: &'a str) -> Self {
        Parser {
            origin,
            cfg: ExperimentConfig::default(),
            set_lines: std::collections::HashMap::new(),
        }
    }

    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Config {
            path: self.origin.to_string(),
            line,
            message: message.into(),
        }
    }

    fn parse(mut self, text: &str) -> Result<ExperimentConfig> {
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| self.err(line_no, format!("malformed section header '{line}'")))?
                    .trim();
                const SECTIONS: [&str; 7] = [
                    "experiment", "data", "oracle", "teacher", "generator", "evolution", "distill",
                ];
                if !SECTIONS.contains(&name) {
                    return Err(self.err(
                        line_no,
                        format!("unknown section '[{name}]' (expected one of {SECTIONS:?})"),
                    ));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| self.err(line_no, format!("expected 'key = value', got '{line}'")))?;
            let key = key.trim();
            let value = value.trim();
            let section = section
                .clone()
                .ok_or_else(|| self.err(line_no, format!("key '{key}' before any [section]")))?;
            if self
                .set_lines
                .insert((section.clone(), key.to_string()), line_no)
                .is_some()
            {
                return Err(self.err(line_no, format!("duplicate key '{key}' in [{section}]")));
            }
            self.assign(&section, key, value, line_no)?;
        }
        self.finish()
    }

    fn assign(&mut self, section: &str, key: &str, value: &str, line: usize) -> Result<()> {
        macro_rules! parse {
            ($ty:ty) => {
                value.parse::<$ty>().map_err(|_| {
                    self.err(
                        line,
                        format!(
                            "cannot parse '{value}' as {} for key '{key}'",
                            stringify!($ty)
                        ),
                    )
                })?
            };
        }
        match (section, key) {
            ("experiment", "seed") => self.cfg.seed = parse!(u64),
            ("experiment", "output_dir") => {
                if value.is_empty() {
                    return Err(self.err(line, "output_dir must not be empty"));
                }
                self.cfg.output_dir = value.to_string();
            }
            ("experiment", "deterministic") => self.cfg.deterministic = parse!(bool),
            ("data", "family") => {
                self.cfg.data.family = Family::from_str(value).ok_or_else(|| {
                    self.err(
                        line,
                        format!("unknown family '{value}' (expected shapes or gaussian-mixture)"),
                    )
                })?
            }
            ("data", "true_classes") => self.cfg.data.true_classes = parse!(usize),
            ("data", "proxy_classes") => self.cfg.data.proxy_classes = parse!(usize),
            ("data", "samples_per_class") => self.cfg.data.samples_per_class = parse!(usize),
            ("data", "image_side") => self.cfg.data.image_side = parse!(usize),
            ("data", "dimension") => self.cfg.data.dimension = parse!(usize),
            ("data", "noise_std") => self.cfg.data.noise_std = parse!(f64),
            ("data", "test_fraction") => self.cfg.data.test_fraction = parse!(f64),
            ("data", "jitter") => self.cfg.data.jitter = parse!(u32),
            ("oracle", "response_mode") => {
                self.cfg.oracle.response_mode = ResponseMode::from_str(value)
                    .map_err(|e| self.err(line, e.to_string()))?
            }
            ("teacher", "epochs") => self.cfg.teacher.epochs = parse!(usize),
            ("teacher", "batch_size") => self.cfg.teacher.batch_size = parse!(usize),
            ("teacher", "learning_rate") => self.cfg.teacher.learning_rate = parse!(f64),
            ("generator", "epochs") => self.cfg.generator.epochs = parse!(usize),
            ("generator", "batch_size") => self.cfg.generator.batch_size = parse!(usize),
            ("generator", "learning_rate") => self.cfg.generator.learning_rate = parse!(f64),
            ("generator", "latent_dim") => self.cfg.generator.latent_dim = parse!(usize),
            ("generator", "hidden_dim") => self.cfg.generator.hidden_dim = parse!(usize),
            ("evolution", "population_size") => self.cfg.evolution.population_size = parse!(usize),
            ("evolution", "elite_size") => self.cfg.evolution.elite_size = parse!(usize),
            ("evolution", "latent_boundary") => self.cfg.evolution.latent_boundary = parse!(f64),
            ("evolution", "fitness_threshold") => {
                self.cfg.evolution.fitness_threshold = parse!(f64)
            }
            ("evolution", "max_generations") => self.cfg.evolution.max_generations = parse!(u32),
            ("evolution", "mutation_std") => self.cfg.evolution.mutation_std = parse!(f64),
            ("evolution", "trace") => self.cfg.evolution.trace = parse!(bool),
            ("distill", "epochs") => self.cfg.distill.epochs = parse!(usize),
            ("distill", "batch_size") => self.cfg.distill.batch_size = parse!(usize),
            ("distill", "learning_rate") => self.cfg.distill.learning_rate = parse!(f64),
            ("distill", "sample_bank") => self.cfg.distill.sample_bank = parse!(bool),
            _ => {
                return Err(self.err(line, format!("unknown key '{key}' in section [{section}]")));
            }
        }
        Ok(())
    }

    /// Line to blame for a semantic error involving the given keys: the
    /// last explicitly-set one, or 0 when only defaults are involved.
    fn blame(&self, keys: &[(&str, &str)]) -> usize {
        keys.iter()
            .filter_map(|(s, k)| self.set_lines.get(&(s.to_string(), k.to_string())))
            .copied()
            .max()
            .unwrap_or(0)
    }

    fn was_set(&self, section: &str, key: &str) -> bool {
        self.set_lines
            .contains_key(&(section.to_string(), key.to_string()))
    }

    fn finish(mut self) -> Result<ExperimentConfig> {
        // For square images the dimension is derived from the side; an
        // explicitly contradictory value is an error instead of a silent
        // override.
        if self.cfg.data.family == Family::Shapes {
            let side_sq = self.cfg.data.image_side * self.cfg.data.image_side;
            if self.was_set("data", "dimension") && self.cfg.data.dimension != side_sq {
                return Err(self.err(
                    self.blame(&[("data", "dimension"), ("data", "image_side")]),
                    format!(
                        "dimension {} contradicts image_side {} (expected {side_sq})",
                        self.cfg.data.dimension, self.cfg.data.image_side
                    ),
                ));
            }
            self.cfg.data.dimension = side_sq;
        }
        self.validate()?;
        Ok(self.cfg)
    }

    fn validate(&self) -> Result<()> {
        let c = &self.cfg;
        let d = &c.data;
        let fail = |keys: &[(&str, &str)], msg: String| -> Result<()> {
            Err(self.err(self.blame(keys), msg))
        };
        match d.family {
            Family::Shapes => {
                if d.image_side < 6 {
                    return fail(
                        &[("data", "image_side")],
                        format!("image_side must be at least 6, got {}", d.image_side),
                    );
                }
                if d.true_classes == 0 || d.true_classes > TRUE_SHAPES.len() {
                    return fail(
                        &[("data", "true_classes")],
                        format!(
                            "true_classes must be in 1..={}, got {}",
                            TRUE_SHAPES.len(),
                            d.true_classes
                        ),
                    );
                }
                if d.proxy_classes == 0 || d.proxy_classes > PROXY_SHAPES.len() {
                    return fail(
                        &[("data", "proxy_classes")],
                        format!(
                            "proxy_classes must be in 1..={}, got {}",
                            PROXY_SHAPES.len(),
                            d.proxy_classes
                        ),
                    );
                }
                if usize::from(d.jitter as u16) >= d.image_side {
                    return fail(
                        &[("data", "jitter"), ("data", "image_side")],
                        format!("jitter {} too large for image_side {}", d.jitter, d.image_side),
                    );
                }
            }
            Family::GaussianMixture => {
                if d.dimension < 2 {
                    return fail(
                        &[("data", "dimension")],
                        format!("dimension must be at least 2, got {}", d.dimension),
                    );
                }
                if d.true_classes == 0 || d.proxy_classes == 0 {
                    return fail(
                        &[("data", "true_classes"), ("data", "proxy_classes")],
                        "class counts must be positive".into(),
                    );
                }
            }
        }
        if d.samples_per_class < 2 {
            return fail(
                &[("data", "samples_per_class")],
                format!("samples_per_class must be at least 2, got {}", d.samples_per_class),
            );
        }
        if !(d.noise_std >= 0.0 && d.noise_std.is_finite()) {
            return fail(
                &[("data", "noise_std")],
                format!("noise_std must be finite and non-negative, got {}", d.noise_std),
            );
        }
        if !(d.test_fraction > 0.0 && d.test_fraction < 1.0) {
            return fail(
                &[("data", "test_fraction")],
                format!("test_fraction must be in (0,1), got {}", d.test_fraction),
            );
        }
        for (name, t) in [("teacher", &c.teacher), ("distill", &TrainSection {
            epochs: c.distill.epochs,
            batch_size: c.distill.batch_size,
            learning_rate: c.distill.learning_rate,
        }), ("generator", &TrainSection {
            epochs: c.generator.epochs,
            batch_size: c.generator.batch_size,
            learning_rate: c.generator.learning_rate,
        })] {
            if t.epochs == 0 || t.batch_size == 0 {
                return fail(
                    &[(name, "epochs"), (name, "batch_size")],
                    format!("[{name}] epochs and batch_size must be positive"),
                );
            }
            if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
                return fail(
                    &[(name, "learning_rate")],
                    format!("[{name}] learning_rate must be positive and finite"),
                );
            }
        }
        if c.generator.latent_dim == 0 || c.generator.hidden_dim == 0 {
            return fail(
                &[("generator", "latent_dim"), ("generator", "hidden_dim")],
                "[generator] latent_dim and hidden_dim must be positive".into(),
            );
        }
        let e = &c.evolution;
        if e.elite_size < 1 || e.elite_size >= e.population_size {
            return fail(
                &[
                    ("evolution", "population_size"),
                    ("evolution", "elite_size"),
                ],
                format!(
                    "population/elite sizes must satisfy 1 <= k < K, got k={} K={}",
                    e.elite_size, e.population_size
                ),
            );
        }
        if !(e.latent_boundary > 0.0 && e.latent_boundary.is_finite()) {
            return fail(
                &[("evolution", "latent_boundary")],
                format!("latent_boundary must be positive and finite, got {}", e.latent_boundary),
            );
        }
        if !(e.fitness_threshold > 0.0 && e.fitness_threshold.is_finite()) {
            return fail(
                &[("evolution", "fitness_threshold")],
                format!(
                    "fitness_threshold must be positive and finite, got {}",
                    e.fitness_threshold
                ),
            );
        }
        if !(e.mutation_std > 0.0 && e.mutation_std.is_finite()) {
            return fail(
                &[("evolution", "mutation_std")],
                format!("mutation_std must be positive and finite, got {}", e.mutation_std),
            );
        }
        Ok(())
    }
}
