//! C ABI over the model-ripping library.
//!
//! Conventions: every handle type is opaque and freed with its matching
//! `rip_*_free`; every fallible call returns a [`RipStatus`] and leaves a
//! thread-local message readable via [`rip_last_error`] on failure. Output
//! parameters are written only when the call returns `RIP_STATUS_OK`.
//! Status values 2–4 deliberately match the CLI exit codes.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ripper::config::ExperimentConfig;
use ripper::distill::DistillMode;
use ripper::evolution::{evolve, EvolutionResult};
use ripper::nn::Classifier;
use ripper::oracle::{BlackBoxOracle, ResponseMode};
use ripper::pipeline::{run_stage, Stage};
use ripper::tensor::Tensor;
use ripper::vae::{LatentGenerator, Vae};

/// Result of every fallible call in this interface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RipStatus {
    /// Success.
    Ok = 0,
    /// Invalid input or internal failure; see `rip_last_error`.
    Error = 1,
    /// Configuration problem (mirrors CLI exit code 2).
    ConfigError = 2,
    /// Required artifact missing or from another config (CLI exit code 3).
    StageOrderError = 3,
    /// Training diverged (CLI exit code 4).
    DivergenceError = 4,
    /// A required pointer argument was null.
    NullPointer = 5,
}

/// Experiment configuration handle.
pub struct RipConfig {
    inner: ExperimentConfig,
}

/// Sealed prediction interface over a trained victim classifier.
pub struct RipOracle {
    oracle: BlackBoxOracle,
    input_dim: usize,
    n_classes: usize,
}

/// Trained latent generator handle.
pub struct RipGenerator {
    vae: Vae,
}

/// Outcome of one evolutionary search.
pub struct RipSearchResult {
    inner: EvolutionResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(err: &ripper::Error) -> RipStatus {
    set_last_error(&err.to_string());
    match err.exit_code() {
        2 => RipStatus::ConfigError,
        3 => RipStatus::StageOrderError,
        4 => RipStatus::DivergenceError,
        _ => RipStatus::Error,
    }
}

fn fail_with(status: RipStatus, message: &str) -> RipStatus {
    set_last_error(message);
    status
}

/// Runs a closure, converting panics into an error status instead of
/// unwinding across the C boundary.
fn guard<F: FnOnce() -> RipStatus>(body: F) -> RipStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            fail_with(RipStatus::Error, &format!("internal panic: {message}"))
        }
    }
}

/// Converts a C string argument; `null` and non-UTF-8 are caller errors.
unsafe fn arg_str<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, RipStatus> {
    if ptr.is_null() {
        return Err(fail_with(
            RipStatus::NullPointer,
            &format!("{name} must not be null"),
        ));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        fail_with(RipStatus::Error, &format!("{name} must be valid UTF-8"))
    })
}

fn require<T>(ptr: *const T, name: &str) -> Result<(), RipStatus> {
    if ptr.is_null() {
        Err(fail_with(
            RipStatus::NullPointer,
            &format!("{name} must not be null"),
        ))
    } else {
        Ok(())
    }
}

macro_rules! ffi_try {
    ($expr:expr) => {
        match $expr {
            Ok(value) => value,
            Err(status) => return status,
        }
    };
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn rip_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message describing the most recent failure on the calling thread. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rip_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

// ---------------------------------------------------------------- config

/// Creates a configuration filled with the reference defaults.
#[no_mangle]
pub unsafe extern "C" fn rip_config_default(out: *mut *mut RipConfig) -> RipStatus {
    guard(|| {
        ffi_try!(require(out, "out"));
        *out = Box::into_raw(Box::new(RipConfig {
            inner: ExperimentConfig::default(),
        }));
        RipStatus::Ok
    })
}

/// Loads a configuration file; unknown keys and bad values are errors.
#[no_mangle]
pub unsafe extern "C" fn rip_config_load(
    path: *const c_char,
    out: *mut *mut RipConfig,
) -> RipStatus {
    guard(|| {
        let path = ffi_try!(arg_str(path, "path"));
        ffi_try!(require(out, "out"));
        match ExperimentConfig::load(Path::new(path)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(RipConfig { inner }));
                RipStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Parses configuration text (same format as the config file).
#[no_mangle]
pub unsafe extern "C" fn rip_config_parse(
    text: *const c_char,
    out: *mut *mut RipConfig,
) -> RipStatus {
    guard(|| {
        let text = ffi_try!(arg_str(text, "text"));
        ffi_try!(require(out, "out"));
        match ExperimentConfig::parse(text, "<memory>") {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(RipConfig { inner }));
                RipStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Overrides the global seed.
#[no_mangle]
pub unsafe extern "C" fn rip_config_set_seed(cfg: *mut RipConfig, seed: u64) -> RipStatus {
    guard(|| {
        ffi_try!(require(cfg, "cfg"));
        (*cfg).inner.seed = seed;
        RipStatus::Ok
    })
}

/// Overrides the output directory.
#[no_mangle]
pub unsafe extern "C" fn rip_config_set_output_dir(
    cfg: *mut RipConfig,
    dir: *const c_char,
) -> RipStatus {
    guard(|| {
        ffi_try!(require(cfg, "cfg"));
        let dir = ffi_try!(arg_str(dir, "dir"));
        if dir.is_empty() {
            return fail_with(RipStatus::ConfigError, "output directory must not be empty");
        }
        (*cfg).inner.output_dir = dir.to_string();
        RipStatus::Ok
    })
}

/// Toggles deterministic mode (zeroed wall times, bitwise-stable reruns).
#[no_mangle]
pub unsafe extern "C" fn rip_config_set_deterministic(
    cfg: *mut RipConfig,
    value: bool,
) -> RipStatus {
    guard(|| {
        ffi_try!(require(cfg, "cfg"));
        (*cfg).inner.deterministic = value;
        RipStatus::Ok
    })
}

/// Writes the 64-hex-digit config hash (plus NUL) into `buf`;
/// `len` must be at least 65.
#[no_mangle]
pub unsafe extern "C" fn rip_config_hash(
    cfg: *const RipConfig,
    buf: *mut c_char,
    len: usize,
) -> RipStatus {
    guard(|| {
        ffi_try!(require(cfg, "cfg"));
        ffi_try!(require(buf, "buf"));
        let hash = (*cfg).inner.hash();
        if len < hash.len() + 1 {
            return fail_with(
                RipStatus::Error,
                &format!("hash buffer needs {} bytes, got {len}", hash.len() + 1),
            );
        }
        std::ptr::copy_nonoverlapping(hash.as_ptr() as *const c_char, buf, hash.len());
        *buf.add(hash.len()) = 0;
        RipStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn rip_config_free(cfg: *mut RipConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

// ---------------------------------------------------------------- stages

/// Runs one pipeline stage. `stage` is one of `data`, `teacher`,
/// `generator`, `rip`, `knockoff`, `gen-random`, `evaluate`.
#[no_mangle]
pub unsafe extern "C" fn rip_run_stage(
    cfg: *const RipConfig,
    stage: *const c_char,
) -> RipStatus {
    guard(|| {
        ffi_try!(require(cfg, "cfg"));
        let name = ffi_try!(arg_str(stage, "stage"));
        let stage = match name {
            "data" => Stage::Data,
            "teacher" => Stage::Teacher,
            "generator" => Stage::Generator,
            "rip" => Stage::Rip,
            "knockoff" => Stage::Baseline(DistillMode::Knockoff),
            "gen-random" => Stage::Baseline(DistillMode::GenRandom),
            "evaluate" => Stage::Evaluate,
            other => {
                return fail_with(
                    RipStatus::Error,
                    &format!(
                        "unknown stage '{other}'; expected data, teacher, generator, \
                         rip, knockoff, gen-random, or evaluate"
                    ),
                )
            }
        };
        match run_stage(&(*cfg).inner, stage) {
            Ok(()) => RipStatus::Ok,
            Err(e) => fail(&e),
        }
    })
}

// ---------------------------------------------------------------- oracle

/// Opens a sealed oracle over a trained classifier checkpoint.
/// `mode` is `full-probabilities` or `top-1`.
#[no_mangle]
pub unsafe extern "C" fn rip_oracle_open(
    teacher_path: *const c_char,
    mode: *const c_char,
    out: *mut *mut RipOracle,
) -> RipStatus {
    guard(|| {
        let path = ffi_try!(arg_str(teacher_path, "teacher_path"));
        let mode = ffi_try!(arg_str(mode, "mode"));
        ffi_try!(require(out, "out"));
        let mode = match ResponseMode::from_str(mode) {
            Ok(m) => m,
            Err(e) => return fail(&e),
        };
        let teacher = match Classifier::load(Path::new(path)) {
            Ok(t) => t,
            Err(e) => return fail(&e),
        };
        let (input_dim, n_classes) = (teacher.input_dim(), teacher.n_classes());
        *out = Box::into_raw(Box::new(RipOracle {
            oracle: BlackBoxOracle::new(teacher, mode),
            input_dim,
            n_classes,
        }));
        RipStatus::Ok
    })
}

/// Number of features each query row must have.
#[no_mangle]
pub unsafe extern "C" fn rip_oracle_input_dim(
    oracle: *const RipOracle,
    out: *mut usize,
) -> RipStatus {
    guard(|| {
        ffi_try!(require(oracle, "oracle"));
        ffi_try!(require(out, "out"));
        *out = (*oracle).input_dim;
        RipStatus::Ok
    })
}

/// Number of classes in each probability row the oracle answers.
#[no_mangle]
pub unsafe extern "C" fn rip_oracle_n_classes(
    oracle: *const RipOracle,
    out: *mut usize,
) -> RipStatus {
    guard(|| {
        ffi_try!(require(oracle, "oracle"));
        ffi_try!(require(out, "out"));
        *out = (*oracle).n_classes;
        RipStatus::Ok
    })
}

/// Total number of samples this oracle has been charged for.
#[no_mangle]
pub unsafe extern "C" fn rip_oracle_call_count(
    oracle: *const RipOracle,
    out: *mut u64,
) -> RipStatus {
    guard(|| {
        ffi_try!(require(oracle, "oracle"));
        ffi_try!(require(out, "out"));
        *out = (*oracle).oracle.call_count();
        RipStatus::Ok
    })
}

/// Submits `rows` samples of `cols` features (row-major) and writes
/// `rows * n_classes` probabilities into `out_probs` (row-major).
#[no_mangle]
pub unsafe extern "C" fn rip_oracle_query(
    oracle: *const RipOracle,
    samples: *const f64,
    rows: usize,
    cols: usize,
    out_probs: *mut f64,
) -> RipStatus {
    guard(|| {
        ffi_try!(require(oracle, "oracle"));
        ffi_try!(require(samples, "samples"));
        ffi_try!(require(out_probs, "out_probs"));
        if rows == 0 || cols == 0 {
            return fail_with(RipStatus::Error, "rows and cols must be positive");
        }
        let data = std::slice::from_raw_parts(samples, rows * cols).to_vec();
        let batch = match Tensor::new(vec![rows, cols], data) {
            Ok(t) => t,
            Err(e) => return fail(&e),
        };
        let answer = match (*oracle).oracle.query(&batch) {
            Ok(t) => t,
            Err(e) => return fail(&e),
        };
        std::ptr::copy_nonoverlapping(answer.data().as_ptr(), out_probs, answer.data().len());
        RipStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn rip_oracle_free(oracle: *mut RipOracle) {
    if !oracle.is_null() {
        drop(Box::from_raw(oracle));
    }
}

// ------------------------------------------------------------- generator

/// Opens a trained latent generator checkpoint.
#[no_mangle]
pub unsafe extern "C" fn rip_generator_open(
    path: *const c_char,
    out: *mut *mut RipGenerator,
) -> RipStatus {
    guard(|| {
        let path = ffi_try!(arg_str(path, "path"));
        ffi_try!(require(out, "out"));
        match Vae::load(Path::new(path)) {
            Ok(vae) => {
                *out = Box::into_raw(Box::new(RipGenerator { vae }));
                RipStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Dimension of the latent vectors this generator decodes.
#[no_mangle]
pub unsafe extern "C" fn rip_generator_latent_dim(
    generator: *const RipGenerator,
    out: *mut usize,
) -> RipStatus {
    guard(|| {
        ffi_try!(require(generator, "generator"));
        ffi_try!(require(out, "out"));
        *out = (*generator).vae.latent_dim();
        RipStatus::Ok
    })
}

/// Dimension of each decoded sample.
#[no_mangle]
pub unsafe extern "C" fn rip_generator_sample_dim(
    generator: *const RipGenerator,
    out: *mut usize,
) -> RipStatus {
    guard(|| {
        ffi_try!(require(generator, "generator"));
        ffi_try!(require(out, "out"));
        *out = (*generator).vae.sample_dim();
        RipStatus::Ok
    })
}

/// Decodes one latent vector of `latent_len` values into `out_sample`,
/// which must hold `sample_dim` values.
#[no_mangle]
pub unsafe extern "C" fn rip_generator_decode(
    generator: *const RipGenerator,
    latent: *const f64,
    latent_len: usize,
    out_sample: *mut f64,
) -> RipStatus {
    guard(|| {
        ffi_try!(require(generator, "generator"));
        ffi_try!(require(latent, "latent"));
        ffi_try!(require(out_sample, "out_sample"));
        let vae = &(*generator).vae;
        if latent_len != vae.latent_dim() {
            return fail_with(
                RipStatus::Error,
                &format!(
                    "latent has {latent_len} values, generator expects {}",
                    vae.latent_dim()
                ),
            );
        }
        let latent = std::slice::from_raw_parts(latent, latent_len);
        match vae.decode(latent) {
            Ok(sample) => {
                std::ptr::copy_nonoverlapping(sample.as_ptr(), out_sample, sample.len());
                RipStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn rip_generator_free(generator: *mut RipGenerator) {
    if !generator.is_null() {
        drop(Box::from_raw(generator));
    }
}

// -------------------------------------------------------------- search

/// Runs the elitist evolutionary search for one target class, using the
/// evolution settings from `cfg` with the given `seed`.
#[no_mangle]
pub unsafe extern "C" fn rip_evolve(
    oracle: *const RipOracle,
    generator: *const RipGenerator,
    cfg: *const RipConfig,
    target_class: usize,
    seed: u64,
    out: *mut *mut RipSearchResult,
) -> RipStatus {
    guard(|| {
        ffi_try!(require(oracle, "oracle"));
        ffi_try!(require(generator, "generator"));
        ffi_try!(require(cfg, "cfg"));
        ffi_try!(require(out, "out"));
        if target_class >= (*oracle).n_classes {
            return fail_with(
                RipStatus::Error,
                &format!(
                    "target class {target_class} out of range; oracle answers {} classes",
                    (*oracle).n_classes
                ),
            );
        }
        let evo = (*cfg).inner.evolution_config(seed);
        match evolve(target_class, &(*oracle).oracle, &(*generator).vae, &evo) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(RipSearchResult { inner }));
                RipStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Final objective value of the best member.
#[no_mangle]
pub unsafe extern "C" fn rip_search_result_fitness(
    result: *const RipSearchResult,
    out: *mut f64,
) -> RipStatus {
    guard(|| {
        ffi_try!(require(result, "result"));
        ffi_try!(require(out, "out"));
        *out = (*result).inner.best_fitness;
        RipStatus::Ok
    })
}

/// Number of generations the search ran after the initial evaluation.
#[no_mangle]
pub unsafe extern "C" fn rip_search_result_generations(
    result: *const RipSearchResult,
    out: *mut u32,
) -> RipStatus {
    guard(|| {
        ffi_try!(require(result, "result"));
        ffi_try!(require(out, "out"));
        *out = (*result).inner.generations;
        RipStatus::Ok
    })
}

/// Oracle samples the search consumed.
#[no_mangle]
pub unsafe extern "C" fn rip_search_result_oracle_samples(
    result: *const RipSearchResult,
    out: *mut u64,
) -> RipStatus {
    guard(|| {
        ffi_try!(require(result, "result"));
        ffi_try!(require(out, "out"));
        *out = (*result).inner.oracle_samples;
        RipStatus::Ok
    })
}

/// Whether the best fitness dropped below the configured threshold.
#[no_mangle]
pub unsafe extern "C" fn rip_search_result_reached_threshold(
    result: *const RipSearchResult,
    out: *mut bool,
) -> RipStatus {
    guard(|| {
        ffi_try!(require(result, "result"));
        ffi_try!(require(out, "out"));
        *out = (*result).inner.reached_threshold;
        RipStatus::Ok
    })
}

/// Length of the best decoded sample.
#[no_mangle]
pub unsafe extern "C" fn rip_search_result_sample_len(
    result: *const RipSearchResult,
    out: *mut usize,
) -> RipStatus {
    guard(|| {
        ffi_try!(require(result, "result"));
        ffi_try!(require(out, "out"));
        *out = (*result).inner.best_sample.len();
        RipStatus::Ok
    })
}

/// Copies the best decoded sample into `buf` (`len` must match
/// `rip_search_result_sample_len`).
#[no_mangle]
pub unsafe extern "C" fn rip_search_result_sample(
    result: *const RipSearchResult,
    buf: *mut f64,
    len: usize,
) -> RipStatus {
    guard(|| {
        ffi_try!(require(result, "result"));
        ffi_try!(require(buf, "buf"));
        let sample = &(*result).inner.best_sample;
        if len != sample.len() {
            return fail_with(
                RipStatus::Error,
                &format!("sample buffer holds {len} values, need {}", sample.len()),
            );
        }
        std::ptr::copy_nonoverlapping(sample.as_ptr(), buf, sample.len());
        RipStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn rip_search_result_free(result: *mut RipSearchResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}
