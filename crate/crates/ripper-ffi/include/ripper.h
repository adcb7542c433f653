/* C interface to the model-ripping library. All handles are opaque; free them with the matching rip_*_free. Functions return RipStatus; on failure, rip_last_error() describes the problem for the calling thread. */

#ifndef RIPPER_H
#define RIPPER_H

#pragma once

/* Generated by cbindgen from the ripper-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call in this interface.
 */
typedef enum RipStatus {
  /**
   * Success.
   */
  RIP_STATUS_OK = 0,
  /**
   * Invalid input or internal failure; see `rip_last_error`.
   */
  RIP_STATUS_ERROR = 1,
  /**
   * Configuration problem (mirrors CLI exit code 2).
   */
  RIP_STATUS_CONFIG_ERROR = 2,
  /**
   * Required artifact missing or from another config (CLI exit code 3).
   */
  RIP_STATUS_STAGE_ORDER_ERROR = 3,
  /**
   * Training diverged (CLI exit code 4).
   */
  RIP_STATUS_DIVERGENCE_ERROR = 4,
  /**
   * A required pointer argument was null.
   */
  RIP_STATUS_NULL_POINTER = 5,
} RipStatus;

/**
 * Experiment configuration handle.
 */
typedef struct RipConfig RipConfig;

/**
 * Trained latent generator handle.
 */
typedef struct RipGenerator RipGenerator;

/**
 * Sealed prediction interface over a trained victim classifier.
 */
typedef struct RipOracle RipOracle;

/**
 * Outcome of one evolutionary search.
 */
typedef struct RipSearchResult RipSearchResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static C string.
 */
const char *rip_version(void);

/**
 * Message describing the most recent failure on the calling thread. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *rip_last_error(void);

/**
 * Creates a configuration filled with the reference defaults.
 */
enum RipStatus rip_config_default(struct RipConfig **out);

/**
 * Loads a configuration file; unknown keys and bad values are errors.
 */
enum RipStatus rip_config_load(const char *path, struct RipConfig **out);

/**
 * Parses configuration text (same format as the config file).
 */
enum RipStatus rip_config_parse(const char *text, struct RipConfig **out);

/**
 * Overrides the global seed.
 */
enum RipStatus rip_config_set_seed(struct RipConfig *cfg, uint64_t seed);

/**
 * Overrides the output directory.
 */
enum RipStatus rip_config_set_output_dir(struct RipConfig *cfg, const char *dir);

/**
 * Toggles deterministic mode (zeroed wall times, bitwise-stable reruns).
 */
enum RipStatus rip_config_set_deterministic(struct RipConfig *cfg, bool value);

/**
 * Writes the 64-hex-digit config hash (plus NUL) into `buf`;
 * `len` must be at least 65.
 */
enum RipStatus rip_config_hash(const struct RipConfig *cfg, char *buf, size_t len);

void rip_config_free(struct RipConfig *cfg);

/**
 * Runs one pipeline stage. `stage` is one of `data`, `teacher`,
 * `generator`, `rip`, `knockoff`, `gen-random`, `evaluate`.
 */
enum RipStatus rip_run_stage(const struct RipConfig *cfg, const char *stage);

/**
 * Opens a sealed oracle over a trained classifier checkpoint.
 * `mode` is `full-probabilities` or `top-1`.
 */
enum RipStatus rip_oracle_open(const char *teacher_path, const char *mode, struct RipOracle **out);

/**
 * Number of features each query row must have.
 */
enum RipStatus rip_oracle_input_dim(const struct RipOracle *oracle, size_t *out);

/**
 * Number of classes in each probability row the oracle answers.
 */
enum RipStatus rip_oracle_n_classes(const struct RipOracle *oracle, size_t *out);

/**
 * Total number of samples this oracle has been charged for.
 */
enum RipStatus rip_oracle_call_count(const struct RipOracle *oracle, uint64_t *out);

/**
 * Submits `rows` samples of `cols` features (row-major) and writes
 * `rows * n_classes` probabilities into `out_probs` (row-major).
 */
enum RipStatus rip_oracle_query(const struct RipOracle *oracle,
                                const double *samples,
                                size_t rows,
                                size_t cols,
                                double *out_probs);

void rip_oracle_free(struct RipOracle *oracle);

/**
 * Opens a trained latent generator checkpoint.
 */
enum RipStatus rip_generator_open(const char *path, struct RipGenerator **out);

/**
 * Dimension of the latent vectors this generator decodes.
 */
enum RipStatus rip_generator_latent_dim(const struct RipGenerator *generator, size_t *out);

/**
 * Dimension of each decoded sample.
 */
enum RipStatus rip_generator_sample_dim(const struct RipGenerator *generator, size_t *out);

/**
 * Decodes one latent vector of `latent_len` values into `out_sample`,
 * which must hold `sample_dim` values.
 */
enum RipStatus rip_generator_decode(const struct RipGenerator *generator,
                                    const double *latent,
                                    size_t latent_len,
                                    double *out_sample);

void rip_generator_free(struct RipGenerator *generator);

/**
 * Runs the elitist evolutionary search for one target class, using the
 * evolution settings from `cfg` with the given `seed`.
 */
enum RipStatus rip_evolve(const struct RipOracle *oracle,
                          const struct RipGenerator *generator,
                          const struct RipConfig *cfg,
                          size_t target_class,
                          uint64_t seed,
                          struct RipSearchResult **out);

/**
 * Final objective value of the best member.
 */
enum RipStatus rip_search_result_fitness(const struct RipSearchResult *result, double *out);

/**
 * Number of generations the search ran after the initial evaluation.
 */
enum RipStatus rip_search_result_generations(const struct RipSearchResult *result, uint32_t *out);

/**
 * Oracle samples the search consumed.
 */
enum RipStatus rip_search_result_oracle_samples(const struct RipSearchResult *result,
                                                uint64_t *out);

/**
 * Whether the best fitness dropped below the configured threshold.
 */
enum RipStatus rip_search_result_reached_threshold(const struct RipSearchResult *result, bool *out);

/**
 * Length of the best decoded sample.
 */
enum RipStatus rip_search_result_sample_len(const struct RipSearchResult *result, size_t *out);

/**
 * Copies the best decoded sample into `buf` (`len` must match
 * `rip_search_result_sample_len`).
 */
enum RipStatus rip_search_result_sample(const struct RipSearchResult *result,
                                        double *buf,
                                        size_t len);

void rip_search_result_free(struct RipSearchResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RIPPER_H */
