#ifndef SEMCAST_H
#define SEMCAST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum SemcastStatus {
  SEMCAST_STATUS_OK = 0,
  SEMCAST_STATUS_NULL_POINTER = 1,
  /**
   * Argument out of range, including invalid UTF-8.
   */
  SEMCAST_STATUS_INVALID_ARGUMENT = 2,
  SEMCAST_STATUS_CONFIG = 3,
  SEMCAST_STATUS_FORMAT = 4,
  SEMCAST_STATUS_DATA = 5,
  SEMCAST_STATUS_IO = 6,
  /**
   * Output buffer too small; the required size was still written.
   */
  SEMCAST_STATUS_BUFFER_TOO_SMALL = 7,
  /**
   * An internal panic was caught at the boundary.
   */
  SEMCAST_STATUS_INTERNAL = 8,
} SemcastStatus;

/**
 * Which search-space formula to evaluate.
 */
typedef enum SemcastSearchKind {
  /**
   * `(2^bits)^n` over weights.
   */
  SEMCAST_SEARCH_KIND_WEIGHTS = 0,
  /**
   * `(2^bits)^n` over semantic keys.
   */
  SEMCAST_SEARCH_KIND_SEMANTIC_KEYS = 1,
  /**
   * `2^bits`; `n` is ignored.
   */
  SEMCAST_SEARCH_KIND_SEED_KEY = 2,
  /**
   * `n * 2^(bits*n)`.
   */
  SEMCAST_SEARCH_KIND_WITH_ALLOCATION = 3,
} SemcastSearchKind;

/**
 * Run configuration handle.
 */
typedef struct SemcastConfig SemcastConfig;

/**
 * Prepared dataset, head and importance scores.
 */
typedef struct SemcastSession SemcastSession;

/**
 * Per-trial measurements.
 */
typedef struct SemcastTrial {
  size_t item;
  size_t lambda;
  size_t symbols;
  size_t payload_bits;
  size_t legit_errors;
  size_t eve_errors;
  double latency_us;
  double l_cha;
  bool correct;
  uint64_t perm_digest;
} SemcastTrial;

/**
 * One SNR point of a BER sweep.
 */
typedef struct SemcastBerPoint {
  double snr_db;
  size_t trials;
  size_t payload_bits;
  double legit_ber_encrypted;
  double legit_ber_plaintext;
  double eve_ber;
  double mean_l_cha;
} SemcastBerPoint;

/**
 * One budget of a latency sweep.
 */
typedef struct SemcastLatencyPoint {
  double epsilon;
  size_t items;
  double mean_lambda;
  double mean_symbols;
  double latency_us;
  double symbol_fraction;
  double accuracy;
  double accuracy_fraction;
} SemcastLatencyPoint;

/**
 * Search-space size `multiplier * 2^log2`.
 */
typedef struct SemcastSearchSpace {
  uint64_t multiplier;
  uint64_t log2;
} SemcastSearchSpace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *semcast_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *semcast_version(void);

/**
 * New configuration with default values. Never NULL.
 */
struct SemcastConfig *semcast_config_new(void);

/**
 * Parses a config file into a new handle stored in `*out`.
 */
enum SemcastStatus semcast_config_load(const char *path, struct SemcastConfig **out);

/**
 * Sets one configuration key from its textual value.
 */
enum SemcastStatus semcast_config_set(struct SemcastConfig *cfg,
                                      const char *key,
                                      const char *value);

void semcast_config_free(struct SemcastConfig *cfg);

/**
 * Builds the dataset and head described by `cfg`.
 */
enum SemcastStatus semcast_session_new(const struct SemcastConfig *cfg,
                                       struct SemcastSession **out);

/**
 * Number of dataset items in the session.
 */
size_t semcast_session_items(const struct SemcastSession *session);

void semcast_session_free(struct SemcastSession *session);

/**
 * Runs trial `trial` at one SNR and budget.
 */
enum SemcastStatus semcast_run_trial(const struct SemcastSession *session,
                                     size_t trial,
                                     double snr_db,
                                     double epsilon,
                                     struct SemcastTrial *out);

/**
 * BER sweep over the configured SNRs. When `out_dir` is not NULL the CSV
 * outputs are also written there.
 */
enum SemcastStatus semcast_ber_sweep(const struct SemcastSession *session,
                                     const char *out_dir,
                                     struct SemcastBerPoint *points,
                                     size_t capacity,
                                     size_t *written);

/**
 * Latency sweep over the configured budget grid at the first SNR.
 */
enum SemcastStatus semcast_latency_sweep(const struct SemcastSession *session,
                                         const char *out_dir,
                                         struct SemcastLatencyPoint *points,
                                         size_t capacity,
                                         size_t *written);

/**
 * Greedy entropy-budget selection over `n` normalized scores summing to
 * `confidence`. Selected indices are written best first.
 */
enum SemcastStatus semcast_select_maps(const double *scores,
                                       size_t n,
                                       double confidence,
                                       double epsilon,
                                       size_t *indices,
                                       size_t capacity,
                                       size_t *written);

/**
 * Evaluates one search-space formula exactly.
 */
enum SemcastStatus semcast_search_space(enum SemcastSearchKind kind,
                                        uint64_t bits,
                                        uint64_t n,
                                        struct SemcastSearchSpace *out);

/**
 * The per-map lightweight keyed hash.
 */
uint64_t semcast_lightweight_hash(uint64_t input, uint64_t tag);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMCAST_H */
