#ifndef SHARDAGG_H
#define SHARDAGG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum ShardaggStatus {
  SHARDAGG_STATUS_OK = 0,
  SHARDAGG_STATUS_NULL_POINTER = 1,
  SHARDAGG_STATUS_CONFIG = 2,
  SHARDAGG_STATUS_INFEASIBLE = 3,
  SHARDAGG_STATUS_ABORT = 4,
  SHARDAGG_STATUS_DOMAIN = 5,
  SHARDAGG_STATUS_FIELD_TOO_SMALL = 6,
  SHARDAGG_STATUS_THRESHOLD_NOT_MET = 7,
  SHARDAGG_STATUS_TAMPER_DETECTED = 8,
  SHARDAGG_STATUS_BUFFER_TOO_SMALL = 9,
  SHARDAGG_STATUS_INVALID_UTF8 = 10,
  SHARDAGG_STATUS_PANIC = 11,
} ShardaggStatus;

typedef enum ShardaggVerdict {
  SHARDAGG_VERDICT_MATCH = 0,
  SHARDAGG_VERDICT_MISMATCH = 1,
  SHARDAGG_VERDICT_ABORT = 2,
  SHARDAGG_VERDICT_UNAVAILABLE = 3,
} ShardaggVerdict;

/**
 * Opaque simulation report.
 */
typedef struct ShardaggReport ShardaggReport;

/**
 * Opaque packed-sharing scheme.
 */
typedef struct ShardaggScheme ShardaggScheme;

/**
 * Targets and threat model for parameter planning.
 */
typedef struct ShardaggSecurityConfig {
  double sigma;
  double eta;
  double gamma;
  double delta;
  uint64_t n;
  size_t k;
  size_t m;
  bool malicious;
} ShardaggSecurityConfig;

/**
 * Planned protocol parameters.
 */
typedef struct ShardaggParams {
  size_t g;
  size_t t;
  size_t k;
  size_t m;
  uint64_t n;
  bool malicious;
  size_t neighbors;
  double achieved_sigma;
  double achieved_eta;
} ShardaggParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` as a
 * NUL-terminated string, truncating to `len - 1` bytes. Returns the full
 * message length in bytes, excluding the terminator.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t shardagg_last_error_message(char *buf, size_t len);

/**
 * Smallest group size and balanced threshold meeting the targets.
 *
 * # Safety
 * `cfg` and `out` must be valid pointers.
 */
enum ShardaggStatus shardagg_find_params(const struct ShardaggSecurityConfig *cfg,
                                         struct ShardaggParams *out);

/**
 * Security bits for equally sized groups; NaN on invalid input.
 */
double shardagg_achieved_security(size_t g, size_t t, uint64_t n, double gamma, size_t m);

/**
 * Availability bits for equally sized groups; NaN on invalid input.
 */
double shardagg_achieved_availability(size_t g,
                                      size_t t,
                                      size_t k,
                                      uint64_t n,
                                      double delta,
                                      size_t m,
                                      bool malicious);

/**
 * `(2g / k) * field_bits`; NaN when `k` is zero.
 */
double shardagg_expansion_factor(size_t g, size_t k, uint32_t field_bits);

/**
 * Natural log of the hypergeometric CDF `P[X <= x]`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum ShardaggStatus shardagg_hypergeom_log_cdf(uint64_t x,
                                               uint64_t population,
                                               uint64_t successes,
                                               uint64_t draws,
                                               double *out);

/**
 * Natural log of the hypergeometric survival function `P[X > x]`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum ShardaggStatus shardagg_hypergeom_log_sf(uint64_t x,
                                              uint64_t population,
                                              uint64_t successes,
                                              uint64_t draws,
                                              double *out);

/**
 * Creates a `(threshold, share_count, pack)` packed-sharing scheme over
 * the prime field of the given modulus.
 *
 * # Safety
 * `out` must be a valid pointer; on success `*out` owns a handle to be
 * released with [`shardagg_scheme_free`].
 */
enum ShardaggStatus shardagg_scheme_new(uint64_t modulus,
                                        size_t threshold,
                                        size_t share_count,
                                        size_t pack,
                                        struct ShardaggScheme **out);

/**
 * # Safety
 * `scheme` must be null or a handle from [`shardagg_scheme_new`] not yet freed.
 */
void shardagg_scheme_free(struct ShardaggScheme *scheme);

/**
 * Shares `pack` secrets; writes `share_count` share values, the value for
 * share point `i + 1` at index `i`. Randomness comes from `seed`.
 *
 * # Safety
 * `secrets` must point to `secrets_len` values and `shares_out` to
 * `shares_len` writable values.
 */
enum ShardaggStatus shardagg_scheme_share(const struct ShardaggScheme *scheme,
                                          const uint64_t *secrets,
                                          size_t secrets_len,
                                          uint64_t seed,
                                          uint64_t *shares_out,
                                          size_t shares_len);

/**
 * Reconstructs `pack` secrets from `count` shares, given as 1-based share
 * points and values. With `verified`, needs `t + k` shares and reports
 * `SHARDAGG_STATUS_TAMPER_DETECTED` on inconsistency.
 *
 * # Safety
 * `points` and `values` must point to `count` values each, and
 * `secrets_out` to `secrets_len` writable values.
 */
enum ShardaggStatus shardagg_scheme_reconstruct(const struct ShardaggScheme *scheme,
                                                const uint64_t *points,
                                                const uint64_t *values,
                                                size_t count,
                                                bool verified,
                                                uint64_t *secrets_out,
                                                size_t secrets_len);

/**
 * Runs a simulation described by a JSON `SimulationConfig`.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string and `out` a valid
 * pointer; on success `*out` owns a handle to be released with
 * [`shardagg_report_free`].
 */
enum ShardaggStatus shardagg_simulate(const char *config_json, struct ShardaggReport **out);

/**
 * # Safety
 * `report` must be a valid handle and `out` a valid pointer.
 */
enum ShardaggStatus shardagg_report_verdict(const struct ShardaggReport *report,
                                            enum ShardaggVerdict *out);

/**
 * Copies the report's output vector into `out`. `*written` receives the
 * vector length; fails with `SHARDAGG_STATUS_ABORT` when there is no output.
 *
 * # Safety
 * `report` must be a valid handle, `out` must point to `len` writable
 * values and `written` must be a valid pointer.
 */
enum ShardaggStatus shardagg_report_output(const struct ShardaggReport *report,
                                           uint64_t *out,
                                           size_t len,
                                           size_t *written);

/**
 * Copies the report as NUL-terminated JSON. `*needed` receives the size
 * including the terminator; a short buffer yields
 * `SHARDAGG_STATUS_BUFFER_TOO_SMALL` and leaves `buf` untouched.
 *
 * # Safety
 * `report` must be a valid handle, `buf` null or `len` writable bytes,
 * and `needed` a valid pointer.
 */
enum ShardaggStatus shardagg_report_json(const struct ShardaggReport *report,
                                         char *buf,
                                         size_t len,
                                         size_t *needed);

/**
 * # Safety
 * `report` must be null or a handle from [`shardagg_simulate`] not yet freed.
 */
void shardagg_report_free(struct ShardaggReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SHARDAGG_H */
