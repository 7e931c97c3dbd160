#ifndef RHT_H
#define RHT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes.
 */
typedef enum RhtStatus {
  RHT_STATUS_OK = 0,
  RHT_STATUS_NULL_POINTER = 1,
  RHT_STATUS_VALIDATION = 2,
  RHT_STATUS_DOMAIN = 3,
  RHT_STATUS_CAP = 4,
  RHT_STATUS_POLE = 5,
  RHT_STATUS_INTERNAL = 6,
  RHT_STATUS_IO = 7,
  RHT_STATUS_PANIC = 8,
  RHT_STATUS_BUFFER_TOO_SMALL = 9,
} RhtStatus;

typedef struct RhtLimitLaw RhtLimitLaw;

typedef struct RhtModel RhtModel;

/**
 * `0` for cancel-on-completion, `1` for cancel-on-start.
 */
typedef uint32_t RhtDiscipline;

/**
 * Message for the last failure on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *rht_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rht_version(void);

/**
 * Parses a JSON model description.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RhtStatus rht_model_from_json(const char *json, struct RhtModel **out);

/**
 * # Safety
 * `model` must come from [`rht_model_from_json`] and not be used afterwards.
 */
void rht_model_free(struct RhtModel *model);

/**
 * # Safety
 * `model` and `out` must be valid pointers.
 */
enum RhtStatus rht_model_num_types(const struct RhtModel *model, size_t *out);

/**
 * Critical rate `λ*` and depth `K`.
 *
 * # Safety
 * All pointers must be valid.
 */
enum RhtStatus rht_criticality(const struct RhtModel *model, double *lambda_star, size_t *depth_k);

/**
 * Builds the heavy-traffic limit law of the model.
 *
 * # Safety
 * `model` and `out` must be valid pointers.
 */
enum RhtStatus rht_limit_law(const struct RhtModel *model, struct RhtLimitLaw **out);

/**
 * # Safety
 * `law` must come from [`rht_limit_law`] and not be used afterwards.
 */
void rht_limit_law_free(struct RhtLimitLaw *law);

/**
 * Number of components (rows) and job types (columns).
 *
 * # Safety
 * All pointers must be valid.
 */
enum RhtStatus rht_limit_law_shape(const struct RhtLimitLaw *law, size_t *rows, size_t *cols);

/**
 * Whether the component graph is a forest. The coefficient matrix describes
 * the limit only when it is.
 *
 * # Safety
 * `law` and `out` must be valid pointers.
 */
enum RhtStatus rht_limit_law_is_forest(const struct RhtLimitLaw *law, bool *out);

/**
 * Copies the row-major coefficient matrix into `buf` of length `len`.
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum RhtStatus rht_limit_law_coefficients(const struct RhtLimitLaw *law, double *buf, size_t len);

/**
 * Exact coefficient as a rational string owned by the law handle.
 *
 * # Safety
 * `law` and `out` must be valid pointers.
 */
enum RhtStatus rht_limit_law_coefficient_exact(const struct RhtLimitLaw *law,
                                               size_t row,
                                               size_t col,
                                               const char **out);

/**
 * Stationary PGF of the queue-length vector at `z`.
 *
 * # Safety
 * `z` must point to `len` doubles and `out` be valid.
 */
enum RhtStatus rht_pgf(const struct RhtModel *model,
                       RhtDiscipline discipline_code,
                       const double *z,
                       size_t len,
                       double *out);

/**
 * Laplace transform of the limit law at `t`. Uses the mixture form when the
 * component graph is not a forest.
 *
 * # Safety
 * `t` must point to `len` doubles and `out` be valid.
 */
enum RhtStatus rht_limiting_laplace(const struct RhtModel *model,
                                    const double *t,
                                    size_t len,
                                    double *out);

/**
 * `E[Qⁿ]` of the total number of jobs (c.o.c.) or waiting jobs (c.o.s.).
 *
 * # Safety
 * `out` must be valid.
 */
enum RhtStatus rht_moment_total(const struct RhtModel *model,
                                RhtDiscipline discipline_code,
                                uint32_t n,
                                double *out);

/**
 * Simulates `events` measured events and writes per-type time averages.
 *
 * # Safety
 * `means` must point to `len` writable doubles.
 */
enum RhtStatus rht_simulate_means(const struct RhtModel *model,
                                  RhtDiscipline discipline_code,
                                  uint64_t events,
                                  uint64_t seed,
                                  double *means,
                                  size_t len);

#endif  /* RHT_H */
