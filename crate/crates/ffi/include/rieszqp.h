/* SPDX-License-Identifier: Apache-2.0 */

#ifndef RIESZQP_H
#define RIESZQP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RqpStatus {
  RQP_STATUS_OK = 0,
  RQP_STATUS_NULL_POINTER = 1,
  RQP_STATUS_CONFIG = 2,
  RQP_STATUS_PARSE = 3,
  RQP_STATUS_DOMAIN = 4,
  RQP_STATUS_INDEX_OUT_OF_RANGE = 5,
  RQP_STATUS_EMPTY_ADMISSIBLE_SET = 6,
  RQP_STATUS_IO = 7,
  RQP_STATUS_PANIC = 8,
} RqpStatus;

/**
 * Nodes of a discretized set.
 */
typedef struct RqpDiscretization RqpDiscretization;

/**
 * Gram matrix and kernel parameters over one discretization.
 */
typedef struct RqpKernel RqpKernel;

/**
 * Result of one solve.
 */
typedef struct RqpReport RqpReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *rqp_last_error(void);

/**
 * Discretizes a geometry given as JSON (same schema as the `geometry`
 * table of a scenario file).
 */
enum RqpStatus rqp_discretize_json(const char *json, struct RqpDiscretization **out);

enum RqpStatus rqp_discretization_len(const struct RqpDiscretization *d, size_t *out);

/**
 * Copies node coordinates row-major into `buf` (`len >= N * dim`).
 */
enum RqpStatus rqp_discretization_points(const struct RqpDiscretization *d,
                                         double *buf,
                                         size_t len);

void rqp_discretization_free(struct RqpDiscretization *d);

/**
 * Assembles the Gram matrix of order `alpha` over the discretization.
 */
enum RqpStatus rqp_kernel_assemble(const struct RqpDiscretization *d,
                                   double alpha,
                                   struct RqpKernel **out);

enum RqpStatus rqp_kernel_entry(const struct RqpKernel *k, size_t i, size_t j, double *out);

void rqp_kernel_free(struct RqpKernel *k);

/**
 * Gauss problem on `mask` (all nodes when NULL) with the external field
 * `f` given per node (`f_len == N`; entries may be +inf; NULL means f = 0).
 * `tol <= 0` selects the default tolerance.
 */
enum RqpStatus rqp_solve_gauss(const struct RqpKernel *k,
                               const size_t *mask,
                               size_t mask_len,
                               const double *f,
                               size_t f_len,
                               double tol,
                               struct RqpReport **out);

enum RqpStatus rqp_solve_capacitary(const struct RqpKernel *k,
                                    const size_t *mask,
                                    size_t mask_len,
                                    double tol,
                                    struct RqpReport **out);

/**
 * Balayage of `delta` onto `mask`. `delta` is the sum of node masses
 * (`node_mass`, length N, may be NULL) and `n_points` free point masses
 * with row-major coordinates `points` (`n_points * dim`) and `point_mass`.
 */
enum RqpStatus rqp_solve_balayage(const struct RqpKernel *k,
                                  const size_t *mask,
                                  size_t mask_len,
                                  const double *node_mass,
                                  const double *points,
                                  const double *point_mass,
                                  size_t n_points,
                                  double tol,
                                  struct RqpReport **out);

/**
 * Dense minimizer weights (`len >= N`).
 */
enum RqpStatus rqp_report_weights(const struct RqpReport *r, double *buf, size_t len);

enum RqpStatus rqp_report_len(const struct RqpReport *r, size_t *out);

/**
 * Optimal objective: `w_f(A)`, the capacitary energy, or the balayage
 * objective depending on the solve.
 */
enum RqpStatus rqp_report_objective(const struct RqpReport *r, double *out);

/**
 * Total mass of the minimizer.
 */
enum RqpStatus rqp_report_mass(const struct RqpReport *r, double *out);

/**
 * Robin constant (NaN when the solve does not define one).
 */
enum RqpStatus rqp_report_robin_constant(const struct RqpReport *r, double *out);

/**
 * 1 if the KKT residuals met the tolerance, else 0.
 */
enum RqpStatus rqp_report_converged(const struct RqpReport *r, int *out);

/**
 * Report as a JSON string; release it with [`rqp_string_free`].
 */
enum RqpStatus rqp_report_json(const struct RqpReport *r, char **out);

void rqp_report_free(struct RqpReport *r);

void rqp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RIESZQP_H */
