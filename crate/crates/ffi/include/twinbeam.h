#ifndef TWINBEAM_H
#define TWINBEAM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TbStatus {
  TbStatus_Ok = 0,
  TbStatus_NullPointer = 1,
  TbStatus_InvalidParameter = 2,
  TbStatus_Dimension = 3,
  TbStatus_PrecisionExhausted = 4,
  TbStatus_BudgetExceeded = 5,
  TbStatus_ModelMismatch = 6,
  TbStatus_Support = 7,
  TbStatus_Infeasible = 8,
  TbStatus_Empty = 9,
  TbStatus_Parse = 10,
  TbStatus_Io = 11,
  TbStatus_Degenerate = 12,
  TbStatus_Panic = 13,
} TbStatus;

/**
 * Opaque joint distribution.
 */
typedef struct TbJoint TbJoint;

/**
 * Opaque transfer matrix.
 */
typedef struct TbMatrix TbMatrix;

typedef struct TbStats {
  double mean_s;
  double mean_i;
  double fano_s;
  double fano_i;
  double correlation;
  double noise_reduction;
} TbStats;

/**
 * Multimode noise-model parameters.
 */
typedef struct TbFitParams {
  double m_p;
  double b_p;
  double m_s;
  double b_s;
  double m_i;
  double b_i;
  double tau_s;
  double tau_i;
  double d_s;
  double d_i;
} TbFitParams;

/**
 * Detection parameters of one arm.
 */
typedef struct TbArm {
  double transmissivity;
  size_t pixels;
  double efficiency;
  double dark_prob;
} TbArm;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t tb_last_error_message(char *buf, size_t len);

/**
 * Binomial loss matrix.
 *
 * # Safety
 * `out` must be valid for writing one pointer.
 */
enum TbStatus tb_matrix_bernoulli(double transmissivity, size_t n_max, struct TbMatrix **out);

/**
 * Infinite-pixel matrix; `c_max` of zero selects the default row count.
 *
 * # Safety
 * `out` must be valid for writing one pointer.
 */
enum TbStatus tb_matrix_infinite(double tau,
                                 double dark_mean,
                                 size_t n_max,
                                 size_t c_max,
                                 struct TbMatrix **out);

/**
 * Exact finite-pixel matrix; `digits` of zero selects the precision
 * automatically.
 *
 * # Safety
 * `out` must be valid for writing one pointer.
 */
enum TbStatus tb_matrix_finite(size_t pixels,
                               double tau,
                               double dark_prob,
                               size_t n_max,
                               uint32_t digits,
                               struct TbMatrix **out);

/**
 * `outer * inner`.
 *
 * # Safety
 * Handles must be live; `out` must be valid for writing one pointer.
 */
enum TbStatus tb_matrix_compose(const struct TbMatrix *outer,
                                const struct TbMatrix *inner,
                                struct TbMatrix **out);

/**
 * # Safety
 * `m` must be a live handle; the out pointers must be valid or null.
 */
enum TbStatus tb_matrix_dims(const struct TbMatrix *m, size_t *c_max, size_t *n_max);

/**
 * Entry `G(c, n)`, zero outside the stored range or for a null handle.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
double tb_matrix_get(const struct TbMatrix *m, size_t c, size_t n);

/**
 * # Safety
 * `m` must be null or a live handle.
 */
double tb_matrix_max_column_defect(const struct TbMatrix *m);

/**
 * # Safety
 * `m` must be null or a handle not yet freed.
 */
void tb_matrix_free(struct TbMatrix *m);

/**
 * Joint distribution from a row-major `rows x cols` array; `click` selects
 * click counts rather than photon numbers.
 *
 * # Safety
 * `values` must be valid for `rows * cols` reads; `out` for one write.
 */
enum TbStatus tb_joint_new(const double *values,
                           size_t rows,
                           size_t cols,
                           bool click,
                           struct TbJoint **out);

/**
 * # Safety
 * `p` must be a live handle; the out pointers must be valid or null.
 */
enum TbStatus tb_joint_dims(const struct TbJoint *p, size_t *rows, size_t *cols);

/**
 * # Safety
 * `p` must be null or a live handle.
 */
double tb_joint_get(const struct TbJoint *p, size_t s, size_t i);

/**
 * Means, Fano factors, correlation and noise-reduction factor.
 *
 * # Safety
 * `p` must be a live handle and `out` valid for one write.
 */
enum TbStatus tb_joint_stats(const struct TbJoint *p, struct TbStats *out);

/**
 * # Safety
 * `p` must be null or a handle not yet freed.
 */
void tb_joint_free(struct TbJoint *p);

/**
 * Click distribution `G_S p G_I^T`.
 *
 * # Safety
 * Handles must be live; `out` must be valid for one write.
 */
enum TbStatus tb_forward(const struct TbJoint *p,
                         const struct TbMatrix *g_s,
                         const struct TbMatrix *g_i,
                         struct TbJoint **out);

/**
 * EM reconstruction on the photon grid `0..=n_max_s` x `0..=n_max_i`
 * from a uniform start, without plateau stopping.
 *
 * # Safety
 * Handles must be live; `out` must be valid for one write and
 * `iterations` valid or null.
 */
enum TbStatus tb_reconstruct(const struct TbJoint *f,
                             const struct TbMatrix *g_s,
                             const struct TbMatrix *g_i,
                             size_t n_max_s,
                             size_t n_max_i,
                             size_t max_iterations,
                             struct TbJoint **out,
                             size_t *iterations);

/**
 * Photon-number distribution of the multimode model.
 *
 * # Safety
 * `params` must be valid for one read and `out` for one write.
 */
enum TbStatus tb_model_distribution(const struct TbFitParams *params,
                                    size_t n_max_s,
                                    size_t n_max_i,
                                    struct TbJoint **out);

/**
 * Pixel-level Monte Carlo with uniform pixel assignment and per-pixel dark
 * counts; the result is the normalized click histogram.
 *
 * # Safety
 * Pointers must be valid; `out` must be valid for one write.
 */
enum TbStatus tb_simulate(const struct TbJoint *p,
                          const struct TbArm *signal,
                          const struct TbArm *idler,
                          uint64_t trials,
                          uint64_t seed,
                          struct TbJoint **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TWINBEAM_H */
