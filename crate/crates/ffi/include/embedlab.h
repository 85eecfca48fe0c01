#pragma once

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from embedlab-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Call outcome. Values mirror the CLI exit conventions (0 success, 1 I/O,
 * 2 validation, 3 assertion); 4 marks a panic caught at the boundary.
 */
typedef enum EmbedlabStatus {
  EMBEDLAB_STATUS_OK = 0,
  EMBEDLAB_STATUS_IO = 1,
  EMBEDLAB_STATUS_VALIDATION = 2,
  EMBEDLAB_STATUS_ASSERTION = 3,
  EMBEDLAB_STATUS_PANIC = 4,
} EmbedlabStatus;

/**
 * Norm selector accepted by [`embedlab_pointset_new`]: 0 = Euclidean,
 * 1 = sup norm.
 */
typedef enum EmbedlabNorm {
  EMBEDLAB_NORM_L2 = 0,
  EMBEDLAB_NORM_LINF = 1,
} EmbedlabNorm;

/**
 * Target geometry for chains and probes: 0 = Hilbert (orthogonal blocks,
 * l_2), 1 = Banach (sign functionals, l_inf).
 */
typedef enum EmbedlabMode {
  EMBEDLAB_MODE_HILBERT = 0,
  EMBEDLAB_MODE_BANACH = 1,
} EmbedlabMode;

/**
 * Opaque layer chain built from a difference set.
 */
typedef struct EmbedlabChain EmbedlabChain;

/**
 * Opaque finite point set with a fixed norm.
 */
typedef struct EmbedlabPointSet EmbedlabPointSet;

/**
 * Opaque sampled linear map with its generating configuration.
 */
typedef struct EmbedlabProbeMap EmbedlabProbeMap;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Crate version as a static NUL-terminated string.
 */
const char *embedlab_version(void);

/**
 * Message describing the most recent failure on this thread. The pointer
 * stays valid until the next failing embedlab call on the same thread.
 */
const char *embedlab_last_error_message(void);

/**
 * Builds a point set from `n` rows of `dim` coordinates in row-major
 * order. `norm` takes `EMBEDLAB_NORM_*` values.
 * # Safety
 * `data` must point to `n * dim` readable doubles and `out` must be a valid write target.
 */
enum EmbedlabStatus embedlab_pointset_new(const double *data,
                                          size_t n,
                                          size_t dim,
                                          int norm,
                                          struct EmbedlabPointSet **out);

/**
 * # Safety
 * `p` must be NULL or a pointer obtained from `embedlab_pointset_new` that has not been freed.
 */
void embedlab_pointset_free(struct EmbedlabPointSet *p);

/**
 * Number of points; 0 for NULL.
 * # Safety
 * `p` must be NULL or a live point-set handle.
 */
size_t embedlab_pointset_len(const struct EmbedlabPointSet *p);

/**
 * Ambient dimension; 0 for NULL.
 * # Safety
 * `p` must be NULL or a live point-set handle.
 */
size_t embedlab_pointset_dim(const struct EmbedlabPointSet *p);

/**
 * Diameter in the set's own norm.
 * # Safety
 * `p` must be a live handle and `out` a valid write target.
 */
enum EmbedlabStatus embedlab_pointset_diameter(const struct EmbedlabPointSet *p, double *out);

/**
 * Density at `offset` of the hyperplane section of the unit cube with
 * Euclidean unit normal `a` (length `dim`).
 * # Safety
 * `a` must point to `dim` readable doubles and `out` must be a valid write target.
 */
enum EmbedlabStatus embedlab_section_density(const double *a,
                                             size_t dim,
                                             double offset,
                                             double *out);

/**
 * Volume of the slab |<x, a> - y| <= eps inside the unit cube.
 * # Safety
 * `a` must point to `dim` readable doubles and `out` must be a valid write target.
 */
enum EmbedlabStatus embedlab_slab_volume(const double *a,
                                         size_t dim,
                                         double y,
                                         double eps,
                                         double *out);

/**
 * Homogeneity fit over an automatic two-scale grid: `s_hat` receives the
 * dimension-like exponent, `m_hat` the matching localized-count constant.
 * # Safety
 * `p` must be a live handle; `s_hat` and `m_hat` must be valid write targets.
 */
enum EmbedlabStatus embedlab_assouad_estimate(const struct EmbedlabPointSet *p,
                                              double *s_hat,
                                              double *m_hat);

/**
 * Builds the layer chain of the set's difference set in the geometry of
 * `mode` (`EMBEDLAB_MODE_*`). With `normalize` nonzero the set is first
 * scaled so its diameter is at most 1/4, which places every difference
 * layer in the probed range j >= 1.
 * # Safety
 * `p` must be a live handle and `out` a valid write target.
 */
enum EmbedlabStatus embedlab_chain_build(const struct EmbedlabPointSet *p,
                                         int mode,
                                         int normalize,
                                         struct EmbedlabChain **out);

/**
 * # Safety
 * `c` must be NULL or a pointer obtained from `embedlab_chain_build` that has not been freed.
 */
void embedlab_chain_free(struct EmbedlabChain *c);

/**
 * Samples trial `trial` of the random map attached to `chain`. Layer
 * weights decay as j^-s_decay; blocks deeper than `j_max` are truncated,
 * and `j_max <= 0` selects the deepest stored layer automatically.
 * # Safety
 * `chain` must be a live handle and `out` a valid write target.
 */
enum EmbedlabStatus embedlab_probe_sample(const struct EmbedlabChain *chain,
                                          size_t n_out,
                                          double s_decay,
                                          int32_t j_max,
                                          uint64_t seed,
                                          uint32_t trial,
                                          struct EmbedlabProbeMap **out);

/**
 * # Safety
 * `m` must be NULL or a pointer obtained from `embedlab_probe_sample` that has not been freed.
 */
void embedlab_probe_free(struct EmbedlabProbeMap *m);

/**
 * Output dimension of the sampled map; 0 for NULL.
 * # Safety
 * `m` must be NULL or a live probe-map handle.
 */
size_t embedlab_probe_n_out(const struct EmbedlabProbeMap *m);

/**
 * Input dimension of the sampled map; 0 for NULL.
 * # Safety
 * `m` must be NULL or a live probe-map handle.
 */
size_t embedlab_probe_dim(const struct EmbedlabProbeMap *m);

/**
 * Applies the map to `z` (length `dim`), writing `n_out` coordinates.
 * # Safety
 * `m` must be a live handle; `z` must point to `dim` readable and `out` to `out_len` writable doubles.
 */
enum EmbedlabStatus embedlab_probe_apply(const struct EmbedlabProbeMap *m,
                                         const double *z,
                                         size_t dim,
                                         double *out,
                                         size_t out_len);

/**
 * Copies the row-major n_out x dim matrix into `buf`.
 * # Safety
 * `m` must be a live handle and `buf` must point to `buf_len` writable doubles.
 */
enum EmbedlabStatus embedlab_probe_matrix(const struct EmbedlabProbeMap *m,
                                          double *buf,
                                          size_t buf_len);

/**
 * Checks the two-sided almost-bi-Lipschitz estimate on all pairs of `p`
 * closer than `rho_l`. `*ok` receives 1 when every pair passes; on 0 the
 * first failing pair is described in the thread-local message.
 * # Safety
 * `m` and `p` must be live handles and `ok` a valid write target.
 */
enum EmbedlabStatus embedlab_verify_almost_bilip(const struct EmbedlabProbeMap *m,
                                                 const struct EmbedlabPointSet *p,
                                                 double gamma,
                                                 double c_l,
                                                 double rho_l,
                                                 int *ok);

/**
 * Profiles the map over the dyadic layers of the difference set of `p`
 * (in the map's own geometry) and fits the log-Lipschitz exponent on the
 * probed window, writing `gamma_hat` and the envelope constant `c_fit`.
 * # Safety
 * `m` and `p` must be live handles; `gamma_hat` and `c_fit` must be valid write targets.
 */
enum EmbedlabStatus embedlab_gamma_fit(const struct EmbedlabProbeMap *m,
                                       const struct EmbedlabPointSet *p,
                                       double *gamma_hat,
                                       double *c_fit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus
