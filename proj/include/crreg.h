/* crreg — multi-modal affine registration engine.
 *
 * C API over the C++ core: opaque handles, status codes, thread-local error
 * messages. All functions returning crreg_status set crreg_last_error() on
 * failure. Handles are freed with the matching *_free function.
 */
#ifndef CRREG_H
#define CRREG_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum crreg_status {
  CRREG_OK = 0,
  CRREG_ERR_INVALID_ARG = 1,
  CRREG_ERR_FORMAT = 2,
  CRREG_ERR_UNSUPPORTED_DATATYPE = 3,
  CRREG_ERR_DIMENSIONALITY = 4,
  CRREG_ERR_TRUNCATED = 5,
  CRREG_ERR_IO = 6,
  CRREG_ERR_CONSTANT_TARGET = 7,
  CRREG_ERR_NO_OVERLAP = 8,
  CRREG_ERR_NO_PATCHES = 9,
  CRREG_ERR_SINGULAR = 10,
  CRREG_ERR_GENERATION = 11,
  CRREG_ERR_INTERNAL = 12,
} crreg_status;

/* Message for the most recent failure on this thread. */
const char* crreg_last_error(void);
const char* crreg_version(void);

/* Caps internal parallelism; 0 means "all cores". Results are identical for
 * any value. */
void crreg_set_max_threads(int n);

/* ---- volumes ---- */

typedef struct crreg_volume crreg_volume;

/* NIfTI datatype codes accepted by crreg_volume_write. */
enum {
  CRREG_DT_UINT8 = 2,
  CRREG_DT_INT16 = 4,
  CRREG_DT_INT32 = 8,
  CRREG_DT_FLOAT32 = 16,
  CRREG_DT_FLOAT64 = 64,
};

crreg_status crreg_volume_read(const char* path, crreg_volume** out);
crreg_status crreg_volume_write(const crreg_volume* vol, const char* path,
                                int nifti_datatype);
crreg_status crreg_volume_create(const int dims[3], const double spacing[3],
                                 const double* data, crreg_volume** out);
void crreg_volume_free(crreg_volume* vol);
void crreg_volume_dims(const crreg_volume* vol, int dims[3]);
void crreg_volume_spacing(const crreg_volume* vol, double spacing[3]);
const double* crreg_volume_data(const crreg_volume* vol);
size_t crreg_volume_voxels(const crreg_volume* vol);

enum { CRREG_NORM_MINMAX = 0, CRREG_NORM_PERCENTILE = 1 };

/* Clips to [lo, hi] per policy then maps to [0,1]. degenerate (may be NULL)
 * is set to 1 when the range collapsed and the output is all zeros. */
crreg_status crreg_volume_normalize(const crreg_volume* vol, int mode, double p_lo,
                                    double p_hi, crreg_volume** out, int* degenerate);

/* Anti-aliased pyramid level preserving the physical extent exactly. */
crreg_status crreg_volume_downsample(const crreg_volume* vol, int factor,
                                     crreg_volume** out);

/* ---- affine transforms ---- */

/* The 12 affine parameters: translation (normalized units), rotation
 * (radians), scale and shear (dimensionless). */
typedef struct crreg_params {
  double t[3];
  double r[3];
  double s[3];
  double k[3];
} crreg_params;

void crreg_params_identity(crreg_params* p);

/* Normalized-space matrix T*Rz*Ry*Rx*K*S, row-major 4x4. */
crreg_status crreg_matrix_normalized(const crreg_params* p, double m[16]);
/* Millimeter-space fixed->moving matrix (center-relative coordinates). */
crreg_status crreg_matrix_world(const crreg_params* p, const crreg_volume* fixed,
                                const crreg_volume* moving, double m[16]);

enum { CRREG_INTERP_TRILINEAR = 0, CRREG_INTERP_NEAREST = 1 };

/* Pull-back warp of moving onto fixed's grid. out_validity (may be NULL)
 * receives a volume holding 1 where the sample fell inside moving. */
crreg_status crreg_warp(const crreg_volume* moving, const crreg_volume* fixed,
                        const crreg_params* p, int interp, crreg_volume** out_warped,
                        crreg_volume** out_validity);

/* ---- similarity metrics ---- */

enum { CRREG_SIM_CR = 0, CRREG_SIM_CR_DISCRETE = 1, CRREG_SIM_MI = 2 };

/* Metric between warp(moving, fixed, p) and fixed (p NULL means identity),
 * evaluated over valid voxels. CR is the symmetric Parzen correlation ratio
 * reported as a similarity (mean of the two directed CRs); CR_DISCRETE is
 * the hard-binned oracle eta(fixed|moving); MI is Parzen mutual
 * information. */
crreg_status crreg_similarity(int metric, const crreg_volume* moving,
                              const crreg_volume* fixed, const crreg_params* p,
                              int bins, double bandwidth_ratio, double* value,
                              size_t* n_effective);

/* ---- registration ---- */

typedef struct crreg_result crreg_result;

enum { CRREG_METRIC_CR = 0, CRREG_METRIC_MI = 1 };
enum { CRREG_OPT_ADAM = 0, CRREG_OPT_SGD = 1 };

#define CRREG_MAX_SCALES 16

typedef struct crreg_register_opts {
  int n_scales;
  int scales[CRREG_MAX_SCALES]; /* strictly decreasing, ending at 1 */
  int iters[CRREG_MAX_SCALES];
  int metric;            /* CRREG_METRIC_* */
  int bins;              /* Parzen bins, default 32 */
  double bandwidth_ratio; /* bandwidth as multiple of bin width, default 0.5 */
  int patch_size;        /* patch edge length for the local CR loss, default 16 */
  double lr;             /* default 0.01 */
  int optimizer;         /* CRREG_OPT_* */
  double grad_clip;      /* max gradient norm, 0 disables, default 1 */
  int threads;           /* 0 = all cores */
} crreg_register_opts;

void crreg_register_opts_default(crreg_register_opts* opts);

/* Intensity-normalizes both volumes (percentile 0.5/99.5), then runs
 * multi-scale instance-specific optimization from init (NULL = identity).
 * out_result (may be NULL) receives per-scale loss traces. */
crreg_status crreg_register_run(const crreg_volume* moving, const crreg_volume* fixed,
                                const crreg_params* init,
                                const crreg_register_opts* opts, crreg_params* out,
                                crreg_result** out_result);

void crreg_result_free(crreg_result* res);
int crreg_result_n_scales(const crreg_result* res);
int crreg_result_scale_factor(const crreg_result* res, int scale);
int crreg_result_trace_len(const crreg_result* res, int scale);
/* Copies trace_len(scale) entries into loss / valid_fraction (either may be
 * NULL). */
void crreg_result_trace(const crreg_result* res, int scale, double* loss,
                        double* valid_fraction);
double crreg_result_wall_time(const crreg_result* res, int scale);
double crreg_result_valid_fraction(const crreg_result* res);

/* ---- affine documents ---- */

/* Structured-text (JSON) document with the 12 parameters, normalized and
 * world-space matrices at full precision, and provenance metadata. fixed and
 * moving (may be NULL) supply the geometry for the world-space matrix. */
crreg_status crreg_affine_save(const char* path, const crreg_params* p,
                               const crreg_volume* fixed, const crreg_volume* moving,
                               const char* metric, const int* scales, const int* iters,
                               int n_scales, const char* seed);
crreg_status crreg_affine_load(const char* path, crreg_params* out);

/* ---- synthetic evaluation ---- */

crreg_status crreg_phantom(uint64_t seed, const int dims[3], const double spacing[3],
                           int n_blobs, double noise_sigma, double blur_sigma_pet,
                           crreg_volume** ct, crreg_volume** pet,
                           crreg_volume** labels);

crreg_status crreg_random_affine(uint64_t seed, double max_rot, double max_trans,
                                 double scale_lo, double scale_hi, double max_shear,
                                 crreg_params* out);

/* Per-label Dice over the shared grid (nonzero labels present in either
 * volume). Writes up to max_labels entries. */
crreg_status crreg_dice(const crreg_volume* a, const crreg_volume* b, int* labels,
                        double* dsc, int max_labels, int* n_labels, double* mean);

crreg_status crreg_displacement_error(const crreg_params* a, const crreg_params* b,
                                      const crreg_volume* fixed, double* mean_mm,
                                      double* max_mm);

/* Inverse of the parameter transform, returned as a matrix (the 12-parameter
 * decomposition of an inverse is not needed by any consumer). */
crreg_status crreg_matrix_invert(const double m[16], double out[16]);

#ifdef __cplusplus
}
#endif

#endif /* CRREG_H */
