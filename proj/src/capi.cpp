#include "crreg.h"

#include <cstring>
#include <string>

#include "crreg/affine.hpp"
#include "crreg/affine_doc.hpp"
#include "crreg/common.hpp"
#include "crreg/nifti.hpp"
#include "crreg/optimizer.hpp"
#include "crreg/phantom.hpp"
#include "crreg/similarity.hpp"
#include "crreg/volume.hpp"

struct crreg_volume {
  crreg::Volume v;
};

struct crreg_result {
  crreg::RegistrationResult r;
};

namespace {

thread_local std::string g_last_error;

crreg_status map_status(crreg::Status s) {
  using S = crreg::Status;
  switch (s) {
    case S::ok: return CRREG_OK;
    case S::invalid_argument: return CRREG_ERR_INVALID_ARG;
    case S::format_error: return CRREG_ERR_FORMAT;
    case S::unsupported_datatype: return CRREG_ERR_UNSUPPORTED_DATATYPE;
    case S::dimensionality_error: return CRREG_ERR_DIMENSIONALITY;
    case S::truncated_file: return CRREG_ERR_TRUNCATED;
    case S::io_error: return CRREG_ERR_IO;
    case S::constant_target: return CRREG_ERR_CONSTANT_TARGET;
    case S::no_overlap: return CRREG_ERR_NO_OVERLAP;
    case S::no_admissible_patches: return CRREG_ERR_NO_PATCHES;
    case S::singular_matrix: return CRREG_ERR_SINGULAR;
    case S::generation_failed: return CRREG_ERR_GENERATION;
    case S::internal_error: return CRREG_ERR_INTERNAL;
  }
  return CRREG_ERR_INTERNAL;
}

template <typename Fn>
crreg_status guarded(Fn&& fn) {
  try {
    fn();
    return CRREG_OK;
  } catch (const crreg::Error& e) {
    g_last_error = e.what();
    return map_status(e.status());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CRREG_ERR_INTERNAL;
  }
}

crreg::AffineParams to_cpp(const crreg_params& p) {
  crreg::AffineParams a;
  std::memcpy(a.t.data(), p.t, sizeof(p.t));
  std::memcpy(a.r.data(), p.r, sizeof(p.r));
  std::memcpy(a.s.data(), p.s, sizeof(p.s));
  std::memcpy(a.k.data(), p.k, sizeof(p.k));
  return a;
}

void to_c(const crreg::AffineParams& a, crreg_params& p) {
  std::memcpy(p.t, a.t.data(), sizeof(p.t));
  std::memcpy(p.r, a.r.data(), sizeof(p.r));
  std::memcpy(p.s, a.s.data(), sizeof(p.s));
  std::memcpy(p.k, a.k.data(), sizeof(p.k));
}

void require(bool cond, const char* msg) {
  if (!cond) crreg::fail(crreg::Status::invalid_argument, msg);
}

crreg::Volume normalized(const crreg::Volume& v) {
  crreg::NormalizationPolicy pol;  // percentile 0.5/99.5
  return crreg::normalize_intensity(v, pol).volume;
}

}  // namespace

extern "C" {

const char* crreg_last_error(void) { return g_last_error.c_str(); }

const char* crreg_version(void) { return "0.1.0"; }

void crreg_set_max_threads(int n) { crreg::set_max_threads(n); }

crreg_status crreg_volume_read(const char* path, crreg_volume** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new crreg_volume{crreg::read_nifti(path)};
  });
}

crreg_status crreg_volume_write(const crreg_volume* vol, const char* path,
                                int nifti_datatype) {
  return guarded([&] {
    require(vol && path, "null argument");
    crreg::write_nifti(vol->v, path,
                       static_cast<crreg::NiftiDatatype>(nifti_datatype));
  });
}

crreg_status crreg_volume_create(const int dims[3], const double spacing[3],
                                 const double* data, crreg_volume** out) {
  return guarded([&] {
    require(dims && spacing && data && out, "null argument");
    const std::size_t n =
        static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    *out = new crreg_volume{crreg::make_volume(
        {dims[0], dims[1], dims[2]}, {spacing[0], spacing[1], spacing[2]},
        std::vector<double>(data, data + n))};
  });
}

void crreg_volume_free(crreg_volume* vol) { delete vol; }

void crreg_volume_dims(const crreg_volume* vol, int dims[3]) {
  for (int a = 0; a < 3; ++a) dims[a] = vol->v.dims[a];
}

void crreg_volume_spacing(const crreg_volume* vol, double spacing[3]) {
  for (int a = 0; a < 3; ++a) spacing[a] = vol->v.spacing[a];
}

const double* crreg_volume_data(const crreg_volume* vol) { return vol->v.data.data(); }

size_t crreg_volume_voxels(const crreg_volume* vol) { return vol->v.voxel_count(); }

crreg_status crreg_volume_normalize(const crreg_volume* vol, int mode, double p_lo,
                                    double p_hi, crreg_volume** out, int* degenerate) {
  return guarded([&] {
    require(vol && out, "null argument");
    crreg::NormalizationPolicy pol;
    pol.mode = mode == CRREG_NORM_MINMAX ? crreg::NormalizationPolicy::Mode::minmax
                                         : crreg::NormalizationPolicy::Mode::percentile;
    pol.p_lo = p_lo;
    pol.p_hi = p_hi;
    auto res = crreg::normalize_intensity(vol->v, pol);
    if (degenerate) *degenerate = res.degenerate_range ? 1 : 0;
    *out = new crreg_volume{std::move(res.volume)};
  });
}

crreg_status crreg_volume_downsample(const crreg_volume* vol, int factor,
                                     crreg_volume** out) {
  return guarded([&] {
    require(vol && out, "null argument");
    *out = new crreg_volume{crreg::gaussian_downsample(vol->v, factor)};
  });
}

void crreg_params_identity(crreg_params* p) { to_c(crreg::AffineParams::identity(), *p); }

crreg_status crreg_matrix_normalized(const crreg_params* p, double m[16]) {
  return guarded([&] {
    require(p && m, "null argument");
    const auto mat = crreg::build_matrix(to_cpp(*p));
    std::memcpy(m, mat.data(), 16 * sizeof(double));
  });
}

crreg_status crreg_matrix_world(const crreg_params* p, const crreg_volume* fixed,
                                const crreg_volume* moving, double m[16]) {
  return guarded([&] {
    require(p && fixed && moving && m, "null argument");
    const auto mat = crreg::params_to_world_matrix(to_cpp(*p), fixed->v, moving->v);
    std::memcpy(m, mat.data(), 16 * sizeof(double));
  });
}

crreg_status crreg_matrix_invert(const double m[16], double out[16]) {
  return guarded([&] {
    require(m && out, "null argument");
    crreg::Mat4 a;
    std::memcpy(a.data(), m, 16 * sizeof(double));
    const auto inv = crreg::invert(a);
    std::memcpy(out, inv.data(), 16 * sizeof(double));
  });
}

crreg_status crreg_warp(const crreg_volume* moving, const crreg_volume* fixed,
                        const crreg_params* p, int interp, crreg_volume** out_warped,
                        crreg_volume** out_validity) {
  return guarded([&] {
    require(moving && fixed && p && out_warped, "null argument");
    auto res = crreg::warp(moving->v, fixed->v, to_cpp(*p),
                           interp == CRREG_INTERP_NEAREST ? crreg::Interp::nearest
                                                          : crreg::Interp::trilinear);
    if (out_validity) {
      crreg::Volume mask;
      mask.dims = fixed->v.dims;
      mask.spacing = fixed->v.spacing;
      mask.data.assign(res.validity.begin(), res.validity.end());
      *out_validity = new crreg_volume{std::move(mask)};
    }
    *out_warped = new crreg_volume{std::move(res.warped)};
  });
}

crreg_status crreg_similarity(int metric, const crreg_volume* moving,
                              const crreg_volume* fixed, const crreg_params* p,
                              int bins, double bandwidth_ratio, double* value,
                              size_t* n_effective) {
  return guarded([&] {
    require(moving && fixed && value, "null argument");
    const crreg::Volume mov = normalized(moving->v);
    const crreg::Volume fix = normalized(fixed->v);
    const crreg::AffineParams params =
        p ? to_cpp(*p) : crreg::AffineParams::identity();
    auto wres = crreg::warp(mov, fix, params, crreg::Interp::trilinear);
    std::vector<double> x, y;
    x.reserve(wres.warped.data.size());
    y.reserve(wres.warped.data.size());
    for (std::size_t i = 0; i < wres.warped.data.size(); ++i) {
      if (!wres.validity[i]) continue;
      x.push_back(wres.warped.data[i]);
      y.push_back(fix.data[i]);
    }
    if (x.size() < 2) crreg::fail(crreg::Status::no_overlap, "no overlap");
    crreg::ParzenConfig cfg;
    cfg.num_bins = bins > 0 ? bins : 32;
    cfg.bandwidth_ratio = bandwidth_ratio > 0 ? bandwidth_ratio : 0.5;
    switch (metric) {
      case CRREG_SIM_CR:
        *value = -crreg::cr_loss_symmetric(x, y, cfg);
        break;
      case CRREG_SIM_CR_DISCRETE:
        *value = crreg::discrete_cr_oracle(x, y, cfg.num_bins);
        break;
      case CRREG_SIM_MI:
        *value = crreg::mutual_information(x, y, cfg);
        break;
      default:
        crreg::fail(crreg::Status::invalid_argument, "unknown similarity metric");
    }
    if (n_effective) *n_effective = x.size();
  });
}

void crreg_register_opts_default(crreg_register_opts* opts) {
  std::memset(opts, 0, sizeof(*opts));
  const int scales[5] = {16, 8, 4, 2, 1};
  const int iters[5] = {100, 100, 120, 140, 160};
  opts->n_scales = 5;
  std::memcpy(opts->scales, scales, sizeof(scales));
  std::memcpy(opts->iters, iters, sizeof(iters));
  opts->metric = CRREG_METRIC_CR;
  opts->bins = 32;
  opts->bandwidth_ratio = 0.5;
  opts->patch_size = 16;
  opts->lr = 0.01;
  opts->optimizer = CRREG_OPT_ADAM;
  opts->grad_clip = 1.0;
  opts->threads = 0;
}

crreg_status crreg_register_run(const crreg_volume* moving, const crreg_volume* fixed,
                                const crreg_params* init,
                                const crreg_register_opts* opts, crreg_params* out,
                                crreg_result** out_result) {
  return guarded([&] {
    require(moving && fixed && opts && out, "null argument");
    require(opts->n_scales >= 1 && opts->n_scales <= CRREG_MAX_SCALES,
            "invalid scale count");
    crreg::set_max_threads(opts->threads);
    const std::vector<int> scales(opts->scales, opts->scales + opts->n_scales);
    const std::vector<int> iters(opts->iters, opts->iters + opts->n_scales);
    const auto sched = crreg::ScaleSchedule::with_metric(
        scales, iters, opts->metric == CRREG_METRIC_MI);
    crreg::ParzenConfig cfg;
    cfg.num_bins = opts->bins;
    cfg.bandwidth_ratio = opts->bandwidth_ratio;
    crreg::PatchConfig patch;
    patch.patch_size = opts->patch_size;
    crreg::OptimizerConfig oc;
    oc.method = opts->optimizer == CRREG_OPT_SGD ? crreg::OptimizerConfig::Method::sgd
                                                 : crreg::OptimizerConfig::Method::adam;
    oc.lr = {opts->lr};
    oc.grad_clip = opts->grad_clip;
    const crreg::Volume mov = normalized(moving->v);
    const crreg::Volume fix = normalized(fixed->v);
    const crreg::AffineParams alpha0 =
        init ? to_cpp(*init) : crreg::AffineParams::identity();
    auto res = crreg::multiscale_iso(mov, fix, alpha0, sched, cfg, patch, oc);
    to_c(res.params, *out);
    if (out_result) *out_result = new crreg_result{std::move(res)};
  });
}

void crreg_result_free(crreg_result* res) { delete res; }

int crreg_result_n_scales(const crreg_result* res) {
  return static_cast<int>(res->r.traces.size());
}

int crreg_result_scale_factor(const crreg_result* res, int scale) {
  return res->r.traces[scale].factor;
}

int crreg_result_trace_len(const crreg_result* res, int scale) {
  return static_cast<int>(res->r.traces[scale].loss.size());
}

void crreg_result_trace(const crreg_result* res, int scale, double* loss,
                        double* valid_fraction) {
  const auto& t = res->r.traces[scale];
  if (loss) std::memcpy(loss, t.loss.data(), t.loss.size() * sizeof(double));
  if (valid_fraction)
    std::memcpy(valid_fraction, t.valid_fraction.data(),
                t.valid_fraction.size() * sizeof(double));
}

double crreg_result_wall_time(const crreg_result* res, int scale) {
  return res->r.traces[scale].wall_time_s;
}

double crreg_result_valid_fraction(const crreg_result* res) {
  return res->r.valid_fraction;
}

crreg_status crreg_affine_save(const char* path, const crreg_params* p,
                               const crreg_volume* fixed, const crreg_volume* moving,
                               const char* metric, const int* scales, const int* iters,
                               int n_scales, const char* seed) {
  return guarded([&] {
    require(path && p, "null argument");
    const crreg::AffineParams params = to_cpp(*p);
    const crreg::Mat4 world =
        fixed && moving ? crreg::params_to_world_matrix(params, fixed->v, moving->v)
                        : crreg::build_matrix(params);
    crreg::AffineDocMeta meta;
    meta.metric = metric ? metric : "";
    if (scales && n_scales > 0) meta.scales.assign(scales, scales + n_scales);
    if (iters && n_scales > 0) meta.iters.assign(iters, iters + n_scales);
    meta.seed = seed ? seed : "";
    meta.tool_version = crreg_version();
    crreg::save_affine_document(path, params, world, meta);
  });
}

crreg_status crreg_affine_load(const char* path, crreg_params* out) {
  return guarded([&] {
    require(path && out, "null argument");
    to_c(crreg::load_affine_document(path).params, *out);
  });
}

crreg_status crreg_phantom(uint64_t seed, const int dims[3], const double spacing[3],
                           int n_blobs, double noise_sigma, double blur_sigma_pet,
                           crreg_volume** ct, crreg_volume** pet,
                           crreg_volume** labels) {
  return guarded([&] {
    require(dims && spacing && ct && pet && labels, "null argument");
    crreg::PhantomSpec spec;
    spec.dims = {dims[0], dims[1], dims[2]};
    spec.spacing = {spacing[0], spacing[1], spacing[2]};
    spec.seed = seed;
    spec.n_blobs = n_blobs;
    spec.noise_sigma = noise_sigma;
    spec.blur_sigma_pet = blur_sigma_pet;
    auto pair = crreg::make_phantom_pair(spec);
    *ct = new crreg_volume{std::move(pair.ct_like)};
    *pet = new crreg_volume{std::move(pair.pet_like)};
    *labels = new crreg_volume{std::move(pair.labels)};
  });
}

crreg_status crreg_random_affine(uint64_t seed, double max_rot, double max_trans,
                                 double scale_lo, double scale_hi, double max_shear,
                                 crreg_params* out) {
  return guarded([&] {
    require(out, "null argument");
    crreg::TransformRanges ranges;
    ranges.max_rot = max_rot;
    ranges.max_trans = max_trans;
    ranges.scale_lo = scale_lo;
    ranges.scale_hi = scale_hi;
    ranges.max_shear = max_shear;
    to_c(crreg::random_affine(ranges, seed), *out);
  });
}

crreg_status crreg_dice(const crreg_volume* a, const crreg_volume* b, int* labels,
                        double* dsc, int max_labels, int* n_labels, double* mean) {
  return guarded([&] {
    require(a && b, "null argument");
    const auto res = crreg::dice(a->v, b->v);
    int n = 0;
    for (const auto& [lab, d] : res.per_label) {
      if (labels && dsc && n < max_labels) {
        labels[n] = lab;
        dsc[n] = d;
      }
      ++n;
    }
    if (n_labels) *n_labels = n;
    if (mean) *mean = res.mean;
  });
}

crreg_status crreg_displacement_error(const crreg_params* a, const crreg_params* b,
                                      const crreg_volume* fixed, double* mean_mm,
                                      double* max_mm) {
  return guarded([&] {
    require(a && b && fixed, "null argument");
    const auto res = crreg::displacement_error(to_cpp(*a), to_cpp(*b), fixed->v);
    if (mean_mm) *mean_mm = res.mean_mm;
    if (max_mm) *max_mm = res.max_mm;
  });
}

}  // extern "C"
