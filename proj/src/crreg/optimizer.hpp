#pragma once

#include <vector>

#include "crreg/similarity.hpp"

namespace crreg {

struct ScaleSchedule {
  std::vector<int> factors{16, 8, 4, 2, 1};
  std::vector<int> iters{100, 100, 120, 140, 160};
  // Empty means "default rule": cr metrics use the global loss at factors
  // >= 8 and the patch loss at factors <= 4 (a 16x-downsampled volume
  // cannot host a full-size patch); mi is used at all scales when selected.
  std::vector<Metric> metric_per_scale;

  void validate() const;
  static ScaleSchedule with_metric(const std::vector<int>& factors,
                                   const std::vector<int>& iters, bool use_mi);
};

struct OptimizerConfig {
  enum class Method { adam, sgd };
  Method method = Method::adam;
  std::vector<double> lr;  // per scale; single entry applies everywhere
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 1.0;  // max gradient norm; 0 disables

  double lr_at(std::size_t scale_idx) const;
};

struct ScaleTrace {
  int factor = 1;
  std::vector<double> loss;
  std::vector<double> valid_fraction;
  double wall_time_s = 0;
};

struct RegistrationResult {
  AffineParams params;
  std::vector<ScaleTrace> traces;
  double valid_fraction = 0;  // at the final evaluation
};

// One resolution level of Algorithm-style optimization: exactly `iters`
// steps, deterministic for identical inputs.
std::pair<AffineParams, ScaleTrace> single_scale_optimize(
    const Volume& moving, const Volume& fixed, AffineParams alpha, int factor,
    int iters, Metric metric, const ParzenConfig& cfg, const PatchConfig& patch,
    const OptimizerConfig& opt, double lr);

// Coarse-to-fine instance-specific optimization. Volumes must already be
// intensity-normalized to [0,1]. Optimizer moment state resets at each scale
// change; alpha is carried across scales unchanged.
RegistrationResult multiscale_iso(const Volume& moving, const Volume& fixed,
                                  const AffineParams& init, const ScaleSchedule& sched,
                                  const ParzenConfig& cfg, const PatchConfig& patch,
                                  const OptimizerConfig& opt);

}  // namespace crreg
