#include "crreg/optimizer.hpp"

#include <chrono>
#include <cmath>

#include "crreg/common.hpp"

namespace crreg {

void ScaleSchedule::validate() const {
  if (factors.empty() || factors.size() != iters.size())
    fail(Status::invalid_argument, "schedule lists must be non-empty and equal length");
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (factors[i] < 1) fail(Status::invalid_argument, "scale factor must be >= 1");
    if (i && factors[i] >= factors[i - 1])
      fail(Status::invalid_argument, "scale factors must be strictly decreasing");
    if (iters[i] < 1) fail(Status::invalid_argument, "iteration count must be >= 1");
  }
  if (factors.back() != 1)
    fail(Status::invalid_argument, "scale schedule must end at factor 1");
  if (!metric_per_scale.empty() && metric_per_scale.size() != factors.size())
    fail(Status::invalid_argument, "metric_per_scale length mismatch");
}

ScaleSchedule ScaleSchedule::with_metric(const std::vector<int>& factors,
                                         const std::vector<int>& iters, bool use_mi) {
  ScaleSchedule s;
  s.factors = factors;
  s.iters = iters;
  s.metric_per_scale.clear();
  for (int f : factors) {
    if (use_mi)
      s.metric_per_scale.push_back(Metric::mi);
    else
      s.metric_per_scale.push_back(f >= 8 ? Metric::cr_global : Metric::cr_patch);
  }
  s.validate();
  return s;
}

double OptimizerConfig::lr_at(std::size_t scale_idx) const {
  if (lr.empty()) return 0.01;
  if (lr.size() == 1) return lr[0];
  return lr[std::min(scale_idx, lr.size() - 1)];
}

namespace {

void clip_gradient(std::array<double, 12>& g, double max_norm) {
  if (max_norm <= 0) return;
  double norm2 = 0;
  for (double v : g) norm2 += v * v;
  const double norm = std::sqrt(norm2);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (double& v : g) v *= s;
  }
}

}  // namespace

std::pair<AffineParams, ScaleTrace> single_scale_optimize(
    const Volume& moving, const Volume& fixed, AffineParams alpha, int factor,
    int iters, Metric metric, const ParzenConfig& cfg, const PatchConfig& patch,
    const OptimizerConfig& opt, double lr) {
  if (iters < 1) fail(Status::invalid_argument, "iteration count must be >= 1");
  if (!(lr > 0)) fail(Status::invalid_argument, "learning rate must be > 0");
  if (opt.beta1 < 0 || opt.beta1 >= 1 || opt.beta2 < 0 || opt.beta2 >= 1)
    fail(Status::invalid_argument, "adam betas must be in [0,1)");

  ScaleTrace trace;
  trace.factor = factor;
  trace.loss.reserve(iters);
  trace.valid_fraction.reserve(iters);

  std::array<double, 12> m{}, v{};
  const auto t0 = std::chrono::steady_clock::now();
  for (int it = 0; it < iters; ++it) {
    LossGrad lg = loss_and_gradient(alpha, moving, fixed, metric, cfg, patch);
    trace.loss.push_back(lg.loss);
    trace.valid_fraction.push_back(lg.valid_fraction);
    clip_gradient(lg.grad, opt.grad_clip);
    if (opt.method == OptimizerConfig::Method::sgd) {
      for (int i = 0; i < 12; ++i) alpha.flat(i) -= lr * lg.grad[i];
    } else {
      const double b1t = std::pow(opt.beta1, it + 1);
      const double b2t = std::pow(opt.beta2, it + 1);
      for (int i = 0; i < 12; ++i) {
        m[i] = opt.beta1 * m[i] + (1 - opt.beta1) * lg.grad[i];
        v[i] = opt.beta2 * v[i] + (1 - opt.beta2) * lg.grad[i] * lg.grad[i];
        const double mhat = m[i] / (1 - b1t);
        const double vhat = v[i] / (1 - b2t);
        alpha.flat(i) -= lr * mhat / (std::sqrt(vhat) + opt.eps);
      }
    }
  }
  trace.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {alpha, std::move(trace)};
}

RegistrationResult multiscale_iso(const Volume& moving, const Volume& fixed,
                                  const AffineParams& init, const ScaleSchedule& sched,
                                  const ParzenConfig& cfg, const PatchConfig& patch,
                                  const OptimizerConfig& opt) {
  sched.validate();
  RegistrationResult res;
  res.params = init;
  for (std::size_t idx = 0; idx < sched.factors.size(); ++idx) {
    const int factor = sched.factors[idx];
    const Volume m_hat = gaussian_downsample(moving, factor);
    const Volume f_hat = gaussian_downsample(fixed, factor);
    const Metric metric = sched.metric_per_scale.empty()
                              ? (factor >= 8 ? Metric::cr_global : Metric::cr_patch)
                              : sched.metric_per_scale[idx];
    auto [alpha, trace] =
        single_scale_optimize(m_hat, f_hat, res.params, factor, sched.iters[idx],
                              metric, cfg, patch, opt, opt.lr_at(idx));
    res.params = alpha;
    res.traces.push_back(std::move(trace));
  }
  res.valid_fraction = res.traces.back().valid_fraction.back();
  return res;
}

}  // namespace crreg
