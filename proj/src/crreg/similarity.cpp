#include "crreg/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "crreg/common.hpp"
#include "crreg/parallel.hpp"

namespace crreg {

namespace {

constexpr double kBinEps = 1e-12;   // bins with less total weight are skipped
constexpr double kVarEps = 1e-12;   // below this the target is constant
constexpr double kCellEps = 1e-12;  // joint-histogram cells below this are skipped
// Gaussian windows are truncated at 8 bandwidths (weight ~1.3e-14), far below
// every stated tolerance.
constexpr double kWindowHalfWidth = 8.0;

struct BinRange {
  int lo, hi;  // inclusive
};

BinRange bin_range(double x, const ParzenConfig& cfg) {
  const double h = cfg.bandwidth();
  const double half = kWindowHalfWidth * h;
  // bin_k = (k + 0.5)/K  =>  k = x*K - 0.5
  int lo = static_cast<int>(std::ceil((x - half) * cfg.num_bins - 0.5));
  int hi = static_cast<int>(std::floor((x + half) * cfg.num_bins - 0.5));
  lo = std::max(lo, 0);
  hi = std::min(hi, cfg.num_bins - 1);
  return {lo, hi};
}

std::size_t count_valid(const std::uint8_t* valid, std::size_t n) {
  if (!valid) return n;
  std::size_t c = 0;
  for (std::size_t i = 0; i < n; ++i) c += valid[i];
  return c;
}

// Mean and population variance over the valid subset.
void mean_var(const double* v, const std::uint8_t* valid, std::size_t n,
              std::size_t count, double& mean, double& var) {
  double s = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (!valid || valid[i]) s += v[i];
  mean = s / count;
  double ss = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (!valid || valid[i]) ss += (v[i] - mean) * (v[i] - mean);
  var = ss / count;
}

// eta(Y|X): x soft-binned, y the target. If dgrad is non-null, adds
// d(eta)/dx_i into dgrad[i] for valid voxels.
double eta_binned(const double* x, const double* y, const std::uint8_t* valid,
                  std::size_t n, const ParzenConfig& cfg, double* dgrad) {
  const std::size_t count = count_valid(valid, n);
  if (count < 2) fail(Status::invalid_argument, "need at least 2 samples");
  double ybar, yvar;
  mean_var(y, valid, n, count, ybar, yvar);
  if (yvar < kVarEps) fail(Status::constant_target, "target image is constant");

  const int K = cfg.num_bins;
  const double h = cfg.bandwidth();
  const double g0 = 1.0 / (h * std::sqrt(2.0 * M_PI));
  const double inv2h2 = 1.0 / (2.0 * h * h);

  // Per-bin weight sums, chunked for a thread-count-independent reduction.
  const std::size_t nchunks = chunk_count(n);
  std::vector<double> partial(nchunks * 2 * K, 0.0);
  for_chunks(n, [&](std::size_t c, std::size_t b, std::size_t e) {
    double* S = partial.data() + c * 2 * K;
    double* T = S + K;
    for (std::size_t i = b; i < e; ++i) {
      if (valid && !valid[i]) continue;
      const BinRange r = bin_range(x[i], cfg);
      for (int k = r.lo; k <= r.hi; ++k) {
        const double d = x[i] - cfg.bin_center(k);
        const double w = g0 * std::exp(-d * d * inv2h2);
        S[k] += w;
        T[k] += w * y[i];
      }
    }
  });
  std::vector<double> S(K, 0.0), T(K, 0.0);
  for (std::size_t c = 0; c < nchunks; ++c)
    for (int k = 0; k < K; ++k) {
      S[k] += partial[c * 2 * K + k];
      T[k] += partial[c * 2 * K + K + k];
    }

  double W = 0;
  for (int k = 0; k < K; ++k) W += S[k];
  if (W < kBinEps) fail(Status::internal_error, "empty Parzen histogram");

  std::vector<double> ybar_k(K, 0.0);
  std::vector<std::uint8_t> active(K, 0);
  double sigma2_cond = 0;
  for (int k = 0; k < K; ++k) {
    if (S[k] < kBinEps) continue;
    active[k] = 1;
    ybar_k[k] = T[k] / S[k];
    const double d = ybar_k[k] - ybar;
    sigma2_cond += (S[k] / W) * d * d;
  }
  const double eta = sigma2_cond / yvar;

  if (dgrad) {
    std::vector<double> A(K, 0.0), B(K, 0.0);
    for (int k = 0; k < K; ++k) {
      if (!active[k]) continue;
      const double d = ybar_k[k] - ybar;
      A[k] = d * d / W;
      B[k] = 2.0 * (S[k] / W) * d / S[k];
    }
    const double C = sigma2_cond / W;
    const double inv_yvar = 1.0 / yvar;
    for_chunks(n, [&](std::size_t, std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        if (valid && !valid[i]) continue;
        const BinRange r = bin_range(x[i], cfg);
        double acc = 0;
        for (int k = r.lo; k <= r.hi; ++k) {
          const double d = x[i] - cfg.bin_center(k);
          const double w = g0 * std::exp(-d * d * inv2h2);
          const double wp = -w * d * 2.0 * inv2h2;  // d w / d x_i
          double term = -C;
          if (active[k]) term += A[k] + B[k] * (y[i] - ybar_k[k]);
          acc += wp * term;
        }
        dgrad[i] += acc * inv_yvar;
      }
    });
  }
  return eta;
}

// eta(X|Y): y soft-binned (weights constant in x), x the target. If dgrad is
// non-null, adds d(eta)/dx_i into dgrad[i].
double eta_target(const double* x, const double* y, const std::uint8_t* valid,
                  std::size_t n, const ParzenConfig& cfg, double* dgrad) {
  const std::size_t count = count_valid(valid, n);
  if (count < 2) fail(Status::invalid_argument, "need at least 2 samples");
  double xbar, xvar;
  mean_var(x, valid, n, count, xbar, xvar);
  if (xvar < kVarEps) fail(Status::constant_target, "target image is constant");

  const int K = cfg.num_bins;
  const double h = cfg.bandwidth();
  const double g0 = 1.0 / (h * std::sqrt(2.0 * M_PI));
  const double inv2h2 = 1.0 / (2.0 * h * h);

  const std::size_t nchunks = chunk_count(n);
  std::vector<double> partial(nchunks * 2 * K, 0.0);
  for_chunks(n, [&](std::size_t c, std::size_t b, std::size_t e) {
    double* S = partial.data() + c * 2 * K;
    double* U = S + K;
    for (std::size_t i = b; i < e; ++i) {
      if (valid && !valid[i]) continue;
      const BinRange r = bin_range(y[i], cfg);
      for (int k = r.lo; k <= r.hi; ++k) {
        const double d = y[i] - cfg.bin_center(k);
        const double w = g0 * std::exp(-d * d * inv2h2);
        S[k] += w;
        U[k] += w * x[i];
      }
    }
  });
  std::vector<double> S(K, 0.0), U(K, 0.0);
  for (std::size_t c = 0; c < nchunks; ++c)
    for (int k = 0; k < K; ++k) {
      S[k] += partial[c * 2 * K + k];
      U[k] += partial[c * 2 * K + K + k];
    }

  double W = 0;
  for (int k = 0; k < K; ++k) W += S[k];
  if (W < kBinEps) fail(Status::internal_error, "empty Parzen histogram");

  double sigma2_cond = 0, D = 0;
  std::vector<double> E(K, 0.0);
  std::vector<std::uint8_t> active(K, 0);
  for (int k = 0; k < K; ++k) {
    if (S[k] < kBinEps) continue;
    active[k] = 1;
    const double xbar_k = U[k] / S[k];
    const double nk = S[k] / W;
    const double d = xbar_k - xbar;
    sigma2_cond += nk * d * d;
    D += nk * d;
    E[k] = 2.0 * nk * d / S[k];
  }
  const double eta = sigma2_cond / xvar;

  if (dgrad) {
    const double inv_xvar = 1.0 / xvar;
    const double mean_term = 2.0 * D / count;
    for_chunks(n, [&](std::size_t, std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        if (valid && !valid[i]) continue;
        const BinRange r = bin_range(y[i], cfg);
        double acc = 0;
        for (int k = r.lo; k <= r.hi; ++k) {
          if (!active[k]) continue;
          const double d = y[i] - cfg.bin_center(k);
          const double w = g0 * std::exp(-d * d * inv2h2);
          acc += E[k] * w;
        }
        dgrad[i] += (acc - mean_term) * inv_xvar -
                    eta * inv_xvar * 2.0 * (x[i] - xbar) / count;
      }
    });
  }
  return eta;
}

// Parzen mutual information over the valid subset; natural log. If dgrad is
// non-null, adds d(MI)/dx_i into dgrad[i].
double mi_core(const double* x, const double* y, const std::uint8_t* valid,
               std::size_t n, const ParzenConfig& cfg, double* dgrad) {
  const std::size_t count = count_valid(valid, n);
  if (count < 2) fail(Status::invalid_argument, "need at least 2 samples");
  const int K = cfg.num_bins;
  const double h = cfg.bandwidth();
  const double g0 = 1.0 / (h * std::sqrt(2.0 * M_PI));
  const double inv2h2 = 1.0 / (2.0 * h * h);

  auto window = [&](double v, int k) {
    const double d = v - cfg.bin_center(k);
    return g0 * std::exp(-d * d * inv2h2);
  };

  const std::size_t nchunks = chunk_count(n);
  std::vector<double> partial(nchunks * K * K, 0.0);
  for_chunks(n, [&](std::size_t c, std::size_t b, std::size_t e) {
    double* N = partial.data() + c * K * K;
    double wx[512];
    for (std::size_t i = b; i < e; ++i) {
      if (valid && !valid[i]) continue;
      const BinRange rx = bin_range(x[i], cfg);
      const BinRange ry = bin_range(y[i], cfg);
      for (int k = rx.lo; k <= rx.hi; ++k) wx[k] = window(x[i], k);
      for (int l = ry.lo; l <= ry.hi; ++l) {
        const double wy = window(y[i], l);
        for (int k = rx.lo; k <= rx.hi; ++k) N[k * K + l] += wx[k] * wy;
      }
    }
  });
  std::vector<double> N(static_cast<std::size_t>(K) * K, 0.0);
  for (std::size_t c = 0; c < nchunks; ++c)
    for (int k = 0; k < K * K; ++k) N[k] += partial[c * K * K + k];

  // Z accumulated so that transposing N (input-role swap) yields a
  // bit-identical sum.
  double Z = 0;
  for (int k = 0; k < K; ++k) Z += N[k * K + k];
  for (int k = 0; k < K; ++k)
    for (int l = k + 1; l < K; ++l) Z += N[k * K + l] + N[l * K + k];
  if (Z < kBinEps) fail(Status::internal_error, "empty joint histogram");

  std::vector<double> Nx(K, 0.0), Ny(K, 0.0);
  for (int k = 0; k < K; ++k)
    for (int l = 0; l < K; ++l) Nx[k] += N[k * K + l];
  for (int l = 0; l < K; ++l)
    for (int k = 0; k < K; ++k) Ny[l] += N[k * K + l];

  // t(k,l) = P log(P / (Px Py)); accumulated so that swapping the input
  // roles (which transposes N) yields a bit-identical sum.
  auto cell = [&](int k, int l) -> double {
    const double P = N[k * K + l] / Z;
    if (!(P > kCellEps)) return 0.0;
    const double Px = Nx[k] / Z, Py = Ny[l] / Z;
    return P * std::log(P / (Px * Py));
  };
  double mi = 0;
  for (int k = 0; k < K; ++k) mi += cell(k, k);
  for (int k = 0; k < K; ++k)
    for (int l = k + 1; l < K; ++l) mi += cell(k, l) + cell(l, k);

  if (dgrad) {
    std::vector<double> G(static_cast<std::size_t>(K) * K, 0.0);
    for (int k = 0; k < K; ++k)
      for (int l = 0; l < K; ++l) {
        const double P = N[k * K + l] / Z;
        if (!(P > kCellEps)) continue;
        const double Px = Nx[k] / Z, Py = Ny[l] / Z;
        G[k * K + l] = (std::log(P / (Px * Py)) - mi) / Z;
      }
    for_chunks(n, [&](std::size_t, std::size_t b, std::size_t e) {
      double R[512];
      for (std::size_t i = b; i < e; ++i) {
        if (valid && !valid[i]) continue;
        const BinRange rx = bin_range(x[i], cfg);
        const BinRange ry = bin_range(y[i], cfg);
        for (int k = rx.lo; k <= rx.hi; ++k) {
          double r = 0;
          for (int l = ry.lo; l <= ry.hi; ++l)
            r += window(y[i], l) * G[k * K + l];
          R[k] = r;
        }
        double acc = 0;
        for (int k = rx.lo; k <= rx.hi; ++k) {
          const double d = x[i] - cfg.bin_center(k);
          const double w = g0 * std::exp(-d * d * inv2h2);
          const double wp = -w * d * 2.0 * inv2h2;
          acc += wp * R[k];
        }
        dgrad[i] += acc;
      }
    });
  }
  return mi;
}

void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    fail(Status::invalid_argument, "intensity arrays differ in length");
  if (x.size() < 2) fail(Status::invalid_argument, "need at least 2 samples");
}

void check_bins(const ParzenConfig& cfg) {
  if (cfg.num_bins < 2) fail(Status::invalid_argument, "num_bins must be >= 2");
  if (cfg.num_bins > 512) fail(Status::invalid_argument, "num_bins too large");
  if (!(cfg.bandwidth_ratio > 0))
    fail(Status::invalid_argument, "bandwidth_ratio must be > 0");
}

}  // namespace

double correlation_ratio(std::span<const double> x, std::span<const double> y,
                         const ParzenConfig& cfg) {
  check_pair(x, y);
  check_bins(cfg);
  return eta_binned(x.data(), y.data(), nullptr, x.size(), cfg, nullptr);
}

double discrete_cr_oracle(std::span<const double> x, std::span<const double> y, int K) {
  check_pair(x, y);
  if (K < 2) fail(Status::invalid_argument, "K must be >= 2");
  const std::size_t n = x.size();
  double ybar = 0;
  for (double v : y) ybar += v;
  ybar /= n;
  double yvar = 0;
  for (double v : y) yvar += (v - ybar) * (v - ybar);
  yvar /= n;
  if (yvar < kVarEps) fail(Status::constant_target, "target image is constant");
  std::vector<double> sum(K, 0.0);
  std::vector<std::size_t> cnt(K, 0);
  for (std::size_t i = 0; i < n; ++i) {
    int k = static_cast<int>(x[i] * K);
    k = std::clamp(k, 0, K - 1);
    sum[k] += y[i];
    ++cnt[k];
  }
  double sigma2_cond = 0;
  for (int k = 0; k < K; ++k) {
    if (!cnt[k]) continue;
    const double d = sum[k] / cnt[k] - ybar;
    sigma2_cond += (static_cast<double>(cnt[k]) / n) * d * d;
  }
  return std::clamp(sigma2_cond / yvar, 0.0, 1.0);
}

double cr_loss_symmetric(std::span<const double> x, std::span<const double> y,
                         const ParzenConfig& cfg) {
  check_pair(x, y);
  check_bins(cfg);
  const double eta_yx = eta_binned(x.data(), y.data(), nullptr, x.size(), cfg, nullptr);
  const double eta_xy = eta_binned(y.data(), x.data(), nullptr, x.size(), cfg, nullptr);
  return -0.5 * (eta_yx + eta_xy);
}

namespace {

double symmetric_loss_masked(const double* x, const double* y,
                             const std::uint8_t* valid, std::size_t n,
                             const ParzenConfig& cfg, double* dgrad) {
  const double eta_yx = eta_binned(x, y, valid, n, cfg, dgrad ? dgrad : nullptr);
  double eta_xy;
  if (dgrad) {
    eta_xy = eta_target(x, y, valid, n, cfg, dgrad);
    // dgrad currently holds d(eta_yx + eta_xy)/dx; scale to the loss.
  } else {
    eta_xy = eta_binned(y, x, valid, n, cfg, nullptr);
  }
  return -0.5 * (eta_yx + eta_xy);
}

struct PatchIter {
  std::array<int, 3> dims;
  int size;
  int tiles[3];
};

}  // namespace

MetricValue cr_loss_patch(std::span<const double> x, std::span<const double> y,
                          const std::uint8_t* valid, const std::array<int, 3>& dims,
                          const ParzenConfig& cfg, const PatchConfig& patch) {
  check_bins(cfg);
  if (patch.patch_size < 2) fail(Status::invalid_argument, "patch_size must be >= 2");
  if (!(patch.min_valid > 0) || patch.min_valid > 1)
    fail(Status::invalid_argument, "min_valid must be in (0,1]");
  const std::size_t n =
      static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (x.size() != n || y.size() != n)
    fail(Status::invalid_argument, "array length does not match dims");

  const int ps = patch.patch_size;
  const int tx = (dims[0] + ps - 1) / ps, ty = (dims[1] + ps - 1) / ps,
            tz = (dims[2] + ps - 1) / ps;
  double total = 0;
  std::size_t admissible = 0;
  std::vector<double> px, py;
  for (int pz = 0; pz < tz; ++pz)
    for (int pyi = 0; pyi < ty; ++pyi)
      for (int pxi = 0; pxi < tx; ++pxi) {
        px.clear();
        py.clear();
        const int i0 = pxi * ps, j0 = pyi * ps, k0 = pz * ps;
        const int i1 = std::min(i0 + ps, dims[0]), j1 = std::min(j0 + ps, dims[1]),
                  k1 = std::min(k0 + ps, dims[2]);
        std::size_t tile_voxels = 0;
        for (int k = k0; k < k1; ++k)
          for (int j = j0; j < j1; ++j)
            for (int i = i0; i < i1; ++i) {
              const std::size_t idx =
                  (static_cast<std::size_t>(k) * dims[1] + j) * dims[0] + i;
              ++tile_voxels;
              if (valid && !valid[idx]) continue;
              px.push_back(x[idx]);
              py.push_back(y[idx]);
            }
        const std::size_t pop = px.size();
        if (pop < static_cast<std::size_t>(patch.min_voxels)) continue;
        if (static_cast<double>(pop) / tile_voxels < patch.min_valid) continue;
        double mx, vx, my, vy;
        mean_var(px.data(), nullptr, pop, pop, mx, vx);
        mean_var(py.data(), nullptr, pop, pop, my, vy);
        if (vx < kVarEps || vy < kVarEps) continue;
        total += symmetric_loss_masked(px.data(), py.data(), nullptr, pop, cfg, nullptr);
        ++admissible;
      }
  if (admissible == 0)
    fail(Status::no_admissible_patches, "no admissible patches");
  return {total / admissible, admissible};
}

double mutual_information(std::span<const double> x, std::span<const double> y,
                          const ParzenConfig& cfg) {
  check_pair(x, y);
  check_bins(cfg);
  return mi_core(x.data(), y.data(), nullptr, x.size(), cfg, nullptr);
}

LossGrad loss_and_gradient(const AffineParams& p, const Volume& moving,
                           const Volume& fixed, Metric metric, const ParzenConfig& cfg,
                           const PatchConfig& patch) {
  check_bins(cfg);
  const Mat4 m = build_matrix(p);
  const auto dm = build_matrix_derivs(p);
  const std::size_t n = fixed.voxel_count();
  const int nx = fixed.dims[0], ny = fixed.dims[1];

  std::vector<double> val(n), g3(3 * n);
  std::vector<std::uint8_t> valid(n);
  const double mhe_m = moving.max_half_extent();
  const double conv[3] = {mhe_m / moving.spacing[0], mhe_m / moving.spacing[1],
                          mhe_m / moving.spacing[2]};
  const std::size_t nchunks = chunk_count(n);
  std::vector<std::size_t> chunk_valid(nchunks, 0);
  for_chunks(n, [&](std::size_t c, std::size_t b, std::size_t e) {
    std::size_t nvalid = 0;
    for (std::size_t idx = b; idx < e; ++idx) {
      const int i = static_cast<int>(idx % nx);
      const int j = static_cast<int>((idx / nx) % ny);
      const int k = static_cast<int>(idx / (static_cast<std::size_t>(nx) * ny));
      const NormCoord cf = fixed.norm_from_index(i, j, k);
      const NormCoord cm = apply(m, cf);
      const auto mi = moving.cont_index_from_norm(cm);
      double gi[3];
      const Sample s = sample_trilinear_index_grad(moving, mi[0], mi[1], mi[2], gi);
      val[idx] = s.value;
      valid[idx] = s.valid ? 1 : 0;
      nvalid += s.valid;
      g3[3 * idx] = gi[0] * conv[0];
      g3[3 * idx + 1] = gi[1] * conv[1];
      g3[3 * idx + 2] = gi[2] * conv[2];
    }
    chunk_valid[c] = nvalid;
  });
  std::size_t total_valid = 0;
  for (std::size_t v : chunk_valid) total_valid += v;
  const double valid_fraction = n ? static_cast<double>(total_valid) / n : 0;
  if (valid_fraction < 0.01)
    fail(Status::no_overlap, "transform leaves almost no overlap with the moving image");

  const std::uint8_t* mask =
      cfg.mask_policy == ParzenConfig::MaskPolicy::valid_only ? valid.data() : nullptr;

  LossGrad out;
  out.valid_fraction = valid_fraction;
  std::vector<double> dldx(n, 0.0);

  switch (metric) {
    case Metric::cr_global: {
      const double l = symmetric_loss_masked(val.data(), fixed.data.data(), mask, n,
                                             cfg, dldx.data());
      // dldx holds d(eta_yx + eta_xy)/dx.
      for (double& g : dldx) g *= -0.5;
      out.loss = l;
      out.n_effective = mask ? total_valid : n;
      break;
    }
    case Metric::cr_patch: {
      const int ps = patch.patch_size;
      const int tx = (fixed.dims[0] + ps - 1) / ps, ty2 = (fixed.dims[1] + ps - 1) / ps,
                tz = (fixed.dims[2] + ps - 1) / ps;
      double total = 0;
      std::size_t admissible = 0;
      std::vector<double> px, py, pgrad;
      std::vector<std::size_t> pidx;
      for (int pz = 0; pz < tz; ++pz)
        for (int pyi = 0; pyi < ty2; ++pyi)
          for (int pxi = 0; pxi < tx; ++pxi) {
            px.clear();
            py.clear();
            pidx.clear();
            const int i0 = pxi * ps, j0 = pyi * ps, k0 = pz * ps;
            const int i1 = std::min(i0 + ps, fixed.dims[0]),
                      j1 = std::min(j0 + ps, fixed.dims[1]),
                      k1 = std::min(k0 + ps, fixed.dims[2]);
            std::size_t tile_voxels = 0;
            for (int k = k0; k < k1; ++k)
              for (int j = j0; j < j1; ++j)
                for (int i = i0; i < i1; ++i) {
                  const std::size_t idx =
                      (static_cast<std::size_t>(k) * fixed.dims[1] + j) * fixed.dims[0] +
                      i;
                  ++tile_voxels;
                  if (mask && !mask[idx]) continue;
                  px.push_back(val[idx]);
                  py.push_back(fixed.data[idx]);
                  pidx.push_back(idx);
                }
            const std::size_t pop = px.size();
            if (pop < static_cast<std::size_t>(patch.min_voxels)) continue;
            if (static_cast<double>(pop) / tile_voxels < patch.min_valid) continue;
            double mx, vx, my, vy;
            mean_var(px.data(), nullptr, pop, pop, mx, vx);
            mean_var(py.data(), nullptr, pop, pop, my, vy);
            if (vx < kVarEps || vy < kVarEps) continue;
            pgrad.assign(pop, 0.0);
            total += symmetric_loss_masked(px.data(), py.data(), nullptr, pop, cfg,
                                           pgrad.data());
            for (std::size_t q = 0; q < pop; ++q) dldx[pidx[q]] += -0.5 * pgrad[q];
            ++admissible;
          }
      if (admissible == 0)
        fail(Status::no_admissible_patches, "no admissible patches");
      out.loss = total / admissible;
      const double scale = 1.0 / admissible;
      for (double& g : dldx) g *= scale;
      out.n_effective = admissible;
      break;
    }
    case Metric::mi: {
      const double mi_val =
          mi_core(val.data(), fixed.data.data(), mask, n, cfg, dldx.data());
      out.loss = -mi_val;
      for (double& g : dldx) g = -g;
      out.n_effective = mask ? total_valid : n;
      break;
    }
  }

  // Chain through the coordinate map: d loss / d alpha_p =
  //   sum_i dldx_i * grad_m(c_m_i) . (dM_p * c_f_i)
  std::vector<double> gpartial(nchunks * 12, 0.0);
  for_chunks(n, [&](std::size_t c, std::size_t b, std::size_t e) {
    double* gp = gpartial.data() + c * 12;
    for (std::size_t idx = b; idx < e; ++idx) {
      if (!valid[idx] || dldx[idx] == 0.0) continue;
      const int i = static_cast<int>(idx % nx);
      const int j = static_cast<int>((idx / nx) % ny);
      const int k = static_cast<int>(idx / (static_cast<std::size_t>(nx) * ny));
      const NormCoord cf = fixed.norm_from_index(i, j, k);
      const double gx = g3[3 * idx], gy = g3[3 * idx + 1], gz = g3[3 * idx + 2];
      const double w = dldx[idx];
      for (int pI = 0; pI < 12; ++pI) {
        const Mat4& D = dm[pI];
        const double dx = D[0] * cf.x + D[1] * cf.y + D[2] * cf.z + D[3];
        const double dy = D[4] * cf.x + D[5] * cf.y + D[6] * cf.z + D[7];
        const double dz = D[8] * cf.x + D[9] * cf.y + D[10] * cf.z + D[11];
        gp[pI] += w * (gx * dx + gy * dy + gz * dz);
      }
    }
  });
  for (std::size_t c = 0; c < nchunks; ++c)
    for (int pI = 0; pI < 12; ++pI) out.grad[pI] += gpartial[c * 12 + pI];
  return out;
}

}  // namespace crreg
