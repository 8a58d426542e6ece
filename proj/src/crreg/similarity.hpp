#pragma once

#include <cstdint>
#include <span>

#include "crreg/affine.hpp"
#include "crreg/volume.hpp"

namespace crreg {

struct ParzenConfig {
  int num_bins = 32;             // K
  double bandwidth_ratio = 0.5;  // h = bandwidth_ratio * (1/K)
  enum class MaskPolicy { use_all, valid_only };
  MaskPolicy mask_policy = MaskPolicy::valid_only;

  double bandwidth() const { return bandwidth_ratio / num_bins; }
  double bin_center(int k) const { return (k + 0.5) / num_bins; }
};

struct PatchConfig {
  int patch_size = 16;     // cubic edge length, voxels
  double min_valid = 0.5;  // minimum valid fraction for a patch
  int min_voxels = 64;     // minimum patch population
};

struct MetricValue {
  double value = 0;
  std::size_t n_effective = 0;
};

// Parzen-windowed correlation ratio eta(Y|X): X soft-binned with Gaussian
// windows, Y entering through conditional means. Returns
// sigma2_cond / Var(Y), approximately in [0,1].
double correlation_ratio(std::span<const double> x, std::span<const double> y,
                         const ParzenConfig& cfg);

// Hard-binned correlation ratio (the classic discrete formulation), used as
// a correctness oracle for the Parzen version. Always in [0,1].
double discrete_cr_oracle(std::span<const double> x, std::span<const double> y, int K);

// L(X,Y) = -1/2 (eta(Y|X) + eta(X|Y)); bit-exact under argument swap.
double cr_loss_symmetric(std::span<const double> x, std::span<const double> y,
                         const ParzenConfig& cfg);

// Mean of cr_loss_symmetric over non-overlapping patch tiles of the grid.
// valid may be null (all voxels used).
MetricValue cr_loss_patch(std::span<const double> x, std::span<const double> y,
                          const std::uint8_t* valid, const std::array<int, 3>& dims,
                          const ParzenConfig& cfg, const PatchConfig& patch);

// Parzen mutual information (natural log, Gaussian windows on both axes).
double mutual_information(std::span<const double> x, std::span<const double> y,
                          const ParzenConfig& cfg);

enum class Metric : std::uint8_t { cr_global, cr_patch, mi };

struct LossGrad {
  double loss = 0;
  std::array<double, 12> grad{};
  double valid_fraction = 0;
  std::size_t n_effective = 0;
};

// Evaluates the chosen loss on warp(moving, fixed, p) against fixed and its
// exact derivative with respect to the 12 affine parameters (chain rule
// through the Gaussian windows, trilinear sampling and the coordinate map).
LossGrad loss_and_gradient(const AffineParams& p, const Volume& moving,
                           const Volume& fixed, Metric metric, const ParzenConfig& cfg,
                           const PatchConfig& patch);

}  // namespace crreg
