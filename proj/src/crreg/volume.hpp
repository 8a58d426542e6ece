#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace crreg {

// Dimensionless coordinates in the grid-centered, physically isotropic frame.
// A volume occupies a subset of [-1,1]^3; the same physical point has the
// same NormCoord at every pyramid level because downsampling preserves the
// physical extent.
struct NormCoord {
  double x = 0, y = 0, z = 0;
};

// Immutable 3D scalar grid. data is x-fastest, double precision.
struct Volume {
  std::array<int, 3> dims{0, 0, 0};
  std::array<double, 3> spacing{1, 1, 1};
  std::vector<double> data;
  std::vector<std::uint8_t> header;  // opaque source-header blob, may be empty

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * dims[1] + j) * dims[0] + i;
  }
  double at(int i, int j, int k) const { return data[index(i, j, k)]; }

  double extent(int axis) const { return dims[axis] * spacing[axis]; }
  double max_half_extent() const;

  // Voxel index (continuous) <-> normalized coordinate, per axis:
  //   c = ((i + 0.5) * spacing - extent/2) / max_half_extent
  NormCoord norm_from_index(double i, double j, double k) const;
  std::array<double, 3> cont_index_from_norm(const NormCoord& c) const;
};

Volume make_volume(std::array<int, 3> dims, std::array<double, 3> spacing,
                   std::vector<double> data);

struct Sample {
  double value = 0;
  bool valid = false;
};

// Trilinear interpolation with zero padding; valid iff all 8 neighbors exist.
Sample sample_trilinear(const Volume& vol, const NormCoord& c);
// Nearest-neighbor variant for integer label volumes.
Sample sample_nearest(const Volume& vol, const NormCoord& c);

// Samplers in continuous voxel-index space (hot path for warping).
Sample sample_trilinear_index(const Volume& vol, double x, double y, double z);
// Also returns d(value)/d(index) per axis.
Sample sample_trilinear_index_grad(const Volume& vol, double x, double y, double z,
                                   double grad[3]);
Sample sample_nearest_index(const Volume& vol, double x, double y, double z);

// Anti-aliased pyramid level: Gaussian blur (sigma = 0.5*factor voxels,
// truncated at 3 sigma, replicate borders) followed by resampling onto a
// grid of ceil(dim/factor) voxels whose spacing preserves the physical
// extent exactly. factor 1 is the identity.
Volume gaussian_downsample(const Volume& vol, int factor);

// Separable Gaussian blur in voxel units (sigma per axis identical).
Volume gaussian_blur(const Volume& vol, double sigma);

struct NormalizationPolicy {
  enum class Mode { minmax, percentile };
  Mode mode = Mode::percentile;
  double p_lo = 0.5;   // percentiles in [0,100]
  double p_hi = 99.5;
};

struct NormalizedVolume {
  Volume volume;
  bool degenerate_range = false;  // hi <= lo; output is all zeros
};

// Clips to [lo, hi] per policy, then maps linearly to [0,1].
NormalizedVolume normalize_intensity(const Volume& vol, const NormalizationPolicy& policy);

}  // namespace crreg
