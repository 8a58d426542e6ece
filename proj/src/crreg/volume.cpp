#include "crreg/volume.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crreg/common.hpp"
#include "crreg/parallel.hpp"

namespace crreg {

double Volume::max_half_extent() const {
  return std::max({extent(0), extent(1), extent(2)}) * 0.5;
}

NormCoord Volume::norm_from_index(double i, double j, double k) const {
  const double mhe = max_half_extent();
  return {((i + 0.5) * spacing[0] - extent(0) * 0.5) / mhe,
          ((j + 0.5) * spacing[1] - extent(1) * 0.5) / mhe,
          ((k + 0.5) * spacing[2] - extent(2) * 0.5) / mhe};
}

std::array<double, 3> Volume::cont_index_from_norm(const NormCoord& c) const {
  const double mhe = max_half_extent();
  return {(c.x * mhe + extent(0) * 0.5) / spacing[0] - 0.5,
          (c.y * mhe + extent(1) * 0.5) / spacing[1] - 0.5,
          (c.z * mhe + extent(2) * 0.5) / spacing[2] - 0.5};
}

Volume make_volume(std::array<int, 3> dims, std::array<double, 3> spacing,
                   std::vector<double> data) {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] <= 0) fail(Status::invalid_argument, "volume dims must be positive");
    if (!(spacing[a] > 0)) fail(Status::invalid_argument, "voxel spacing must be > 0");
  }
  const std::size_t n =
      static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (data.size() != n)
    fail(Status::invalid_argument, "data length does not match dims");
  for (double v : data)
    if (!std::isfinite(v)) fail(Status::invalid_argument, "non-finite voxel value");
  Volume v;
  v.dims = dims;
  v.spacing = spacing;
  v.data = std::move(data);
  return v;
}

Sample sample_trilinear_index_grad(const Volume& vol, double x, double y, double z,
                                   double grad[3]) {
  const int nx = vol.dims[0], ny = vol.dims[1], nz = vol.dims[2];
  if (grad) grad[0] = grad[1] = grad[2] = 0;
  if (x < 0 || y < 0 || z < 0 || x > nx - 1 || y > ny - 1 || z > nz - 1)
    return {0.0, false};
  int i0 = std::min(static_cast<int>(x), nx - 2);
  int j0 = std::min(static_cast<int>(y), ny - 2);
  int k0 = std::min(static_cast<int>(z), nz - 2);
  if (nx == 1) i0 = 0;
  if (ny == 1) j0 = 0;
  if (nz == 1) k0 = 0;
  const double fx = x - i0, fy = y - j0, fz = z - k0;
  const int i1 = std::min(i0 + 1, nx - 1), j1 = std::min(j0 + 1, ny - 1),
            k1 = std::min(k0 + 1, nz - 1);
  const double v000 = vol.at(i0, j0, k0), v100 = vol.at(i1, j0, k0);
  const double v010 = vol.at(i0, j1, k0), v110 = vol.at(i1, j1, k0);
  const double v001 = vol.at(i0, j0, k1), v101 = vol.at(i1, j0, k1);
  const double v011 = vol.at(i0, j1, k1), v111 = vol.at(i1, j1, k1);
  const double c00 = v000 + fx * (v100 - v000);
  const double c10 = v010 + fx * (v110 - v010);
  const double c01 = v001 + fx * (v101 - v001);
  const double c11 = v011 + fx * (v111 - v011);
  const double c0 = c00 + fy * (c10 - c00);
  const double c1 = c01 + fy * (c11 - c01);
  const double value = c0 + fz * (c1 - c0);
  if (grad) {
    const double gx00 = v100 - v000, gx10 = v110 - v010;
    const double gx01 = v101 - v001, gx11 = v111 - v011;
    grad[0] = (gx00 + fy * (gx10 - gx00)) * (1 - fz) + (gx01 + fy * (gx11 - gx01)) * fz;
    grad[1] = (c10 - c00) * (1 - fz) + (c11 - c01) * fz;
    grad[2] = c1 - c0;
  }
  return {value, true};
}

Sample sample_trilinear_index(const Volume& vol, double x, double y, double z) {
  return sample_trilinear_index_grad(vol, x, y, z, nullptr);
}

Sample sample_nearest_index(const Volume& vol, double x, double y, double z) {
  const long i = std::lround(x), j = std::lround(y), k = std::lround(z);
  if (i < 0 || j < 0 || k < 0 || i >= vol.dims[0] || j >= vol.dims[1] ||
      k >= vol.dims[2])
    return {0.0, false};
  return {vol.at(static_cast<int>(i), static_cast<int>(j), static_cast<int>(k)), true};
}

Sample sample_trilinear(const Volume& vol, const NormCoord& c) {
  const auto idx = vol.cont_index_from_norm(c);
  return sample_trilinear_index(vol, idx[0], idx[1], idx[2]);
}

Sample sample_nearest(const Volume& vol, const NormCoord& c) {
  const auto idx = vol.cont_index_from_norm(c);
  return sample_nearest_index(vol, idx[0], idx[1], idx[2]);
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (int t = -radius; t <= radius; ++t) {
    const double w = std::exp(-0.5 * (t / sigma) * (t / sigma));
    k[t + radius] = w;
    sum += w;
  }
  for (double& w : k) w /= sum;
  return k;
}

// 1D convolution along `axis`, replicate borders.
void blur_axis(std::vector<double>& data, const std::array<int, 3>& dims, int axis,
               const std::vector<double>& kernel) {
  const int radius = static_cast<int>(kernel.size()) / 2;
  const int n = dims[axis];
  const std::size_t stride =
      axis == 0 ? 1
                : (axis == 1 ? static_cast<std::size_t>(dims[0])
                             : static_cast<std::size_t>(dims[0]) * dims[1]);
  const int n_lines = static_cast<int>(
      (static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]) / n);
  std::vector<double> line(n);
  for (int l = 0; l < n_lines; ++l) {
    // Base offset of this line in the flat array.
    std::size_t base;
    if (axis == 0) {
      base = static_cast<std::size_t>(l) * dims[0];
    } else if (axis == 1) {
      const int i = l % dims[0], k = l / dims[0];
      base = (static_cast<std::size_t>(k) * dims[1]) * dims[0] + i;
    } else {
      base = static_cast<std::size_t>(l);
    }
    for (int t = 0; t < n; ++t) line[t] = data[base + stride * t];
    for (int t = 0; t < n; ++t) {
      double acc = 0;
      for (int r = -radius; r <= radius; ++r) {
        const int s = std::clamp(t + r, 0, n - 1);
        acc += kernel[r + radius] * line[s];
      }
      data[base + stride * t] = acc;
    }
  }
}

}  // namespace

Volume gaussian_blur(const Volume& vol, double sigma) {
  Volume out = vol;
  if (sigma <= 0) return out;
  const auto kernel = gaussian_kernel(sigma);
  for (int axis = 0; axis < 3; ++axis) blur_axis(out.data, out.dims, axis, kernel);
  return out;
}

Volume gaussian_downsample(const Volume& vol, int factor) {
  if (factor < 1) fail(Status::invalid_argument, "downsample factor must be >= 1");
  if (factor == 1) return vol;
  std::array<int, 3> odims;
  std::array<double, 3> ospacing;
  for (int a = 0; a < 3; ++a) {
    odims[a] = static_cast<int>((vol.dims[a] + factor - 1) / factor);
    if (odims[a] < 1) fail(Status::invalid_argument, "downsample collapses a dimension");
    // Spacing chosen so extent_out == extent_in exactly.
    ospacing[a] = vol.extent(a) / odims[a];
  }
  const Volume blurred = gaussian_blur(vol, 0.5 * factor);
  Volume out;
  out.dims = odims;
  out.spacing = ospacing;
  out.header = vol.header;
  out.data.resize(out.voxel_count());
  const std::size_t n = out.data.size();
  for_chunks(n, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t idx = b; idx < e; ++idx) {
      const int i = static_cast<int>(idx % odims[0]);
      const int j = static_cast<int>((idx / odims[0]) % odims[1]);
      const int k = static_cast<int>(idx / (static_cast<std::size_t>(odims[0]) * odims[1]));
      // Coarse voxel center expressed as a continuous fine-grid index.
      const double x = ((i + 0.5) * ospacing[0]) / vol.spacing[0] - 0.5;
      const double y = ((j + 0.5) * ospacing[1]) / vol.spacing[1] - 0.5;
      const double z = ((k + 0.5) * ospacing[2]) / vol.spacing[2] - 0.5;
      out.data[idx] = sample_trilinear_index(blurred,
                                             std::clamp(x, 0.0, vol.dims[0] - 1.0),
                                             std::clamp(y, 0.0, vol.dims[1] - 1.0),
                                             std::clamp(z, 0.0, vol.dims[2] - 1.0))
                          .value;
    }
  });
  return out;
}

namespace {

double percentile_sorted(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double pos = p / 100.0 * (n - 1);
  const std::size_t lo = static_cast<std::size_t>(std::clamp(pos, 0.0, double(n - 1)));
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double f = pos - lo;
  return sorted[lo] * (1 - f) + sorted[hi] * f;
}

}  // namespace

NormalizedVolume normalize_intensity(const Volume& vol, const NormalizationPolicy& policy) {
  double lo, hi;
  if (policy.mode == NormalizationPolicy::Mode::minmax) {
    auto [mn, mx] = std::minmax_element(vol.data.begin(), vol.data.end());
    lo = *mn;
    hi = *mx;
  } else {
    std::vector<double> sorted(vol.data);
    std::sort(sorted.begin(), sorted.end());
    lo = percentile_sorted(sorted, policy.p_lo);
    hi = percentile_sorted(sorted, policy.p_hi);
  }
  NormalizedVolume result;
  result.volume = vol;
  if (!(hi > lo)) {
    std::fill(result.volume.data.begin(), result.volume.data.end(), 0.0);
    result.degenerate_range = true;
    return result;
  }
  const double inv = 1.0 / (hi - lo);
  for (double& v : result.volume.data)
    v = std::clamp((v - lo) * inv, 0.0, 1.0);
  return result;
}

}  // namespace crreg
