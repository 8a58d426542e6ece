#pragma once

#include <array>
#include <cstdint>

#include "crreg/volume.hpp"

namespace crreg {

// The 12-parameter affine model: translation (normalized units), rotation
// (radians), scale and shear (dimensionless). Identity is t=0, r=0,
// s=(1,1,1), k=0.
struct AffineParams {
  std::array<double, 3> t{0, 0, 0};
  std::array<double, 3> r{0, 0, 0};
  std::array<double, 3> s{1, 1, 1};
  std::array<double, 3> k{0, 0, 0};

  static AffineParams identity() { return {}; }
  double& flat(int i);
  double flat(int i) const;
};

// 4x4 homogeneous matrix, row-major, last row (0,0,0,1).
using Mat4 = std::array<double, 16>;

Mat4 mat4_identity();

// M = T * Rz(rz) * Ry(ry) * Rx(rx) * K * S, with K unit-upper-triangular
// carrying (kxy, kxz, kyz) and S = diag(s). This composition and rotation
// order is a fixed convention of the library.
Mat4 build_matrix(const AffineParams& p);

// d(build_matrix)/d(alpha_i) for the 12 parameters, in flat() order.
std::array<Mat4, 12> build_matrix_derivs(const AffineParams& p);

Mat4 compose(const Mat4& a, const Mat4& b);
Mat4 invert(const Mat4& m);

NormCoord apply(const Mat4& m, const NormCoord& c);

enum class Interp : std::uint8_t { trilinear, nearest };

struct WarpResult {
  Volume warped;                      // on the fixed grid
  std::vector<std::uint8_t> validity; // 1 where the sample fell inside moving
  double valid_fraction = 0;
};

// Pull-back resampling: for each fixed-grid voxel v with normalized
// coordinate c, sample moving at build_matrix(p) * c.
WarpResult warp(const Volume& moving, const Volume& fixed, const AffineParams& p,
                Interp interp);

// Millimeter-space fixed->moving matrix (coordinates relative to each
// volume's center), obtained by conjugating the normalized-space matrix by
// the per-volume isotropic scaling.
Mat4 params_to_world_matrix(const AffineParams& p, const Volume& fixed,
                            const Volume& moving);

}  // namespace crreg
