#include "crreg/affine.hpp"

#include <cmath>

#include "crreg/common.hpp"
#include "crreg/parallel.hpp"

namespace crreg {

double& AffineParams::flat(int i) {
  return (i < 3 ? t[i] : i < 6 ? r[i - 3] : i < 9 ? s[i - 6] : k[i - 9]);
}
double AffineParams::flat(int i) const {
  return (i < 3 ? t[i] : i < 6 ? r[i - 3] : i < 9 ? s[i - 6] : k[i - 9]);
}

Mat4 mat4_identity() {
  Mat4 m{};
  m[0] = m[5] = m[10] = m[15] = 1;
  return m;
}

Mat4 compose(const Mat4& a, const Mat4& b) {
  Mat4 c{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double acc = 0;
      for (int k = 0; k < 4; ++k) acc += a[i * 4 + k] * b[k * 4 + j];
      c[i * 4 + j] = acc;
    }
  c[12] = c[13] = c[14] = 0;
  c[15] = 1;
  return c;
}

namespace {

Mat4 translation_mat(const std::array<double, 3>& t) {
  Mat4 m = mat4_identity();
  m[3] = t[0];
  m[7] = t[1];
  m[11] = t[2];
  return m;
}

Mat4 rot_x(double a, bool deriv = false) {
  const double c = std::cos(a), s = std::sin(a);
  Mat4 m{};
  if (!deriv) {
    m[0] = 1;
    m[5] = c;  m[6] = -s;
    m[9] = s;  m[10] = c;
    m[15] = 1;
  } else {
    m[5] = -s; m[6] = -c;
    m[9] = c;  m[10] = -s;
  }
  return m;
}

Mat4 rot_y(double a, bool deriv = false) {
  const double c = std::cos(a), s = std::sin(a);
  Mat4 m{};
  if (!deriv) {
    m[0] = c;   m[2] = s;
    m[5] = 1;
    m[8] = -s;  m[10] = c;
    m[15] = 1;
  } else {
    m[0] = -s;  m[2] = c;
    m[8] = -c;  m[10] = -s;
  }
  return m;
}

Mat4 rot_z(double a, bool deriv = false) {
  const double c = std::cos(a), s = std::sin(a);
  Mat4 m{};
  if (!deriv) {
    m[0] = c;  m[1] = -s;
    m[4] = s;  m[5] = c;
    m[10] = 1;
    m[15] = 1;
  } else {
    m[0] = -s; m[1] = -c;
    m[4] = c;  m[5] = -s;
  }
  return m;
}

Mat4 shear_mat(const std::array<double, 3>& k) {
  Mat4 m = mat4_identity();
  m[1] = k[0];  // kxy
  m[2] = k[1];  // kxz
  m[6] = k[2];  // kyz
  return m;
}

Mat4 scale_mat(const std::array<double, 3>& s) {
  Mat4 m{};
  m[0] = s[0];
  m[5] = s[1];
  m[10] = s[2];
  m[15] = 1;
  return m;
}

void check_params(const AffineParams& p) {
  for (int a = 0; a < 3; ++a)
    if (p.s[a] == 0.0) fail(Status::invalid_argument, "scale component is zero");
}

Mat4 chain(const Mat4& t, const Mat4& rz, const Mat4& ry, const Mat4& rx,
           const Mat4& k, const Mat4& s) {
  return compose(compose(compose(t, rz), compose(ry, rx)), compose(k, s));
}

// Raw 4x4 product without last-row normalization (derivative factors do not
// have an affine last row).
Mat4 mul_raw(const Mat4& a, const Mat4& b) {
  Mat4 c{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double acc = 0;
      for (int k = 0; k < 4; ++k) acc += a[i * 4 + k] * b[k * 4 + j];
      c[i * 4 + j] = acc;
    }
  return c;
}

Mat4 chain_raw(const Mat4& t, const Mat4& rz, const Mat4& ry, const Mat4& rx,
               const Mat4& k, const Mat4& s) {
  return mul_raw(mul_raw(mul_raw(t, rz), mul_raw(ry, rx)), mul_raw(k, s));
}

}  // namespace

Mat4 build_matrix(const AffineParams& p) {
  check_params(p);
  return chain(translation_mat(p.t), rot_z(p.r[2]), rot_y(p.r[1]), rot_x(p.r[0]),
               shear_mat(p.k), scale_mat(p.s));
}

std::array<Mat4, 12> build_matrix_derivs(const AffineParams& p) {
  check_params(p);
  const Mat4 T = translation_mat(p.t);
  const Mat4 Rz = rot_z(p.r[2]), Ry = rot_y(p.r[1]), Rx = rot_x(p.r[0]);
  const Mat4 K = shear_mat(p.k), S = scale_mat(p.s);
  std::array<Mat4, 12> d{};
  // Translations: derivative of T is a single 1 in the translation column.
  for (int a = 0; a < 3; ++a) {
    Mat4 dT{};
    dT[a * 4 + 3] = 1;
    d[a] = chain_raw(dT, Rz, Ry, Rx, K, S);
  }
  d[3] = chain_raw(T, Rz, Ry, rot_x(p.r[0], true), K, S);
  d[4] = chain_raw(T, Rz, rot_y(p.r[1], true), Rx, K, S);
  d[5] = chain_raw(T, rot_z(p.r[2], true), Ry, Rx, K, S);
  for (int a = 0; a < 3; ++a) {
    Mat4 dS{};
    dS[a * 4 + a] = 1;
    d[6 + a] = chain_raw(T, Rz, Ry, Rx, K, dS);
  }
  const int shear_slot[3] = {1, 2, 6};  // kxy, kxz, kyz
  for (int a = 0; a < 3; ++a) {
    Mat4 dK{};
    dK[shear_slot[a]] = 1;
    d[9 + a] = chain_raw(T, Rz, Ry, Rx, dK, S);
  }
  return d;
}

Mat4 invert(const Mat4& m) {
  // Invert the 3x3 block by cofactors, then the translation.
  const double a = m[0], b = m[1], c = m[2];
  const double d = m[4], e = m[5], f = m[6];
  const double g = m[8], h = m[9], i = m[10];
  const double det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g);
  if (std::abs(det) < 1e-300) fail(Status::singular_matrix, "singular affine matrix");
  const double inv = 1.0 / det;
  Mat4 r = mat4_identity();
  r[0] = (e * i - f * h) * inv;
  r[1] = (c * h - b * i) * inv;
  r[2] = (b * f - c * e) * inv;
  r[4] = (f * g - d * i) * inv;
  r[5] = (a * i - c * g) * inv;
  r[6] = (c * d - a * f) * inv;
  r[8] = (d * h - e * g) * inv;
  r[9] = (b * g - a * h) * inv;
  r[10] = (a * e - b * d) * inv;
  const double tx = m[3], ty = m[7], tz = m[11];
  r[3] = -(r[0] * tx + r[1] * ty + r[2] * tz);
  r[7] = -(r[4] * tx + r[5] * ty + r[6] * tz);
  r[11] = -(r[8] * tx + r[9] * ty + r[10] * tz);
  return r;
}

NormCoord apply(const Mat4& m, const NormCoord& c) {
  return {m[0] * c.x + m[1] * c.y + m[2] * c.z + m[3],
          m[4] * c.x + m[5] * c.y + m[6] * c.z + m[7],
          m[8] * c.x + m[9] * c.y + m[10] * c.z + m[11]};
}

WarpResult warp(const Volume& moving, const Volume& fixed, const AffineParams& p,
                Interp interp) {
  const Mat4 m = build_matrix(p);
  WarpResult res;
  res.warped.dims = fixed.dims;
  res.warped.spacing = fixed.spacing;
  res.warped.header = fixed.header;
  res.warped.data.resize(fixed.voxel_count());
  res.validity.assign(fixed.voxel_count(), 0);
  const int nx = fixed.dims[0], ny = fixed.dims[1];
  const std::size_t n = fixed.voxel_count();
  std::vector<std::size_t> chunk_valid(chunk_count(n), 0);
  for_chunks(n, [&](std::size_t c, std::size_t b, std::size_t e) {
    std::size_t nvalid = 0;
    for (std::size_t idx = b; idx < e; ++idx) {
      const int i = static_cast<int>(idx % nx);
      const int j = static_cast<int>((idx / nx) % ny);
      const int k = static_cast<int>(idx / (static_cast<std::size_t>(nx) * ny));
      const NormCoord cf = fixed.norm_from_index(i, j, k);
      const NormCoord cm = apply(m, cf);
      const auto mi = moving.cont_index_from_norm(cm);
      const Sample s = interp == Interp::trilinear
                           ? sample_trilinear_index(moving, mi[0], mi[1], mi[2])
                           : sample_nearest_index(moving, mi[0], mi[1], mi[2]);
      res.warped.data[idx] = s.value;
      res.validity[idx] = s.valid ? 1 : 0;
      nvalid += s.valid;
    }
    chunk_valid[c] = nvalid;
  });
  std::size_t total = 0;
  for (std::size_t v : chunk_valid) total += v;
  res.valid_fraction = n ? static_cast<double>(total) / n : 0.0;
  return res;
}

Mat4 params_to_world_matrix(const AffineParams& p, const Volume& fixed,
                            const Volume& moving) {
  const Mat4 m = build_matrix(p);
  const double sf = fixed.max_half_extent();
  const double sm = moving.max_half_extent();
  Mat4 w = m;
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 3; ++col) w[row * 4 + col] *= sm / sf;
    w[row * 4 + 3] *= sm;
  }
  return w;
}

}  // namespace crreg
