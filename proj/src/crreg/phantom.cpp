#include "crreg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "crreg/common.hpp"
#include "crreg/rng.hpp"

namespace crreg {

namespace {

struct Blob {
  double cx, cy, cz;  // voxel units
  double ax, ay, az;  // semi-axes, voxel units
};

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3 - 2 * t);
}

}  // namespace

namespace {

PhantomPair generate(const PhantomSpec& spec, const Mat4* pet_pose) {
  for (int a = 0; a < 3; ++a)
    if (spec.dims[a] < 16) fail(Status::invalid_argument, "phantom dims must be >= 16");
  if (spec.noise_sigma < 0) fail(Status::invalid_argument, "noise_sigma must be >= 0");
  if (spec.n_blobs < 1) fail(Status::invalid_argument, "need at least one blob");

  Rng rng(spec.seed);
  const int nx = spec.dims[0], ny = spec.dims[1], nz = spec.dims[2];
  const double min_dim = std::min({nx, ny, nz});

  std::vector<Blob> blobs;
  for (int b = 0; b < spec.n_blobs; ++b) {
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      // Radii shrink as attempts accumulate so crowded layouts still succeed.
      const double shrink = attempt < 40 ? 1.0 : attempt < 70 ? 0.85 : 0.7;
      Blob cand;
      cand.cx = rng.uniform(0.18, 0.82) * nx;
      cand.cy = rng.uniform(0.18, 0.82) * ny;
      cand.cz = rng.uniform(0.18, 0.82) * nz;
      cand.ax = rng.uniform(0.12, 0.18) * min_dim * shrink;
      cand.ay = rng.uniform(0.12, 0.18) * min_dim * shrink;
      cand.az = rng.uniform(0.12, 0.18) * min_dim * shrink;
      bool ok = true;
      for (const Blob& other : blobs) {
        const double dx = cand.cx - other.cx, dy = cand.cy - other.cy,
                     dz = cand.cz - other.cz;
        const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
        const double ra = std::max({cand.ax, cand.ay, cand.az});
        const double rb = std::max({other.ax, other.ay, other.az});
        if (dist < ra + rb + 2.0) {
          ok = false;
          break;
        }
      }
      if (ok) {
        blobs.push_back(cand);
        placed = true;
      }
    }
    if (!placed)
      fail(Status::generation_failed, "could not place all blobs without overlap");
  }

  // CT class intensities ascend with the label; the PET lookup is a shuffled
  // (non-monotonic) assignment so intensity order differs between channels.
  // PET classes straddle the mid-gray PET background (some structures darker
  // than background, some brighter) and are shuffled until the per-class
  // correlation with the CT classes is weak — otherwise bright-in-both blobs
  // against dark-in-both background would leave a strong linear relation.
  // Every class keeps a contrast of at least 0.28 against the background so
  // the PET channel stays strongly (if non-linearly) determined by the class.
  std::vector<double> ct_class(spec.n_blobs), pet_class(spec.n_blobs);
  for (int b = 0; b < spec.n_blobs; ++b) {
    ct_class[b] = spec.n_blobs == 1 ? 0.7 : 0.40 + 0.55 * b / (spec.n_blobs - 1);
    const double mag =
        spec.n_blobs == 1 ? 0.4 : 0.30 + 0.18 * b / (spec.n_blobs - 1);
    pet_class[b] = 0.5 + (b % 2 ? mag : -mag);
  }
  if (spec.n_blobs > 1) {
    auto monotonic = [&](const std::vector<double>& v) {
      return std::is_sorted(v.begin(), v.end()) ||
             std::is_sorted(v.rbegin(), v.rend());
    };
    auto class_corr = [&]() {
      const int nb = spec.n_blobs;
      double ma = 0, mb = 0;
      for (int b = 0; b < nb; ++b) {
        ma += ct_class[b];
        mb += pet_class[b];
      }
      ma /= nb;
      mb /= nb;
      double sab = 0, saa = 0, sbb = 0;
      for (int b = 0; b < nb; ++b) {
        sab += (ct_class[b] - ma) * (pet_class[b] - mb);
        saa += (ct_class[b] - ma) * (ct_class[b] - ma);
        sbb += (pet_class[b] - mb) * (pet_class[b] - mb);
      }
      return sab / std::sqrt(saa * sbb);
    };
    // Bounded rejection sampling: with very few blobs every permutation is
    // monotonic (or strongly correlated), so after 200 shuffles settle for the
    // best candidate seen instead of spinning forever.
    std::vector<double> best;
    double best_score = 1e300;
    int tries = 0;
    bool accepted = false;
    do {
      for (int b = spec.n_blobs - 1; b > 0; --b)
        std::swap(pet_class[b], pet_class[rng.uniform_int(0, b)]);
      const double score =
          std::abs(class_corr()) + (monotonic(pet_class) ? 10.0 : 0.0);
      if (score < best_score) {
        best_score = score;
        best = pet_class;
      }
      accepted = !monotonic(pet_class) && std::abs(class_corr()) <= 0.3;
    } while (!accepted && ++tries < 200);
    pet_class = best;
  }
  const double pet_bg = 0.5;

  PhantomPair out;
  out.ct_like.dims = out.pet_like.dims = out.labels.dims = spec.dims;
  out.ct_like.spacing = out.pet_like.spacing = out.labels.spacing = spec.spacing;
  const std::size_t n = static_cast<std::size_t>(nx) * ny * nz;
  out.ct_like.data.resize(n);
  out.pet_like.data.resize(n);
  out.labels.data.assign(n, 0.0);

  const double edge = 0.15;  // soft-edge width in normalized ellipsoid radius
  std::size_t idx = 0;
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i, ++idx) {
        const double bg = 0.05 + 0.20 * (nx > 1 ? double(i) / (nx - 1) : 0.0);
        double ct = bg;
        // PET/labels are evaluated at the moved position when a pose is set.
        double pi = i, pj = j, pk = k;
        if (pet_pose) {
          const NormCoord c = out.ct_like.norm_from_index(i, j, k);
          const NormCoord cm = crreg::apply(*pet_pose, c);
          const auto ci = out.ct_like.cont_index_from_norm(cm);
          pi = ci[0];
          pj = ci[1];
          pk = ci[2];
        }
        double pet = pet_bg;
        for (int b = 0; b < spec.n_blobs; ++b) {
          const Blob& bl = blobs[b];
          {
            const double rx = (i - bl.cx) / bl.ax, ry = (j - bl.cy) / bl.ay,
                         rz = (k - bl.cz) / bl.az;
            const double rho = std::sqrt(rx * rx + ry * ry + rz * rz);
            const double w = smoothstep((1.0 + edge - rho) / edge);
            if (w > 0) ct = ct + w * (ct_class[b] - ct);
          }
          const double rx = (pi - bl.cx) / bl.ax, ry = (pj - bl.cy) / bl.ay,
                       rz = (pk - bl.cz) / bl.az;
          const double rho = std::sqrt(rx * rx + ry * ry + rz * rz);
          if (rho <= 1.0) out.labels.data[idx] = b + 1;
          const double w = smoothstep((1.0 + edge - rho) / edge);
          if (w > 0) pet = pet + w * (pet_class[b] - pet);
        }
        out.ct_like.data[idx] = ct;
        out.pet_like.data[idx] = pet;
      }

  if (spec.blur_sigma_pet > 0)
    out.pet_like = gaussian_blur(out.pet_like, spec.blur_sigma_pet);
  if (spec.noise_sigma > 0) {
    for (double& v : out.pet_like.data)
      v = std::clamp(v + spec.noise_sigma * rng.normal(), 0.0, 1.0);
  }
  return out;
}

}  // namespace

PhantomPair make_phantom_pair(const PhantomSpec& spec) {
  return generate(spec, nullptr);
}

PhantomPair make_moved_phantom(const PhantomSpec& spec, const AffineParams& move) {
  const Mat4 m = build_matrix(move);
  return generate(spec, &m);
}

AffineParams random_affine(const TransformRanges& ranges, std::uint64_t seed) {
  if (!(ranges.scale_lo > 0) || ranges.scale_hi < ranges.scale_lo)
    fail(Status::invalid_argument, "invalid scale range");
  Rng rng(seed);
  AffineParams p;
  // Normalized translation: the full largest extent spans 2 normalized units.
  for (int a = 0; a < 3; ++a) p.t[a] = rng.uniform(-1, 1) * 2.0 * ranges.max_trans;
  for (int a = 0; a < 3; ++a) p.r[a] = rng.uniform(-1, 1) * ranges.max_rot;
  for (int a = 0; a < 3; ++a) p.s[a] = rng.uniform(ranges.scale_lo, ranges.scale_hi);
  for (int a = 0; a < 3; ++a) p.k[a] = rng.uniform(-1, 1) * ranges.max_shear;
  return p;
}

DiceResult dice(const Volume& a, const Volume& b, const std::vector<int>& label_set) {
  if (a.dims != b.dims) fail(Status::invalid_argument, "label volumes on different grids");
  std::set<int> labels(label_set.begin(), label_set.end());
  if (labels.empty()) {
    for (double v : a.data)
      if (v != 0) labels.insert(static_cast<int>(std::llround(v)));
    for (double v : b.data)
      if (v != 0) labels.insert(static_cast<int>(std::llround(v)));
  }
  DiceResult res;
  double sum = 0;
  std::size_t evaluated = 0;
  for (int lab : labels) {
    std::size_t na = 0, nb = 0, inter = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      const bool ia = std::llround(a.data[i]) == lab;
      const bool ib = std::llround(b.data[i]) == lab;
      na += ia;
      nb += ib;
      inter += ia && ib;
    }
    if (na + nb == 0) continue;  // absent from both
    const double d = 2.0 * inter / static_cast<double>(na + nb);
    res.per_label[lab] = d;
    sum += d;
    ++evaluated;
  }
  res.mean = evaluated ? sum / evaluated : 0.0;
  return res;
}

DisplacementError displacement_error(const Mat4& a, const Mat4& b, const Volume& fixed) {
  const double mhe = fixed.max_half_extent();
  Mat4 d;
  for (int i = 0; i < 16; ++i) d[i] = a[i] - b[i];
  DisplacementError res;
  double sum = 0;
  const std::size_t n = fixed.voxel_count();
  std::size_t idx = 0;
  for (int k = 0; k < fixed.dims[2]; ++k)
    for (int j = 0; j < fixed.dims[1]; ++j)
      for (int i = 0; i < fixed.dims[0]; ++i, ++idx) {
        const NormCoord c = fixed.norm_from_index(i, j, k);
        const NormCoord dv = crreg::apply(d, c);
        const double dist = std::sqrt(dv.x * dv.x + dv.y * dv.y + dv.z * dv.z) * mhe;
        sum += dist;
        res.max_mm = std::max(res.max_mm, dist);
      }
  res.mean_mm = n ? sum / n : 0.0;
  return res;
}

DisplacementError displacement_error(const AffineParams& true_p,
                                     const AffineParams& est_p, const Volume& fixed) {
  return displacement_error(build_matrix(true_p), build_matrix(est_p), fixed);
}

}  // namespace crreg
