#pragma once

#include <cmath>
#include <cstdint>
#include <map>

#include "crreg/affine.hpp"
#include "crreg/volume.hpp"

namespace crreg {

struct PhantomSpec {
  std::array<int, 3> dims{64, 64, 64};
  std::array<double, 3> spacing{2.0, 2.0, 2.0};
  std::uint64_t seed = 0;
  int n_blobs = 6;
  double noise_sigma = 0.02;     // additive Gaussian noise on [0,1] intensities
  double blur_sigma_pet = 1.5;   // voxels
};

struct PhantomPair {
  Volume ct_like;
  Volume pet_like;
  Volume labels;  // integer labels stored as double; 0 is background
};

// Ellipsoidal multi-class phantom with a CT-like channel (background
// gradient + distinct class intensities, soft edges) and a PET-like channel
// built from a non-monotonic per-class intensity remap, blurred and
// noise-corrupted. Deterministic per seed.
PhantomPair make_phantom_pair(const PhantomSpec& spec);

// Same layout (same seed => same blobs and classes), but the PET channel and
// labels are rendered in a moved pose: the output voxel at NormCoord c
// samples the analytic model at build_matrix(move)·c. Unlike resampling a
// rendered volume, this keeps the moving image full-FOV (no invalid border),
// like an acquisition of the same subject in a different pose. The CT channel
// stays in the reference pose.
PhantomPair make_moved_phantom(const PhantomSpec& spec, const AffineParams& move);

struct TransformRanges {
  double max_rot = 15.0 * M_PI / 180.0;  // radians per axis
  double max_trans = 0.10;               // fraction of the largest extent per axis
  double scale_lo = 0.9;
  double scale_hi = 1.1;
  double max_shear = 0.1;
};

// Uniform draw within the ranges; deterministic per seed.
AffineParams random_affine(const TransformRanges& ranges, std::uint64_t seed);

struct DiceResult {
  std::map<int, double> per_label;
  double mean = 0;
};

// Per-label Dice over the shared grid. An empty label_set means "every
// nonzero label present in either volume"; labels absent from both are
// skipped.
DiceResult dice(const Volume& a, const Volume& b, const std::vector<int>& label_set = {});

struct DisplacementError {
  double mean_mm = 0;
  double max_mm = 0;
};

// Euclidean distance between the mapped positions of every fixed-grid voxel
// center under the two transforms, in millimeters.
DisplacementError displacement_error(const Mat4& a, const Mat4& b, const Volume& fixed);
DisplacementError displacement_error(const AffineParams& true_p,
                                     const AffineParams& est_p, const Volume& fixed);

}  // namespace crreg
