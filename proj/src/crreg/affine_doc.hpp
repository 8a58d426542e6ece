#pragma once

#include <string>

#include "crreg/affine.hpp"

namespace crreg {

struct AffineDocMeta {
  std::string metric;
  std::vector<int> scales;
  std::vector<int> iters;
  std::string seed;
  std::string tool_version;
};

// Human-readable, machine-parsable transform document (JSON) carrying the
// 12 parameters, the normalized-space 4x4 matrix, the world-space (mm) 4x4
// matrix and provenance metadata, all at full double precision.
void save_affine_document(const std::string& path, const AffineParams& params,
                          const Mat4& world_mm, const AffineDocMeta& meta);

struct AffineDocument {
  AffineParams params;
  Mat4 matrix_normalized;
  Mat4 matrix_world_mm;
  AffineDocMeta meta;
};

AffineDocument load_affine_document(const std::string& path);

}  // namespace crreg
