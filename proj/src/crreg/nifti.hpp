#pragma once

#include <string>

#include "crreg/volume.hpp"

namespace crreg {

enum class NiftiDatatype : short {
  uint8 = 2,
  int16 = 4,
  int32 = 8,
  float32 = 16,
  float64 = 64,
};

// Single-file NIfTI-1, little- or big-endian, optionally gzip-compressed
// (detected by content, not extension). scl_slope/scl_inter are applied on
// read; spacing comes from pixdim[1..3]. The 348-byte header is retained on
// the Volume for passthrough. qform/sform rotations are carried through
// opaquely but NOT applied: the library operates in grid-centered
// normalized coordinates.
Volume read_nifti(const std::string& path);

// Writes single-file NIfTI-1, little-endian, vox_offset 352, scl_slope 1,
// scl_inter 0. Gzip is applied when the path ends in ".gz". Source header
// fields are copied through when present, with geometry fields overwritten.
void write_nifti(const Volume& vol, const std::string& path,
                 NiftiDatatype datatype = NiftiDatatype::float32);

}  // namespace crreg
