#include "crreg/nifti.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "crreg/common.hpp"

namespace crreg {

namespace {

#pragma pack(push, 1)
struct Nifti1Header {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code, sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4], srow_y[4], srow_z[4];
  char intent_name[16];
  char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

template <typename T>
void swap_bytes(T& v) {
  auto* p = reinterpret_cast<unsigned char*>(&v);
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
    std::swap(p[i], p[sizeof(T) - 1 - i]);
}

void swap_header(Nifti1Header& h) {
  swap_bytes(h.sizeof_hdr);
  swap_bytes(h.extents);
  swap_bytes(h.session_error);
  for (auto& v : h.dim) swap_bytes(v);
  swap_bytes(h.intent_p1);
  swap_bytes(h.intent_p2);
  swap_bytes(h.intent_p3);
  swap_bytes(h.intent_code);
  swap_bytes(h.datatype);
  swap_bytes(h.bitpix);
  swap_bytes(h.slice_start);
  for (auto& v : h.pixdim) swap_bytes(v);
  swap_bytes(h.vox_offset);
  swap_bytes(h.scl_slope);
  swap_bytes(h.scl_inter);
  swap_bytes(h.slice_end);
  swap_bytes(h.cal_max);
  swap_bytes(h.cal_min);
  swap_bytes(h.slice_duration);
  swap_bytes(h.toffset);
  swap_bytes(h.glmax);
  swap_bytes(h.glmin);
  swap_bytes(h.qform_code);
  swap_bytes(h.sform_code);
  swap_bytes(h.quatern_b);
  swap_bytes(h.quatern_c);
  swap_bytes(h.quatern_d);
  swap_bytes(h.qoffset_x);
  swap_bytes(h.qoffset_y);
  swap_bytes(h.qoffset_z);
  for (auto& v : h.srow_x) swap_bytes(v);
  for (auto& v : h.srow_y) swap_bytes(v);
  for (auto& v : h.srow_z) swap_bytes(v);
}

class GzReader {
public:
  explicit GzReader(const std::string& path) : f_(gzopen(path.c_str(), "rb")) {
    if (!f_) fail(Status::io_error, "cannot open " + path);
  }
  ~GzReader() {
    if (f_) gzclose(f_);
  }
  GzReader(const GzReader&) = delete;
  GzReader& operator=(const GzReader&) = delete;

  void read_exact(void* buf, std::size_t n, const char* what) {
    const int got = gzread(f_, buf, static_cast<unsigned>(n));
    if (got < 0 || static_cast<std::size_t>(got) != n)
      fail(Status::truncated_file, std::string("truncated NIfTI file while reading ") + what);
  }
  void skip(std::size_t n) {
    if (gzseek(f_, static_cast<z_off_t>(n), SEEK_CUR) < 0)
      fail(Status::truncated_file, "truncated NIfTI file (bad vox_offset)");
  }

private:
  gzFile f_;
};

template <typename T>
std::vector<double> decode(GzReader& r, std::size_t n, bool swap, double slope,
                           double inter) {
  std::vector<T> raw(n);
  r.read_exact(raw.data(), n * sizeof(T), "data section");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    T v = raw[i];
    if (swap) swap_bytes(v);
    out[i] = static_cast<double>(v) * slope + inter;
  }
  return out;
}

bool has_gz_suffix(const std::string& path) {
  return path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

}  // namespace

Volume read_nifti(const std::string& path) {
  GzReader r(path);
  Nifti1Header h{};
  r.read_exact(&h, sizeof(h), "header");
  bool swap = false;
  if (h.sizeof_hdr != 348) {
    std::int32_t swapped = h.sizeof_hdr;
    swap_bytes(swapped);
    if (swapped == 348) {
      swap = true;
      swap_header(h);
    } else if (h.sizeof_hdr == 540 || swapped == 540) {
      fail(Status::format_error, "NIfTI-2 files are not supported");
    } else {
      fail(Status::format_error, "not a NIfTI-1 file (bad sizeof_hdr)");
    }
  }
  if (std::memcmp(h.magic, "ni1", 3) == 0)
    fail(Status::format_error, "two-file (.hdr/.img) NIfTI is not supported");
  if (std::memcmp(h.magic, "n+1", 3) != 0 || h.magic[3] != '\0')
    fail(Status::format_error, "not a single-file NIfTI-1 (bad magic)");
  if (h.dim[0] != 3)
    fail(Status::dimensionality_error,
         "only 3D volumes are supported (dim[0] = " + std::to_string(h.dim[0]) + ")");
  for (int a = 1; a <= 3; ++a)
    if (h.dim[a] < 1) fail(Status::format_error, "non-positive dimension");

  const std::size_t n =
      static_cast<std::size_t>(h.dim[1]) * h.dim[2] * h.dim[3];
  const double slope = (h.scl_slope != 0.0f) ? h.scl_slope : 1.0;
  const double inter = (h.scl_slope != 0.0f) ? h.scl_inter : 0.0;
  if (h.vox_offset < 348)
    fail(Status::format_error, "invalid vox_offset");
  r.skip(static_cast<std::size_t>(h.vox_offset) - sizeof(h));

  std::vector<double> data;
  switch (h.datatype) {
    case static_cast<short>(NiftiDatatype::uint8):
      data = decode<std::uint8_t>(r, n, false, slope, inter);
      break;
    case static_cast<short>(NiftiDatatype::int16):
      data = decode<std::int16_t>(r, n, swap, slope, inter);
      break;
    case static_cast<short>(NiftiDatatype::int32):
      data = decode<std::int32_t>(r, n, swap, slope, inter);
      break;
    case static_cast<short>(NiftiDatatype::float32):
      data = decode<float>(r, n, swap, slope, inter);
      break;
    case static_cast<short>(NiftiDatatype::float64):
      data = decode<double>(r, n, swap, slope, inter);
      break;
    default:
      fail(Status::unsupported_datatype,
           "unsupported NIfTI datatype code " + std::to_string(h.datatype));
  }
  for (double& v : data)
    if (!std::isfinite(v)) v = 0.0;  // load-time sanitization

  Volume vol;
  vol.dims = {h.dim[1], h.dim[2], h.dim[3]};
  for (int a = 0; a < 3; ++a) {
    const float p = h.pixdim[a + 1];
    if (!(p > 0)) fail(Status::format_error, "non-positive pixdim");
    vol.spacing[a] = p;
  }
  vol.data = std::move(data);
  vol.header.resize(sizeof(h));
  std::memcpy(vol.header.data(), &h, sizeof(h));  // native (little-endian) form
  return vol;
}

void write_nifti(const Volume& vol, const std::string& path, NiftiDatatype datatype) {
  Nifti1Header h{};
  if (vol.header.size() == sizeof(h)) std::memcpy(&h, vol.header.data(), sizeof(h));
  h.sizeof_hdr = 348;
  h.dim[0] = 3;
  h.dim[1] = static_cast<std::int16_t>(vol.dims[0]);
  h.dim[2] = static_cast<std::int16_t>(vol.dims[1]);
  h.dim[3] = static_cast<std::int16_t>(vol.dims[2]);
  for (int a = 4; a < 8; ++a) h.dim[a] = 1;
  h.datatype = static_cast<std::int16_t>(datatype);
  switch (datatype) {
    case NiftiDatatype::uint8: h.bitpix = 8; break;
    case NiftiDatatype::int16: h.bitpix = 16; break;
    case NiftiDatatype::int32: h.bitpix = 32; break;
    case NiftiDatatype::float32: h.bitpix = 32; break;
    case NiftiDatatype::float64: h.bitpix = 64; break;
  }
  if (h.pixdim[0] == 0.0f) h.pixdim[0] = 1.0f;
  for (int a = 0; a < 3; ++a) h.pixdim[a + 1] = static_cast<float>(vol.spacing[a]);
  h.vox_offset = 352.0f;
  h.scl_slope = 1.0f;
  h.scl_inter = 0.0f;
  std::memcpy(h.magic, "n+1", 4);

  const std::size_t n = vol.voxel_count();
  std::vector<char> payload;
  auto encode = [&](auto tag) {
    using T = decltype(tag);
    payload.resize(n * sizeof(T));
    T* p = reinterpret_cast<T*>(payload.data());
    for (std::size_t i = 0; i < n; ++i) {
      if constexpr (std::is_integral_v<T>)
        p[i] = static_cast<T>(std::llround(vol.data[i]));
      else
        p[i] = static_cast<T>(vol.data[i]);
    }
  };
  switch (datatype) {
    case NiftiDatatype::uint8: encode(std::uint8_t{}); break;
    case NiftiDatatype::int16: encode(std::int16_t{}); break;
    case NiftiDatatype::int32: encode(std::int32_t{}); break;
    case NiftiDatatype::float32: encode(float{}); break;
    case NiftiDatatype::float64: encode(double{}); break;
  }
  const char pad[4] = {0, 0, 0, 0};

  if (has_gz_suffix(path)) {
    gzFile f = gzopen(path.c_str(), "wb");
    if (!f) fail(Status::io_error, "cannot open " + path + " for writing");
    bool ok = gzwrite(f, &h, sizeof(h)) == static_cast<int>(sizeof(h)) &&
              gzwrite(f, pad, 4) == 4 &&
              gzwrite(f, payload.data(), static_cast<unsigned>(payload.size())) ==
                  static_cast<int>(payload.size());
    ok = gzclose(f) == Z_OK && ok;
    if (!ok) fail(Status::io_error, "failed writing " + path);
  } else {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(Status::io_error, "cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(&h), sizeof(h));
    f.write(pad, 4);
    f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!f) fail(Status::io_error, "failed writing " + path);
  }
}

}  // namespace crreg
