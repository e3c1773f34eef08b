/*
 *  Copyright 2026 The spineloc Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 */

// Minimal NIfTI-1 single-file (.nii / .nii.gz) reader and writer.
//
// Only what the pipeline needs: scalar 3D images, spacing from pixdim,
// origin from the qform/sform translation. Orientation cosines are
// ignored; images are treated as axis-aligned.

#pragma once

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <type_traits>
#include <vector>

#include "spineloc/error.hpp"
#include "spineloc/geometry.hpp"

namespace spineloc::nifti {

namespace fs = std::filesystem;

enum DataType : std::int16_t {
  kUInt8 = 2,
  kInt16 = 4,
  kInt32 = 8,
  kFloat32 = 16,
  kFloat64 = 64,
  kInt8 = 256,
  kUInt16 = 512,
};

inline constexpr std::size_t kHeaderSize = 348;
inline constexpr std::size_t kDataOffset = 352;

struct Header {
  std::array<std::int16_t, 8> dim{};
  std::int16_t datatype = 0;
  std::int16_t bitpix = 0;
  std::array<float, 8> pixdim{};
  float vox_offset = kDataOffset;
  float scl_slope = 0.0F;
  float scl_inter = 0.0F;
  std::int16_t qform_code = 0;
  std::int16_t sform_code = 0;
  std::array<float, 3> qoffset{};
  std::array<float, 4> srow_x{}, srow_y{}, srow_z{};
};

namespace detail {

template <typename T>
T read_at(const unsigned char* buf, std::size_t off, bool swap) {
  T v;
  std::memcpy(&v, buf + off, sizeof(T));
  if (swap && sizeof(T) > 1) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
  }
  return v;
}

template <typename T>
void write_at(unsigned char* buf, std::size_t off, T v) {
  std::memcpy(buf + off, &v, sizeof(T));
}

// Header fields are float32; widen through the shortest decimal form so
// 0.7f comes back as 0.7 rather than 0.699999988.
inline double widen(float f) {
  char text[64];
  auto res = std::to_chars(text, text + sizeof(text), f);
  double d = 0.0;
  std::from_chars(text, res.ptr, d);
  return d;
}

inline int bytes_per_voxel(std::int16_t datatype) {
  switch (datatype) {
    case kUInt8:
    case kInt8: return 1;
    case kInt16:
    case kUInt16: return 2;
    case kInt32:
    case kFloat32: return 4;
    case kFloat64: return 8;
    default: return 0;
  }
}

class GzReader {
 public:
  explicit GzReader(const fs::path& path) : file_(gzopen(path.string().c_str(), "rb")) {
    if (file_ == nullptr) raise<IoError>("cannot open '", path.string(), "'");
  }
  ~GzReader() {
    if (file_ != nullptr) gzclose(file_);
  }
  GzReader(const GzReader&) = delete;
  GzReader& operator=(const GzReader&) = delete;

  // Returns the number of bytes read.
  std::size_t read(void* dst, std::size_t n) {
    auto* out = static_cast<unsigned char*>(dst);
    std::size_t total = 0;
    while (total < n) {
      const auto chunk = static_cast<unsigned>(std::min<std::size_t>(n - total, 1U << 30));
      const int got = gzread(file_, out + total, chunk);
      if (got < 0) raise<IoError>("decompression failed");
      if (got == 0) break;
      total += static_cast<std::size_t>(got);
    }
    return total;
  }

  void skip(std::size_t n) {
    std::vector<unsigned char> scratch(n);
    if (read(scratch.data(), n) != n) raise<IoError>("truncated file");
  }

 private:
  gzFile file_;
};

inline bool has_gz_suffix(const fs::path& path) { return path.extension() == ".gz"; }

}  // namespace detail

struct RawImage {
  Header header;
  Index3 extent{};
  Geometry geometry;
  std::vector<double> values;  // file order (axis 0 fastest)
};

inline RawImage read(const fs::path& path) {
  if (!fs::exists(path)) raise<IoError>("no such file '", path.string(), "'");
  detail::GzReader in(path);
  std::array<unsigned char, kHeaderSize> buf{};
  if (in.read(buf.data(), buf.size()) != buf.size()) {
    raise<IoError>("'", path.string(), "': file too short for a NIfTI header");
  }
  bool swap = false;
  auto sizeof_hdr = detail::read_at<std::int32_t>(buf.data(), 0, false);
  if (sizeof_hdr != 348) {
    swap = true;
    sizeof_hdr = detail::read_at<std::int32_t>(buf.data(), 0, true);
    if (sizeof_hdr != 348) raise<IoError>("'", path.string(), "': not a NIfTI-1 file");
  }
  if (std::memcmp(buf.data() + 344, "n+1", 3) != 0) {
    raise<IoError>("'", path.string(), "': only single-file NIfTI-1 (n+1) is supported");
  }

  RawImage img;
  Header& h = img.header;
  for (std::size_t i = 0; i < 8; ++i) h.dim[i] = detail::read_at<std::int16_t>(buf.data(), 40 + 2 * i, swap);
  h.datatype = detail::read_at<std::int16_t>(buf.data(), 70, swap);
  h.bitpix = detail::read_at<std::int16_t>(buf.data(), 72, swap);
  for (std::size_t i = 0; i < 8; ++i) h.pixdim[i] = detail::read_at<float>(buf.data(), 76 + 4 * i, swap);
  h.vox_offset = detail::read_at<float>(buf.data(), 108, swap);
  h.scl_slope = detail::read_at<float>(buf.data(), 112, swap);
  h.scl_inter = detail::read_at<float>(buf.data(), 116, swap);
  h.qform_code = detail::read_at<std::int16_t>(buf.data(), 252, swap);
  h.sform_code = detail::read_at<std::int16_t>(buf.data(), 254, swap);
  for (std::size_t i = 0; i < 3; ++i) h.qoffset[i] = detail::read_at<float>(buf.data(), 268 + 4 * i, swap);
  for (std::size_t i = 0; i < 4; ++i) {
    h.srow_x[i] = detail::read_at<float>(buf.data(), 280 + 4 * i, swap);
    h.srow_y[i] = detail::read_at<float>(buf.data(), 296 + 4 * i, swap);
    h.srow_z[i] = detail::read_at<float>(buf.data(), 312 + 4 * i, swap);
  }

  const int ndim = h.dim[0];
  if (ndim < 3 || ndim > 7) raise<IoError>("'", path.string(), "': non-3D image (", ndim, " dimensions)");
  for (int i = 4; i <= ndim; ++i) {
    if (h.dim[static_cast<std::size_t>(i)] > 1) raise<IoError>("'", path.string(), "': non-3D image");
  }
  for (std::size_t i = 1; i <= 3; ++i) {
    if (h.dim[i] < 1) raise<IoError>("'", path.string(), "': invalid extent on axis ", i - 1);
    img.extent[i - 1] = h.dim[i];
  }
  for (std::size_t i = 1; i <= 3; ++i) {
    if (!(h.pixdim[i] > 0.0F)) raise<IoError>("'", path.string(), "': missing spacing metadata");
  }
  img.geometry.spacing = {detail::widen(h.pixdim[1]), detail::widen(h.pixdim[2]), detail::widen(h.pixdim[3])};
  if (h.qform_code > 0) {
    img.geometry.origin = {detail::widen(h.qoffset[0]), detail::widen(h.qoffset[1]), detail::widen(h.qoffset[2])};
  } else if (h.sform_code > 0) {
    img.geometry.origin = {detail::widen(h.srow_x[3]), detail::widen(h.srow_y[3]), detail::widen(h.srow_z[3])};
  }

  const int bpv = detail::bytes_per_voxel(h.datatype);
  if (bpv == 0) raise<IoError>("'", path.string(), "': unsupported datatype ", h.datatype);
  const auto offset = static_cast<std::size_t>(h.vox_offset);
  if (offset < kHeaderSize) raise<IoError>("'", path.string(), "': invalid vox_offset");
  if (offset > kHeaderSize) in.skip(offset - kHeaderSize);

  const auto n = static_cast<std::size_t>(voxel_count(img.extent));
  std::vector<unsigned char> raw(n * static_cast<std::size_t>(bpv));
  if (in.read(raw.data(), raw.size()) != raw.size()) raise<IoError>("'", path.string(), "': truncated voxel data");

  const bool scaled = h.scl_slope != 0.0F && !(h.scl_slope == 1.0F && h.scl_inter == 0.0F);
  img.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t off = i * static_cast<std::size_t>(bpv);
    double v = 0.0;
    switch (h.datatype) {
      case kUInt8: v = raw[off]; break;
      case kInt8: v = static_cast<std::int8_t>(raw[off]); break;
      case kInt16: v = detail::read_at<std::int16_t>(raw.data(), off, swap); break;
      case kUInt16: v = detail::read_at<std::uint16_t>(raw.data(), off, swap); break;
      case kInt32: v = detail::read_at<std::int32_t>(raw.data(), off, swap); break;
      case kFloat32: v = detail::read_at<float>(raw.data(), off, swap); break;
      case kFloat64: v = detail::read_at<double>(raw.data(), off, swap); break;
      default: break;
    }
    img.values[i] = scaled ? v * h.scl_slope + h.scl_inter : v;
  }
  return img;
}

template <typename T>
constexpr DataType datatype_of() {
  if constexpr (std::is_same_v<T, std::uint8_t>) return kUInt8;
  else if constexpr (std::is_same_v<T, std::int16_t>) return kInt16;
  else if constexpr (std::is_same_v<T, std::int32_t>) return kInt32;
  else if constexpr (std::is_same_v<T, float>) return kFloat32;
  else if constexpr (std::is_same_v<T, double>) return kFloat64;
  else static_assert(sizeof(T) == 0, "unsupported voxel type");
}

// Writes `img` in NIfTI-1 layout; gzip-compressed when the path ends in
// ".gz". Output bytes depend only on the image (no timestamps).
template <typename T>
void write(const fs::path& path, const Image3<T>& img) {
  static_assert(std::endian::native == std::endian::little, "writer assumes a little-endian host");
  std::vector<unsigned char> bytes(kDataOffset + img.data.size() * sizeof(T), 0);
  unsigned char* b = bytes.data();
  detail::write_at<std::int32_t>(b, 0, 348);
  detail::write_at<char>(b, 38, 'r');
  const Index3& e = img.extent();
  const std::array<std::int16_t, 8> dim{3, static_cast<std::int16_t>(e[0]), static_cast<std::int16_t>(e[1]),
                                        static_cast<std::int16_t>(e[2]), 1, 1, 1, 1};
  for (std::size_t i = 0; i < 3; ++i) {
    if (e[i] > 32767) raise<InvalidArgument>("extent too large for NIfTI-1: ", e);
  }
  for (std::size_t i = 0; i < 8; ++i) detail::write_at<std::int16_t>(b, 40 + 2 * i, dim[i]);
  detail::write_at<std::int16_t>(b, 70, datatype_of<T>());
  detail::write_at<std::int16_t>(b, 72, static_cast<std::int16_t>(8 * sizeof(T)));
  const std::array<float, 8> pixdim{1.0F,
                                    static_cast<float>(img.geometry.spacing.x),
                                    static_cast<float>(img.geometry.spacing.y),
                                    static_cast<float>(img.geometry.spacing.z),
                                    1.0F, 1.0F, 1.0F, 1.0F};
  for (std::size_t i = 0; i < 8; ++i) detail::write_at<float>(b, 76 + 4 * i, pixdim[i]);
  detail::write_at<float>(b, 108, static_cast<float>(kDataOffset));
  detail::write_at<char>(b, 123, 2);  // xyzt_units: mm
  detail::write_at<std::int16_t>(b, 252, 1);  // qform_code: scanner
  detail::write_at<float>(b, 268, static_cast<float>(img.geometry.origin.x));
  detail::write_at<float>(b, 272, static_cast<float>(img.geometry.origin.y));
  detail::write_at<float>(b, 276, static_cast<float>(img.geometry.origin.z));
  std::memcpy(b + 344, "n+1\0", 4);

  // file order has axis 0 fastest
  auto* out = reinterpret_cast<T*>(b + kDataOffset);
  std::size_t n = 0;
  for (std::int64_t k = 0; k < e[2]; ++k) {
    for (std::int64_t j = 0; j < e[1]; ++j) {
      for (std::int64_t i = 0; i < e[0]; ++i) out[n++] = img.data(i, j, k);
    }
  }

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (detail::has_gz_suffix(path)) {
    gzFile f = gzopen(path.string().c_str(), "wb6");
    if (f == nullptr) raise<IoError>("cannot write '", path.string(), "'");
    std::size_t done = 0;
    while (done < bytes.size()) {
      const auto chunk = static_cast<unsigned>(std::min<std::size_t>(bytes.size() - done, 1U << 30));
      if (gzwrite(f, b + done, chunk) != static_cast<int>(chunk)) {
        gzclose(f);
        raise<IoError>("write failed for '", path.string(), "'");
      }
      done += chunk;
    }
    if (gzclose(f) != Z_OK) raise<IoError>("write failed for '", path.string(), "'");
  } else {
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    if (f == nullptr) raise<IoError>("cannot write '", path.string(), "'");
    const bool ok = std::fwrite(b, 1, bytes.size(), f) == bytes.size();
    if (std::fclose(f) != 0 || !ok) raise<IoError>("write failed for '", path.string(), "'");
  }
}

}  // namespace spineloc::nifti
