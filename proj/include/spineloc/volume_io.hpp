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

#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spineloc/error.hpp"
#include "spineloc/geometry.hpp"
#include "spineloc/nifti.hpp"

namespace spineloc {

namespace fs = std::filesystem;

enum class Interpolation { kTrilinear, kNearest };

namespace detail {

template <typename T>
Image3<T> from_raw(const nifti::RawImage& raw) {
  Image3<T> img{Array3<T>(raw.extent), raw.geometry};
  std::size_t n = 0;
  for (std::int64_t k = 0; k < raw.extent[2]; ++k) {
    for (std::int64_t j = 0; j < raw.extent[1]; ++j) {
      for (std::int64_t i = 0; i < raw.extent[0]; ++i) {
        const double v = raw.values[n++];
        if constexpr (std::is_integral_v<T>) {
          if (v != std::floor(v) || v < std::numeric_limits<T>::min() || v > std::numeric_limits<T>::max()) {
            raise<IoError>("voxel value ", v, " is not a valid label");
          }
        }
        img.data(i, j, k) = static_cast<T>(v);
      }
    }
  }
  return img;
}

}  // namespace detail

// Sidecar metadata path for an image: "scan.nii.gz" -> "scan.json".
inline fs::path sidecar_path(const fs::path& image_path) {
  fs::path p = image_path;
  if (p.extension() == ".gz") p.replace_extension();
  if (p.extension() == ".nii") p.replace_extension();
  p += ".json";
  return p;
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) raise<IoError>("cannot write '", path.string(), "'");
  out << j.dump(2) << '\n';
  if (!out) raise<IoError>("write failed for '", path.string(), "'");
}

inline nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise<IoError>("cannot open '", path.string(), "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    raise<IoError>("'", path.string(), "': ", e.what());
  }
}

inline nlohmann::json geometry_json(const Index3& extent, const Geometry& g) {
  return {{"extent", {extent[0], extent[1], extent[2]}},
          {"spacing", {g.spacing.x, g.spacing.y, g.spacing.z}},
          {"origin", {g.origin.x, g.origin.y, g.origin.z}}};
}

inline Volume load_volume(const fs::path& path) {
  auto v = detail::from_raw<float>(nifti::read(path));
  v.geometry.validate();
  return v;
}

inline DenseLabelMap load_label_map(const fs::path& path) {
  return detail::from_raw<std::uint8_t>(nifti::read(path));
}

// Writes the image and a sidecar JSON with its geometry, `kind` and any
// extra metadata.
template <typename T>
void save_image(const fs::path& path, const Image3<T>& img, const std::string& kind,
                const nlohmann::json& extra = nlohmann::json::object()) {
  nifti::write(path, img);
  nlohmann::json meta = geometry_json(img.extent(), img.geometry);
  meta["kind"] = kind;
  for (auto it = extra.begin(); it != extra.end(); ++it) meta[it.key()] = it.value();
  write_json(sidecar_path(path), meta);
}

namespace detail {

struct AxisSamples {
  std::vector<std::int64_t> lo, hi;
  std::vector<double> frac;
};

// Output voxel j sits at j mm; in source index units that is j / spacing,
// clamped to the source extent.
inline AxisSamples axis_samples(std::int64_t in_extent, double spacing, std::int64_t out_extent,
                                Interpolation mode) {
  AxisSamples s;
  s.lo.resize(static_cast<std::size_t>(out_extent));
  s.hi.resize(s.lo.size());
  s.frac.resize(s.lo.size());
  const double last = static_cast<double>(in_extent - 1);
  for (std::int64_t j = 0; j < out_extent; ++j) {
    const double src = std::clamp(static_cast<double>(j) / spacing, 0.0, last);
    const auto idx = static_cast<std::size_t>(j);
    if (mode == Interpolation::kNearest) {
      s.lo[idx] = s.hi[idx] = std::min<std::int64_t>(std::llround(src), in_extent - 1);
      s.frac[idx] = 0.0;
    } else {
      const auto i0 = static_cast<std::int64_t>(std::floor(src));
      s.lo[idx] = i0;
      s.hi[idx] = std::min<std::int64_t>(i0 + 1, in_extent - 1);
      s.frac[idx] = src - static_cast<double>(i0);
    }
  }
  return s;
}

}  // namespace detail

inline Index3 resampled_extent(const Index3& extent, const Geometry& g) {
  Index3 out{};
  for (int a = 0; a < 3; ++a) {
    out[static_cast<std::size_t>(a)] =
        std::max<std::int64_t>(1, std::llround(static_cast<double>(extent[static_cast<std::size_t>(a)]) * g.spacing[a]));
  }
  return out;
}

// Resamples onto a 1mm isotropic grid sharing the first voxel centre with
// the input. Extent along axis k is round(n_k * s_k). Label maps must use
// kNearest.
template <typename T>
Image3<T> resample_isotropic(const Image3<T>& v, Interpolation mode = Interpolation::kTrilinear) {
  v.geometry.validate();
  if (v.geometry.is_isotropic_1mm()) {
    Image3<T> out = v;
    out.geometry.spacing = {1.0, 1.0, 1.0};
    return out;
  }
  if constexpr (std::is_integral_v<T>) {
    if (mode != Interpolation::kNearest) raise<InvalidArgument>("integer label maps must be resampled with nearest-neighbour");
  }
  const Index3 in_e = v.extent();
  const Index3 out_e = resampled_extent(in_e, v.geometry);
  const auto sx = detail::axis_samples(in_e[0], v.geometry.spacing.x, out_e[0], mode);
  const auto sy = detail::axis_samples(in_e[1], v.geometry.spacing.y, out_e[1], mode);
  const auto sz = detail::axis_samples(in_e[2], v.geometry.spacing.z, out_e[2], mode);

  Image3<T> out{Array3<T>(out_e), Geometry{{1.0, 1.0, 1.0}, v.geometry.origin}};
  for (std::int64_t i = 0; i < out_e[0]; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    for (std::int64_t j = 0; j < out_e[1]; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      for (std::int64_t k = 0; k < out_e[2]; ++k) {
        const auto uk = static_cast<std::size_t>(k);
        if (mode == Interpolation::kNearest) {
          out.data(i, j, k) = v.data(sx.lo[ui], sy.lo[uj], sz.lo[uk]);
          continue;
        }
        const double fx = sx.frac[ui], fy = sy.frac[uj], fz = sz.frac[uk];
        auto at = [&](std::int64_t a, std::int64_t b, std::int64_t c) { return static_cast<double>(v.data(a, b, c)); };
        const double c00 = at(sx.lo[ui], sy.lo[uj], sz.lo[uk]) * (1 - fx) + at(sx.hi[ui], sy.lo[uj], sz.lo[uk]) * fx;
        const double c10 = at(sx.lo[ui], sy.hi[uj], sz.lo[uk]) * (1 - fx) + at(sx.hi[ui], sy.hi[uj], sz.lo[uk]) * fx;
        const double c01 = at(sx.lo[ui], sy.lo[uj], sz.hi[uk]) * (1 - fx) + at(sx.hi[ui], sy.lo[uj], sz.hi[uk]) * fx;
        const double c11 = at(sx.lo[ui], sy.hi[uj], sz.hi[uk]) * (1 - fx) + at(sx.hi[ui], sy.hi[uj], sz.hi[uk]) * fx;
        const double c0 = c00 * (1 - fy) + c10 * fy;
        const double c1 = c01 * (1 - fy) + c11 * fy;
        out.data(i, j, k) = static_cast<T>(c0 * (1 - fz) + c1 * fz);
      }
    }
  }
  return out;
}

}  // namespace spineloc
