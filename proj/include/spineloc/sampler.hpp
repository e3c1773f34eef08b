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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "spineloc/error.hpp"
#include "spineloc/geometry.hpp"
#include "spineloc/rng.hpp"

namespace spineloc {

enum class PatchKind { kDetection, kIdentification };

inline std::string_view to_string(PatchKind k) {
  return k == PatchKind::kDetection ? "detection" : "identification";
}

// A training sample cropped from a (virtually) zero-padded scan.
//
// Detection: image and label share the patch extent (64x64x80 by default).
// Identification: image is a slab of 8 left-right slices by 80x320
// in-plane; label has extent 1x80x320 and holds the dense labels of the
// slab's 4th slice.
struct Patch {
  PatchKind kind = PatchKind::kDetection;
  Array3<float> image;
  Array3<std::uint8_t> label;
  Index3 offset{};       // into the padded volume
  Index3 pad_before{};   // padding applied in front of the source on each axis
  std::uint64_t seed = 0;  // per-patch seed for augmentation
};

struct SamplerConfig {
  Index3 detection_patch{64, 64, 80};
  Index3 identification_patch{8, 80, 320};
  std::int64_t identification_label_slice = 3;  // the slab's 4th slice
  double positive_fraction = 0.8;
  int max_attempts = 1000;
  float window_low = -1000.0F;
  float window_high = 2000.0F;

  void validate() const {
    for (int a = 0; a < 3; ++a) {
      if (detection_patch[static_cast<std::size_t>(a)] < 1 || identification_patch[static_cast<std::size_t>(a)] < 1) {
        raise<InvalidArgument>("patch extents must be positive");
      }
    }
    if (identification_label_slice < 0 || identification_label_slice >= identification_patch[0]) {
      raise<InvalidArgument>("identification label slice outside the slab");
    }
    if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0)) raise<InvalidArgument>("positive_fraction must lie in [0, 1]");
    if (max_attempts < 1) raise<InvalidArgument>("max_attempts must be >= 1");
    if (!(window_high > window_low)) raise<InvalidArgument>("intensity window is empty");
  }
};

// Clamp to the window and map linearly onto [-1, 1].
inline float normalize_intensity(float hu, float low, float high) {
  const float c = std::clamp(hu, low, high);
  return (c - low) / (high - low) * 2.0F - 1.0F;
}

inline float normalize_intensity(float hu, const SamplerConfig& cfg) {
  return normalize_intensity(hu, cfg.window_low, cfg.window_high);
}

// ceil(fraction * n), robust to representation error in the fraction.
inline std::int64_t required_positive(std::int64_t n, double fraction) {
  return std::min<std::int64_t>(n, static_cast<std::int64_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9)));
}

namespace detail {

struct PaddedFrame {
  Index3 padded{};
  Index3 before{};
};

// Volumes smaller than the patch are padded symmetrically up to it.
inline PaddedFrame padded_frame(const Index3& extent, const Index3& patch) {
  PaddedFrame f;
  for (std::size_t a = 0; a < 3; ++a) {
    f.padded[a] = std::max(extent[a], patch[a]);
    f.before[a] = (f.padded[a] - extent[a]) / 2;
  }
  return f;
}

// Any nonzero label in the source box [lo, lo + size), clipped to the
// source extent.
inline bool any_nonzero(const Array3<std::uint8_t>& labels, Index3 lo, Index3 size) {
  Index3 a{}, b{};
  for (std::size_t k = 0; k < 3; ++k) {
    a[k] = std::max<std::int64_t>(lo[k], 0);
    b[k] = std::min<std::int64_t>(lo[k] + size[k], labels.extent()[k]);
    if (a[k] >= b[k]) return false;
  }
  for (std::int64_t i = a[0]; i < b[0]; ++i) {
    for (std::int64_t j = a[1]; j < b[1]; ++j) {
      const std::uint8_t* row = &labels(i, j, a[2]);
      for (std::int64_t k = 0; k < b[2] - a[2]; ++k) {
        if (row[k] != 0) return true;
      }
    }
  }
  return false;
}

template <typename T, typename Fn>
Array3<T> crop_padded(const Array3<T>& src, Index3 src_lo, Index3 size, Fn&& map) {
  Array3<T> out(size, T{});
  for (std::int64_t i = 0; i < size[0]; ++i) {
    for (std::int64_t j = 0; j < size[1]; ++j) {
      for (std::int64_t k = 0; k < size[2]; ++k) {
        const std::int64_t si = src_lo[0] + i, sj = src_lo[1] + j, sk = src_lo[2] + k;
        if (src.contains(si, sj, sk)) out(i, j, k) = map(src(si, sj, sk));
      }
    }
  }
  return out;
}

template <typename T, typename U>
void check_sampling_inputs(const Image3<T>& v, const Image3<U>& d, std::int64_t n) {
  if (n < 1) raise<InvalidArgument>("patch count must be >= 1");
  if (!v.geometry.is_isotropic_1mm()) raise<InvalidArgument>("sampling requires a 1mm isotropic volume");
  require_same_geometry(v, d, "volume and dense labels");
}

}  // namespace detail

// Random 3D crops for the detection network. The first ceil(fraction*n)
// patches are rejection-sampled until they contain a vertebra voxel.
inline std::vector<Patch> sample_detection_patches(const Volume& v, const DenseLabelMap& d, std::int64_t n,
                                                   std::uint64_t seed, const SamplerConfig& cfg = {}) {
  cfg.validate();
  detail::check_sampling_inputs(v, d, n);
  for (auto x : d.data.values()) {
    if (x > 1) raise<InvalidArgument>("detection sampling expects a binarized label map");
  }
  const Index3 patch = cfg.detection_patch;
  const auto frame = detail::padded_frame(v.extent(), patch);
  const std::int64_t required = required_positive(n, cfg.positive_fraction);

  Rng rng(seed);
  std::vector<Patch> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t p = 0; p < n; ++p) {
    const bool need_positive = p < required;
    Index3 offset{};
    Index3 src_lo{};
    for (int attempt = 0;; ++attempt) {
      if (attempt >= cfg.max_attempts) {
        raise<SamplingError>("no detection patch containing vertebrae found after ", cfg.max_attempts, " attempts");
      }
      for (std::size_t a = 0; a < 3; ++a) {
        offset[a] = rng.index(frame.padded[a] - patch[a] + 1);
        src_lo[a] = offset[a] - frame.before[a];
      }
      if (!need_positive || detail::any_nonzero(d.data, src_lo, patch)) break;
    }
    Patch out_patch;
    out_patch.kind = PatchKind::kDetection;
    out_patch.offset = offset;
    out_patch.pad_before = frame.before;
    out_patch.seed = derive_seed(seed, "detection-patch", static_cast<std::uint64_t>(p));
    out_patch.image = detail::crop_padded(v.data, src_lo, patch, [&](float hu) { return normalize_intensity(hu, cfg); });
    out_patch.label = detail::crop_padded(d.data, src_lo, patch, [](std::uint8_t l) { return l; });
    out.push_back(std::move(out_patch));
  }
  return out;
}

// Slab crops for the identification network; every patch has a vertebra
// label in its target slice.
inline std::vector<Patch> sample_identification_patches(const Volume& v, const DenseLabelMap& d, std::int64_t n,
                                                        std::uint64_t seed, const SamplerConfig& cfg = {}) {
  cfg.validate();
  detail::check_sampling_inputs(v, d, n);
  const Index3 patch = cfg.identification_patch;
  const auto frame = detail::padded_frame(v.extent(), patch);
  const Index3 label_size{1, patch[1], patch[2]};

  Rng rng(seed);
  std::vector<Patch> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t p = 0; p < n; ++p) {
    Index3 offset{};
    Index3 src_lo{};
    for (int attempt = 0;; ++attempt) {
      if (attempt >= cfg.max_attempts) {
        raise<SamplingError>("no identification patch containing vertebrae found after ", cfg.max_attempts, " attempts");
      }
      for (std::size_t a = 0; a < 3; ++a) {
        offset[a] = rng.index(frame.padded[a] - patch[a] + 1);
        src_lo[a] = offset[a] - frame.before[a];
      }
      const Index3 label_lo{src_lo[0] + cfg.identification_label_slice, src_lo[1], src_lo[2]};
      if (detail::any_nonzero(d.data, label_lo, label_size)) break;
    }
    Patch out_patch;
    out_patch.kind = PatchKind::kIdentification;
    out_patch.offset = offset;
    out_patch.pad_before = frame.before;
    out_patch.seed = derive_seed(seed, "identification-patch", static_cast<std::uint64_t>(p));
    out_patch.image = detail::crop_padded(v.data, src_lo, patch, [&](float hu) { return normalize_intensity(hu, cfg); });
    const Index3 label_lo{src_lo[0] + cfg.identification_label_slice, src_lo[1], src_lo[2]};
    out_patch.label = detail::crop_padded(d.data, label_lo, label_size, [](std::uint8_t l) { return l; });
    out.push_back(std::move(out_patch));
  }
  return out;
}

inline void check_patch_shape(const Patch& p, const SamplerConfig& cfg) {
  if (p.kind == PatchKind::kDetection) {
    if (p.image.extent() != cfg.detection_patch || p.label.extent() != cfg.detection_patch) {
      raise<ShapeMismatch>("detection patch must be ", cfg.detection_patch, ", got image ", p.image.extent(),
                           " label ", p.label.extent());
    }
  } else {
    const Index3 label{1, cfg.identification_patch[1], cfg.identification_patch[2]};
    if (p.image.extent() != cfg.identification_patch || p.label.extent() != label) {
      raise<ShapeMismatch>("identification patch must be ", cfg.identification_patch, " / ", label, ", got image ",
                           p.image.extent(), " label ", p.label.extent());
    }
  }
}

}  // namespace spineloc
