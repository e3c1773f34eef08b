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

// Sparse centroid annotations to dense per-voxel vertebra labels.
//
// Each vertebra is represented by a line segment running between the
// midpoints to its neighbours (terminal vertebrae get the adjacent
// half-segment mirrored through their centroid). The segment is swept
// with axial discs of the vertebra's radius; voxels inside the sweep get
// the vertebra's label.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>

#include <nlohmann/json.hpp>

#include "spineloc/centroids.hpp"
#include "spineloc/error.hpp"
#include "spineloc/geometry.hpp"
#include "spineloc/vertebra.hpp"

namespace spineloc {

// Per-vertebra disc radius R_v in mm.
class RadiiTable {
 public:
  // Approximate vertebral body sizes, C1..S2.
  static constexpr std::array<double, kVertebraCount> kDefaultRadii = {
      14, 15, 16, 17, 17, 19, 20,                          // C1-C7
      19, 20, 22, 24, 25, 27, 29, 31, 33, 32, 33, 34,      // T1-T12
      34, 37, 38, 36, 34,                                  // L1-L5
      34, 34};                                             // S1-S2

  RadiiTable() : radius_(kDefaultRadii) {}

  double at(VertebraLabel v) const { return radius_[static_cast<std::size_t>(v.index() - 1)]; }
  double at(int index) const { return at(VertebraLabel(index)); }

  void set(VertebraLabel v, double r) {
    if (!(r > 0.0 && r < 100.0)) raise<InvalidArgument>("radius for ", v.name(), " must lie in (0, 100) mm, got ", r);
    radius_[static_cast<std::size_t>(v.index() - 1)] = r;
  }

  // Overrides from {"L1": 30.0, ...}; unknown names are rejected.
  void apply_overrides(const nlohmann::json& j) {
    if (j.is_null()) return;
    if (!j.is_object()) raise<InvalidArgument>("radii override must be an object of NAME: radius");
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto label = VertebraLabel::from_name(it.key());
      if (!label) raise<InvalidArgument>("unknown vertebra name '", it.key(), "' in radii override");
      set(*label, it.value().get<double>());
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (int i = 1; i <= kVertebraCount; ++i) j[std::string(vertebra_name(i))] = at(i);
    return j;
  }

  // Every radius grown by `delta` mm.
  RadiiTable inflated(double delta) const {
    RadiiTable out = *this;
    for (auto& r : out.radius_) r += delta;
    return out;
  }

 private:
  std::array<double, kVertebraCount> radius_;
};

struct Segment {
  Vec3 start;
  Vec3 end;
};

using SegmentChain = std::map<int, Segment>;

// One segment per annotated vertebra. Labels are taken in anatomical
// order; consecutive entries are treated as neighbours even across gaps.
inline SegmentChain build_segment_chain(const CentroidSet& centroids, const RadiiTable& radii = {}) {
  if (centroids.empty()) raise<InvalidArgument>("empty CentroidSet");
  SegmentChain chain;
  std::vector<std::pair<int, Vec3>> ordered(centroids.begin(), centroids.end());

  if (ordered.size() == 1) {
    const auto& [index, c] = ordered.front();
    const double r = radii.at(index);
    chain[index] = {c - Vec3{0.0, 0.0, r}, c + Vec3{0.0, 0.0, r}};
    return chain;
  }

  std::vector<Vec3> mids;
  mids.reserve(ordered.size() - 1);
  for (std::size_t i = 0; i + 1 < ordered.size(); ++i) mids.push_back(midpoint(ordered[i].second, ordered[i + 1].second));

  const std::size_t last = ordered.size() - 1;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    const auto& [index, c] = ordered[i];
    Segment s;
    s.start = i == 0 ? c + (c - mids.front()) : mids[i - 1];
    s.end = i == last ? c + (c - mids.back()) : mids[i];
    chain[index] = s;
  }
  return chain;
}

// Squared in-plane (axial) distance from `p` to the disc sweep of `s` at
// p's height, or nullopt when p.z lies outside the segment's cranio-caudal
// span.
inline std::optional<double> disc_sweep_distance2(const Segment& s, Vec3 p) {
  const double zlo = std::min(s.start.z, s.end.z);
  const double zhi = std::max(s.start.z, s.end.z);
  if (p.z < zlo || p.z > zhi) return std::nullopt;
  const double dz = s.end.z - s.start.z;
  if (dz != 0.0) {
    const double t = (p.z - s.start.z) / dz;
    const double qx = s.start.x + t * (s.end.x - s.start.x);
    const double qy = s.start.y + t * (s.end.y - s.start.y);
    return (p.x - qx) * (p.x - qx) + (p.y - qy) * (p.y - qy);
  }
  // Horizontal segment: distance to its in-plane projection.
  const double ex = s.end.x - s.start.x;
  const double ey = s.end.y - s.start.y;
  const double len2 = ex * ex + ey * ey;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((p.x - s.start.x) * ex + (p.y - s.start.y) * ey) / len2, 0.0, 1.0);
  const double qx = s.start.x + t * ex;
  const double qy = s.start.y + t * ey;
  return (p.x - qx) * (p.x - qx) + (p.y - qy) * (p.y - qy);
}

// A voxel gets label v when it lies inside v's disc sweep. Overlaps go to
// the smallest in-plane distance, then the lower index.
template <typename T>
DenseLabelMap rasterize_dense_labels(const SegmentChain& chain, const RadiiTable& radii, const Image3<T>& reference) {
  if (!reference.geometry.is_isotropic_1mm()) {
    raise<InvalidArgument>("dense labels require a 1mm isotropic reference volume");
  }
  DenseLabelMap out{Array3<std::uint8_t>(reference.extent(), 0), reference.geometry};
  const Index3 e = reference.extent();
  const Vec3 sp = reference.geometry.spacing;

  for (const auto& [index, seg] : chain) {
    const double r = radii.at(index);
    const double r2 = r * r;
    const double zlo = std::min(seg.start.z, seg.end.z);
    const double zhi = std::max(seg.start.z, seg.end.z);
    const auto k0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(zlo / sp.z)));
    const auto k1 = std::min<std::int64_t>(e[2] - 1, static_cast<std::int64_t>(std::floor(zhi / sp.z)));
    const double xlo = std::min(seg.start.x, seg.end.x) - r, xhi = std::max(seg.start.x, seg.end.x) + r;
    const double ylo = std::min(seg.start.y, seg.end.y) - r, yhi = std::max(seg.start.y, seg.end.y) + r;
    const auto i0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(xlo / sp.x)));
    const auto i1 = std::min<std::int64_t>(e[0] - 1, static_cast<std::int64_t>(std::floor(xhi / sp.x)));
    const auto j0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(ylo / sp.y)));
    const auto j1 = std::min<std::int64_t>(e[1] - 1, static_cast<std::int64_t>(std::floor(yhi / sp.y)));

    for (std::int64_t i = i0; i <= i1; ++i) {
      for (std::int64_t j = j0; j <= j1; ++j) {
        for (std::int64_t k = k0; k <= k1; ++k) {
          const Vec3 p = reference.position_of({i, j, k});
          const auto d2 = disc_sweep_distance2(seg, p);
          if (!d2 || *d2 > r2) continue;
          std::uint8_t& cell = out.data(i, j, k);
          if (cell != 0) {
            // Chain is visited in increasing label order, so an existing
            // owner has the lower index and wins ties.
            const double owner_d2 = *disc_sweep_distance2(chain.at(cell), p);
            if (!(*d2 < owner_d2)) continue;
          }
          cell = static_cast<std::uint8_t>(index);
        }
      }
    }
  }
  return out;
}

template <typename T>
DenseLabelMap make_dense_labels(const CentroidSet& centroids, const RadiiTable& radii, const Image3<T>& reference) {
  if (centroids.empty()) return {Array3<std::uint8_t>(reference.extent(), 0), reference.geometry};
  return rasterize_dense_labels(build_segment_chain(centroids, radii), radii, reference);
}

// Vertebra labels collapsed to {0, 1} for the detection task.
inline DenseLabelMap binarize(const DenseLabelMap& d) {
  DenseLabelMap out = d;
  for (auto& v : out.data.values()) v = v > 0 ? 1 : 0;
  return out;
}

}  // namespace spineloc
