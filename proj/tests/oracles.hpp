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

// Independent reference implementations used only by tests. They favour
// obviousness over speed: no bounding boxes, no early exits.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "spineloc/centroids.hpp"
#include "spineloc/dense_label.hpp"
#include "spineloc/geometry.hpp"
#include "spineloc/inference.hpp"

namespace spineloc::oracle {

struct Seg {
  int label;
  double ax, ay, az, bx, by, bz;
  double radius;
};

// The disc-sweep predicate, evaluated at every voxel against every
// segment. Returns the squared in-plane distance or -1 when outside.
inline double sweep_d2(const Seg& s, double px, double py, double pz) {
  const double lo = s.az < s.bz ? s.az : s.bz;
  const double hi = s.az < s.bz ? s.bz : s.az;
  if (pz < lo || pz > hi) return -1.0;
  double qx = 0.0, qy = 0.0;
  if (s.bz != s.az) {
    const double t = (pz - s.az) / (s.bz - s.az);
    qx = s.ax + t * (s.bx - s.ax);
    qy = s.ay + t * (s.by - s.ay);
  } else {
    const double ex = s.bx - s.ax, ey = s.by - s.ay;
    const double len2 = ex * ex + ey * ey;
    double t = len2 > 0.0 ? ((px - s.ax) * ex + (py - s.ay) * ey) / len2 : 0.0;
    t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
    qx = s.ax + t * ex;
    qy = s.ay + t * ey;
  }
  const double d2 = (px - qx) * (px - qx) + (py - qy) * (py - qy);
  return d2 <= s.radius * s.radius ? d2 : -1.0;
}

inline Array3<std::uint8_t> brute_force_labels(const std::vector<Seg>& segs, const Index3& extent) {
  Array3<std::uint8_t> out(extent, 0);
  for (std::int64_t i = 0; i < extent[0]; ++i) {
    for (std::int64_t j = 0; j < extent[1]; ++j) {
      for (std::int64_t k = 0; k < extent[2]; ++k) {
        double best = std::numeric_limits<double>::infinity();
        int best_label = 0;
        for (const Seg& s : segs) {
          const double d2 = sweep_d2(s, static_cast<double>(i), static_cast<double>(j), static_cast<double>(k));
          if (d2 < 0.0) continue;
          if (d2 < best || (d2 == best && s.label < best_label)) {
            best = d2;
            best_label = s.label;
          }
        }
        out(i, j, k) = static_cast<std::uint8_t>(best_label);
      }
    }
  }
  return out;
}

inline std::vector<Seg> to_segs(const SegmentChain& chain, const RadiiTable& radii) {
  std::vector<Seg> out;
  for (const auto& [label, s] : chain) {
    out.push_back({label, s.start.x, s.start.y, s.start.z, s.end.x, s.end.y, s.end.z, radii.at(label)});
  }
  return out;
}

// Whole-volume application of a per-voxel stub on the scan padded by
// `pad` with zeros, cropped back; the reference for tiled detection.
template <typename Stub>
Array3<std::uint8_t> unpatched_detection(Stub&& stub, const Volume& v, const Index3& pad,
                                         const SamplerConfig& window = {}) {
  const Index3& e = v.extent();
  const Index3 padded{e[0] + 2 * pad[0], e[1] + 2 * pad[1], e[2] + 2 * pad[2]};
  Array3<float> big(padded, 0.0F);
  for (std::int64_t i = 0; i < e[0]; ++i) {
    for (std::int64_t j = 0; j < e[1]; ++j) {
      for (std::int64_t k = 0; k < e[2]; ++k) {
        big(i + pad[0], j + pad[1], k + pad[2]) = normalize_intensity(v.data(i, j, k), window);
      }
    }
  }
  const Array3<float> prob = stub(big);
  Array3<std::uint8_t> out(e, 0);
  for (std::int64_t i = 0; i < e[0]; ++i) {
    for (std::int64_t j = 0; j < e[1]; ++j) {
      for (std::int64_t k = 0; k < e[2]; ++k) {
        out(i, j, k) = prob(i + pad[0], j + pad[1], k + pad[2]) > 0.5F ? 1 : 0;
      }
    }
  }
  return out;
}

// 3x3x3 box mean thresholded at zero, out-of-window neighbours read as
// zero. Receptive-field radius 1.
struct BoxMeanStub {
  Array3<float> operator()(const Array3<float>& w) const {
    const Index3& e = w.extent();
    Array3<float> out(e, 0.0F);
    for (std::int64_t i = 0; i < e[0]; ++i) {
      for (std::int64_t j = 0; j < e[1]; ++j) {
        for (std::int64_t k = 0; k < e[2]; ++k) {
          float sum = 0.0F;
          for (int di = -1; di <= 1; ++di) {
            for (int dj = -1; dj <= 1; ++dj) {
              for (int dk = -1; dk <= 1; ++dk) {
                if (w.contains(i + di, j + dj, k + dk)) sum += w(i + di, j + dj, k + dk);
              }
            }
          }
          out(i, j, k) = sum / 27.0F > 0.0F ? 1.0F : 0.0F;
        }
      }
    }
    return out;
  }
};

// Random smallish spine: up to `max_count` consecutive vertebrae with
// random positions inside `extent`, radii drawn small enough to keep
// the sweep inside a small volume.
inline CentroidSet random_centroids(std::mt19937_64& rng, const Index3& extent, int max_count) {
  std::uniform_int_distribution<int> count_dist(1, max_count);
  const int count = count_dist(rng);
  std::uniform_int_distribution<int> first_dist(1, kLastVertebra - count + 1);
  const int first = first_dist(rng);
  std::uniform_real_distribution<double> ux(0.0, static_cast<double>(extent[0] - 1));
  std::uniform_real_distribution<double> uy(0.0, static_cast<double>(extent[1] - 1));
  std::uniform_real_distribution<double> uz(0.0, static_cast<double>(extent[2] - 1));
  std::vector<double> zs;
  for (int i = 0; i < count; ++i) zs.push_back(uz(rng));
  std::sort(zs.begin(), zs.end());
  CentroidSet out;
  for (int i = 0; i < count; ++i) out.insert(VertebraLabel(first + i), {ux(rng), uy(rng), zs[static_cast<std::size_t>(i)]});
  return out;
}

inline RadiiTable random_radii(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  RadiiTable r;
  for (int l = 1; l <= kVertebraCount; ++l) r.set(VertebraLabel(l), u(rng));
  return r;
}

}  // namespace spineloc::oracle
