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

// Random elastic deformation of identification patches.
//
// Control-point displacements are drawn from N(0, sigma^2) pixels on a
// grid x grid lattice spanning the in-plane extent (same convention as
// the common "deform_random_grid" augmentation), interpolated to every
// pixel and applied only along the two in-plane axes.

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "spineloc/error.hpp"
#include "spineloc/geometry.hpp"
#include "spineloc/rng.hpp"
#include "spineloc/sampler.hpp"

namespace spineloc {

struct DeformationField {
  int grid = 3;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  // [axis][a * grid + b], axis 0 = y displacement, axis 1 = z displacement
  std::array<std::vector<double>, 2> control;

  static DeformationField random(int grid, double sigma, std::uint64_t seed) {
    if (grid < 2) raise<InvalidArgument>("deformation grid needs at least 2 points per axis");
    if (!(sigma >= 0.0)) raise<InvalidArgument>("sigma must be >= 0");
    DeformationField f{grid, sigma, seed, {}};
    Rng rng(seed);
    for (auto& axis : f.control) {
      axis.resize(static_cast<std::size_t>(grid * grid));
      for (auto& d : axis) d = sigma == 0.0 ? 0.0 : rng.normal() * sigma;
    }
    return f;
  }
};

namespace detail {

// Catmull-Rom weights of the four control points around position `u`
// (control-grid units) on a lattice of `n` points; indices are clamped
// at the ends.
struct SplineTap {
  std::array<int, 4> index;
  std::array<double, 4> weight;
};

inline SplineTap spline_tap(double u, int n) {
  const int i = std::clamp(static_cast<int>(std::floor(u)), 0, n - 2);
  const double t = u - i;
  const double t2 = t * t, t3 = t2 * t;
  SplineTap tap;
  tap.weight = {-0.5 * t3 + t2 - 0.5 * t, 1.5 * t3 - 2.5 * t2 + 1.0, -1.5 * t3 + 2.0 * t2 + 0.5 * t, 0.5 * t3 - 0.5 * t2};
  tap.index = {std::max(i - 1, 0), i, i + 1, std::min(i + 2, n - 1)};
  return tap;
}

inline std::vector<SplineTap> axis_taps(std::int64_t extent, int grid) {
  std::vector<SplineTap> taps(static_cast<std::size_t>(extent));
  for (std::int64_t p = 0; p < extent; ++p) {
    const double u = extent > 1 ? static_cast<double>(p) * (grid - 1) / static_cast<double>(extent - 1) : 0.0;
    taps[static_cast<std::size_t>(p)] = spline_tap(u, grid);
  }
  return taps;
}

}  // namespace detail

// Dense displacement (dy, dz) at every in-plane pixel.
inline std::array<Array2<double>, 2> dense_displacement(const DeformationField& f, std::int64_t rows, std::int64_t cols) {
  std::array<Array2<double>, 2> out{Array2<double>(rows, cols), Array2<double>(rows, cols)};
  const auto ty = detail::axis_taps(rows, f.grid);
  const auto tz = detail::axis_taps(cols, f.grid);
  for (std::size_t axis = 0; axis < 2; ++axis) {
    const auto& c = f.control[axis];
    for (std::int64_t y = 0; y < rows; ++y) {
      const auto& a = ty[static_cast<std::size_t>(y)];
      for (std::int64_t z = 0; z < cols; ++z) {
        const auto& b = tz[static_cast<std::size_t>(z)];
        double v = 0.0;
        for (int p = 0; p < 4; ++p) {
          for (int q = 0; q < 4; ++q) {
            v += a.weight[static_cast<std::size_t>(p)] * b.weight[static_cast<std::size_t>(q)] *
                 c[static_cast<std::size_t>(a.index[static_cast<std::size_t>(p)] * f.grid + b.index[static_cast<std::size_t>(q)])];
          }
        }
        out[axis](y, z) = v;
      }
    }
  }
  return out;
}

// Warps image (bilinear) and label (nearest-neighbour) of an
// identification patch with the same field. Sampling is edge-clamped, so
// the output label set is a subset of the input label set.
inline Patch apply_deformation(const Patch& p, const DeformationField& f) {
  if (p.kind != PatchKind::kIdentification) raise<InvalidArgument>("elastic deformation applies to identification patches");
  const Index3 e = p.image.extent();
  if (p.label.extent() != Index3{1, e[1], e[2]}) raise<ShapeMismatch>("patch label does not match image slice");
  if (f.sigma == 0.0) return p;

  const auto disp = dense_displacement(f, e[1], e[2]);
  Patch out = p;
  const double ymax = static_cast<double>(e[1] - 1), zmax = static_cast<double>(e[2] - 1);
  for (std::int64_t y = 0; y < e[1]; ++y) {
    for (std::int64_t z = 0; z < e[2]; ++z) {
      const double sy = std::clamp(static_cast<double>(y) + disp[0](y, z), 0.0, ymax);
      const double sz = std::clamp(static_cast<double>(z) + disp[1](y, z), 0.0, zmax);
      const auto y0 = static_cast<std::int64_t>(std::floor(sy));
      const auto z0 = static_cast<std::int64_t>(std::floor(sz));
      const std::int64_t y1 = std::min(y0 + 1, e[1] - 1), z1 = std::min(z0 + 1, e[2] - 1);
      const double fy = sy - static_cast<double>(y0), fz = sz - static_cast<double>(z0);
      for (std::int64_t x = 0; x < e[0]; ++x) {
        const double v = (p.image(x, y0, z0) * (1 - fz) + p.image(x, y0, z1) * fz) * (1 - fy) +
                         (p.image(x, y1, z0) * (1 - fz) + p.image(x, y1, z1) * fz) * fy;
        out.image(x, y, z) = static_cast<float>(v);
      }
      out.label(0, y, z) = p.label(0, std::llround(sy), std::llround(sz));
    }
  }
  return out;
}

inline Patch elastic_deform(const Patch& p, double sigma, std::uint64_t seed, int grid = 3) {
  return apply_deformation(p, DeformationField::random(grid, sigma, seed));
}

}  // namespace spineloc
