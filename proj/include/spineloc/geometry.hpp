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
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "spineloc/error.hpp"

namespace spineloc {

// Axis convention used everywhere in the library:
//   axis 0 = x, left-right
//   axis 1 = y, anterior-posterior
//   axis 2 = z, cranio-caudal
// Arrays are stored C-order (axis 2 fastest) so they map onto torch
// tensors of shape {X, Y, Z} without copying.
inline constexpr int kLeftRight = 0;
inline constexpr int kAnteriorPosterior = 1;
inline constexpr int kCranioCaudal = 2;

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr double operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
  constexpr double& operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }

  friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend constexpr Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;

  friend std::ostream& operator<<(std::ostream& os, const Vec3& v) {
    return os << '(' << v.x << ", " << v.y << ", " << v.z << ')';
  }
};

inline double norm(Vec3 v) { return std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z); }
inline double distance(Vec3 a, Vec3 b) { return norm(a - b); }

// Exact midpoint; the same expression is used wherever two segments
// share an endpoint so the coordinates agree bitwise.
inline Vec3 midpoint(Vec3 a, Vec3 b) { return 0.5 * (a + b); }

using Index3 = std::array<std::int64_t, 3>;

inline std::int64_t voxel_count(const Index3& e) { return e[0] * e[1] * e[2]; }

inline std::ostream& operator<<(std::ostream& os, const Index3& e) {
  return os << e[0] << 'x' << e[1] << 'x' << e[2];
}

template <typename T>
class Array3 {
 public:
  using value_type = T;

  Array3() = default;
  explicit Array3(Index3 extent, T fill = T{}) : extent_(extent) {
    for (auto e : extent_) {
      if (e < 1) raise<InvalidArgument>("array extent must be >= 1 on every axis, got ", extent_);
    }
    data_.assign(static_cast<std::size_t>(voxel_count(extent_)), fill);
  }

  const Index3& extent() const { return extent_; }
  std::int64_t extent(int axis) const { return extent_[static_cast<std::size_t>(axis)]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t offset(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return static_cast<std::size_t>((i * extent_[1] + j) * extent_[2] + k);
  }

  bool contains(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < extent_[0] && j < extent_[1] && k < extent_[2];
  }

  T& operator()(std::int64_t i, std::int64_t j, std::int64_t k) { return data_[offset(i, j, k)]; }
  const T& operator()(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return data_[offset(i, j, k)];
  }
  T& operator[](const Index3& p) { return (*this)(p[0], p[1], p[2]); }
  const T& operator[](const Index3& p) const { return (*this)(p[0], p[1], p[2]); }

  // Edge-replicating read.
  const T& clamped(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return (*this)(std::clamp<std::int64_t>(i, 0, extent_[0] - 1),
                   std::clamp<std::int64_t>(j, 0, extent_[1] - 1),
                   std::clamp<std::int64_t>(k, 0, extent_[2] - 1));
  }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Array3&, const Array3&) = default;

 private:
  Index3 extent_{0, 0, 0};
  std::vector<T> data_;
};

template <typename T>
class Array2 {
 public:
  Array2() = default;
  Array2(std::int64_t rows, std::int64_t cols, T fill = T{}) : rows_(rows), cols_(cols) {
    if (rows < 1 || cols < 1) raise<InvalidArgument>("array extent must be >= 1, got ", rows, 'x', cols);
    data_.assign(static_cast<std::size_t>(rows * cols), fill);
  }

  std::int64_t rows() const { return rows_; }
  std::int64_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * cols_ + c)]; }
  const T& operator()(std::int64_t r, std::int64_t c) const {
    return data_[static_cast<std::size_t>(r * cols_ + c)];
  }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  friend bool operator==(const Array2&, const Array2&) = default;

 private:
  std::int64_t rows_ = 0;
  std::int64_t cols_ = 0;
  std::vector<T> data_;
};

// Voxel spacing (mm/voxel) and the world position of voxel (0,0,0).
struct Geometry {
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};

  friend bool operator==(const Geometry&, const Geometry&) = default;

  bool is_isotropic_1mm(double tol = 1e-6) const {
    return std::abs(spacing.x - 1.0) <= tol && std::abs(spacing.y - 1.0) <= tol &&
           std::abs(spacing.z - 1.0) <= tol;
  }

  void validate() const {
    if (!(spacing.x > 0.0 && spacing.y > 0.0 && spacing.z > 0.0)) {
      raise<InvalidArgument>("spacing must be positive on every axis, got ", spacing);
    }
  }
};

// A 3D image with geometry. Positions in millimetres are measured from
// the centre of voxel (0,0,0) along the array axes ("relative frame"),
// so voxel (i,j,k) sits at (i*sx, j*sy, k*sz).
template <typename T>
struct Image3 {
  Array3<T> data;
  Geometry geometry;

  const Index3& extent() const { return data.extent(); }

  Vec3 position_of(const Index3& v) const {
    return {static_cast<double>(v[0]) * geometry.spacing.x,
            static_cast<double>(v[1]) * geometry.spacing.y,
            static_cast<double>(v[2]) * geometry.spacing.z};
  }

  // Largest representable position along each axis.
  Vec3 upper_bound_mm() const {
    return {static_cast<double>(extent()[0] - 1) * geometry.spacing.x,
            static_cast<double>(extent()[1] - 1) * geometry.spacing.y,
            static_cast<double>(extent()[2] - 1) * geometry.spacing.z};
  }

  friend bool operator==(const Image3&, const Image3&) = default;
};

using Volume = Image3<float>;
using DenseLabelMap = Image3<std::uint8_t>;
using RealMap = Image3<float>;

template <typename A, typename B>
void require_same_geometry(const Image3<A>& a, const Image3<B>& b, const char* what) {
  if (a.extent() != b.extent()) {
    raise<ShapeMismatch>(what, ": extents differ (", a.extent(), " vs ", b.extent(), ")");
  }
  if (!(a.geometry == b.geometry)) raise<ShapeMismatch>(what, ": geometry differs");
}

}  // namespace spineloc
