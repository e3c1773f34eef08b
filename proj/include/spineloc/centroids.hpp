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
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "spineloc/error.hpp"
#include "spineloc/geometry.hpp"
#include "spineloc/vertebra.hpp"

namespace spineloc {

namespace fs = std::filesystem;

// Sparse annotation: at most one position (mm, relative frame of the
// resampled volume) per vertebra, iterated in anatomical order.
class CentroidSet {
 public:
  using Map = std::map<int, Vec3>;

  CentroidSet() = default;
  CentroidSet(std::initializer_list<std::pair<int, Vec3>> entries) {
    for (const auto& [index, pos] : entries) insert(VertebraLabel(index), pos);
  }

  void insert(VertebraLabel label, Vec3 pos) {
    if (!entries_.emplace(label.index(), pos).second) {
      raise<InvalidArgument>("duplicate label ", label.name());
    }
  }
  void insert_or_assign(VertebraLabel label, Vec3 pos) { entries_.insert_or_assign(label.index(), pos); }
  void erase(VertebraLabel label) { entries_.erase(label.index()); }

  bool contains(int index) const { return entries_.contains(index); }
  const Vec3& at(int index) const {
    auto it = entries_.find(index);
    if (it == entries_.end()) raise<InvalidArgument>("no centroid for ", vertebra_name(index));
    return it->second;
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::vector<int> labels() const {
    std::vector<int> out;
    out.reserve(entries_.size());
    for (const auto& [index, pos] : entries_) out.push_back(index);
    return out;
  }

  // True when the labels form a gap-free run along the column.
  bool is_consecutive() const {
    return entries_.empty() || entries_.rbegin()->first - entries_.begin()->first + 1 == static_cast<int>(entries_.size());
  }

  CentroidSet translated(Vec3 offset) const {
    CentroidSet out;
    for (const auto& [index, pos] : entries_) out.entries_.emplace(index, pos + offset);
    return out;
  }

  friend bool operator==(const CentroidSet&, const CentroidSet&) = default;

 private:
  Map entries_;
};

// How the coordinates in an annotation file relate to the image. The
// dataset convention is not pinned down, so it is isolated here.
enum class AnnotationFrame {
  kRelativeMm,  // mm from the centre of voxel (0,0,0) along the array axes
  kWorldMm,     // world mm; the image origin is subtracted
  kVoxel,       // voxel indices in the original (pre-resampling) image
};

inline AnnotationFrame parse_annotation_frame(std::string_view s) {
  if (s == "relative_mm") return AnnotationFrame::kRelativeMm;
  if (s == "world_mm") return AnnotationFrame::kWorldMm;
  if (s == "voxel") return AnnotationFrame::kVoxel;
  raise<InvalidArgument>("unknown annotation frame '", s, "' (expected relative_mm, world_mm or voxel)");
}

inline std::string_view to_string(AnnotationFrame f) {
  switch (f) {
    case AnnotationFrame::kRelativeMm: return "relative_mm";
    case AnnotationFrame::kWorldMm: return "world_mm";
    case AnnotationFrame::kVoxel: return "voxel";
  }
  return "?";
}

struct AnnotationConvention {
  AnnotationFrame frame = AnnotationFrame::kRelativeMm;
  // Spacing of the original image, used by kVoxel.
  Vec3 source_spacing{1.0, 1.0, 1.0};
};

// The single conversion point from file coordinates to the relative
// frame. Resampling keeps the first voxel centre fixed, so relative mm
// positions are the same before and after resampling.
inline Vec3 to_relative_frame(Vec3 file_pos, const AnnotationConvention& conv, const Geometry& resampled) {
  switch (conv.frame) {
    case AnnotationFrame::kRelativeMm: return file_pos;
    case AnnotationFrame::kWorldMm: return file_pos - resampled.origin;
    case AnnotationFrame::kVoxel:
      return {file_pos.x * conv.source_spacing.x, file_pos.y * conv.source_spacing.y,
              file_pos.z * conv.source_spacing.z};
  }
  return file_pos;
}

struct CentroidLoad {
  CentroidSet centroids;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_double(std::string_view s, const fs::path& path, int line_no) {
  s = trim(s);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    raise<IoError>(path.string(), ":", line_no, ": bad number '", s, "'");
  }
  return v;
}

}  // namespace detail

// Parses "NAME,x,y,z" lines. Blank lines and lines starting with '#' are
// ignored. No geometry conversion happens here.
inline CentroidSet parse_centroid_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) raise<IoError>("cannot open annotation file '", path.string(), "'");
  CentroidSet out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view text = detail::trim(line);
    if (text.empty() || text.front() == '#') continue;
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= text.size(); ++i) {
      if (i == text.size() || text[i] == ',') {
        fields.push_back(text.substr(start, i - start));
        start = i + 1;
      }
    }
    if (fields.size() != 4) raise<IoError>(path.string(), ":", line_no, ": expected NAME,x,y,z");
    const auto name = detail::trim(fields[0]);
    const auto label = VertebraLabel::from_name(name);
    if (!label) raise<IoError>(path.string(), ":", line_no, ": unknown vertebra name '", name, "'");
    const Vec3 pos{detail::parse_double(fields[1], path, line_no), detail::parse_double(fields[2], path, line_no),
                   detail::parse_double(fields[3], path, line_no)};
    if (out.contains(label->index())) {
      raise<IoError>(path.string(), ":", line_no, ": duplicate label ", name);
    }
    out.insert(*label, pos);
  }
  return out;
}

// Loads annotations for `volume` (already resampled), converting into
// its relative frame. Positions outside the volume are clamped and
// reported; label gaps are reported but kept.
template <typename T>
CentroidLoad load_centroids(const fs::path& path, const Image3<T>& volume, const AnnotationConvention& conv = {}) {
  CentroidLoad result;
  const CentroidSet raw = parse_centroid_file(path);
  const Vec3 upper = volume.upper_bound_mm();
  for (const auto& [index, file_pos] : raw) {
    Vec3 p = to_relative_frame(file_pos, conv, volume.geometry);
    const Vec3 clamped{std::clamp(p.x, 0.0, upper.x), std::clamp(p.y, 0.0, upper.y), std::clamp(p.z, 0.0, upper.z)};
    if (!(clamped == p)) {
      std::ostringstream msg;
      msg << vertebra_name(index) << " at " << p << " lies outside the volume; clamped to " << clamped;
      result.warnings.push_back(msg.str());
    }
    result.centroids.insert(VertebraLabel(index), clamped);
  }
  if (!result.centroids.is_consecutive()) {
    result.warnings.push_back("annotated vertebrae are not consecutive");
  }
  return result;
}

inline void save_centroids(const fs::path& path, const CentroidSet& set) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) raise<IoError>("cannot write '", path.string(), "'");
  out << std::setprecision(17);
  for (const auto& [index, p] : set) out << vertebra_name(index) << ',' << p.x << ',' << p.y << ',' << p.z << '\n';
  if (!out) raise<IoError>("write failed for '", path.string(), "'");
}

}  // namespace spineloc
