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
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "spineloc/centroids.hpp"
#include "spineloc/dense_label.hpp"
#include "spineloc/geometry.hpp"
#include "spineloc/vertebra.hpp"

namespace spineloc {

// x_v = max(floor, factor * R_v^3), counts in voxels at 1mm.
struct VoteRule {
  double floor = 3000.0;
  double cubic_factor = 0.4;
};

inline double vote_threshold(VertebraLabel v, const RadiiTable& radii, const VoteRule& rule = {}) {
  const double r = radii.at(v);
  return std::max(rule.floor, rule.cubic_factor * r * r * r);
}

struct VoteEntry {
  int label = 0;
  std::int64_t votes = 0;
  double threshold = 0.0;
  Vec3 median;
  bool accepted = false;
};

struct PredictionResult {
  DenseLabelMap fused;
  std::vector<VoteEntry> votes;  // one per label present, ascending
  CentroidSet centroids;         // accepted labels only
};

// Median with even counts resolved to the lower middle value.
inline std::int64_t lower_median(std::vector<std::int64_t>& v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>((v.size() - 1) / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

inline PredictionResult aggregate_centroids(const DenseLabelMap& fused, const RadiiTable& radii,
                                            const VoteRule& rule = {}) {
  std::array<std::array<std::vector<std::int64_t>, 3>, kVertebraCount + 1> coords;
  const Index3& e = fused.extent();
  for (std::int64_t i = 0; i < e[0]; ++i) {
    for (std::int64_t j = 0; j < e[1]; ++j) {
      for (std::int64_t k = 0; k < e[2]; ++k) {
        const std::uint8_t l = fused.data(i, j, k);
        if (l == 0) continue;
        if (l > kLastVertebra) raise<InvalidArgument>("fused label ", int{l}, " outside 0..26");
        coords[l][0].push_back(i);
        coords[l][1].push_back(j);
        coords[l][2].push_back(k);
      }
    }
  }

  PredictionResult result{fused, {}, {}};
  for (int l = kFirstVertebra; l <= kLastVertebra; ++l) {
    auto& c = coords[static_cast<std::size_t>(l)];
    if (c[0].empty()) continue;
    VoteEntry entry;
    entry.label = l;
    entry.votes = static_cast<std::int64_t>(c[0].size());
    entry.threshold = vote_threshold(VertebraLabel(l), radii, rule);
    entry.median = fused.position_of({lower_median(c[0]), lower_median(c[1]), lower_median(c[2])});
    entry.accepted = static_cast<double>(entry.votes) >= entry.threshold;
    if (entry.accepted) result.centroids.insert(VertebraLabel(l), entry.median);
    result.votes.push_back(entry);
  }
  return result;
}

inline nlohmann::json to_json(const PredictionResult& r) {
  nlohmann::json vertebrae = nlohmann::json::array();
  for (const auto& v : r.votes) {
    vertebrae.push_back({{"name", std::string(vertebra_name(v.label))},
                         {"x", v.median.x},
                         {"y", v.median.y},
                         {"z", v.median.z},
                         {"votes", v.votes},
                         {"threshold", v.threshold},
                         {"accepted", v.accepted}});
  }
  return {{"vertebrae", vertebrae}};
}

// Accepted centroids from a serialised result.
inline CentroidSet centroids_from_json(const nlohmann::json& j) {
  CentroidSet out;
  for (const auto& v : j.at("vertebrae")) {
    if (!v.at("accepted").get<bool>()) continue;
    const auto label = VertebraLabel::from_name(v.at("name").get<std::string>());
    if (!label) raise<IoError>("unknown vertebra name in prediction file");
    out.insert(*label, {v.at("x").get<double>(), v.at("y").get<double>(), v.at("z").get<double>()});
  }
  return out;
}

}  // namespace spineloc
