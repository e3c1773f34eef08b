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

// Localization error and identification rate.
//
// Conventions:
//  - a prediction is correctly identified when the nearest ground-truth
//    centroid carries the same label and lies strictly closer than 20mm;
//  - localization error is measured for labels present in both sets;
//  - the primary Id rate divides by the number of ground-truth vertebrae
//    (missed vertebrae count as failures); the rate over predictions is
//    reported alongside;
//  - std is the population standard deviation of pooled errors.

#pragma once

#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spineloc/centroids.hpp"
#include "spineloc/error.hpp"
#include "spineloc/vertebra.hpp"

namespace spineloc {

inline constexpr double kIdentificationRadiusMm = 20.0;

struct ScanScore {
  std::string scan_id;
  std::vector<int> truth_labels;
  std::vector<int> predicted_labels;
  std::map<int, double> errors;       // labels present in both sets
  std::map<int, bool> identified;     // one flag per predicted label
  std::optional<double> mean_error;   // over `errors`

  int correct() const {
    int n = 0;
    for (const auto& [label, ok] : identified) n += ok ? 1 : 0;
    return n;
  }
};

inline ScanScore score_scan(const CentroidSet& pred, const CentroidSet& truth, std::string scan_id = {},
                            double id_radius_mm = kIdentificationRadiusMm) {
  ScanScore s;
  s.scan_id = std::move(scan_id);
  s.truth_labels = truth.labels();
  s.predicted_labels = pred.labels();
  double sum = 0.0;
  for (const auto& [label, p] : pred) {
    if (truth.contains(label)) {
      const double e = distance(p, truth.at(label));
      s.errors[label] = e;
      sum += e;
    }
    int nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [tl, tp] : truth) {
      const double d = distance(p, tp);
      if (d < best) {
        best = d;
        nearest = tl;
      }
    }
    s.identified[label] = nearest == label && best < id_radius_mm;
  }
  if (!s.errors.empty()) s.mean_error = sum / static_cast<double>(s.errors.size());
  return s;
}

struct RegionStats {
  int truth_count = 0;
  int predicted_count = 0;
  int correct = 0;
  std::vector<double> errors;

  std::optional<double> id_rate() const {  // percent of ground-truth vertebrae
    if (truth_count == 0) return std::nullopt;
    return 100.0 * correct / truth_count;
  }
  std::optional<double> id_rate_over_predictions() const {
    if (predicted_count == 0) return std::nullopt;
    return 100.0 * correct / predicted_count;
  }
  std::optional<double> mean() const {
    if (errors.empty()) return std::nullopt;
    double s = 0.0;
    for (double e : errors) s += e;
    return s / static_cast<double>(errors.size());
  }
  std::optional<double> stddev() const {
    const auto m = mean();
    if (!m) return std::nullopt;
    double s = 0.0;
    for (double e : errors) s += (e - *m) * (e - *m);
    return std::sqrt(s / static_cast<double>(errors.size()));
  }
};

inline constexpr std::array<std::string_view, 5> kReportRegions = {"All", "Cervical", "Thoracic", "Lumbar", "Sacral"};

struct RegionReport {
  std::map<std::string, RegionStats, std::less<>> regions;
  std::map<int, std::vector<double>> per_vertebra;  // errors by label, for the box plot
  int scans = 0;

  const RegionStats& region(std::string_view name) const {
    auto it = regions.find(name);
    if (it == regions.end()) raise<InvalidArgument>("no region '", name, "'");
    return it->second;
  }
};

inline RegionReport build_report(const std::vector<ScanScore>& scores) {
  if (scores.empty()) raise<InvalidArgument>("no scan scores to report");
  RegionReport r;
  for (auto name : kReportRegions) r.regions[std::string(name)];
  r.scans = static_cast<int>(scores.size());
  for (const auto& s : scores) {
    auto both = [&](int label) -> std::array<RegionStats*, 2> {
      return {&r.regions["All"], &r.regions[std::string(region_name(VertebraLabel(label).region()))]};
    };
    for (int label : s.truth_labels) {
      for (auto* st : both(label)) ++st->truth_count;
    }
    for (int label : s.predicted_labels) {
      const bool ok = s.identified.at(label);
      for (auto* st : both(label)) {
        ++st->predicted_count;
        st->correct += ok ? 1 : 0;
      }
    }
    for (const auto& [label, e] : s.errors) {
      for (auto* st : both(label)) st->errors.push_back(e);
      r.per_vertebra[label].push_back(e);
    }
  }
  return r;
}

namespace detail {

inline nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace detail

inline nlohmann::json to_json(const RegionReport& r) {
  nlohmann::json regions = nlohmann::json::object();
  for (auto name : kReportRegions) {
    const auto& st = r.region(name);
    regions[std::string(name)] = {{"id_rate", detail::opt(st.id_rate())},
                                  {"id_rate_over_predictions", detail::opt(st.id_rate_over_predictions())},
                                  {"mean", detail::opt(st.mean())},
                                  {"std", detail::opt(st.stddev())},
                                  {"ground_truth", st.truth_count},
                                  {"predicted", st.predicted_count},
                                  {"correct", st.correct},
                                  {"localized", st.errors.size()}};
  }
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [label, errs] : r.per_vertebra) per[std::string(vertebra_name(label))] = errs;
  return {{"scans", r.scans}, {"regions", regions}, {"per_vertebra", per}};
}

inline RegionReport report_from_json(const nlohmann::json& j) {
  RegionReport r;
  r.scans = j.at("scans").get<int>();
  for (const auto& [name, v] : j.at("regions").items()) {
    RegionStats st;
    st.truth_count = v.at("ground_truth").get<int>();
    st.predicted_count = v.at("predicted").get<int>();
    st.correct = v.at("correct").get<int>();
    r.regions[name] = st;
  }
  for (const auto& [name, errs] : j.at("per_vertebra").items()) {
    const auto label = VertebraLabel::from_name(name);
    if (!label) raise<IoError>("unknown vertebra '", name, "' in report");
    r.per_vertebra[label->index()] = errs.get<std::vector<double>>();
    for (double e : r.per_vertebra[label->index()]) {
      r.regions["All"].errors.push_back(e);
      r.regions[std::string(region_name(label->region()))].errors.push_back(e);
    }
  }
  return r;
}

// Fixed-width table: Region | Id Rate | Mean | Std.
inline std::string format_report_table(const RegionReport& r) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "Region" << std::right << std::setw(10) << "Id Rate" << std::setw(9) << "Mean"
     << std::setw(9) << "Std" << std::setw(8) << "N" << '\n';
  auto cell = [&](const std::optional<double>& v, int width, const char* suffix) {
    std::ostringstream c;
    if (v) c << std::fixed << std::setprecision(suffix[0] == '%' ? 1 : 2) << *v << suffix;
    else c << '-';
    os << std::setw(width) << c.str();
  };
  for (auto name : kReportRegions) {
    const auto& st = r.region(name);
    os << std::left << std::setw(10) << name << std::right;
    cell(st.id_rate(), 10, "%");
    cell(st.mean(), 9, "");
    cell(st.stddev(), 9, "");
    os << std::setw(8) << st.truth_count << '\n';
  }
  return os.str();
}

}  // namespace spineloc
