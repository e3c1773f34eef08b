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


#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "spineloc/evaluate.hpp"
#include "spineloc/plot.hpp"
#include "test_util.hpp"

namespace spineloc {
namespace {

TEST(ScoreScan, PerfectPrediction) {
  const CentroidSet truth{{20, {1, 2, 3}}, {21, {1, 2, 33}}, {22, {2, 2, 60}}};
  const auto s = score_scan(truth, truth);
  EXPECT_EQ(s.correct(), 3);
  for (const auto& [label, e] : s.errors) EXPECT_EQ(e, 0.0);
  EXPECT_EQ(s.mean_error, 0.0);
}

TEST(ScoreScan, NearestCentroidBelongsToAnotherLabel) {
  const CentroidSet truth{{20, {0, 0, 0}}, {21, {0, 0, 30}}};
  const CentroidSet pred{{20, {0, 0, 25}}};
  const auto s = score_scan(pred, truth);
  EXPECT_EQ(s.errors.at(20), 25.0);
  EXPECT_FALSE(s.identified.at(20));
}

TEST(ScoreScan, TwentyMillimetreRule) {
  const CentroidSet truth{{3, {0, 0, 0}}};
  const auto near = score_scan(CentroidSet{{3, {0, 0, 19}}}, truth);
  EXPECT_EQ(near.errors.at(3), 19.0);
  EXPECT_TRUE(near.identified.at(3));
  const auto far = score_scan(CentroidSet{{3, {0, 0, 25}}}, truth);
  EXPECT_EQ(far.errors.at(3), 25.0);
  EXPECT_FALSE(far.identified.at(3));
  EXPECT_FALSE(score_scan(CentroidSet{{3, {0, 0, 20}}}, truth).identified.at(3));
}

TEST(ScoreScan, PredictionAbsentFromTruthIsFailureWithoutError) {
  const CentroidSet truth{{3, {0, 0, 0}}};
  const auto s = score_scan(CentroidSet{{3, {0, 0, 1}}, {4, {0, 0, 2}}}, truth);
  EXPECT_FALSE(s.identified.at(4));
  EXPECT_FALSE(s.errors.contains(4));
  EXPECT_EQ(s.errors.size(), 1U);
}

ScanScore with_errors(std::vector<std::pair<int, double>> errs) {
  ScanScore s;
  for (auto [label, e] : errs) {
    s.truth_labels.push_back(label);
    s.predicted_labels.push_back(label);
    s.errors[label] = e;
    s.identified[label] = true;
  }
  return s;
}

TEST(Report, PooledMeanAndPopulationStd) {
  const auto r = build_report({with_errors({{20, 3.0}, {21, 5.0}}), with_errors({{20, 7.0}})});
  const auto& all = r.region("All");
  EXPECT_EQ(all.mean(), 5.0);
  EXPECT_DOUBLE_EQ(*all.stddev(), std::sqrt(8.0 / 3.0));
  EXPECT_EQ(r.region("Lumbar").errors.size(), 3U);
  EXPECT_FALSE(r.region("Cervical").mean().has_value());
  EXPECT_EQ(r.per_vertebra.at(20), (std::vector<double>{3.0, 7.0}));
}

TEST(Report, PerfectScoresEverywhere) {
  CentroidSet truth;
  for (int l = 1; l <= 26; ++l) truth.insert(VertebraLabel(l), {0, 0, 30.0 * l});
  const auto r = build_report({score_scan(truth, truth, "a"), score_scan(truth, truth, "b")});
  for (auto name : kReportRegions) {
    const auto& st = r.region(name);
    EXPECT_EQ(st.id_rate(), 100.0) << name;
    EXPECT_EQ(st.mean(), 0.0) << name;
    EXPECT_EQ(st.stddev(), 0.0) << name;
  }
  EXPECT_EQ(r.region("All").truth_count, 52);
  EXPECT_EQ(r.region("Thoracic").truth_count, 24);
}

TEST(Report, IdRateUsesGroundTruthCount) {
  const CentroidSet truth{{8, {0, 0, 0}}, {9, {0, 0, 30}}, {10, {0, 0, 60}}, {11, {0, 0, 90}}};
  const CentroidSet pred{{8, {0, 0, 1}}, {9, {0, 0, 58}}};
  const auto r = build_report({score_scan(pred, truth)});
  EXPECT_EQ(r.region("All").id_rate(), 25.0);
  EXPECT_EQ(r.region("All").id_rate_over_predictions(), 50.0);
}

TEST(Report, EmptyInputIsError) { EXPECT_THROW(build_report({}), InvalidArgument); }

TEST(Report, JsonRoundTripKeepsStatistics) {
  const auto r = build_report({with_errors({{2, 1.5}, {14, 4.0}}), with_errors({{25, 9.0}, {14, 2.0}})});
  const auto back = report_from_json(to_json(r));
  for (auto name : kReportRegions) {
    EXPECT_EQ(back.region(name).mean(), r.region(name).mean()) << name;
    EXPECT_EQ(back.region(name).id_rate(), r.region(name).id_rate()) << name;
  }
  EXPECT_EQ(back.per_vertebra, r.per_vertebra);
  const std::string table = format_report_table(r);
  EXPECT_NE(table.find("Thoracic"), std::string::npos);
  EXPECT_NE(table.find("Sacral"), std::string::npos);
}

TEST(EvaluateProperty, InvariantUnderTranslation) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int trial = 0; trial < 20; ++trial) {
    CentroidSet truth, pred;
    for (int l = 5; l < 12; ++l) {
      truth.insert(VertebraLabel(l), {u(rng), u(rng), 25.0 * l});
      pred.insert(VertebraLabel(l), truth.at(l) + Vec3{u(rng) / 5, u(rng) / 5, u(rng) / 5});
    }
    const Vec3 t{u(rng), u(rng), u(rng)};
    const auto a = score_scan(pred, truth);
    const auto b = score_scan(pred.translated(t), truth.translated(t));
    EXPECT_EQ(a.identified, b.identified);
    EXPECT_NEAR(*a.mean_error, *b.mean_error, 1e-9);
    for (const auto& [label, e] : a.errors) {
      const Vec3 d = pred.at(label) - truth.at(label);
      EXPECT_DOUBLE_EQ(e, std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z));
      EXPECT_GE(e, 0.0);
    }
  }
}

TEST(Plot, SingleBox) {
  TempDir dir;
  const auto r = build_report({with_errors({{20, 3.0}})});
  const auto summary = plot_per_vertebra(r, dir.path() / "plot.png");
  EXPECT_EQ(summary.plotted, (std::vector<int>{20}));
  EXPECT_EQ(summary.notices.size(), 3U);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "plot.png"));
}

TEST(Plot, FullReportHas26OrderedBoxes) {
  TempDir dir;
  std::vector<std::pair<int, double>> errs;
  for (int l = 26; l >= 1; --l) errs.emplace_back(l, 0.5 * l);
  const auto summary = plot_per_vertebra(build_report({with_errors(errs)}), dir.path() / "sub" / "full.png");
  ASSERT_EQ(summary.plotted.size(), 26U);
  for (int i = 0; i < 26; ++i) EXPECT_EQ(summary.plotted[static_cast<std::size_t>(i)], i + 1);
  EXPECT_TRUE(summary.notices.empty());
}

TEST(Plot, UnwritablePathIsError) {
  const auto r = build_report({with_errors({{20, 3.0}})});
  EXPECT_THROW(plot_per_vertebra(r, "/proc/spineloc/plot.png"), Error);
}

TEST(Plot, BoxStatsQuartiles) {
  const auto b = box_stats({5, 1, 3, 2, 4});
  EXPECT_EQ(b.min, 1);
  EXPECT_EQ(b.q1, 2);
  EXPECT_EQ(b.median, 3);
  EXPECT_EQ(b.q3, 4);
  EXPECT_EQ(b.max, 5);
}

}  // namespace
}  // namespace spineloc
