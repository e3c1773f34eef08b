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
#include <set>

#include "oracles.hpp"
#include "spineloc/inference.hpp"
#include "spineloc/stubs.hpp"

namespace spineloc {
namespace {

Volume random_scan(std::mt19937_64& rng, Index3 extent) {
  Volume v{Array3<float>(extent), Geometry{}};
  std::uniform_real_distribution<float> u(-1200.0F, 1500.0F);
  for (auto& x : v.data.values()) x = u(rng);
  return v;
}

TEST(Tiling, FullPatchExtent) {
  const auto plan = plan_tiling({64, 64, 80});
  EXPECT_EQ(plan.padded, (Index3{96, 96, 120}));
  std::set<Index3> want;
  for (std::int64_t i : {0, 32}) {
    for (std::int64_t j : {0, 32}) {
      for (std::int64_t k : {0, 40}) want.insert({i, j, k});
    }
  }
  EXPECT_EQ(std::set<Index3>(plan.offsets.begin(), plan.offsets.end()), want);
  EXPECT_EQ(plan.offsets.size(), 8U);
}

TEST(Tiling, SingleWindow) {
  const auto plan = plan_tiling({32, 32, 40});
  EXPECT_EQ(plan.padded, (Index3{64, 64, 80}));
  ASSERT_EQ(plan.offsets.size(), 1U);
  EXPECT_EQ(plan.offsets[0], (Index3{0, 0, 0}));
}

TEST(Tiling, RejectsInconsistentParams) {
  TilingParams p;
  p.patch = {64, 64, 64};
  EXPECT_THROW(plan_tiling({10, 10, 10}, p), InvalidArgument);
}

TEST(TilingProperty, InteriorsPartitionTheExtent) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::int64_t> ext(1, 140);
  for (int trial = 0; trial < 30; ++trial) {
    const Index3 e{ext(rng), ext(rng), ext(rng)};
    const auto plan = plan_tiling(e);
    Array3<std::uint8_t> hits(e, 0);
    for (const auto& off : plan.offsets) {
      for (std::int64_t i = off[0]; i < std::min(off[0] + 32, e[0]); ++i) {
        for (std::int64_t j = off[1]; j < std::min(off[1] + 32, e[1]); ++j) {
          for (std::int64_t k = off[2]; k < std::min(off[2] + 40, e[2]); ++k) ++hits(i, j, k);
        }
      }
      for (std::size_t a = 0; a < 3; ++a) ASSERT_LE(off[a] + plan.params.patch[a], plan.padded[a]);
    }
    for (auto h : hits.values()) ASSERT_EQ(h, 1);
  }
}

TEST(DetectVolume, ThresholdStubIsSeamFree) {
  std::mt19937_64 rng(8);
  const Volume v = random_scan(rng, {70, 45, 91});
  const ThresholdDetectionStub stub;
  EXPECT_EQ(detect_volume(stub, v).data, oracle::unpatched_detection(stub, v, {16, 16, 20}));
}

TEST(DetectVolume, NeighbourhoodStubIsSeamFree) {
  std::mt19937_64 rng(9);
  const Volume v = random_scan(rng, {41, 66, 85});
  EXPECT_EQ(detect_volume(oracle::BoxMeanStub{}, v).data,
            oracle::unpatched_detection(oracle::BoxMeanStub{}, v, {16, 16, 20}));
}

TEST(DetectVolume, WrongPredictorShapeIsError) {
  const Volume v{Array3<float>({10, 10, 10}, 0.0F), Geometry{}};
  auto bad = [](const Array3<float>&) { return Array3<float>({2, 2, 2}, 0.0F); };
  EXPECT_THROW(detect_volume(bad, v), ShapeMismatch);
}

struct ChannelMeanStub {
  std::vector<Index3>* seen = nullptr;
  Array2<float> operator()(const Array3<float>& s) const {
    const auto& e = s.extent();
    if (seen) seen->push_back(e);
    Array2<float> out(e[1], e[2], 0.0F);
    for (std::int64_t y = 0; y < e[1]; ++y) {
      for (std::int64_t z = 0; z < e[2]; ++z) {
        float m = 0.0F;
        for (std::int64_t c = 0; c < e[0]; ++c) m += s(c, y, z);
        out(y, z) = m / static_cast<float>(e[0]);
      }
    }
    return out;
  }
};

TEST(IdentifyVolume, PadsInPlaneToMultipleOf16) {
  std::vector<Index3> seen;
  const Volume v{Array3<float>({3, 70, 300}, 0.0F), Geometry{}};
  const RealMap out = identify_volume(ChannelMeanStub{&seen}, v);
  EXPECT_EQ(out.extent(), (Index3{3, 70, 300}));
  ASSERT_EQ(seen.size(), 3U);
  EXPECT_EQ(seen[0], (Index3{8, 80, 304}));

  seen.clear();
  identify_volume(ChannelMeanStub{&seen}, Volume{Array3<float>({1, 80, 320}, 0.0F), Geometry{}});
  EXPECT_EQ(seen.at(0), (Index3{8, 80, 320}));
}

TEST(IdentifyVolume, ChannelMeanMatchesDirectSlabMeans) {
  std::mt19937_64 rng(10);
  const Volume v = random_scan(rng, {12, 21, 37});
  const RealMap out = identify_volume(ChannelMeanStub{}, v);
  const Array3<float> n = normalized(v, SamplerConfig{});
  for (std::int64_t x = 0; x < 12; ++x) {
    for (std::int64_t y = 0; y < 21; ++y) {
      for (std::int64_t z = 0; z < 37; ++z) {
        float m = 0.0F;
        for (std::int64_t c = 0; c < 8; ++c) m += n(std::clamp<std::int64_t>(x - 3 + c, 0, 11), y, z);
        ASSERT_EQ(out.data(x, y, z), m / 8.0F);
      }
    }
  }
}

TEST(IdentifyVolume, IntensityStubDecodesLabels) {
  Volume v{Array3<float>({9, 20, 20}, -1000.0F), Geometry{}};
  v.data(4, 5, 6) = 100.0F + 40.0F * 17.0F;
  const RealMap out = identify_volume(IntensityIdentificationStub{}, v);
  EXPECT_NEAR(out.data(4, 5, 6), 17.0F, 1e-3F);
  EXPECT_EQ(out.data(3, 5, 6), 0.0F);
  EXPECT_EQ(out.data(4, 5, 7), 0.0F);
}

DenseLabelMap det1(std::uint8_t v) { return {Array3<std::uint8_t>({1, 1, 1}, v), {}}; }
RealMap id1(float v) { return {Array3<float>({1, 1, 1}, v), {}}; }

TEST(Fuse, RoundsMasksAndClamps) {
  EXPECT_EQ(fuse(det1(1), id1(4.4F)).data(0, 0, 0), 4);
  EXPECT_EQ(fuse(det1(0), id1(17.2F)).data(0, 0, 0), 0);
  EXPECT_EQ(fuse(det1(1), id1(26.7F)).data(0, 0, 0), 26);
  EXPECT_EQ(fuse(det1(1), id1(4.5F)).data(0, 0, 0), 5);
  EXPECT_EQ(fuse(det1(1), id1(-3.0F)).data(0, 0, 0), 0);
  EXPECT_EQ(fuse(det1(1), id1(std::nanf(""))).data(0, 0, 0), 0);
  EXPECT_THROW(fuse(det1(2), id1(1.0F)), InvalidArgument);
}

TEST(Fuse, GeometryMismatchIsError) {
  RealMap id{Array3<float>({2, 1, 1}, 0.0F), {}};
  EXPECT_THROW(fuse(det1(1), id), Error);
}

TEST(FuseProperty, OutputWithinRangeAndZeroWhereUndetected) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<float> u(-40.0F, 40.0F);
  std::bernoulli_distribution b(0.5);
  DenseLabelMap det{Array3<std::uint8_t>({10, 10, 10}, 0), {}};
  RealMap id{Array3<float>({10, 10, 10}, 0.0F), {}};
  for (auto& v : det.data.values()) v = b(rng) ? 1 : 0;
  for (auto& v : id.data.values()) v = u(rng);
  const auto f = fuse(det, id);
  for (std::size_t i = 0; i < f.data.size(); ++i) {
    ASSERT_LE(f.data.values()[i], 26);
    if (det.data.values()[i] == 0) ASSERT_EQ(f.data.values()[i], 0);
  }
}

}  // namespace
}  // namespace spineloc
