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

#include <set>

#include "spineloc/dense_label.hpp"
#include "spineloc/sampler.hpp"
#include "spineloc/synthetic.hpp"

namespace spineloc {
namespace {

struct Scan {
  Volume volume;
  DenseLabelMap labels;
};

Scan synthetic(Index3 extent, int first, int count, std::uint64_t seed = 0) {
  SpineSpec spec;
  spec.extent = extent;
  spec.first_label = first;
  spec.count = count;
  spec.step_mm = 20.0;
  spec.seed = seed;
  const RadiiTable radii;
  const auto c = synthetic_spine(spec);
  Scan s{make_synthetic_scan(c, radii, extent), {}};
  s.labels = make_dense_labels(c, radii, s.volume);
  return s;
}

bool any_label(const Array3<std::uint8_t>& a) {
  for (auto v : a.values()) {
    if (v != 0) return true;
  }
  return false;
}

TEST(Normalize, WindowEndpoints) {
  EXPECT_FLOAT_EQ(normalize_intensity(-1000.0F, SamplerConfig{}), -1.0F);
  EXPECT_FLOAT_EQ(normalize_intensity(-3000.0F, SamplerConfig{}), -1.0F);
  EXPECT_FLOAT_EQ(normalize_intensity(2000.0F, SamplerConfig{}), 1.0F);
  EXPECT_FLOAT_EQ(normalize_intensity(500.0F, SamplerConfig{}), 0.0F);
}

TEST(RequiredPositive, CeilOfFraction) {
  EXPECT_EQ(required_positive(5, 0.8), 4);
  EXPECT_EQ(required_positive(6, 0.8), 5);
  EXPECT_EQ(required_positive(10, 0.8), 8);
  EXPECT_EQ(required_positive(1, 0.8), 1);
}

TEST(DetectionSampler, FiveWithAtLeastFourPositive) {
  const Scan s = synthetic({100, 100, 150}, 17, 5);
  const auto patches = sample_detection_patches(s.volume, binarize(s.labels), 5, 42);
  ASSERT_EQ(patches.size(), 5U);
  int positive = 0;
  for (const auto& p : patches) {
    check_patch_shape(p, SamplerConfig{});
    positive += any_label(p.label);
  }
  EXPECT_GE(positive, 4);
  for (int i = 0; i < 4; ++i) EXPECT_TRUE(any_label(patches[static_cast<std::size_t>(i)].label));
}

TEST(DetectionSampler, Deterministic) {
  const Scan s = synthetic({90, 90, 120}, 10, 4);
  const auto d = binarize(s.labels);
  const auto a = sample_detection_patches(s.volume, d, 5, 7);
  const auto b = sample_detection_patches(s.volume, d, 5, 7);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].image, b[i].image);
    EXPECT_EQ(a[i].label, b[i].label);
    EXPECT_EQ(a[i].offset, b[i].offset);
    EXPECT_EQ(a[i].seed, b[i].seed);
  }
}

TEST(DetectionSampler, SmallVolumeIsZeroPadded) {
  Volume v{Array3<float>({32, 32, 40}, 700.0F), Geometry{}};
  DenseLabelMap d{Array3<std::uint8_t>({32, 32, 40}, 1), Geometry{}};
  const auto patches = sample_detection_patches(v, d, 3, 1);
  const float inside = normalize_intensity(700.0F, SamplerConfig{});
  for (const auto& p : patches) {
    ASSERT_EQ(p.image.extent(), (Index3{64, 64, 80}));
    EXPECT_EQ(p.offset, (Index3{0, 0, 0}));
    EXPECT_EQ(p.pad_before, (Index3{16, 16, 20}));
    for (std::int64_t i = 0; i < 64; ++i) {
      for (std::int64_t j = 0; j < 64; ++j) {
        for (std::int64_t k = 0; k < 80; ++k) {
          const bool src = i >= 16 && i < 48 && j >= 16 && j < 48 && k >= 20 && k < 60;
          ASSERT_EQ(p.image(i, j, k), src ? inside : 0.0F);
          ASSERT_EQ(p.label(i, j, k), src ? 1 : 0);
        }
      }
    }
  }
}

TEST(DetectionSampler, RejectsMultiLabelMap) {
  const Scan s = synthetic({80, 80, 100}, 10, 3);
  EXPECT_THROW(sample_detection_patches(s.volume, s.labels, 2, 0), InvalidArgument);
}

TEST(DetectionSampler, UnsatisfiableIsSamplingError) {
  Volume v{Array3<float>({70, 70, 90}, -1000.0F), Geometry{}};
  DenseLabelMap d{Array3<std::uint8_t>({70, 70, 90}, 0), Geometry{}};
  EXPECT_THROW(sample_detection_patches(v, d, 5, 3), SamplingError);
}

TEST(IdentificationSampler, AllPatchesPositive) {
  const Scan s = synthetic({100, 100, 170}, 15, 6);
  const auto patches = sample_identification_patches(s.volume, s.labels, 100, 5);
  ASSERT_EQ(patches.size(), 100U);
  for (const auto& p : patches) {
    check_patch_shape(p, SamplerConfig{});
    EXPECT_EQ(p.label.extent(), (Index3{1, 80, 320}));
    EXPECT_TRUE(any_label(p.label));
  }
}

TEST(IdentificationSampler, LabelIsTheFourthSlice) {
  const Scan s = synthetic({60, 90, 150}, 15, 4);
  const auto patches = sample_identification_patches(s.volume, s.labels, 10, 9);
  for (const auto& p : patches) {
    for (std::int64_t j = 0; j < 80; ++j) {
      for (std::int64_t k = 0; k < 320; ++k) {
        const std::int64_t si = p.offset[0] - p.pad_before[0] + 3;
        const std::int64_t sj = p.offset[1] - p.pad_before[1] + j;
        const std::int64_t sk = p.offset[2] - p.pad_before[2] + k;
        const std::uint8_t want = s.labels.data.contains(si, sj, sk) ? s.labels.data(si, sj, sk) : 0;
        ASSERT_EQ(p.label(0, j, k), want);
      }
    }
  }
}

TEST(IdentificationSampler, Deterministic) {
  const Scan s = synthetic({60, 90, 150}, 15, 4);
  const auto a = sample_identification_patches(s.volume, s.labels, 6, 123);
  const auto b = sample_identification_patches(s.volume, s.labels, 6, 123);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].image, b[i].image);
    EXPECT_EQ(a[i].label, b[i].label);
  }
  const auto c = sample_identification_patches(s.volume, s.labels, 6, 124);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs |= !(a[i].offset == c[i].offset);
  EXPECT_TRUE(differs);
}

TEST(SamplerProperty, EveryPatchMatchesItsSourceWindow) {
  const Scan s = synthetic({70, 75, 110}, 12, 4, 3);
  const auto d = binarize(s.labels);
  const auto patches = sample_detection_patches(s.volume, d, 8, 77);
  for (const auto& p : patches) {
    for (std::int64_t i = 0; i < 64; i += 3) {
      for (std::int64_t j = 0; j < 64; j += 3) {
        for (std::int64_t k = 0; k < 80; k += 3) {
          const std::int64_t si = p.offset[0] - p.pad_before[0] + i;
          const std::int64_t sj = p.offset[1] - p.pad_before[1] + j;
          const std::int64_t sk = p.offset[2] - p.pad_before[2] + k;
          const bool in = s.volume.data.contains(si, sj, sk);
          ASSERT_EQ(p.image(i, j, k), in ? normalize_intensity(s.volume.data(si, sj, sk), SamplerConfig{}) : 0.0F);
          ASSERT_EQ(p.label(i, j, k), in ? d.data(si, sj, sk) : 0);
        }
      }
    }
  }
}

}  // namespace
}  // namespace spineloc
