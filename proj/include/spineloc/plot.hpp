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
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "spineloc/error.hpp"
#include "spineloc/evaluate.hpp"

namespace spineloc {

struct BoxStats {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

// Quartiles by linear interpolation between order statistics.
inline BoxStats box_stats(std::vector<double> v) {
  if (v.empty()) raise<InvalidArgument>("box statistics of an empty sample");
  std::sort(v.begin(), v.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  return {v.front(), q(0.25), q(0.5), q(0.75), v.back()};
}

struct PlotSummary {
  std::vector<int> plotted;          // labels, ascending
  std::vector<std::string> notices;  // omitted regions
};

// Box plot of localization error per vertebra, C1 to S2, one box per
// vertebra with data. Written as PNG (or any format OpenCV infers from
// the extension).
inline PlotSummary plot_per_vertebra(const RegionReport& report, const std::filesystem::path& path) {
  PlotSummary summary;
  for (const auto& [label, errs] : report.per_vertebra) {
    if (!errs.empty()) summary.plotted.push_back(label);
  }
  if (summary.plotted.empty()) raise<InvalidArgument>("report has no per-vertebra errors to plot");
  for (Region region : {Region::kCervical, Region::kThoracic, Region::kLumbar, Region::kSacral}) {
    const bool any = std::any_of(summary.plotted.begin(), summary.plotted.end(),
                                 [&](int l) { return VertebraLabel(l).region() == region; });
    if (!any) summary.notices.push_back(std::string(region_name(region)) + ": no data, omitted from plot");
  }

  const int left = 70, right = 20, top = 40, bottom = 60;
  const int box_w = 36;
  const int width = left + right + box_w * static_cast<int>(summary.plotted.size());
  const int height = 420;
  const int plot_h = height - top - bottom;
  cv::Mat img(height, std::max(width, 240), CV_8UC3, cv::Scalar(255, 255, 255));

  double ymax = 1.0;
  for (int l : summary.plotted) {
    for (double e : report.per_vertebra.at(l)) ymax = std::max(ymax, e);
  }
  ymax = std::ceil(ymax / 5.0) * 5.0;
  auto ypix = [&](double v) { return top + static_cast<int>(std::lround((1.0 - v / ymax) * plot_h)); };

  const cv::Scalar black(0, 0, 0), grey(200, 200, 200), blue(180, 110, 40), red(40, 40, 200);
  const int font = cv::FONT_HERSHEY_SIMPLEX;
  for (int t = 0; t <= 5; ++t) {
    const double v = ymax * t / 5.0;
    cv::line(img, {left, ypix(v)}, {img.cols - right, ypix(v)}, grey, 1);
    cv::putText(img, std::to_string(static_cast<int>(std::lround(v))), {10, ypix(v) + 5}, font, 0.4, black, 1);
  }
  cv::putText(img, "Localization error per vertebra (mm)", {left, 25}, font, 0.5, black, 1);

  for (std::size_t n = 0; n < summary.plotted.size(); ++n) {
    const int label = summary.plotted[n];
    const BoxStats b = box_stats(report.per_vertebra.at(label));
    const int cx = left + box_w * static_cast<int>(n) + box_w / 2;
    const int hw = box_w / 2 - 6;
    cv::line(img, {cx, ypix(b.min)}, {cx, ypix(b.q1)}, black, 1);
    cv::line(img, {cx, ypix(b.q3)}, {cx, ypix(b.max)}, black, 1);
    cv::line(img, {cx - hw / 2, ypix(b.min)}, {cx + hw / 2, ypix(b.min)}, black, 1);
    cv::line(img, {cx - hw / 2, ypix(b.max)}, {cx + hw / 2, ypix(b.max)}, black, 1);
    cv::rectangle(img, {cx - hw, ypix(b.q3)}, {cx + hw, ypix(b.q1)}, blue, cv::FILLED);
    cv::rectangle(img, {cx - hw, ypix(b.q3)}, {cx + hw, ypix(b.q1)}, black, 1);
    cv::line(img, {cx - hw, ypix(b.median)}, {cx + hw, ypix(b.median)}, red, 2);
    cv::putText(img, std::string(vertebra_name(label)), {cx - hw, height - bottom + 20}, font, 0.35, black, 1);
  }
  cv::line(img, {left, top}, {left, top + plot_h}, black, 1);
  cv::line(img, {left, top + plot_h}, {img.cols - right, top + plot_h}, black, 1);

  bool ok = false;
  try {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    ok = cv::imwrite(path.string(), img);
  } catch (const std::filesystem::filesystem_error& e) {
    raise<IoError>("cannot write plot '", path.string(), "': ", e.what());
  } catch (const cv::Exception& e) {
    raise<IoError>("cannot write plot '", path.string(), "': ", e.what());
  }
  if (!ok) raise<IoError>("cannot write plot '", path.string(), "'");
  return summary;
}

}  // namespace spineloc
