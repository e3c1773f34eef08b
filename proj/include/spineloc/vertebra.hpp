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

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "spineloc/error.hpp"

namespace spineloc {

inline constexpr int kFirstVertebra = 1;   // C1
inline constexpr int kLastVertebra = 26;   // S2
inline constexpr int kVertebraCount = 26;

enum class Region { kCervical, kThoracic, kLumbar, kSacral };

inline constexpr std::array<std::string_view, kVertebraCount> kVertebraNames = {
    "C1", "C2", "C3", "C4", "C5", "C6", "C7",
    "T1", "T2", "T3", "T4", "T5", "T6", "T7", "T8", "T9", "T10", "T11", "T12",
    "L1", "L2", "L3", "L4", "L5",
    "S1", "S2"};

// Index 1..26 (C1..S2). 0 is reserved for background in label maps.
class VertebraLabel {
 public:
  constexpr explicit VertebraLabel(int index) : index_(index) {
    if (index < kFirstVertebra || index > kLastVertebra) {
      throw InvalidArgument("vertebra index out of range 1..26: " + std::to_string(index));
    }
  }

  static std::optional<VertebraLabel> from_name(std::string_view name) {
    for (int i = 0; i < kVertebraCount; ++i) {
      if (kVertebraNames[static_cast<std::size_t>(i)] == name) return VertebraLabel(i + 1);
    }
    return std::nullopt;
  }

  constexpr int index() const { return index_; }
  constexpr std::string_view name() const { return kVertebraNames[static_cast<std::size_t>(index_ - 1)]; }

  constexpr Region region() const {
    if (index_ <= 7) return Region::kCervical;
    if (index_ <= 19) return Region::kThoracic;
    if (index_ <= 24) return Region::kLumbar;
    return Region::kSacral;
  }

  friend constexpr auto operator<=>(const VertebraLabel&, const VertebraLabel&) = default;

 private:
  int index_;
};

inline std::string_view region_name(Region r) {
  switch (r) {
    case Region::kCervical: return "Cervical";
    case Region::kThoracic: return "Thoracic";
    case Region::kLumbar: return "Lumbar";
    case Region::kSacral: return "Sacral";
  }
  return "?";
}

inline std::string_view vertebra_name(int index) { return VertebraLabel(index).name(); }

}  // namespace spineloc
