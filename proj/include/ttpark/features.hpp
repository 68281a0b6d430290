/******************************************************************************
 * Copyright 2026 The ttpark Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *****************************************************************************/
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ttpark {

/// 256-bit binary feature signature.
struct Descriptor {
  static constexpr int kBits = 256;
  static constexpr int kBytes = kBits / 8;

  std::array<std::uint64_t, 4> words{};

  bool bit(int index) const { return (words[index >> 6] >> (index & 63)) & 1U; }
  void flip(int index) { words[index >> 6] ^= std::uint64_t{1} << (index & 63); }

  /// 64 lowercase hex digits, most significant byte first.
  std::string to_hex() const;
  static Descriptor from_hex(std::string_view hex);

  std::array<std::uint8_t, kBytes> to_bytes() const;
  static Descriptor from_bytes(std::span<const std::uint8_t, kBytes> bytes);

  friend bool operator==(const Descriptor&, const Descriptor&) = default;
};

/// Popcount of the XOR of two descriptors.
int hamming(const Descriptor& a, const Descriptor& b);

/// Semantic labels produced by the segmentation stage.
enum class SemanticClass : std::uint8_t {
  kBuilding = 0,
  kVegetation = 1,
  kRoadMarking = 2,
  kCurb = 3,
  kVehicle = 4,
  kPedestrian = 5,
};

inline constexpr std::array<SemanticClass, 6> kAllSemanticClasses{
    SemanticClass::kBuilding, SemanticClass::kVegetation, SemanticClass::kRoadMarking,
    SemanticClass::kCurb,     SemanticClass::kVehicle,    SemanticClass::kPedestrian};

std::string_view class_name(SemanticClass cls);
/// Throws kConfig for unknown names.
SemanticClass parse_class(std::string_view name);
/// Throws kConfig when the raw value is not a known class.
SemanticClass class_from_byte(std::uint8_t value);

/// Movable objects may be elsewhere during relocalization.
inline bool is_dynamic(SemanticClass cls) {
  return cls == SemanticClass::kVehicle || cls == SemanticClass::kPedestrian;
}

/// Trust placed in features on each class: dynamic objects get no weight,
/// vegetation half, static structure full.
double semantic_weight(SemanticClass cls);
double semantic_weight(std::string_view class_name);

struct Match {
  std::size_t query_index = 0;
  std::uint32_t landmark_id = 0;
  int distance = 0;
  double weight = 1.0;

  /// Zero-weight matches stay in the set for diagnostics but solvers skip them.
  bool ignored() const { return weight <= 0.0; }
};

using MatchSet = std::vector<Match>;

struct MatchCandidate {
  std::uint32_t landmark_id = 0;
  Descriptor descriptor;
  SemanticClass cls = SemanticClass::kBuilding;
};

struct MatchOptions {
  int max_dist = 64;
  double ratio = 0.7;
  bool mutual_best = true;
};

/// Nearest-neighbour matching with a distance gate, a best/second-best ratio
/// test (skipped with fewer than two candidates) and an optional mutual-best
/// cross check. The result holds at most one match per query and, with the
/// cross check on, at most one per landmark. Ordered by query index.
MatchSet match(std::span<const Descriptor> query, std::span<const MatchCandidate> candidates,
               const MatchOptions& options = {});

}  // namespace ttpark
