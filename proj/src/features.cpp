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
#include "ttpark/features.hpp"

#include <bit>
#include <limits>

#include "ttpark/errors.hpp"

namespace ttpark {

namespace {

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

std::array<std::uint8_t, Descriptor::kBytes> Descriptor::to_bytes() const {
  std::array<std::uint8_t, kBytes> out{};
  for (int i = 0; i < kBytes; ++i) {
    out[i] = static_cast<std::uint8_t>(words[i / 8] >> (8 * (i % 8)));
  }
  return out;
}

Descriptor Descriptor::from_bytes(std::span<const std::uint8_t, kBytes> bytes) {
  Descriptor d;
  for (int i = 0; i < kBytes; ++i) {
    d.words[i / 8] |= std::uint64_t{bytes[i]} << (8 * (i % 8));
  }
  return d;
}

std::string Descriptor::to_hex() const {
  static constexpr char kDigits[] = "0123456789abcdef";
  const auto bytes = to_bytes();
  std::string out;
  out.reserve(2 * kBytes);
  for (int i = kBytes - 1; i >= 0; --i) {
    out.push_back(kDigits[bytes[i] >> 4]);
    out.push_back(kDigits[bytes[i] & 0xF]);
  }
  return out;
}

Descriptor Descriptor::from_hex(std::string_view hex) {
  if (hex.size() != 2 * kBytes) {
    throw Error(ErrorCode::kConfig, "descriptor hex must be 64 digits, got " +
                                        std::to_string(hex.size()));
  }
  std::array<std::uint8_t, kBytes> bytes{};
  for (int i = 0; i < kBytes; ++i) {
    const int hi = hex_value(hex[2 * i]);
    const int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) {
      throw Error(ErrorCode::kConfig, "invalid hex digit in descriptor '" + std::string(hex) + "'");
    }
    bytes[kBytes - 1 - i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return from_bytes(bytes);
}

int hamming(const Descriptor& a, const Descriptor& b) {
  int d = 0;
  for (std::size_t i = 0; i < a.words.size(); ++i) d += std::popcount(a.words[i] ^ b.words[i]);
  return d;
}

std::string_view class_name(SemanticClass cls) {
  switch (cls) {
    case SemanticClass::kBuilding: return "building";
    case SemanticClass::kVegetation: return "vegetation";
    case SemanticClass::kRoadMarking: return "road_marking";
    case SemanticClass::kCurb: return "curb";
    case SemanticClass::kVehicle: return "vehicle";
    case SemanticClass::kPedestrian: return "pedestrian";
  }
  return "unknown";
}

SemanticClass parse_class(std::string_view name) {
  for (SemanticClass cls : kAllSemanticClasses) {
    if (class_name(cls) == name) return cls;
  }
  throw Error(ErrorCode::kConfig, "unknown semantic class '" + std::string(name) + "'");
}

SemanticClass class_from_byte(std::uint8_t value) {
  if (value >= kAllSemanticClasses.size()) {
    throw Error(ErrorCode::kConfig, "unknown semantic class code " + std::to_string(value));
  }
  return static_cast<SemanticClass>(value);
}

double semantic_weight(SemanticClass cls) {
  switch (cls) {
    case SemanticClass::kVehicle:
    case SemanticClass::kPedestrian:
      return 0.0;
    case SemanticClass::kVegetation:
      return 0.5;
    case SemanticClass::kBuilding:
    case SemanticClass::kRoadMarking:
    case SemanticClass::kCurb:
      return 1.0;
  }
  throw Error(ErrorCode::kConfig, "unknown semantic class code " +
                                      std::to_string(static_cast<int>(cls)));
}

double semantic_weight(std::string_view name) { return semantic_weight(parse_class(name)); }

MatchSet match(std::span<const Descriptor> query, std::span<const MatchCandidate> candidates,
               const MatchOptions& options) {
  if (!(options.ratio > 0.0) || options.ratio > 1.0) {
    throw Error(ErrorCode::kConfig, "match ratio must lie in (0, 1]");
  }
  MatchSet out;
  if (candidates.empty() || query.empty()) return out;

  constexpr int kNone = std::numeric_limits<int>::max();
  // Best query per candidate for the cross check; ties go to the lower index.
  std::vector<int> best_query_dist(candidates.size(), kNone);
  std::vector<std::size_t> best_query(candidates.size(), 0);

  struct Nearest {
    std::size_t candidate;
    int best;
    int second;
  };
  std::vector<Nearest> nearest(query.size());

  for (std::size_t q = 0; q < query.size(); ++q) {
    Nearest n{0, kNone, kNone};
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const int d = hamming(query[q], candidates[c].descriptor);
      if (d < n.best) {
        n.second = n.best;
        n.best = d;
        n.candidate = c;
      } else if (d < n.second) {
        n.second = d;
      }
      if (d < best_query_dist[c]) {
        best_query_dist[c] = d;
        best_query[c] = q;
      }
    }
    nearest[q] = n;
  }

  for (std::size_t q = 0; q < query.size(); ++q) {
    const Nearest& n = nearest[q];
    if (n.best > options.max_dist) continue;
    if (candidates.size() >= 2 &&
        static_cast<double>(n.best) > options.ratio * static_cast<double>(n.second)) {
      continue;
    }
    if (options.mutual_best && best_query[n.candidate] != q) continue;
    const MatchCandidate& cand = candidates[n.candidate];
    out.push_back(Match{q, cand.landmark_id, n.best, semantic_weight(cand.cls)});
  }
  return out;
}

}  // namespace ttpark
