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
#include <gtest/gtest.h>

#include <set>
#include <vector>

#include "support.hpp"
#include "ttpark/errors.hpp"
#include "ttpark/features.hpp"

namespace ttpark {
namespace {

using testing::Gen;

Descriptor flipped(Descriptor d, int n_bits, int start = 0) {
  for (int i = 0; i < n_bits; ++i) d.flip(start + i);
  return d;
}

TEST(Hamming, SelfDistanceIsZero) {
  Gen g(1);
  const Descriptor d = g.descriptor();
  EXPECT_EQ(hamming(d, d), 0);
}

TEST(Hamming, ComplementIsMaximal) {
  Gen g(2);
  const Descriptor d = g.descriptor();
  Descriptor c = d;
  for (auto& w : c.words) w = ~w;
  EXPECT_EQ(hamming(d, c), 256);
}

TEST(Hamming, SingleFlipIsOne) {
  Gen g(3);
  const Descriptor d = g.descriptor();
  EXPECT_EQ(hamming(d, flipped(d, 1, 200)), 1);
}

TEST(Hamming, IsAMetricOnSeededTriples) {
  Gen g(4);
  for (int i = 0; i < 2000; ++i) {
    const Descriptor a = g.descriptor();
    // Mix independent and nearby descriptors so small distances occur too.
    const Descriptor b = i % 2 ? g.descriptor() : flipped(a, static_cast<int>(g.index(40)), static_cast<int>(g.index(200)));
    const Descriptor c = g.descriptor();
    EXPECT_EQ(hamming(a, b), hamming(b, a));
    EXPECT_EQ(hamming(a, b) == 0, a == b);
    EXPECT_LE(hamming(a, c), hamming(a, b) + hamming(b, c));
  }
}

TEST(Descriptor, HexAndBytesRoundTrip) {
  Gen g(5);
  const Descriptor d = g.descriptor();
  EXPECT_EQ(d.to_hex().size(), 64u);
  EXPECT_EQ(Descriptor::from_hex(d.to_hex()), d);
  const auto bytes = d.to_bytes();
  EXPECT_EQ(Descriptor::from_bytes(bytes), d);
  EXPECT_THROW(Descriptor::from_hex("abc"), Error);
}

TEST(SemanticWeight, DynamicObjectsGetZeroWeight) {
  EXPECT_EQ(semantic_weight(SemanticClass::kVehicle), 0.0);
  EXPECT_EQ(semantic_weight(SemanticClass::kPedestrian), 0.0);
}

TEST(SemanticWeight, StaticStructureIsFullyTrustedAndVegetationHalf) {
  EXPECT_EQ(semantic_weight(SemanticClass::kBuilding), 1.0);
  EXPECT_EQ(semantic_weight(SemanticClass::kRoadMarking), 1.0);
  EXPECT_EQ(semantic_weight(SemanticClass::kCurb), 1.0);
  EXPECT_EQ(semantic_weight(SemanticClass::kVegetation), 0.5);
}

TEST(SemanticWeight, UnknownClassIsConfigError) {
  EXPECT_EQ(semantic_weight("vehicle"), 0.0);
  try {
    semantic_weight("lamppost");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
  }
  EXPECT_THROW(class_from_byte(6), Error);
}

std::vector<MatchCandidate> candidates_from(const std::vector<Descriptor>& ds,
                                            SemanticClass cls = SemanticClass::kBuilding) {
  std::vector<MatchCandidate> out;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out.push_back({static_cast<std::uint32_t>(100 + i), ds[i], cls});
  }
  return out;
}

TEST(Match, IdenticalSetsMatchOneToOne) {
  Gen g(6);
  std::vector<Descriptor> ds;
  for (int i = 0; i < 50; ++i) ds.push_back(g.descriptor());
  const MatchSet m = match(ds, candidates_from(ds));
  ASSERT_EQ(m.size(), ds.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(m[i].query_index, i);
    EXPECT_EQ(m[i].landmark_id, 100 + i);
    EXPECT_EQ(m[i].distance, 0);
    EXPECT_EQ(m[i].weight, 1.0);
  }
}

TEST(Match, DistanceAboveGateIsUnmatched) {
  Gen g(7);
  const Descriptor d = g.descriptor();
  const std::vector<Descriptor> q{flipped(d, 80)};
  EXPECT_TRUE(match(q, candidates_from({d})).empty());
  const std::vector<Descriptor> q64{flipped(d, 64)};
  EXPECT_EQ(match(q64, candidates_from({d})).size(), 1u);
}

TEST(Match, RatioRuleOnConstructedDistances) {
  Gen g(8);
  const Descriptor q = g.descriptor();
  // 10 / 50 = 0.2 passes, 40 / 50 = 0.8 fails at ratio 0.7.
  const auto near10 = flipped(q, 10, 0);
  const auto far50 = flipped(q, 50, 100);
  const auto near40 = flipped(q, 40, 0);
  MatchOptions opt;
  opt.mutual_best = false;
  const std::vector<Descriptor> query{q};
  const MatchSet ok = match(query, candidates_from({near10, far50}), opt);
  ASSERT_EQ(ok.size(), 1u);
  EXPECT_EQ(ok[0].distance, 10);
  EXPECT_EQ(ok[0].landmark_id, 100u);
  EXPECT_TRUE(match(query, candidates_from({near40, far50}), opt).empty());
}

TEST(Match, RatioTestSkippedWithSingleCandidate) {
  Gen g(9);
  const Descriptor q = g.descriptor();
  const std::vector<Descriptor> query{q};
  EXPECT_EQ(match(query, candidates_from({flipped(q, 60)})).size(), 1u);
}

TEST(Match, EmptyCandidatesGiveEmptySet) {
  Gen g(10);
  const std::vector<Descriptor> query{g.descriptor()};
  EXPECT_TRUE(match(query, {}).empty());
}

TEST(Match, RatioOutsideUnitIntervalIsConfigError) {
  Gen g(11);
  const std::vector<Descriptor> query{g.descriptor()};
  MatchOptions opt;
  opt.ratio = 0.0;
  EXPECT_THROW(match(query, candidates_from(query), opt), Error);
  opt.ratio = 1.5;
  EXPECT_THROW(match(query, candidates_from(query), opt), Error);
}

TEST(Match, ZeroWeightMatchesAreKeptAndFlagged) {
  Gen g(12);
  const std::vector<Descriptor> ds{g.descriptor(), g.descriptor()};
  auto cands = candidates_from(ds);
  cands[1].cls = SemanticClass::kVehicle;
  const MatchSet m = match(ds, cands);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_FALSE(m[0].ignored());
  EXPECT_TRUE(m[1].ignored());
  EXPECT_EQ(m[1].weight, 0.0);
}

TEST(Match, MutualBestIsInjectiveOnLandmarksAndWellFormed) {
  Gen g(13);
  for (int round = 0; round < 50; ++round) {
    std::vector<Descriptor> base;
    for (int i = 0; i < 40; ++i) base.push_back(g.descriptor());
    std::vector<Descriptor> query;
    // Several noisy copies of the same landmark compete for it.
    for (int i = 0; i < 80; ++i) {
      Descriptor d = base[g.index(base.size())];
      for (int b = 0; b < 20; ++b) d.flip(static_cast<int>(g.index(256)));
      query.push_back(d);
    }
    const MatchSet m = match(query, candidates_from(base));
    std::set<std::uint32_t> lms;
    std::set<std::size_t> qs;
    for (const Match& x : m) {
      EXPECT_TRUE(lms.insert(x.landmark_id).second);
      EXPECT_TRUE(qs.insert(x.query_index).second);
      EXPECT_LE(x.distance, 64);
      EXPECT_GE(x.weight, 0.0);
      EXPECT_LE(x.weight, 1.0);
    }
    for (std::size_t i = 1; i < m.size(); ++i) EXPECT_LT(m[i - 1].query_index, m[i].query_index);
  }
}

}  // namespace
}  // namespace ttpark
