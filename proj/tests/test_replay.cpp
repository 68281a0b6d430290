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

#include <algorithm>
#include <sstream>

#include "support.hpp"
#include "ttpark/evaluation.hpp"
#include "ttpark/random.hpp"
#include "ttpark/replay.hpp"

namespace ttpark {
namespace {

using testing::error_code_of;
using testing::nominal_scene;
using testing::truth_of;

ReplayConfig nominal_replay_config() { return make_replay_config(nominal_scene().config); }

const TrainedMap& nominal_map() { return nominal_scene().trained.map; }

// Replay drive of the nominal world under `pert` and a lateral offset, with
// the nominal seeds.
Session replay_session(const PerturbationSpec& pert, double lateral_m = 0.0) {
  ScenarioConfig c = nominal_scene().config;
  c.perturbation = pert;
  c.trajectory.lateral_offset_m = lateral_m;
  return simulate_replay(c, nominal_scene().scene.world);
}

std::size_t localized(const std::vector<RelocResult>& r) {
  return static_cast<std::size_t>(std::count_if(
      r.begin(), r.end(), [](const RelocResult& x) { return x.status == RelocStatus::kLocalized; }));
}

TEST(CoarseInit, GpsAtStartPicksKeyframeZero) {
  const auto ids = coarse_init(nominal_map(), nominal_map().metadata.start_pose, nominal_replay_config());
  ASSERT_FALSE(ids.empty());
  EXPECT_EQ(ids[0], 0u);
  EXPECT_LE(ids.size(), nominal_replay_config().candidate_keyframes);
}

TEST(CoarseInit, FarGpsIsInitializationFailure) {
  const Pose far = compose(nominal_map().metadata.start_pose, Pose::from_yaw(0, Vec3(0, 100, 0)));
  EXPECT_EQ(error_code_of([&] { coarse_init(nominal_map(), far, nominal_replay_config()); }),
            ErrorCode::kInitializationFailure);
}

// KF0 is among the three candidates in this fraction of 1000 GPS draws with
// the default 1 m / 5 degree noise. Keyframes sit 0.5 m apart along the
// path, so KF0 drops out once the along-track error exceeds about 0.75 m.
constexpr double kGpsStartKeyframeFraction = 0.795;

TEST(CoarseInit, GpsMonteCarloStartKeyframeFraction) {
  const PerturbationSpec pert;  // default GPS noise
  const Pose start = nominal_map().metadata.start_pose;
  std::size_t hits = 0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const Pose gps = simulate_gps(start, pert, mix_seed({77, i}));
    const auto ids = coarse_init(nominal_map(), gps, nominal_replay_config());
    hits += std::find(ids.begin(), ids.end(), 0u) != ids.end();
  }
  const double fraction = static_cast<double>(hits) / 1000.0;
  EXPECT_DOUBLE_EQ(fraction, kGpsStartKeyframeFraction);
}

// What the coarse fix is for: some candidate must seed a localization of the
// first frame.
TEST(CoarseInit, GpsMonteCarloFirstFrameLocalizes) {
  const PerturbationSpec pert;
  const auto& frame = nominal_scene().scene.training.frames.front();
  const ReplayConfig cfg = nominal_replay_config();
  std::size_t ok = 0;
  const std::size_t trials = 200;
  for (std::uint64_t i = 0; i < trials; ++i) {
    const Pose gps = simulate_gps(nominal_map().metadata.start_pose, pert, mix_seed({78, i}));
    for (auto id : coarse_init(nominal_map(), gps, cfg)) {
      if (relocalize_frame(nominal_map(), frame, nominal_map().keyframes[id].pose, cfg).status ==
          RelocStatus::kLocalized) {
        ++ok;
        break;
      }
    }
  }
  EXPECT_GE(ok, trials * 99 / 100);
}

TEST(RelocalizeFrame, TrainingFrameIsExact) {
  const auto& s = nominal_scene().scene.training;
  for (const Keyframe& kf : nominal_map().keyframes) {
    const auto& frame = s.frames[kf.frame_index];
    const RelocResult r = relocalize_frame(nominal_map(), frame, kf.pose, nominal_replay_config());
    ASSERT_EQ(r.status, RelocStatus::kLocalized) << "frame " << kf.frame_index;
    EXPECT_LT(pose_error(*r.estimated_pose, frame.ground_truth_pose).position_m, 1e-6);
    EXPECT_EQ(r.frame_index, frame.frame_index);
  }
}

TEST(RelocalizeFrame, EmptyFrameHasInsufficientMatches) {
  PerturbationSpec pert = PerturbationSpec::none();
  pert.dropout_prob = 1.0;
  const Session s = replay_session(pert);
  const RelocResult r = relocalize_frame(nominal_map(), s.frames[3], nominal_map().keyframes[1].pose,
                                         nominal_replay_config());
  EXPECT_EQ(s.frames[3].size(), 0u);
  EXPECT_EQ(r.status, RelocStatus::kInsufficientMatches);
  EXPECT_FALSE(r.estimated_pose.has_value());
}

TEST(Replay, NoiselessSelfReplayLocalizesEveryFrame) {
  const Session& s = nominal_scene().scene.training;
  const auto r = replay(nominal_map(), s.frames, s.start_pose, nominal_replay_config());
  ASSERT_EQ(r.size(), s.frames.size());
  EXPECT_EQ(localized(r), r.size());
  EXPECT_DOUBLE_EQ(relocalization_rate(r, truth_of(s)), 100.0);
}

TEST(Replay, HeavyFlipsGiveAMixOfOutcomes) {
  PerturbationSpec pert = PerturbationSpec::none();
  pert.descriptor_flip_prob = 0.2;
  const Session s = replay_session(pert);
  const auto r = replay(nominal_map(), s.frames, s.gps_pose, nominal_replay_config());
  const std::size_t n = localized(r);
  EXPECT_GT(n, 0u);
  EXPECT_LT(n, r.size());
}

// Simulated descriptors do not depend on viewpoint, so a 1 m lateral shift
// costs nothing at the 25 m sensing range. Recorded, with the paired
// comparison held to non-increasing.
constexpr double kOffsetReplayRate = 100.0;

TEST(Replay, LateralStartOffsetAgainstSelfReplay) {
  PerturbationSpec pert = PerturbationSpec::none();
  const Session self = replay_session(pert, 0.0);
  const Session shifted = replay_session(pert, 1.0);
  const auto cfg = nominal_replay_config();
  const double self_rate = relocalization_rate(replay(nominal_map(), self.frames, self.gps_pose, cfg), truth_of(self));
  const double shifted_rate =
      relocalization_rate(replay(nominal_map(), shifted.frames, shifted.gps_pose, cfg), truth_of(shifted));
  EXPECT_LE(shifted_rate, self_rate);
  EXPECT_DOUBLE_EQ(shifted_rate, kOffsetReplayRate);
}

TEST(Replay, DisjointMapFailsInitialization) {
  TrainedMap far = nominal_map();
  const Vec3 shift(5000, 0, 0);
  for (auto& kf : far.keyframes) kf.pose = Pose(kf.pose.rotation(), kf.pose.translation() + shift);
  for (auto& lm : far.landmarks) lm.position += shift;
  const Session& s = nominal_scene().scene.training;
  EXPECT_EQ(error_code_of([&] { replay(far, s.frames, s.start_pose, nominal_replay_config()); }),
            ErrorCode::kInitializationFailure);
}

TEST(Replay, IsDeterministicAndLeavesTheMapAlone) {
  PerturbationSpec pert;
  pert.pixel_noise_sigma = 0.5;
  pert.descriptor_flip_prob = 0.1;
  pert.landmark_churn_frac = 0.3;
  const Session s = replay_session(pert, 1.0);
  const auto before = serialize_map(nominal_map());
  const auto a = replay(nominal_map(), s.frames, s.gps_pose, nominal_replay_config());
  const auto b = replay(nominal_map(), s.frames, s.gps_pose, nominal_replay_config());
  EXPECT_EQ(serialize_map(nominal_map()), before);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].status, b[i].status);
    EXPECT_EQ(a[i].estimated_pose, b[i].estimated_pose);
    EXPECT_EQ(a[i].inlier_count, b[i].inlier_count);
    EXPECT_EQ(a[i].mean_reproj_error_px, b[i].mean_reproj_error_px);
  }
}

TEST(Replay, LocalizedResultsMeetTheAcceptanceGates) {
  const ReplayConfig cfg = nominal_replay_config();
  for (double flip : {0.0, 0.1, 0.2}) {
    PerturbationSpec pert;
    pert.pixel_noise_sigma = 0.5;
    pert.descriptor_flip_prob = flip;
    const Session s = replay_session(pert);
    for (const RelocResult& r : replay(nominal_map(), s.frames, s.gps_pose, cfg)) {
      EXPECT_EQ(r.estimated_pose.has_value(), r.status == RelocStatus::kLocalized);
      if (r.status != RelocStatus::kLocalized) continue;
      EXPECT_GE(r.inlier_count, cfg.min_inliers);
      EXPECT_LE(r.mean_reproj_error_px, 2.0 * cfg.huber_delta_px);
    }
  }
}

TEST(Replay, ReacquiresAfterABlindStretch) {
  Session s = nominal_scene().scene.training;
  for (std::size_t i = 20; i < 26; ++i) {
    for (auto& cam : s.frames[i].per_camera) cam.clear();
  }
  const auto r = replay(nominal_map(), s.frames, s.start_pose, nominal_replay_config());
  for (std::size_t i = 20; i < 26; ++i) EXPECT_EQ(r[i].status, RelocStatus::kInsufficientMatches);
  for (std::size_t i = 26; i < r.size(); ++i) EXPECT_EQ(r[i].status, RelocStatus::kLocalized) << "frame " << i;
}

// Moving every dynamic-class landmark changes the replay frames but not a
// single localized pose: those landmarks only ever match with zero weight.
TEST(Replay, RelocatedDynamicObjectsDoNotChangePoses) {
  const auto& n = nominal_scene();
  PerturbationSpec pert;
  pert.pixel_noise_sigma = 0.5;
  pert.dynamic_resample = true;
  const CameraRig rig = scenario_rig(n.config);
  const World a = perturb_session(n.scene.world, pert, 101);
  const World b = perturb_session(n.scene.world, pert, 202);
  std::size_t moved = 0;
  for (std::size_t j = 0; j < a.landmarks.size(); ++j) {
    if (is_dynamic(a.landmarks[j].cls)) {
      moved += a.landmarks[j].position != b.landmarks[j].position;
    } else {
      ASSERT_EQ(a.landmarks[j], b.landmarks[j]);
    }
  }
  ASSERT_GT(moved, 0u);
  const Session sa = render_session(a, rig, n.scene.training_trajectory, pert, 303, "A");
  const Session sb = render_session(b, rig, n.scene.training_trajectory, pert, 303, "B");
  ASSERT_NE(sa.frames, sb.frames);
  const auto ra = replay(n.trained.map, sa.frames, sa.start_pose, nominal_replay_config());
  const auto rb = replay(n.trained.map, sb.frames, sb.start_pose, nominal_replay_config());
  ASSERT_EQ(ra.size(), rb.size());
  EXPECT_GT(localized(ra), 0u);
  for (std::size_t i = 0; i < ra.size(); ++i) {
    EXPECT_EQ(ra[i].status, rb[i].status) << "frame " << i;
    EXPECT_EQ(ra[i].estimated_pose, rb[i].estimated_pose) << "frame " << i;
  }
}

double rate_under(const PerturbationSpec& pert, double lateral_m) {
  const Session s = replay_session(pert, lateral_m);
  return relocalization_rate(replay(nominal_map(), s.frames, s.gps_pose, nominal_replay_config()), truth_of(s));
}

TEST(Degradation, RateIsNonIncreasingInDescriptorFlips) {
  double last = 101.0;
  for (double flip : {0.0, 0.1, 0.2}) {
    PerturbationSpec pert = PerturbationSpec::none();
    pert.descriptor_flip_prob = flip;
    const double rate = rate_under(pert, 0.0);
    EXPECT_LE(rate, last) << "flip " << flip;
    last = rate;
  }
}

TEST(Degradation, RateIsNonIncreasingInChurn) {
  double last = 101.0;
  for (double churn : {0.0, 0.3, 0.6}) {
    PerturbationSpec pert = PerturbationSpec::none();
    pert.landmark_churn_frac = churn;
    const double rate = rate_under(pert, 0.0);
    EXPECT_LE(rate, last) << "churn " << churn;
    last = rate;
  }
}

TEST(Degradation, RateIsNonIncreasingInLateralOffset) {
  double last = 101.0;
  for (double lateral : {0.0, 0.5, 1.0}) {
    const double rate = rate_under(PerturbationSpec::none(), lateral);
    EXPECT_LE(rate, last) << "offset " << lateral;
    last = rate;
  }
}

TEST(Degradation, FlipsDoNotRaiseInlierCounts) {
  PerturbationSpec clean = PerturbationSpec::none();
  PerturbationSpec flipped = clean;
  flipped.descriptor_flip_prob = 0.1;
  const auto cfg = nominal_replay_config();
  const Session a = replay_session(clean);
  const Session b = replay_session(flipped);
  std::size_t ia = 0, ib = 0;
  for (const auto& r : replay(nominal_map(), a.frames, a.gps_pose, cfg)) ia += r.inlier_count;
  for (const auto& r : replay(nominal_map(), b.frames, b.gps_pose, cfg)) ib += r.inlier_count;
  EXPECT_LE(ib, ia);
}

TEST(ResultsText, RoundTrips) {
  PerturbationSpec pert;
  pert.descriptor_flip_prob = 0.2;
  const Session s = replay_session(pert);
  const auto r = replay(nominal_map(), s.frames, s.gps_pose, nominal_replay_config());
  std::stringstream ss;
  write_results_text(ss, r);
  const auto back = read_results_text(ss);
  ASSERT_EQ(back.size(), r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    EXPECT_EQ(back[i].frame_index, r[i].frame_index);
    EXPECT_EQ(back[i].status, r[i].status);
    EXPECT_EQ(back[i].estimated_pose, r[i].estimated_pose);
    EXPECT_EQ(back[i].inlier_count, r[i].inlier_count);
    EXPECT_EQ(back[i].mean_reproj_error_px, r[i].mean_reproj_error_px);
  }
}

TEST(ReplayConfig, Validation) {
  ReplayConfig c;
  c.min_inliers = 3;
  EXPECT_EQ(error_code_of([&] { c.validate(); }), ErrorCode::kConfig);
  c = ReplayConfig{};
  c.search_radius_m = 0.0;
  EXPECT_EQ(error_code_of([&] { c.validate(); }), ErrorCode::kConfig);
}

}  // namespace
}  // namespace ttpark
