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
// Frame-to-map localization shared by the training tracker and replay.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ttpark/bundle_adjustment.hpp"
#include "ttpark/features.hpp"
#include "ttpark/pose_estimation.hpp"
#include "ttpark/simworld.hpp"

namespace ttpark {

struct TrackingOptions {
  MatchOptions match;
  PoseEstimateOptions pose;
  /// Widening of the lens field of view and sensing range used when picking
  /// candidate landmarks around an uncertain prior.
  double fov_margin_deg = 10.0;
  double range_margin_m = 3.0;
};

/// Indices into `landmarks` that may be visible in each rig camera from
/// `world_from_vehicle`.
std::vector<std::vector<std::size_t>> visible_landmarks(const std::vector<MapLandmark>& landmarks,
                                                        const CameraRig& rig,
                                                        const Pose& world_from_vehicle,
                                                        double fov_margin_deg,
                                                        double range_margin_m);

struct FrameMatch {
  std::size_t camera = 0;
  std::size_t observation = 0;
  std::uint32_t landmark_id = 0;
  double weight = 0.0;
  bool inlier = false;
};

enum class LocateStatus { kOk, kFewMatches, kPoseFailure };

struct LocateResult {
  LocateStatus status = LocateStatus::kFewMatches;
  /// world_from_vehicle; meaningful only when status is kOk.
  Pose pose;
  /// Matches with positive weight.
  std::size_t usable_matches = 0;
  std::size_t inlier_count = 0;
  double inlier_weight = 0.0;
  double rmse_px = 0.0;
  bool converged = false;
  /// Every descriptor match, including zero-weight ones, by (camera, observation).
  std::vector<FrameMatch> matches;
  std::string detail;
};

/// `landmarks` must be sorted by id.
/// Matches each camera's observations against the landmarks visible from
/// `prior` and solves the pose from the positive-weight matches, which are
/// handed to the solver sorted by (landmark id, camera) so the result does not
/// depend on how zero-weight observations are interleaved. `min_usable`
/// (at least 4) is the match count below which no solve is attempted.
LocateResult locate_frame(const std::vector<MapLandmark>& landmarks,
                          const FrameObservations& frame, const CameraRig& rig, const Pose& prior,
                          const TrackingOptions& options, std::size_t min_usable,
                          std::uint64_t seed);

}  // namespace ttpark
