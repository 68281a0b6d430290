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

#include <cstdint>
#include <span>
#include <vector>

#include "ttpark/geometry.hpp"

namespace ttpark {

/// A 3D map point matched to a pixel in one rig camera.
struct PoseMatch {
  Vec3 landmark = Vec3::Zero();
  Vec2 pixel = Vec2::Zero();
  std::size_t camera = 0;
  double weight = 1.0;
};

struct PoseEstimateOptions {
  double inlier_threshold_px = 2.0;
  int max_ransac_rounds = 100;
  double min_inlier_ratio = 0.3;
  double huber_delta_px = 2.0;
  int max_iterations = 50;
  /// RANSAC stops early once this confidence of an all-inlier sample is reached.
  double confidence = 0.999;
  std::uint64_t seed = 0;
};

struct PoseEstimate {
  /// world_from_vehicle
  Pose pose;
  /// One flag per input match; zero-weight matches are never inliers.
  std::vector<bool> inliers;
  std::size_t inlier_count = 0;
  /// RMS reprojection error over the inliers, pixels.
  double rmse_px = 0.0;
  bool converged = false;
};

/// Multi-camera absolute pose: RANSAC over 4-point Levenberg-Marquardt fits
/// seeded at `seed_pose`, scored at inlier_threshold_px, then a Huber-weighted
/// refinement on all inliers. Matches with weight <= 0 never enter the
/// solve. Deterministic for a given options.seed.
///
/// Throws kArity with fewer than 4 usable matches and kPoseFailure when the
/// best inlier ratio stays below min_inlier_ratio.
PoseEstimate estimate_pose(std::span<const PoseMatch> matches, const CameraRig& rig,
                           const Pose& seed_pose, const PoseEstimateOptions& options = {});

}  // namespace ttpark
