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
/**
 * @file training.hpp
 * @brief The training drive: track each frame against the growing map, pick
 *        keyframes, triangulate new landmarks, run windowed bundle adjustment
 *        every window_n keyframes and a global adjustment at the end.
 *
 * The first keyframe is pinned at the session's declared start pose. Its
 * landmarks come from features seen by two rig cameras at once, so the known
 * inter-camera baselines set the metric scale from the very first frame.
 */
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ttpark/bundle_adjustment.hpp"
#include "ttpark/map_store.hpp"
#include "ttpark/simworld.hpp"
#include "ttpark/tracking.hpp"

namespace ttpark {

struct KeyframePolicy {
  double trans_thresh_m = 0.5;
  double rot_thresh_deg = 5.0;
};

/// True iff the relative motion reaches either threshold. Throws kConfig for
/// non-positive thresholds.
bool is_keyframe(const Pose& current, const Pose& last_keyframe, double trans_thresh_m,
                 double rot_thresh_deg);

struct TrainConfig {
  BAConfig ba;
  KeyframePolicy keyframe;
  TrackingOptions tracking;
  /// Tracking fails below this summed semantic weight of pose inliers.
  double min_inlier_weight = 6.0;
  /// Largest reprojection error accepted for a newly triangulated landmark.
  double max_triangulation_error_px = 4.0;
  /// Observations above this error after global BA are dropped.
  double prune_error_px = 4.0;
  /// Bootstrap needs at least this many landmarks from the first frame.
  std::size_t min_bootstrap_landmarks = 10;
  std::uint64_t seed = 0;
  std::string scenario = "train";
  std::int64_t created = 0;
  /// Optional wheel-odometry hook: predicted world_from_vehicle for a frame.
  /// When it returns a pose, that pose replaces the constant-velocity seed.
  std::function<std::optional<Pose>(std::size_t frame_index)> odometry_prior;

  void validate() const;
};

/// What the tracker keeps between frames.
struct TrackingState {
  MapState map;
  /// Last two tracked poses (world_from_vehicle), newest last.
  std::optional<Pose> previous;
  std::optional<Pose> last;
};

/// Constant-velocity extrapolation from the last two tracked poses.
Pose predict_pose(const TrackingState& state);

/// Matches the frame to the map and solves its pose from the prediction.
/// Throws kTrackingLost (naming the frame) when fewer than 10 landmarks exist
/// or the pose inliers carry less than config.min_inlier_weight.
LocateResult track_frame(const TrackingState& state, const FrameObservations& frame,
                         const CameraRig& rig, const TrainConfig& config);

struct KeyframeDiagnostic {
  std::size_t frame_index = 0;
  /// Tracked pose at selection time, before any bundle adjustment.
  Pose tracked_pose;
  std::size_t inliers = 0;
  double rmse_px = 0.0;
  std::size_t new_landmarks = 0;
};

struct TrainResult {
  TrainedMap map;
  BAReport global_ba;
  std::vector<BAReport> windowed_ba;
  std::vector<KeyframeDiagnostic> diagnostics;
};

/// Throws kBootstrap for fewer than two frames, too few first-frame
/// landmarks, or no second keyframe; kTrackingLost with the frame index.
TrainResult train(const Session& session, const CameraRig& rig, const TrainConfig& config);

/// `frame qw qx qy qz tx ty tz inliers rmse new_landmarks` per keyframe.
void write_diagnostics(std::ostream& out, const std::vector<KeyframeDiagnostic>& diagnostics);
/// `x y z class` per landmark.
void write_point_cloud(std::ostream& out, const TrainedMap& map);

}  // namespace ttpark
