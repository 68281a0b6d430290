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
 * @file replay.hpp
 * @brief Relocalization of a later drive against a trained map: GPS-based
 *        coarse initialization, then per-frame matching and pose solving.
 *        The map is only read.
 */
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ttpark/map_store.hpp"
#include "ttpark/simworld.hpp"
#include "ttpark/tracking.hpp"

namespace ttpark {

struct ReplayConfig {
  std::size_t min_inliers = 12;
  double search_radius_m = 5.0;
  std::size_t candidate_keyframes = 3;
  /// Consecutive lost frames after which the prior is reset from the
  /// keyframes nearest the last good pose.
  std::size_t reacquire_after = 3;
  double huber_delta_px = 2.0;
  TrackingOptions tracking;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class RelocStatus { kLocalized, kLost, kInsufficientMatches };

/// LOC, LOST, FEW
std::string_view status_code(RelocStatus status);
RelocStatus parse_status(std::string_view code);

struct RelocResult {
  std::size_t frame_index = 0;
  RelocStatus status = RelocStatus::kLost;
  /// world_from_vehicle; present iff localized.
  std::optional<Pose> estimated_pose;
  std::size_t inlier_count = 0;
  /// RMS reprojection error of the pose inliers.
  double mean_reproj_error_px = 0.0;

  friend bool operator==(const RelocResult&, const RelocResult&) = default;
};

/// Keyframe ids near the GPS fix; throws kInitializationFailure when none lies
/// within search_radius_m.
std::vector<std::uint32_t> coarse_init(const TrainedMap& map, const Pose& gps_pose,
                                       const ReplayConfig& config);

/// Localized iff at least min_inliers pose inliers, a converged solve and an
/// inlier RMS error of at most 2 * huber_delta_px. FEW when the frame offers
/// fewer than min_inliers usable matches, LOST otherwise.
RelocResult relocalize_frame(const TrainedMap& map, const FrameObservations& frame,
                             const Pose& prior, const ReplayConfig& config);

/// Coarse init once, then every frame in order with a constant-velocity
/// prior. The candidate keyframes are tried in turn whenever there is no
/// recent pose to extrapolate from.
std::vector<RelocResult> replay(const TrainedMap& map, const std::vector<FrameObservations>& frames,
                                const Pose& gps_pose, const ReplayConfig& config);

/// `frame status qw qx qy qz tx ty tz inliers rmse`, pose fields `nan` when
/// absent.
void write_results_text(std::ostream& out, const std::vector<RelocResult>& results);
std::vector<RelocResult> read_results_text(std::istream& in);

}  // namespace ttpark
