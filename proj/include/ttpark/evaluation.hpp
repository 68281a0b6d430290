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
// Relocalization scoring and the scene report table.
#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ttpark/geometry.hpp"
#include "ttpark/map_store.hpp"
#include "ttpark/replay.hpp"

namespace ttpark {

struct PoseError {
  double position_m = 0.0;
  /// Geodesic angle of the relative rotation.
  double angle_deg = 0.0;
};

PoseError pose_error(const Pose& estimate, const Pose& truth);

inline constexpr double kDefaultTolPositionM = 0.05;
inline constexpr double kDefaultTolAngleDeg = 2.0;

/// Percentage of frames that are localized with both errors within the
/// tolerances (inclusive, with 1e-9 slack for rounding in the error itself).
/// Every frame counts in the denominator. `truth[i]` belongs to results[i];
/// throws kArity on empty input and kAlignment on a length mismatch.
double relocalization_rate(std::span<const RelocResult> results, std::span<const Pose> truth,
                           double tol_pos_m = kDefaultTolPositionM,
                           double tol_ang_deg = kDefaultTolAngleDeg);

struct OffsetStats {
  double avg_position_m = 0.0;
  double avg_angle_deg = 0.0;
};

/// Mean distance and angle from every replay pose to the training path: the
/// closest point of the polyline through the keyframe positions, with the
/// orientation slerped along that segment (ties to the earlier segment).
/// Replay poses that coincide with keyframes therefore measure against the
/// keyframe itself. Throws kArity on empty input.
OffsetStats offset_stats(std::span<const Pose> replay_truth,
                         std::span<const Pose> training_keyframes);

struct SceneMeta {
  std::string scene;
  std::string training;
  std::string replay;
  double diff_days = 0.0;
  Pose replay_start;
};

struct EvalReport {
  std::string scene;
  std::string training;
  std::string replay;
  double time_difference_days = 0.0;
  double start_distance_m = 0.0;
  double avg_position_offset_m = 0.0;
  double avg_angle_offset_deg = 0.0;
  double relocalization_rate_percent = 0.0;
};

/// Fills every column from a finished replay. The start distance is measured
/// between the map's declared start pose and meta.replay_start.
EvalReport make_report(const SceneMeta& meta, const TrainedMap& map,
                       std::span<const RelocResult> results, std::span<const Pose> truth);

inline constexpr const char* kReportCsvHeader =
    "scene,training,replay,diff_days,diff_dist_m,avg_offset_pos_m,avg_offset_ang_deg,reloc_rate_pct";

std::string report_csv_row(const EvalReport& report);
void write_report_csv(std::ostream& out, std::span<const EvalReport> reports);
/// Aligned text table with the same columns.
void write_report_table(std::ostream& out, std::span<const EvalReport> reports);

}  // namespace ttpark
