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
#include "ttpark/evaluation.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <ostream>

#include "ttpark/errors.hpp"
#include "ttpark/text_format.hpp"

namespace ttpark {

namespace {

constexpr double kBoundarySlack = 1e-9;

}  // namespace

PoseError pose_error(const Pose& estimate, const Pose& truth) {
  PoseError e;
  e.position_m = (estimate.translation() - truth.translation()).norm();
  e.angle_deg = rad2deg(rotation_angle(estimate.rotation().conjugate() * truth.rotation()));
  return e;
}

double relocalization_rate(std::span<const RelocResult> results, std::span<const Pose> truth,
                           double tol_pos_m, double tol_ang_deg) {
  if (results.empty()) throw Error(ErrorCode::kArity, "relocalization rate of an empty replay");
  if (results.size() != truth.size()) {
    throw Error(ErrorCode::kAlignment, std::to_string(results.size()) + " results but " +
                                           std::to_string(truth.size()) + " ground-truth poses");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const RelocResult& r = results[i];
    if (r.status != RelocStatus::kLocalized || !r.estimated_pose) continue;
    const PoseError e = pose_error(*r.estimated_pose, truth[i]);
    if (e.position_m <= tol_pos_m + kBoundarySlack && e.angle_deg <= tol_ang_deg + kBoundarySlack) {
      ++hits;
    }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(results.size());
}

OffsetStats offset_stats(std::span<const Pose> replay_truth,
                         std::span<const Pose> training_keyframes) {
  if (replay_truth.empty() || training_keyframes.empty()) {
    throw Error(ErrorCode::kArity, "offset statistics need replay and training poses");
  }
  OffsetStats s;
  for (const Pose& p : replay_truth) {
    // Closest point of the keyframe polyline; a lone keyframe is its own
    // degenerate segment.
    Pose nearest = training_keyframes.front();
    double best_d = std::numeric_limits<double>::infinity();
    const std::size_t n_seg = std::max<std::size_t>(training_keyframes.size() - 1, 1);
    for (std::size_t k = 0; k < n_seg; ++k) {
      const Pose& a = training_keyframes[k];
      const Pose& b = training_keyframes[std::min(k + 1, training_keyframes.size() - 1)];
      const Vec3 ab = b.translation() - a.translation();
      const double len2 = ab.squaredNorm();
      double t = 0.0;
      if (len2 > 0.0) t = std::clamp((p.translation() - a.translation()).dot(ab) / len2, 0.0, 1.0);
      const Vec3 q = a.translation() + t * ab;
      const double d = (q - p.translation()).norm();
      if (d < best_d) {
        best_d = d;
        nearest = Pose(a.rotation().slerp(t, b.rotation()), q);
      }
    }
    const PoseError e = pose_error(p, nearest);
    s.avg_position_m += e.position_m;
    s.avg_angle_deg += e.angle_deg;
  }
  const auto n = static_cast<double>(replay_truth.size());
  s.avg_position_m /= n;
  s.avg_angle_deg /= n;
  return s;
}

EvalReport make_report(const SceneMeta& meta, const TrainedMap& map,
                       std::span<const RelocResult> results, std::span<const Pose> truth) {
  EvalReport r;
  r.scene = meta.scene;
  r.training = meta.training;
  r.replay = meta.replay;
  r.time_difference_days = meta.diff_days;
  r.start_distance_m = pose_error(meta.replay_start, map.metadata.start_pose).position_m;
  std::vector<Pose> kf_poses;
  kf_poses.reserve(map.keyframes.size());
  for (const Keyframe& kf : map.keyframes) kf_poses.push_back(kf.pose);
  const OffsetStats off = offset_stats(truth, kf_poses);
  r.avg_position_offset_m = off.avg_position_m;
  r.avg_angle_offset_deg = off.avg_angle_deg;
  r.relocalization_rate_percent = relocalization_rate(results, truth);
  return r;
}

namespace {

std::array<std::string, 8> cells(const EvalReport& r) {
  return {r.scene,
          r.training,
          r.replay,
          text::format_double(r.time_difference_days),
          text::format_fixed(r.start_distance_m, 3),
          text::format_fixed(r.avg_position_offset_m, 3),
          text::format_fixed(r.avg_angle_offset_deg, 2),
          text::format_fixed(r.relocalization_rate_percent, 2)};
}

}  // namespace

std::string report_csv_row(const EvalReport& report) {
  std::string row;
  for (const std::string& c : cells(report)) {
    if (!row.empty()) row += ',';
    row += c;
  }
  return row;
}

void write_report_csv(std::ostream& out, std::span<const EvalReport> reports) {
  out << kReportCsvHeader << '\n';
  for (const EvalReport& r : reports) out << report_csv_row(r) << '\n';
}

void write_report_table(std::ostream& out, std::span<const EvalReport> reports) {
  const std::array<std::string, 8> head{"Scene",         "Training",        "Replay",
                                        "Diff.Time(d)",  "Diff.Dist(m)",    "Offset.Pos(m)",
                                        "Offset.Ang(deg)", "Reloc.Rate(%)"};
  std::array<std::size_t, 8> width{};
  for (std::size_t c = 0; c < 8; ++c) width[c] = head[c].size();
  std::vector<std::array<std::string, 8>> rows;
  for (const EvalReport& r : reports) {
    rows.push_back(cells(r));
    for (std::size_t c = 0; c < 8; ++c) width[c] = std::max(width[c], rows.back()[c].size());
  }
  auto emit = [&](const std::array<std::string, 8>& row) {
    for (std::size_t c = 0; c < 8; ++c) {
      if (c > 0) out << "  ";
      const std::size_t pad = width[c] - row[c].size();
      // Text columns left-aligned, numbers right-aligned.
      if (c < 3) {
        out << row[c] << std::string(pad, ' ');
      } else {
        out << std::string(pad, ' ') << row[c];
      }
    }
    out << '\n';
  };
  emit(head);
  std::size_t total = 0;
  for (std::size_t c = 0; c < 8; ++c) total += width[c] + (c > 0 ? 2 : 0);
  out << std::string(total, '-') << '\n';
  for (const auto& row : rows) emit(row);
}

}  // namespace ttpark
