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
#include "ttpark/tracking.hpp"

#include <algorithm>

#include "ttpark/errors.hpp"

namespace ttpark {

std::vector<std::vector<std::size_t>> visible_landmarks(const std::vector<MapLandmark>& landmarks,
                                                        const CameraRig& rig,
                                                        const Pose& world_from_vehicle,
                                                        double fov_margin_deg,
                                                        double range_margin_m) {
  std::vector<std::vector<std::size_t>> out(rig.size());
  const double max_range = kMaxObservationRange + range_margin_m;
  for (std::size_t c = 0; c < rig.size(); ++c) {
    const Pose cam_from_world = rig.cam_from_world(c, world_from_vehicle);
    const double max_theta = rig.camera(c).intrinsics.theta_max + deg2rad(fov_margin_deg);
    for (std::size_t j = 0; j < landmarks.size(); ++j) {
      const Vec3 p = cam_from_world * landmarks[j].position;
      const double range = p.norm();
      if (range < 1e-9 || range > max_range) continue;
      if (off_axis_angle(p) > max_theta) continue;
      out[c].push_back(j);
    }
  }
  return out;
}

LocateResult locate_frame(const std::vector<MapLandmark>& landmarks,
                          const FrameObservations& frame, const CameraRig& rig, const Pose& prior,
                          const TrackingOptions& options, std::size_t min_usable,
                          std::uint64_t seed) {
  LocateResult result;
  const auto visible =
      visible_landmarks(landmarks, rig, prior, options.fov_margin_deg, options.range_margin_m);

  for (std::size_t c = 0; c < rig.size() && c < frame.per_camera.size(); ++c) {
    const auto& obs = frame.per_camera[c];
    if (obs.empty() || visible[c].empty()) continue;
    std::vector<Descriptor> query;
    query.reserve(obs.size());
    for (const Observation& o : obs) query.push_back(o.descriptor);
    std::vector<MatchCandidate> cands;
    cands.reserve(visible[c].size());
    for (std::size_t j : visible[c]) {
      cands.push_back({landmarks[j].id, landmarks[j].descriptor, landmarks[j].cls});
    }
    for (const Match& m : match(query, cands, options.match)) {
      result.matches.push_back({c, m.query_index, m.landmark_id, m.weight, false});
    }
  }

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < result.matches.size(); ++i) {
    if (result.matches[i].weight > 0.0) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const FrameMatch& ma = result.matches[a];
    const FrameMatch& mb = result.matches[b];
    if (ma.landmark_id != mb.landmark_id) return ma.landmark_id < mb.landmark_id;
    return ma.camera < mb.camera;
  });
  result.usable_matches = order.size();
  if (order.size() < std::max<std::size_t>(min_usable, 4)) {
    result.status = LocateStatus::kFewMatches;
    result.detail = std::to_string(order.size()) + " usable matches";
    return result;
  }

  // Landmark lists are kept sorted by id.
  std::vector<PoseMatch> pm;
  pm.reserve(order.size());
  for (std::size_t i : order) {
    const FrameMatch& m = result.matches[i];
    const auto it = std::lower_bound(landmarks.begin(), landmarks.end(), m.landmark_id,
                                     [](const MapLandmark& lm, std::uint32_t id) { return lm.id < id; });
    pm.push_back({it->position, frame.per_camera[m.camera][m.observation].pixel, m.camera, m.weight});
  }

  PoseEstimateOptions pose_opts = options.pose;
  pose_opts.seed = seed;
  PoseEstimate est;
  try {
    est = estimate_pose(pm, rig, prior, pose_opts);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kPoseFailure && e.code() != ErrorCode::kArity) throw;
    result.status = LocateStatus::kPoseFailure;
    result.detail = e.what();
    return result;
  }
  result.status = LocateStatus::kOk;
  result.pose = est.pose;
  result.inlier_count = est.inlier_count;
  result.rmse_px = est.rmse_px;
  result.converged = est.converged;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (!est.inliers[k]) continue;
    FrameMatch& m = result.matches[order[k]];
    m.inlier = true;
    result.inlier_weight += m.weight;
  }
  return result;
}

}  // namespace ttpark
