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
#include "ttpark/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <unordered_map>

#include "ttpark/errors.hpp"
#include "ttpark/random.hpp"
#include "ttpark/text_format.hpp"

namespace ttpark {

namespace {

constexpr std::uint64_t kTagTrack = 0x7472616b;  // "trak"

/// A detection not yet attached to any landmark.
struct FreeObservation {
  std::size_t keyframe = 0;
  std::size_t camera = 0;
  Vec2 pixel = Vec2::Zero();
  Descriptor descriptor;
  SemanticClass cls = SemanticClass::kBuilding;
};

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

class Trainer {
 public:
  Trainer(const CameraRig& rig, const TrainConfig& config) : rig_(rig), config_(config) {}

  void run(const Session& session);
  TrainResult finish(const Session& session);

 private:
  void add_keyframe(const FrameObservations& frame, const Pose& pose, const LocateResult* located);
  std::size_t triangulate_pool(std::vector<FreeObservation>& pool);
  void maybe_windowed_ba();
  MapLandmark* landmark(std::uint32_t id);

  const CameraRig& rig_;
  const TrainConfig& config_;
  TrackingState state_;
  std::vector<FreeObservation> free_previous_;
  std::uint32_t next_landmark_id_ = 0;
  std::vector<BAReport> windowed_;
  std::vector<KeyframeDiagnostic> diagnostics_;
};

MapLandmark* Trainer::landmark(std::uint32_t id) {
  auto& lms = state_.map.landmarks;
  auto it = std::lower_bound(lms.begin(), lms.end(), id,
                             [](const MapLandmark& lm, std::uint32_t v) { return lm.id < v; });
  return (it != lms.end() && it->id == id) ? &*it : nullptr;
}

void Trainer::run(const Session& session) {
  if (session.frames.size() < 2) {
    throw Error(ErrorCode::kBootstrap, "training needs at least 2 frames, session has " +
                                           std::to_string(session.frames.size()));
  }
  add_keyframe(session.frames.front(), session.start_pose, nullptr);
  if (state_.map.landmarks.size() < config_.min_bootstrap_landmarks) {
    throw Error(ErrorCode::kBootstrap,
                "first frame yields " + std::to_string(state_.map.landmarks.size()) +
                    " landmarks seen by two cameras, need " +
                    std::to_string(config_.min_bootstrap_landmarks));
  }
  state_.last = session.start_pose;

  for (std::size_t i = 1; i < session.frames.size(); ++i) {
    const FrameObservations& frame = session.frames[i];
    LocateResult located = track_frame(state_, frame, rig_, config_);
    state_.previous = state_.last;
    state_.last = located.pose;
    if (is_keyframe(located.pose, state_.map.keyframes.back().pose, config_.keyframe.trans_thresh_m,
                    config_.keyframe.rot_thresh_deg)) {
      add_keyframe(frame, located.pose, &located);
      const Pose before = state_.map.keyframes.back().pose;
      maybe_windowed_ba();
      // Carry the adjustment of the newest keyframe over to the motion model.
      const Pose correction = compose(state_.map.keyframes.back().pose, inverse(before));
      state_.last = compose(correction, *state_.last);
      state_.previous = compose(correction, *state_.previous);
    }
  }
  if (state_.map.keyframes.size() < 2) {
    throw Error(ErrorCode::kBootstrap,
                "no second keyframe: the vehicle never moved " +
                    text::format_double(config_.keyframe.trans_thresh_m) + " m or turned " +
                    text::format_double(config_.keyframe.rot_thresh_deg) + " deg");
  }
}

void Trainer::add_keyframe(const FrameObservations& frame, const Pose& pose,
                           const LocateResult* located) {
  auto& kfs = state_.map.keyframes;
  Keyframe kf;
  kf.id = static_cast<std::uint32_t>(kfs.size());
  kf.pose = pose;
  kf.frame_index = frame.frame_index;
  const std::size_t k = kfs.size();

  std::vector<std::vector<bool>> used(frame.per_camera.size());
  for (std::size_t c = 0; c < frame.per_camera.size(); ++c) used[c].assign(frame.per_camera[c].size(), false);

  if (located) {
    const Pose vfw = inverse(pose);
    for (const FrameMatch& m : located->matches) {
      const Observation& o = frame.per_camera[m.camera][m.observation];
      used[m.camera][m.observation] = true;
      bool keep = m.inlier;
      if (m.weight <= 0.0) {
        // Zero-weight landmarks never reach the solver; keep them if consistent.
        const MapLandmark* lm = landmark(m.landmark_id);
        const auto px = project(rig_.camera(m.camera).intrinsics,
                                compose(rig_.camera(m.camera).camera_from_vehicle, vfw), lm->position);
        keep = px && (*px - o.pixel).norm() <= config_.max_triangulation_error_px;
      }
      if (!keep) continue;
      kf.observations.push_back({static_cast<std::uint8_t>(m.camera), o.pixel, o.descriptor,
                                 m.landmark_id, m.weight});
      ++landmark(m.landmark_id)->observation_count;
    }
  }
  kfs.push_back(std::move(kf));

  std::vector<FreeObservation> pool = std::move(free_previous_);
  for (std::size_t c = 0; c < frame.per_camera.size(); ++c) {
    for (std::size_t i = 0; i < frame.per_camera[c].size(); ++i) {
      if (used[c][i]) continue;
      const Observation& o = frame.per_camera[c][i];
      pool.push_back({k, c, o.pixel, o.descriptor, o.cls});
    }
  }
  const std::size_t created = triangulate_pool(pool);

  free_previous_.clear();
  for (FreeObservation& f : pool) {
    if (f.keyframe == k) free_previous_.push_back(std::move(f));
  }

  KeyframeDiagnostic diag;
  diag.frame_index = frame.frame_index;
  diag.tracked_pose = pose;
  if (located) {
    diag.inliers = located->inlier_count;
    diag.rmse_px = located->rmse_px;
  }
  diag.new_landmarks = created;
  diagnostics_.push_back(diag);
}

// Groups free detections across (keyframe, camera) sources by mutual-best
// descriptor matching and triangulates every group seen from two or more
// sources. Consumed detections are removed from `pool`.
std::size_t Trainer::triangulate_pool(std::vector<FreeObservation>& pool) {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> sources;
  for (std::size_t i = 0; i < pool.size(); ++i) sources[{pool[i].keyframe, pool[i].camera}].push_back(i);

  DisjointSets sets(pool.size());
  std::vector<const std::vector<std::size_t>*> lists;
  for (const auto& [key, list] : sources) lists.push_back(&list);
  for (std::size_t a = 0; a < lists.size(); ++a) {
    std::vector<Descriptor> query;
    for (std::size_t i : *lists[a]) query.push_back(pool[i].descriptor);
    for (std::size_t b = a + 1; b < lists.size(); ++b) {
      std::vector<MatchCandidate> cands;
      for (std::size_t idx = 0; idx < lists[b]->size(); ++idx) {
        const FreeObservation& f = pool[(*lists[b])[idx]];
        cands.push_back({static_cast<std::uint32_t>(idx), f.descriptor, f.cls});
      }
      for (const Match& m : match(query, cands, config_.tracking.match)) {
        sets.unite((*lists[a])[m.query_index], (*lists[b])[m.landmark_id]);
      }
    }
  }

  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < pool.size(); ++i) groups[sets.find(i)].push_back(i);

  auto& kfs = state_.map.keyframes;
  std::vector<bool> consumed(pool.size(), false);
  std::size_t created = 0;
  for (const auto& [root, members] : groups) {
    if (members.size() < 2) continue;
    // One detection per source, otherwise the grouping is ambiguous.
    std::set<std::pair<std::size_t, std::size_t>> seen;
    bool ambiguous = false;
    for (std::size_t i : members) ambiguous |= !seen.insert({pool[i].keyframe, pool[i].camera}).second;
    if (ambiguous) continue;

    std::vector<RayObservation> rays;
    std::vector<Pose> cam_from_world;
    bool in_model = true;
    for (std::size_t i : members) {
      const FreeObservation& f = pool[i];
      cam_from_world.push_back(rig_.cam_from_world(f.camera, kfs[f.keyframe].pose));
      try {
        rays.push_back({cam_from_world.back(), unproject(rig_.camera(f.camera).intrinsics, f.pixel)});
      } catch (const Error&) {
        in_model = false;
      }
    }
    if (!in_model) continue;
    Vec3 point;
    try {
      point = triangulate(rays);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kDegenerateBaseline) continue;
      throw;
    }
    bool consistent = true;
    for (std::size_t m = 0; m < members.size() && consistent; ++m) {
      const FreeObservation& f = pool[members[m]];
      const Vec3 p_cam = cam_from_world[m] * point;
      if (p_cam.norm() > kMaxObservationRange + config_.tracking.range_margin_m) {
        consistent = false;
        break;
      }
      const auto px = project(rig_.camera(f.camera).intrinsics, cam_from_world[m], point);
      consistent = px && (*px - f.pixel).norm() <= config_.max_triangulation_error_px;
    }
    if (!consistent) continue;

    const FreeObservation& first = pool[members.front()];
    MapLandmark lm;
    lm.id = next_landmark_id_++;
    lm.position = point;
    lm.descriptor = first.descriptor;
    lm.cls = first.cls;
    const double weight = semantic_weight(lm.cls);
    for (std::size_t i : members) {
      const FreeObservation& f = pool[i];
      kfs[f.keyframe].observations.push_back(
          {static_cast<std::uint8_t>(f.camera), f.pixel, f.descriptor, lm.id, weight});
      ++lm.observation_count;
      consumed[i] = true;
    }
    state_.map.landmarks.push_back(lm);
    ++created;
  }

  std::vector<FreeObservation> rest;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!consumed[i]) rest.push_back(std::move(pool[i]));
  }
  pool = std::move(rest);
  return created;
}

void Trainer::maybe_windowed_ba() {
  const std::size_t n = state_.map.keyframes.size();
  if (n != 2 && n % static_cast<std::size_t>(config_.ba.window_n) != 0) return;
  BAConfig cfg = config_.ba;
  cfg.prune_unobservable = true;
  windowed_.push_back(windowed_ba(state_.map, rig_, cfg));
}

namespace {

// Scalar round trip through single precision. Eigen's mixed-type vector
// constructor lets the optimizer drop the rounding.
double to_f32(double v) {
  volatile float f = static_cast<float>(v);
  return static_cast<double>(f);
}

}  // namespace

TrainResult Trainer::finish(const Session& session) {
  MapState& map = state_.map;
  BAConfig cfg = config_.ba;
  cfg.prune_unobservable = true;
  const std::set<std::uint32_t> pinned{map.keyframes.front().id};
  BAReport report = bundle_adjust(map.keyframes, map.landmarks, rig_, cfg, pinned);

  // Drop observations the adjusted map cannot explain, then landmarks left
  // with fewer than two observations.
  bool pruned = false;
  {
    const ResidualSet rs = reprojection_residuals(map.keyframes, map.landmarks, rig_, cfg.huber_delta_px);
    std::size_t row = 0;
    for (Keyframe& kf : map.keyframes) {
      std::vector<KeyframeObservation> kept;
      for (const KeyframeObservation& o : kf.observations) {
        const double err = rs.residuals.segment<2>(static_cast<Eigen::Index>(2 * row++)).norm();
        if (err <= config_.prune_error_px) kept.push_back(o);
      }
      pruned |= kept.size() != kf.observations.size();
      kf.observations = std::move(kept);
    }
  }
  for (;;) {
    std::unordered_map<std::uint32_t, std::uint32_t> count;
    for (const Keyframe& kf : map.keyframes) {
      for (const KeyframeObservation& o : kf.observations) ++count[o.landmark_id];
    }
    std::set<std::uint32_t> drop;
    for (MapLandmark& lm : map.landmarks) {
      lm.observation_count = count[lm.id];
      if (lm.observation_count < 2) drop.insert(lm.id);
    }
    if (drop.empty()) break;
    pruned = true;
    std::erase_if(map.landmarks, [&](const MapLandmark& lm) { return drop.count(lm.id) > 0; });
    for (Keyframe& kf : map.keyframes) {
      std::erase_if(kf.observations,
                    [&](const KeyframeObservation& o) { return drop.count(o.landmark_id) > 0; });
    }
  }
  if (pruned) {
    report = bundle_adjust(map.keyframes, map.landmarks, rig_, cfg, pinned);
    if (!report.pruned_landmarks.empty()) {
      for (MapLandmark& lm : map.landmarks) lm.observation_count = 0;
      for (const Keyframe& kf : map.keyframes) {
        for (const KeyframeObservation& o : kf.observations) ++landmark(o.landmark_id)->observation_count;
      }
    }
  }

  // Dense ids and the storage precision of the map file.
  std::unordered_map<std::uint32_t, std::uint32_t> renumber;
  for (std::size_t j = 0; j < map.landmarks.size(); ++j) {
    renumber[map.landmarks[j].id] = static_cast<std::uint32_t>(j);
    map.landmarks[j].id = static_cast<std::uint32_t>(j);
  }
  for (Keyframe& kf : map.keyframes) {
    for (KeyframeObservation& o : kf.observations) {
      o.landmark_id = renumber.at(o.landmark_id);
      o.pixel = Vec2(to_f32(o.pixel.x()), to_f32(o.pixel.y()));
      o.weight = to_f32(o.weight);
    }
  }

  TrainResult result;
  result.map.rig = rig_;
  result.map.keyframes = std::move(map.keyframes);
  result.map.landmarks = std::move(map.landmarks);
  result.map.metadata.scenario = config_.scenario;
  result.map.metadata.created = config_.created;
  result.map.metadata.seed = config_.seed;
  result.map.metadata.start_pose = session.start_pose;
  result.map.global_ba_done = true;
  result.global_ba = std::move(report);
  result.windowed_ba = std::move(windowed_);
  result.diagnostics = std::move(diagnostics_);
  return result;
}

}  // namespace

bool is_keyframe(const Pose& current, const Pose& last_keyframe, double trans_thresh_m,
                 double rot_thresh_deg) {
  if (!(trans_thresh_m > 0.0) || !(rot_thresh_deg > 0.0)) {
    throw Error(ErrorCode::kConfig, "keyframe thresholds must be > 0");
  }
  const Pose rel = compose(inverse(last_keyframe), current);
  return rel.translation().norm() >= trans_thresh_m ||
         rad2deg(rotation_angle(rel.rotation())) >= rot_thresh_deg;
}

void TrainConfig::validate() const {
  ba.validate();
  if (!(keyframe.trans_thresh_m > 0.0)) throw Error(ErrorCode::kConfig, "keyframe.trans_thresh_m must be > 0");
  if (!(keyframe.rot_thresh_deg > 0.0)) throw Error(ErrorCode::kConfig, "keyframe.rot_thresh_deg must be > 0");
  if (!(min_inlier_weight > 0.0)) throw Error(ErrorCode::kConfig, "min_inlier_weight must be > 0");
  if (!(max_triangulation_error_px > 0.0) || !(prune_error_px > 0.0)) {
    throw Error(ErrorCode::kConfig, "reprojection gates must be > 0");
  }
  if (tracking.match.max_dist < 0 || tracking.match.max_dist > Descriptor::kBits) {
    throw Error(ErrorCode::kConfig, "match.max_dist must be in [0, 256]");
  }
  if (!(tracking.match.ratio > 0.0 && tracking.match.ratio <= 1.0)) {
    throw Error(ErrorCode::kConfig, "match.ratio must be in (0, 1]");
  }
}

Pose predict_pose(const TrackingState& state) {
  if (!state.last) throw Error(ErrorCode::kConfig, "no tracked pose to predict from");
  if (!state.previous) return *state.last;
  const Pose step = compose(inverse(*state.previous), *state.last);
  return compose(*state.last, step);
}

LocateResult track_frame(const TrackingState& state, const FrameObservations& frame,
                         const CameraRig& rig, const TrainConfig& config) {
  const std::string where = "frame " + std::to_string(frame.frame_index) + ": ";
  if (state.map.landmarks.size() < 10) {
    throw Error(ErrorCode::kTrackingLost, where + "map has only " +
                                              std::to_string(state.map.landmarks.size()) +
                                              " landmarks");
  }
  Pose prior = predict_pose(state);
  if (config.odometry_prior) {
    if (auto odo = config.odometry_prior(frame.frame_index)) prior = *odo;
  }
  const LocateResult r = locate_frame(state.map.landmarks, frame, rig, prior, config.tracking, 4,
                                      mix_seed({config.seed, kTagTrack, frame.frame_index}));
  if (r.status != LocateStatus::kOk) throw Error(ErrorCode::kTrackingLost, where + r.detail);
  if (r.inlier_weight < config.min_inlier_weight) {
    throw Error(ErrorCode::kTrackingLost,
                where + "inlier weight " + text::format_fixed(r.inlier_weight, 2) + " below " +
                    text::format_fixed(config.min_inlier_weight, 2));
  }
  return r;
}

TrainResult train(const Session& session, const CameraRig& rig, const TrainConfig& config) {
  config.validate();
  rig.validate();
  Trainer trainer(rig, config);
  trainer.run(session);
  return trainer.finish(session);
}

void write_diagnostics(std::ostream& out, const std::vector<KeyframeDiagnostic>& diagnostics) {
  for (const KeyframeDiagnostic& d : diagnostics) {
    out << d.frame_index << ' ' << text::format_pose(d.tracked_pose) << ' ' << d.inliers << ' '
        << text::format_double(d.rmse_px) << ' ' << d.new_landmarks << '\n';
  }
}

void write_point_cloud(std::ostream& out, const TrainedMap& map) {
  for (const MapLandmark& lm : map.landmarks) {
    out << text::format_double(lm.position.x()) << ' ' << text::format_double(lm.position.y())
        << ' ' << text::format_double(lm.position.z()) << ' ' << class_name(lm.cls) << '\n';
  }
}

}  // namespace ttpark
