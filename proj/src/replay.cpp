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
#include "ttpark/replay.hpp"

#include <istream>
#include <ostream>
#include <string>

#include "ttpark/errors.hpp"
#include "ttpark/random.hpp"
#include "ttpark/text_format.hpp"

namespace ttpark {

namespace {

constexpr std::uint64_t kTagReplay = 0x7265706c;  // "repl"

const Pose& keyframe_pose(const TrainedMap& map, std::uint32_t id) {
  return map.keyframes.at(id).pose;
}

}  // namespace

void ReplayConfig::validate() const {
  if (min_inliers < 4) throw Error(ErrorCode::kConfig, "replay.min_inliers must be >= 4");
  if (!(search_radius_m > 0.0)) throw Error(ErrorCode::kConfig, "replay.search_radius_m must be > 0");
  if (candidate_keyframes < 1) throw Error(ErrorCode::kConfig, "replay.candidate_keyframes must be >= 1");
  if (reacquire_after < 1) throw Error(ErrorCode::kConfig, "replay.reacquire_after must be >= 1");
  if (!(huber_delta_px > 0.0)) throw Error(ErrorCode::kConfig, "replay.huber_delta_px must be > 0");
}

std::string_view status_code(RelocStatus status) {
  switch (status) {
    case RelocStatus::kLocalized: return "LOC";
    case RelocStatus::kLost: return "LOST";
    case RelocStatus::kInsufficientMatches: return "FEW";
  }
  return "LOST";
}

RelocStatus parse_status(std::string_view code) {
  if (code == "LOC") return RelocStatus::kLocalized;
  if (code == "LOST") return RelocStatus::kLost;
  if (code == "FEW") return RelocStatus::kInsufficientMatches;
  throw Error(ErrorCode::kConfig, "unknown relocalization status '" + std::string(code) + "'");
}

std::vector<std::uint32_t> coarse_init(const TrainedMap& map, const Pose& gps_pose,
                                       const ReplayConfig& config) {
  auto ids = nearest_keyframes(map, gps_pose, config.search_radius_m, config.candidate_keyframes);
  if (ids.empty()) {
    throw Error(ErrorCode::kInitializationFailure,
                "no keyframe within " + text::format_double(config.search_radius_m) +
                    " m of the GPS fix (" + text::format_fixed(gps_pose.translation().x(), 2) +
                    ", " + text::format_fixed(gps_pose.translation().y(), 2) + ")");
  }
  return ids;
}

RelocResult relocalize_frame(const TrainedMap& map, const FrameObservations& frame,
                             const Pose& prior, const ReplayConfig& config) {
  RelocResult out;
  out.frame_index = frame.frame_index;
  const LocateResult r =
      locate_frame(map.landmarks, frame, map.rig, prior, config.tracking, config.min_inliers,
                   mix_seed({config.seed, kTagReplay, frame.frame_index}));
  if (r.status == LocateStatus::kFewMatches) {
    out.status = RelocStatus::kInsufficientMatches;
    return out;
  }
  if (r.status != LocateStatus::kOk) {
    out.status = RelocStatus::kLost;
    return out;
  }
  out.inlier_count = r.inlier_count;
  out.mean_reproj_error_px = r.rmse_px;
  const bool good = r.inlier_count >= config.min_inliers && r.converged &&
                    r.rmse_px <= 2.0 * config.huber_delta_px;
  out.status = good ? RelocStatus::kLocalized : RelocStatus::kLost;
  if (good) out.estimated_pose = r.pose;
  return out;
}

std::vector<RelocResult> replay(const TrainedMap& map, const std::vector<FrameObservations>& frames,
                                const Pose& gps_pose, const ReplayConfig& config) {
  config.validate();
  std::vector<std::uint32_t> candidates = coarse_init(map, gps_pose, config);

  std::vector<RelocResult> results;
  results.reserve(frames.size());
  std::optional<Pose> last_good;
  std::size_t last_good_frame = 0;
  std::optional<Pose> step;  // body-frame motion per frame
  std::size_t lost_run = 0;
  bool use_candidates = true;

  for (const FrameObservations& frame : frames) {
    std::vector<Pose> priors;
    if (!use_candidates && last_good) {
      Pose prior = *last_good;
      if (step) {
        for (std::size_t g = last_good_frame; g < frame.frame_index; ++g) prior = compose(prior, *step);
      }
      priors.push_back(prior);
    } else {
      for (std::uint32_t id : candidates) priors.push_back(keyframe_pose(map, id));
    }

    RelocResult res;
    for (const Pose& prior : priors) {
      res = relocalize_frame(map, frame, prior, config);
      if (res.status == RelocStatus::kLocalized) break;
    }

    if (res.status == RelocStatus::kLocalized) {
      if (last_good && frame.frame_index == last_good_frame + 1) {
        step = compose(inverse(*last_good), *res.estimated_pose);
      } else {
        step.reset();
      }
      last_good = res.estimated_pose;
      last_good_frame = frame.frame_index;
      lost_run = 0;
      use_candidates = false;
    } else if (++lost_run >= config.reacquire_after) {
      if (last_good) {
        auto near = nearest_keyframes(map, *last_good, config.search_radius_m,
                                      config.candidate_keyframes);
        if (!near.empty()) candidates = std::move(near);
      }
      use_candidates = true;
    }
    results.push_back(std::move(res));
  }
  return results;
}

void write_results_text(std::ostream& out, const std::vector<RelocResult>& results) {
  for (const RelocResult& r : results) {
    out << r.frame_index << ' ' << status_code(r.status) << ' ';
    if (r.estimated_pose) {
      out << text::format_pose(*r.estimated_pose);
    } else {
      out << "nan nan nan nan nan nan nan";
    }
    out << ' ' << r.inlier_count << ' ' << text::format_double(r.mean_reproj_error_px) << '\n';
  }
}

std::vector<RelocResult> read_results_text(std::istream& in) {
  std::vector<RelocResult> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tok = text::split_ws(line);
    if (tok.empty() || tok[0].front() == '#') continue;
    const std::string ctx = "results line " + std::to_string(line_no);
    if (tok.size() != 11) throw Error(ErrorCode::kConfig, ctx + ": expected 11 fields");
    RelocResult r;
    r.frame_index = text::parse_u64(tok[0], ctx);
    r.status = parse_status(tok[1]);
    if (r.status == RelocStatus::kLocalized) r.estimated_pose = text::parse_pose(tok, 2, ctx);
    r.inlier_count = text::parse_u64(tok[9], ctx);
    r.mean_reproj_error_px = text::parse_double(tok[10], ctx);
    out.push_back(r);
  }
  return out;
}

}  // namespace ttpark
