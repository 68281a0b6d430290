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
#include "ttpark/pose_estimation.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "reprojection.hpp"
#include "ttpark/errors.hpp"

namespace ttpark {

namespace {

using detail::Mat26;
using detail::Mat6;

constexpr int kMinimalSample = 4;
constexpr double kSaturationPx = 50.0;

struct LmOutcome {
  Pose vehicle_from_world;
  double cost = 0.0;
  bool converged = false;
};

double match_cost(std::span<const PoseMatch> matches, std::span<const std::size_t> subset,
                  const CameraRig& rig, const Pose& vehicle_from_world, bool robust,
                  double delta) {
  double cost = 0.0;
  for (std::size_t i : subset) {
    const PoseMatch& m = matches[i];
    Vec2 r;
    detail::rig_residual(rig.camera(m.camera), vehicle_from_world, m.landmark, m.pixel,
                         kSaturationPx, &r);
    const double n = r.norm();
    cost += m.weight * (robust ? detail::huber(n, delta) : 0.5 * n * n);
  }
  return cost;
}

LmOutcome refine_pose(std::span<const PoseMatch> matches, std::span<const std::size_t> subset,
                      const CameraRig& rig, const Pose& initial, bool robust, double delta,
                      int max_iterations) {
  LmOutcome out{initial, match_cost(matches, subset, rig, initial, robust, delta), false};
  double lambda = 1e-3;
  for (int iter = 0; iter < max_iterations; ++iter) {
    if (out.cost < 1e-24) {
      out.converged = true;
      break;
    }
    Mat6 h = Mat6::Zero();
    Vec6 g = Vec6::Zero();
    for (std::size_t i : subset) {
      const PoseMatch& m = matches[i];
      Vec2 r;
      Mat26 j;
      if (!detail::rig_residual(rig.camera(m.camera), out.vehicle_from_world, m.landmark, m.pixel,
                                kSaturationPx, &r, &j)) {
        continue;
      }
      const double w = m.weight * (robust ? detail::huber_weight(r.norm(), delta) : 1.0);
      h.noalias() += w * j.transpose() * j;
      g.noalias() += w * j.transpose() * r;
    }
    if (g.lpNorm<Eigen::Infinity>() < 1e-15) {
      out.converged = true;
      break;
    }

    bool accepted = false;
    while (!accepted) {
      Mat6 damped = h;
      damped.diagonal() += lambda * (h.diagonal().array() + 1e-9).matrix();
      const Vec6 step = damped.ldlt().solve(-g);
      const Pose candidate = retract_left(out.vehicle_from_world, step);
      const double cost = match_cost(matches, subset, rig, candidate, robust, delta);
      if (std::isfinite(cost) && cost < out.cost) {
        const double rel = (out.cost - cost) / out.cost;
        out.vehicle_from_world = candidate;
        out.cost = cost;
        lambda = std::max(lambda * 0.1, 1e-15);
        accepted = true;
        if (rel < 1e-12 || step.norm() < 1e-14) out.converged = true;
      } else {
        lambda *= 10.0;
        if (lambda > 1e12) {
          // No descent direction left at working precision.
          out.converged = true;
          break;
        }
      }
    }
    if (out.converged) break;
  }
  return out;
}

std::vector<std::size_t> score_inliers(std::span<const PoseMatch> matches,
                                       std::span<const std::size_t> usable, const CameraRig& rig,
                                       const Pose& vehicle_from_world, double threshold) {
  std::vector<std::size_t> inliers;
  for (std::size_t i : usable) {
    const PoseMatch& m = matches[i];
    Vec2 r;
    if (detail::rig_residual(rig.camera(m.camera), vehicle_from_world, m.landmark, m.pixel,
                             kSaturationPx, &r) &&
        r.norm() <= threshold) {
      inliers.push_back(i);
    }
  }
  return inliers;
}

}  // namespace

PoseEstimate estimate_pose(std::span<const PoseMatch> matches, const CameraRig& rig,
                           const Pose& seed_pose, const PoseEstimateOptions& options) {
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    if (matches[i].weight > 0.0) usable.push_back(i);
  }
  if (usable.size() < kMinimalSample) {
    throw Error(ErrorCode::kArity, "pose estimation needs at least 4 weighted matches, got " +
                                       std::to_string(usable.size()));
  }

  const Pose seed_vfw = inverse(seed_pose);
  const double n_usable = static_cast<double>(usable.size());
  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick(0, usable.size() - 1);

  Pose best_vfw = seed_vfw;
  std::size_t best_count = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  double rounds_needed = options.max_ransac_rounds;
  for (int round = 0; round < options.max_ransac_rounds && round < rounds_needed; ++round) {
    std::array<std::size_t, kMinimalSample> sample{};
    for (int k = 0; k < kMinimalSample; ++k) {
      std::size_t idx;
      do {
        idx = usable[pick(rng)];
      } while (std::find(sample.begin(), sample.begin() + k, idx) != sample.begin() + k);
      sample[k] = idx;
    }
    const LmOutcome hyp = refine_pose(matches, sample, rig, seed_vfw, false,
                                      options.huber_delta_px, options.max_iterations);
    const auto inliers =
        score_inliers(matches, usable, rig, hyp.vehicle_from_world, options.inlier_threshold_px);
    if (inliers.size() > best_count ||
        (inliers.size() == best_count && inliers.size() > 0 && hyp.cost < best_cost)) {
      best_count = inliers.size();
      best_cost = hyp.cost;
      best_vfw = hyp.vehicle_from_world;
      const double ratio = static_cast<double>(best_count) / n_usable;
      const double all_inlier = std::pow(ratio, kMinimalSample);
      rounds_needed = all_inlier >= 1.0
                          ? 0.0
                          : std::log(1.0 - options.confidence) / std::log(1.0 - all_inlier);
    }
  }

  auto fail_ratio = [&](std::size_t count) {
    return static_cast<double>(count) / n_usable < options.min_inlier_ratio;
  };
  if (best_count < kMinimalSample || fail_ratio(best_count)) {
    throw Error(ErrorCode::kPoseFailure,
                "pose estimation found " + std::to_string(best_count) + " inliers out of " +
                    std::to_string(usable.size()) + " usable matches");
  }

  // Refine on the consensus set, re-score, and refine once more.
  std::vector<std::size_t> inliers =
      score_inliers(matches, usable, rig, best_vfw, options.inlier_threshold_px);
  LmOutcome fit;
  for (int pass = 0; pass < 2; ++pass) {
    fit = refine_pose(matches, inliers, rig, best_vfw, true, options.huber_delta_px,
                      options.max_iterations);
    best_vfw = fit.vehicle_from_world;
    auto rescored = score_inliers(matches, usable, rig, best_vfw, options.inlier_threshold_px);
    const bool stable = rescored == inliers;
    inliers = std::move(rescored);
    if (stable) break;
  }
  if (inliers.size() < kMinimalSample || fail_ratio(inliers.size())) {
    throw Error(ErrorCode::kPoseFailure,
                "pose refinement kept " + std::to_string(inliers.size()) + " inliers out of " +
                    std::to_string(usable.size()) + " usable matches");
  }

  PoseEstimate est;
  est.pose = inverse(best_vfw);
  est.inliers.assign(matches.size(), false);
  double sq = 0.0;
  for (std::size_t i : inliers) {
    est.inliers[i] = true;
    Vec2 r;
    detail::rig_residual(rig.camera(matches[i].camera), best_vfw, matches[i].landmark,
                         matches[i].pixel, kSaturationPx, &r);
    sq += r.squaredNorm();
  }
  est.inlier_count = inliers.size();
  est.rmse_px = std::sqrt(sq / static_cast<double>(inliers.size()));
  est.converged = fit.converged;
  return est;
}

}  // namespace ttpark
