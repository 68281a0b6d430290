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
 * @file bundle_adjustment.hpp
 * @brief Keyframe/landmark map state, reprojection residuals, the analytic
 *        block-sparse Jacobian and Levenberg-Marquardt bundle adjustment.
 *
 * Keyframe poses are world_from_vehicle. The optimizer perturbs
 * vehicle_from_world with the left tangent update (see retract_left); the rig
 * extrinsics are constants, which is what fixes metric scale.
 */
#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include <Eigen/Core>

#include "ttpark/features.hpp"
#include "ttpark/geometry.hpp"

namespace ttpark {

struct KeyframeObservation {
  std::uint8_t camera = 0;
  Vec2 pixel = Vec2::Zero();
  Descriptor descriptor;
  std::uint32_t landmark_id = 0;
  double weight = 1.0;

  friend bool operator==(const KeyframeObservation&, const KeyframeObservation&) = default;
};

struct Keyframe {
  std::uint32_t id = 0;
  /// world_from_vehicle
  Pose pose;
  std::uint64_t frame_index = 0;
  std::vector<KeyframeObservation> observations;

  friend bool operator==(const Keyframe&, const Keyframe&) = default;
};

struct MapLandmark {
  std::uint32_t id = 0;
  Vec3 position = Vec3::Zero();
  Descriptor descriptor;
  SemanticClass cls = SemanticClass::kBuilding;
  std::uint32_t observation_count = 0;

  friend bool operator==(const MapLandmark&, const MapLandmark&) = default;
};

struct MapState {
  std::vector<Keyframe> keyframes;
  std::vector<MapLandmark> landmarks;
};

struct BAConfig {
  int window_n = 5;
  int max_iterations = 50;
  double initial_damping = 1e-4;
  double huber_delta_px = 2.0;
  /// Stop once an accepted step lowers the cost by less than this fraction.
  double convergence_tol = 1e-10;
  /// Drop landmarks whose position is unobservable instead of failing.
  bool prune_unobservable = false;

  void validate() const;
};

struct BAReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  double initial_rmse_px = 0.0;
  double final_rmse_px = 0.0;
  bool converged = false;
  /// Accepted costs, starting with the initial one.
  std::vector<double> cost_history;
  std::vector<std::uint32_t> pruned_landmarks;
};

/// Residual norm assigned to observations whose landmark leaves the lens
/// model, in units of huber_delta_px.
inline constexpr double kSaturationInDeltas = 4.0;

struct ResidualSet {
  /// observed - projected, two entries per observation in keyframe order.
  Eigen::VectorXd residuals;
  /// Per-observation weight, aligned with residuals / 2.
  std::vector<double> weights;
  /// sum of weight * huber(|r|)
  double cost = 0.0;
};

/// Throws kIntegrity when an observation names a landmark not in the list.
ResidualSet reprojection_residuals(const std::vector<Keyframe>& keyframes,
                                   const std::vector<MapLandmark>& landmarks, const CameraRig& rig,
                                   double huber_delta_px = 2.0);

/// RMS residual norm over observations with positive weight.
double reprojection_rmse(const std::vector<Keyframe>& keyframes,
                         const std::vector<MapLandmark>& landmarks, const CameraRig& rig);

/// One observation's two rows of the Jacobian of sqrt(weight) * residual.
struct JacobianBlock {
  std::size_t observation = 0;
  std::size_t keyframe = 0;
  std::size_t landmark = 0;
  Eigen::Matrix<double, 2, 6> d_pose = Eigen::Matrix<double, 2, 6>::Zero();
  Eigen::Matrix<double, 2, 3> d_point = Eigen::Matrix<double, 2, 3>::Zero();
};

/// Columns: a 6-vector (rotation, translation) left increment of each
/// keyframe's vehicle_from_world, then each landmark's position.
struct BAJacobian {
  std::size_t n_observations = 0;
  std::size_t n_keyframes = 0;
  std::size_t n_landmarks = 0;
  std::vector<JacobianBlock> blocks;

  Eigen::MatrixXd dense() const;
};

BAJacobian ba_jacobian(const std::vector<Keyframe>& keyframes,
                       const std::vector<MapLandmark>& landmarks, const CameraRig& rig,
                       double huber_delta_px = 2.0);

/// Levenberg-Marquardt over every non-fixed keyframe pose and every non-fixed
/// landmark with at least one positive-weight observation, landmarks
/// eliminated by the Schur complement. Fixed poses are never written.
///
/// Throws kConfig without a fixed keyframe and kRankDeficiency naming the
/// first landmark or keyframe whose block is singular (unless
/// prune_unobservable, which removes such landmarks and their observations).
BAReport bundle_adjust(std::vector<Keyframe>& keyframes, std::vector<MapLandmark>& landmarks,
                       const CameraRig& rig, const BAConfig& config,
                       const std::set<std::uint32_t>& fixed_keyframe_ids,
                       const std::set<std::uint32_t>& fixed_landmark_ids = {});

/// Adjusts the last window_n keyframes and the landmarks they observe; every
/// other keyframe and the first keyframe stay fixed. A window covering the
/// whole map is a global adjustment with the first pose pinned.
BAReport windowed_ba(MapState& state, const CameraRig& rig, const BAConfig& config);

}  // namespace ttpark
