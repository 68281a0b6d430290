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
// Private: the rig reprojection residual shared by the pose solver and
// bundle adjustment.
#pragma once

#include <cmath>

#include "ttpark/geometry.hpp"

namespace ttpark::detail {

using Mat26 = Eigen::Matrix<double, 2, 6>;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Residual r = observed - project(cam_from_vehicle * vehicle_from_world * X).
/// Pose derivatives are taken for the left tangent update of
/// vehicle_from_world (see retract_left). Returns false when the point falls
/// outside the lens model; the residual is then saturated to `saturation_px`
/// along the unchecked projection direction and both Jacobians are zero.
inline bool rig_residual(const RigCamera& cam, const Pose& vehicle_from_world, const Vec3& point,
                         const Vec2& observed, double saturation_px, Vec2* residual,
                         Mat26* d_pose = nullptr, Mat23* d_point = nullptr) {
  const Vec3 p_vehicle = vehicle_from_world * point;
  const Vec3 p_cam = cam.camera_from_vehicle * p_vehicle;
  const bool in_model = p_cam.norm() > 1e-12 && off_axis_angle(p_cam) <= cam.intrinsics.theta_max;
  if (!in_model) {
    Vec2 dir = observed - cam.intrinsics.principal_point;
    if (p_cam.norm() > 1e-12) dir = observed - project_equidistant(cam.intrinsics, p_cam);
    const double n = dir.norm();
    *residual = (n > 0.0 && std::isfinite(n)) ? Vec2(saturation_px * dir / n)
                                              : Vec2(saturation_px, 0.0);
    if (d_pose) d_pose->setZero();
    if (d_point) d_point->setZero();
    return false;
  }
  Mat23 d_pixel;
  const Vec2 pixel = project_equidistant(cam.intrinsics, p_cam, (d_pose || d_point) ? &d_pixel : nullptr);
  *residual = observed - pixel;
  if (d_pose || d_point) {
    const Mat3 r_cv = cam.camera_from_vehicle.rotation_matrix();
    const Mat23 d_res_d_vehicle = -d_pixel * r_cv;
    if (d_pose) {
      d_pose->leftCols<3>() = -d_res_d_vehicle * skew(p_vehicle);
      d_pose->rightCols<3>() = d_res_d_vehicle;
    }
    if (d_point) *d_point = d_res_d_vehicle * vehicle_from_world.rotation_matrix();
  }
  return true;
}

/// Huber loss on the residual norm.
inline double huber(double norm, double delta) {
  return norm <= delta ? 0.5 * norm * norm : delta * (norm - 0.5 * delta);
}

/// IRLS weight for the Huber loss.
inline double huber_weight(double norm, double delta) {
  return norm <= delta ? 1.0 : delta / norm;
}

}  // namespace ttpark::detail
