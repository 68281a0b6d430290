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
#include "ttpark/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "ttpark/errors.hpp"

namespace ttpark {

Pose Pose::from_yaw(double yaw_rad, const Vec3& position) {
  return Pose(Eigen::Quaterniond(Eigen::AngleAxisd(yaw_rad, Vec3::UnitZ())), position);
}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_matrix();
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

Pose compose(const Pose& a, const Pose& b) {
  return Pose(a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation());
}

Pose inverse(const Pose& p) {
  const Eigen::Quaterniond q_inv = p.rotation().conjugate();
  return Pose(q_inv, -(q_inv * p.translation()));
}

double rotation_angle(const Eigen::Quaterniond& q) {
  // atan2 form stays accurate near zero where acos((trace - 1) / 2) does not.
  const double v = q.vec().norm();
  return 2.0 * std::atan2(v, std::abs(q.w()));
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Eigen::Quaterniond so3_exp(const Vec3& omega) {
  const double angle = omega.norm();
  if (angle < 1e-12) {
    Eigen::Quaterniond q(1.0, 0.5 * omega.x(), 0.5 * omega.y(), 0.5 * omega.z());
    return q.normalized();
  }
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle, omega / angle));
}

double yaw_of(const Pose& p) {
  const Vec3 forward = p.rotation() * Vec3::UnitX();
  return std::atan2(forward.y(), forward.x());
}

Pose retract_left(const Pose& p, const Vec6& delta) {
  const Eigen::Quaterniond dq = so3_exp(delta.head<3>());
  return Pose(dq * p.rotation(), dq * p.translation() + delta.tail<3>());
}

void FisheyeIntrinsics::validate() const {
  if (!(focal > 0.0)) throw Error(ErrorCode::kConfig, "fisheye focal must be positive");
  if (!(theta_max > 0.0) || theta_max > kPi) {
    throw Error(ErrorCode::kConfig, "fisheye theta_max must lie in (0, pi]");
  }
  if (!(image_size.x() > 0.0) || !(image_size.y() > 0.0)) {
    throw Error(ErrorCode::kConfig, "fisheye image size must be positive");
  }
  if (!in_bounds(principal_point)) {
    throw Error(ErrorCode::kConfig, "fisheye principal point must lie inside the image");
  }
}

double off_axis_angle(const Vec3& p) { return std::atan2(p.head<2>().norm(), p.z()); }

Vec2 project_equidistant(const FisheyeIntrinsics& intr, const Vec3& p,
                         Eigen::Matrix<double, 2, 3>* d_pixel_d_point) {
  const double x = p.x();
  const double y = p.y();
  const double z = p.z();
  const double rho2 = x * x + y * y;
  const double rho = std::sqrt(rho2);
  const double n2 = rho2 + z * z;
  const double theta = std::atan2(rho, z);

  // k = theta / rho and its partials; near the optical axis use the series
  // theta / rho = 1/z - rho^2 / (3 z^3).
  double k;
  double dk_drho_over_rho;
  const bool near_axis = rho < 1e-7 * std::sqrt(n2) && z > 0.0;
  if (near_axis) {
    k = 1.0 / z - rho2 / (3.0 * z * z * z);
    dk_drho_over_rho = -2.0 / (3.0 * z * z * z);
  } else {
    k = theta / rho;
    dk_drho_over_rho = (z / n2 - k) / rho2;
  }
  const Vec2 pixel = intr.principal_point + intr.focal * k * Vec2(x, y);

  if (d_pixel_d_point != nullptr) {
    const double f = intr.focal;
    const double dk_dx = dk_drho_over_rho * x;
    const double dk_dy = dk_drho_over_rho * y;
    const double dk_dz = -1.0 / n2;
    auto& j = *d_pixel_d_point;
    j(0, 0) = f * (k + x * dk_dx);
    j(0, 1) = f * x * dk_dy;
    j(0, 2) = f * x * dk_dz;
    j(1, 0) = f * y * dk_dx;
    j(1, 1) = f * (k + y * dk_dy);
    j(1, 2) = f * y * dk_dz;
  }
  return pixel;
}

std::optional<Vec2> project_camera_point(const FisheyeIntrinsics& intr, const Vec3& p) {
  if (p.norm() < 1e-12) {
    throw Error(ErrorCode::kDegenerateInput, "cannot project a point at the camera center");
  }
  if (off_axis_angle(p) > intr.theta_max) return std::nullopt;
  const Vec2 pixel = project_equidistant(intr, p);
  if (!intr.in_bounds(pixel)) return std::nullopt;
  return pixel;
}

std::optional<Vec2> project(const FisheyeIntrinsics& intr, const Pose& cam_from_world,
                            const Vec3& point_world) {
  return project_camera_point(intr, cam_from_world * point_world);
}

Vec3 unproject(const FisheyeIntrinsics& intr, const Vec2& pixel) {
  const Vec2 d = pixel - intr.principal_point;
  const double r = d.norm();
  const double theta = r / intr.focal;
  if (theta > intr.theta_max) {
    throw Error(ErrorCode::kOutOfModel, "pixel radius " + std::to_string(r) +
                                            " px lies beyond the lens field of view");
  }
  if (r == 0.0) return Vec3::UnitZ();
  const double s = std::sin(theta) / r;
  return Vec3(s * d.x(), s * d.y(), std::cos(theta));
}

namespace {

double angle_between(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

}  // namespace

double max_ray_angle_deg(std::span<const RayObservation> observations) {
  std::vector<Vec3> dirs;
  dirs.reserve(observations.size());
  for (const auto& obs : observations) {
    dirs.push_back(obs.cam_from_world.rotation().conjugate() * obs.ray.normalized());
  }
  double best = 0.0;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    for (std::size_t j = i + 1; j < dirs.size(); ++j) {
      best = std::max(best, angle_between(dirs[i], dirs[j]));
    }
  }
  return rad2deg(best);
}

Vec3 triangulate(std::span<const RayObservation> observations) {
  if (observations.size() < 2) {
    throw Error(ErrorCode::kArity, "triangulation needs at least two observations, got " +
                                       std::to_string(observations.size()));
  }
  if (max_ray_angle_deg(observations) <= kMinTriangulationAngleDeg) {
    throw Error(ErrorCode::kDegenerateBaseline, "rays are parallel within " +
                                                    std::to_string(kMinTriangulationAngleDeg) +
                                                    " deg; baseline too small");
  }
  Mat3 a = Mat3::Zero();
  Vec3 b = Vec3::Zero();
  for (const auto& obs : observations) {
    const Eigen::Quaterniond world_from_cam = obs.cam_from_world.rotation().conjugate();
    const Vec3 center = -(world_from_cam * obs.cam_from_world.translation());
    const Vec3 dir = (world_from_cam * obs.ray).normalized();
    const Mat3 proj = Mat3::Identity() - dir * dir.transpose();
    a += proj;
    b += proj * center;
  }
  return a.colPivHouseholderQr().solve(b);
}

std::string_view camera_name(CameraId id) {
  switch (id) {
    case CameraId::kFront: return "front";
    case CameraId::kRear: return "rear";
    case CameraId::kLeft: return "left";
    case CameraId::kRight: return "right";
  }
  return "unknown";
}

Pose camera_from_vehicle_mount(double yaw_rad, const Vec3& position) {
  const double c = std::cos(yaw_rad);
  const double s = std::sin(yaw_rad);
  Mat3 vehicle_from_camera;
  vehicle_from_camera.col(0) = Vec3(s, -c, 0.0);   // image x: right of the optical axis
  vehicle_from_camera.col(1) = Vec3(0.0, 0.0, -1.0);  // image y: down
  vehicle_from_camera.col(2) = Vec3(c, s, 0.0);    // optical axis
  return inverse(Pose(vehicle_from_camera, position));
}

CameraRig::CameraRig(std::vector<RigCamera> cameras) : cameras_(std::move(cameras)) { validate(); }

CameraRig CameraRig::surround_view() {
  const FisheyeIntrinsics intr;
  std::vector<RigCamera> cams{
      {CameraId::kFront, intr, camera_from_vehicle_mount(0.0, Vec3(3.7, 0.0, 0.6))},
      {CameraId::kRear, intr, camera_from_vehicle_mount(kPi, Vec3(-1.0, 0.0, 0.9))},
      {CameraId::kLeft, intr, camera_from_vehicle_mount(kPi / 2.0, Vec3(1.9, 1.0, 1.0))},
      {CameraId::kRight, intr, camera_from_vehicle_mount(-kPi / 2.0, Vec3(1.9, -1.0, 1.0))},
  };
  return CameraRig(std::move(cams));
}

Vec3 CameraRig::camera_center(std::size_t index) const {
  return inverse(camera(index).camera_from_vehicle).translation();
}

Pose CameraRig::cam_from_world(std::size_t index, const Pose& world_from_vehicle) const {
  return compose(camera(index).camera_from_vehicle, inverse(world_from_vehicle));
}

double CameraRig::min_baseline() const {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cameras_.size(); ++i) {
    for (std::size_t j = i + 1; j < cameras_.size(); ++j) {
      best = std::min(best, (camera_center(i) - camera_center(j)).norm());
    }
  }
  return best;
}

void CameraRig::validate() const {
  if (cameras_.size() != 4) {
    throw Error(ErrorCode::kConfig,
                "camera rig needs exactly 4 cameras, got " + std::to_string(cameras_.size()));
  }
  std::set<CameraId> ids;
  for (const auto& cam : cameras_) {
    cam.intrinsics.validate();
    if (!ids.insert(cam.id).second) {
      throw Error(ErrorCode::kConfig,
                  "duplicate camera id " + std::string(camera_name(cam.id)));
    }
  }
  // Coincident mounts only differ by rounding in the inverted extrinsics.
  if (!(min_baseline() > 1e-6)) {
    throw Error(ErrorCode::kConfig, "camera rig baselines must be strictly positive");
  }
}

bool operator==(const FisheyeIntrinsics& a, const FisheyeIntrinsics& b) {
  return a.focal == b.focal && a.principal_point == b.principal_point &&
         a.image_size == b.image_size && a.theta_max == b.theta_max;
}

bool operator==(const RigCamera& a, const RigCamera& b) {
  return a.id == b.id && a.intrinsics == b.intrinsics &&
         a.camera_from_vehicle == b.camera_from_vehicle;
}

bool operator==(const CameraRig& a, const CameraRig& b) { return a.cameras_ == b.cameras_; }

}  // namespace ttpark
