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
 * @file geometry.hpp
 * @brief Rigid transforms, the equidistant fisheye camera, the four-camera
 *        surround-view rig and multi-ray triangulation.
 *
 * Conventions used throughout the library:
 *  - world frame is z-up;
 *  - vehicle frame is x-forward, y-left, z-up;
 *  - camera frame has z along the optical axis, x right, y down.
 *
 * A Pose named `a_from_b` maps point coordinates expressed in frame b into
 * frame a. Vehicle trajectories and keyframes are stored as
 * `world_from_vehicle`, so their translation is the vehicle position.
 */
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace ttpark {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

inline constexpr double kPi = 3.14159265358979323846;
inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// Rigid transform in SE(3). The rotation is renormalized on construction so
/// every Pose carries a unit quaternion. Quaternions already unit to within
/// 1e-14 are kept as given, which makes construction idempotent and lets
/// serialized poses reload bit-exactly.
class Pose {
 public:
  Pose() : rotation_(Eigen::Quaterniond::Identity()), translation_(Vec3::Zero()) {}
  Pose(const Eigen::Quaterniond& rotation, const Vec3& translation)
      : rotation_(unit(rotation)), translation_(translation) {}
  Pose(const Mat3& rotation, const Vec3& translation)
      : Pose(Eigen::Quaterniond(rotation), translation) {}

  static Pose identity() { return {}; }
  /// Planar pose: yaw about world z, positioned at `position`.
  static Pose from_yaw(double yaw_rad, const Vec3& position);

  const Eigen::Quaterniond& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Mat3 rotation_matrix() const { return rotation_.toRotationMatrix(); }
  Mat4 matrix() const;

  Vec3 operator*(const Vec3& point) const { return rotation_ * point + translation_; }

  /// Bitwise equality of all seven coefficients.
  friend bool operator==(const Pose& a, const Pose& b) {
    return a.rotation_.coeffs() == b.rotation_.coeffs() && a.translation_ == b.translation_;
  }

 private:
  static Eigen::Quaterniond unit(const Eigen::Quaterniond& q) {
    const double n2 = q.squaredNorm();
    return (n2 > 1.0 - 1e-14 && n2 < 1.0 + 1e-14) ? q : q.normalized();
  }

  Eigen::Quaterniond rotation_;
  Vec3 translation_;
};

/// Applies b first, then a.
Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& p);

/// Geodesic rotation angle of a unit quaternion, radians in [0, pi].
double rotation_angle(const Eigen::Quaterniond& q);
Mat3 skew(const Vec3& v);
/// Axis-angle exponential map.
Eigen::Quaterniond so3_exp(const Vec3& omega);
/// Yaw (rotation about z) of the body x-axis in the parent frame.
double yaw_of(const Pose& p);

/// Left tangent update used by every optimizer in the library:
/// rotation <- Exp(w) * rotation, translation <- Exp(w) * translation + v,
/// with delta = (w, v).
Pose retract_left(const Pose& p, const Vec6& delta);

struct FisheyeIntrinsics {
  double focal = 300.0;
  Vec2 principal_point{640.0, 400.0};
  Vec2 image_size{1280.0, 800.0};
  double theta_max = deg2rad(95.0);

  /// Throws kConfig when an invariant does not hold.
  void validate() const;
  bool in_bounds(const Vec2& pixel) const {
    return pixel.x() >= 0.0 && pixel.y() >= 0.0 && pixel.x() < image_size.x() &&
           pixel.y() < image_size.y();
  }
};

/// Angle between a camera-frame point and the optical axis.
double off_axis_angle(const Vec3& point_in_camera);

/// Equidistant model r = f * theta evaluated without any field-of-view or
/// image-bounds check. When `d_pixel_d_point` is non-null it receives the
/// 2x3 Jacobian with respect to the camera-frame point.
Vec2 project_equidistant(const FisheyeIntrinsics& intr, const Vec3& point_in_camera,
                         Eigen::Matrix<double, 2, 3>* d_pixel_d_point = nullptr);

/// Projects a camera-frame point; empty when theta > theta_max or the pixel
/// leaves the image. Throws kDegenerateInput at the camera center.
std::optional<Vec2> project_camera_point(const FisheyeIntrinsics& intr, const Vec3& point_in_camera);

std::optional<Vec2> project(const FisheyeIntrinsics& intr, const Pose& cam_from_world,
                            const Vec3& point_world);

/// Unit ray in the camera frame. Throws kOutOfModel when the pixel radius
/// implies theta > theta_max.
Vec3 unproject(const FisheyeIntrinsics& intr, const Vec2& pixel);

struct RayObservation {
  Pose cam_from_world;
  Vec3 ray;  // unit, camera frame
};

/// Minimum pairwise ray angle for triangulation to be well conditioned.
inline constexpr double kMinTriangulationAngleDeg = 0.5;

/// Least-squares point minimizing the summed squared distance to every ray.
/// Throws kArity for fewer than two rays and kDegenerateBaseline when no
/// pair of rays is separated by more than kMinTriangulationAngleDeg.
Vec3 triangulate(std::span<const RayObservation> observations);

/// Largest pairwise angle (degrees) between the world-frame directions.
double max_ray_angle_deg(std::span<const RayObservation> observations);

enum class CameraId : std::uint8_t { kFront = 0, kRear = 1, kLeft = 2, kRight = 3 };

std::string_view camera_name(CameraId id);

struct RigCamera {
  CameraId id = CameraId::kFront;
  FisheyeIntrinsics intrinsics;
  Pose camera_from_vehicle;
};

/// Four fisheye cameras with fixed metric extrinsics. The inter-camera
/// baselines are what make trajectory scale observable.
class CameraRig {
 public:
  CameraRig() = default;
  explicit CameraRig(std::vector<RigCamera> cameras);

  /// 1280x800, f = 300 px, 190 degree lenses mounted at the four sides.
  static CameraRig surround_view();

  const std::vector<RigCamera>& cameras() const { return cameras_; }
  std::size_t size() const { return cameras_.size(); }
  const RigCamera& camera(std::size_t index) const { return cameras_.at(index); }

  /// Camera center expressed in the vehicle frame.
  Vec3 camera_center(std::size_t index) const;
  Pose cam_from_world(std::size_t index, const Pose& world_from_vehicle) const;
  double min_baseline() const;

  void validate() const;

  friend bool operator==(const CameraRig&, const CameraRig&);

 private:
  std::vector<RigCamera> cameras_;
};

bool operator==(const FisheyeIntrinsics& a, const FisheyeIntrinsics& b);
bool operator==(const RigCamera& a, const RigCamera& b);

/// Camera mounted at `position` (vehicle frame) looking horizontally along
/// `yaw_rad` measured from the vehicle x-axis.
Pose camera_from_vehicle_mount(double yaw_rad, const Vec3& position);

}  // namespace ttpark
