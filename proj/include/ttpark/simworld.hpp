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
 * @file simworld.hpp
 * @brief Deterministic synthetic parking scenes: landmark worlds, parking
 *        trajectories, per-frame surround-view observations and the
 *        between-session changes (appearance, structure, dynamic objects,
 *        GPS) that a replay drive sees.
 *
 * Every random quantity is drawn from a generator seeded by a hash of the
 * caller's seed and the entity it belongs to (landmark id, camera), so
 * changing one knob never reshuffles the noise of unrelated entities.
 */
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ttpark/features.hpp"
#include "ttpark/geometry.hpp"

namespace ttpark {

/// Sensing envelope of the surround-view cameras.
inline constexpr double kMaxObservationRange = 25.0;

struct GroundTruthLandmark {
  std::uint32_t id = 0;
  Vec3 position = Vec3::Zero();
  Descriptor descriptor;
  SemanticClass cls = SemanticClass::kBuilding;

  friend bool operator==(const GroundTruthLandmark&, const GroundTruthLandmark&) = default;
};

struct World {
  std::vector<GroundTruthLandmark> landmarks;
  std::uint64_t seed = 0;

  friend bool operator==(const World&, const World&) = default;
};

using ClassMix = std::vector<std::pair<SemanticClass, double>>;

/// Mostly static structure with a few parked cars and pedestrians.
ClassMix default_class_mix();

struct WorldSpec {
  std::size_t n_landmarks = 800;
  Vec3 extent{40.0, 30.0, 6.0};
  ClassMix class_mix = default_class_mix();
  std::uint64_t seed = 1;
  /// Center of the ground footprint of the landmark box.
  Vec2 center{8.0, 2.0};
  /// No landmark is placed within `clearance_m` (horizontally) of these points.
  std::vector<Vec2> keepout;
  double clearance_m = 1.5;
};

/// Landmarks uniform in the box, ground classes on the ground plane.
/// Throws kConfig for n = 0, an empty or non-positive class mix, or a
/// non-positive extent.
World generate_world(const WorldSpec& spec);
World generate_world(std::size_t n_landmarks, const Vec3& extent, const ClassMix& class_mix,
                     std::uint64_t seed);

enum class TrajectoryPreset { kHomePark, kReverseParkout, kOfficeLot };

std::string_view preset_name(TrajectoryPreset preset);
TrajectoryPreset parse_preset(std::string_view name);

/// Radius of the 90 degree arc into (or out of) the parking slot.
inline constexpr double kSlotArcRadius = 5.0;
/// Office lot S-curve: lead-in straight, then two opposite arcs.
inline constexpr double kOfficeLeadIn = 5.0;
inline constexpr double kOfficeArcRadius = 8.0;
inline constexpr double kOfficeArcAngleDeg = 60.0;
inline constexpr double kOfficeMinLength = 30.0;

struct TrajectorySpec {
  TrajectoryPreset preset = TrajectoryPreset::kHomePark;
  double length_m = 20.0;
  double frame_spacing_m = 0.25;
  double lateral_offset_m = 0.0;
  double angular_offset_deg = 0.0;

  void validate() const;
};

/// world_from_vehicle poses spaced frame_spacing_m apart in arc length. The
/// path is generated in a start frame and moved rigidly by the lateral and
/// angular offsets, so the first pose is (yaw = offset, position (0, lat, 0)).
std::vector<Pose> generate_trajectory(const TrajectorySpec& spec);

struct PerturbationSpec {
  double descriptor_flip_prob = 0.0;
  double landmark_churn_frac = 0.0;
  bool dynamic_resample = false;
  double pixel_noise_sigma = 0.0;
  double dropout_prob = 0.0;
  double gps_pos_sigma_m = 1.0;
  double gps_yaw_sigma_deg = 5.0;

  /// Every knob at zero, GPS included.
  static PerturbationSpec none();
  void validate() const;
};

struct Observation {
  Vec2 pixel = Vec2::Zero();
  Descriptor descriptor;
  /// Label from the segmentation stage.
  SemanticClass cls = SemanticClass::kBuilding;
  /// Debug only; never read by the pipelines.
  std::uint32_t true_landmark_id = 0;

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct FrameObservations {
  std::size_t frame_index = 0;
  /// Held out from the pipelines; evaluation only.
  Pose ground_truth_pose;
  /// One list per rig camera, in rig order.
  std::vector<std::vector<Observation>> per_camera;

  std::size_t size() const;
  friend bool operator==(const FrameObservations&, const FrameObservations&) = default;
};

/// One frame of the rig at `world_from_vehicle`. Landmarks within the lens
/// field of view, inside the image and at most kMaxObservationRange from the
/// camera are emitted with Gaussian pixel noise, random dropout and per-bit
/// descriptor flips; noisy pixels that leave the image or the lens model are
/// discarded.
FrameObservations render_observations(const World& world, const CameraRig& rig,
                                      const Pose& world_from_vehicle,
                                      const PerturbationSpec& pert, std::uint64_t seed,
                                      std::size_t frame_index = 0);

/// The world as seen on a later drive: static landmarks replaced at
/// landmark_churn_frac, dynamic ones moved when dynamic_resample, and a
/// session-wide per-bit descriptor flip at descriptor_flip_prob.
World perturb_session(const World& world, const PerturbationSpec& pert, std::uint64_t seed);

/// Start pose reported by a noisy GPS fix: xy and yaw perturbed.
Pose simulate_gps(const Pose& truth, const PerturbationSpec& pert, std::uint64_t seed);

/// A recorded drive: declared start pose (pins the map frame during
/// training), the GPS fix (coarse init during replay) and the frames.
struct Session {
  std::string name;
  Pose start_pose;
  Pose gps_pose;
  std::vector<FrameObservations> frames;

  friend bool operator==(const Session&, const Session&) = default;
};

Session render_session(const World& world, const CameraRig& rig,
                       const std::vector<Pose>& trajectory, const PerturbationSpec& pert,
                       std::uint64_t seed, std::string name);

/// Points the world generator must keep clear of: vehicle origin and every
/// camera center along the trajectory.
std::vector<Vec2> trajectory_keepout(const std::vector<Pose>& trajectory, const CameraRig& rig);

// Text formats. World/trajectory: one record per line,
//   L id x y z class hex-descriptor
//   P idx qw qx qy qz tx ty tz
// Session:
//   S name
//   T qw qx qy qz tx ty tz        (declared start)
//   G qw qx qy qz tx ty tz        (GPS fix)
//   F idx qw qx qy qz tx ty tz    (frame, ground truth pose)
//   O cam u v class hex true_id   (observation of the preceding frame)
// Lines starting with '#' are comments.
void write_world_text(std::ostream& out, const World& world, const std::vector<Pose>& trajectory);
struct WorldFile {
  World world;
  std::vector<Pose> trajectory;
};
WorldFile read_world_text(std::istream& in);

void write_session_text(std::ostream& out, const Session& session);
/// `n_cameras` sizes FrameObservations::per_camera.
Session read_session_text(std::istream& in, std::size_t n_cameras = 4);

}  // namespace ttpark
