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
#include "ttpark/simworld.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <string>

#include "ttpark/errors.hpp"
#include "ttpark/random.hpp"
#include "ttpark/text_format.hpp"

namespace ttpark {

namespace {

// Stream tags keep the per-entity generators of different stages apart.
constexpr std::uint64_t kTagRender = 0x52454e44;
constexpr std::uint64_t kTagSession = 0x53455353;
constexpr std::uint64_t kTagGps = 0x47505321;
constexpr std::uint64_t kTagFrame = 0x4652414d;

Descriptor random_descriptor(std::mt19937_64& rng) {
  Descriptor d;
  for (auto& w : d.words) w = rng();
  return d;
}

/// Draws one uniform per bit regardless of `prob` (when prob > 0) so the bits
/// flipped at a lower probability are a subset of those at a higher one.
void flip_bits(Descriptor& d, double prob, std::mt19937_64& rng) {
  if (!(prob > 0.0)) return;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int b = 0; b < Descriptor::kBits; ++b) {
    if (uni(rng) < prob) d.flip(b);
  }
}

double draw_height(SemanticClass cls, double max_height, std::mt19937_64& rng) {
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  switch (cls) {
    case SemanticClass::kRoadMarking: return 0.0;
    case SemanticClass::kCurb: return 0.12;
    case SemanticClass::kVegetation: return uniform(0.0, std::min(max_height, 3.0));
    case SemanticClass::kVehicle: return uniform(0.3, 1.6);
    case SemanticClass::kPedestrian: return uniform(0.3, 1.8);
    case SemanticClass::kBuilding: break;
  }
  return uniform(0.0, max_height);
}

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw Error(ErrorCode::kConfig, std::string(name) + " must lie in [0, 1]");
  }
}

void check_sigma(double s, const char* name) {
  if (!(s >= 0.0)) throw Error(ErrorCode::kConfig, std::string(name) + " must be >= 0");
}

// Arc-length parameterized planar path made of constant-curvature pieces.
struct PathPiece {
  double length;
  double curvature;
};

struct PlanarState {
  Vec2 position;
  double tangent;
};

PlanarState advance(const PlanarState& s, double curvature, double ds) {
  PlanarState out;
  out.tangent = s.tangent + curvature * ds;
  if (std::abs(curvature) < 1e-15) {
    out.position = s.position + ds * Vec2(std::cos(s.tangent), std::sin(s.tangent));
  } else {
    out.position = s.position + Vec2(std::sin(out.tangent) - std::sin(s.tangent),
                                     -std::cos(out.tangent) + std::cos(s.tangent)) /
                                    curvature;
  }
  return out;
}

PlanarState evaluate_path(const std::vector<PathPiece>& pieces, double initial_tangent, double s) {
  PlanarState state{Vec2::Zero(), initial_tangent};
  for (const auto& piece : pieces) {
    const double ds = std::min(s, piece.length);
    state = advance(state, piece.curvature, ds);
    s -= ds;
    if (s <= 0.0) break;
  }
  return state;
}

}  // namespace

ClassMix default_class_mix() {
  return {{SemanticClass::kBuilding, 0.40},   {SemanticClass::kVegetation, 0.15},
          {SemanticClass::kRoadMarking, 0.20}, {SemanticClass::kCurb, 0.10},
          {SemanticClass::kVehicle, 0.10},     {SemanticClass::kPedestrian, 0.05}};
}

World generate_world(const WorldSpec& spec) {
  if (spec.n_landmarks == 0) throw Error(ErrorCode::kConfig, "world needs at least one landmark");
  if (spec.class_mix.empty()) throw Error(ErrorCode::kConfig, "class_mix is empty");
  double total = 0.0;
  for (const auto& [cls, w] : spec.class_mix) {
    if (!(w >= 0.0)) throw Error(ErrorCode::kConfig, "class_mix weights must be >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::kConfig, "class_mix weights sum to zero");
  if (!(spec.extent.minCoeff() > 0.0)) {
    throw Error(ErrorCode::kConfig, "world extent must be positive");
  }

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double clearance2 = spec.clearance_m * spec.clearance_m;

  World world;
  world.seed = spec.seed;
  world.landmarks.reserve(spec.n_landmarks);
  for (std::size_t i = 0; i < spec.n_landmarks; ++i) {
    GroundTruthLandmark lm;
    lm.id = static_cast<std::uint32_t>(i);

    double pick = uni(rng) * total;
    lm.cls = spec.class_mix.back().first;
    for (const auto& [cls, w] : spec.class_mix) {
      if (pick < w) {
        lm.cls = cls;
        break;
      }
      pick -= w;
    }

    Vec2 xy;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      xy = spec.center + Vec2((uni(rng) - 0.5) * spec.extent.x(), (uni(rng) - 0.5) * spec.extent.y());
      bool clear = true;
      for (const auto& k : spec.keepout) {
        if ((k - xy).squaredNorm() < clearance2) {
          clear = false;
          break;
        }
      }
      if (clear) break;
    }
    lm.position = Vec3(xy.x(), xy.y(), draw_height(lm.cls, spec.extent.z(), rng));
    lm.descriptor = random_descriptor(rng);
    world.landmarks.push_back(lm);
  }
  return world;
}

World generate_world(std::size_t n_landmarks, const Vec3& extent, const ClassMix& class_mix,
                     std::uint64_t seed) {
  WorldSpec spec;
  spec.n_landmarks = n_landmarks;
  spec.extent = extent;
  spec.class_mix = class_mix;
  spec.seed = seed;
  return generate_world(spec);
}

std::string_view preset_name(TrajectoryPreset preset) {
  switch (preset) {
    case TrajectoryPreset::kHomePark: return "home_park";
    case TrajectoryPreset::kReverseParkout: return "reverse_parkout";
    case TrajectoryPreset::kOfficeLot: return "office_lot";
  }
  return "unknown";
}

TrajectoryPreset parse_preset(std::string_view name) {
  for (auto p : {TrajectoryPreset::kHomePark, TrajectoryPreset::kReverseParkout,
                 TrajectoryPreset::kOfficeLot}) {
    if (preset_name(p) == name) return p;
  }
  throw Error(ErrorCode::kConfig, "unknown trajectory preset '" + std::string(name) + "'");
}

void TrajectorySpec::validate() const {
  if (!(frame_spacing_m > 0.0)) {
    throw Error(ErrorCode::kConfig, "trajectory.frame_spacing_m must be > 0");
  }
  if (!(length_m >= frame_spacing_m)) {
    throw Error(ErrorCode::kConfig, "trajectory.length_m must be >= frame_spacing_m");
  }
  if (preset == TrajectoryPreset::kOfficeLot && length_m < kOfficeMinLength) {
    throw Error(ErrorCode::kConfig, "trajectory.length_m must be >= 30 for office_lot");
  }
  if (!std::isfinite(lateral_offset_m) || !std::isfinite(angular_offset_deg)) {
    throw Error(ErrorCode::kConfig, "trajectory offsets must be finite");
  }
}

std::vector<Pose> generate_trajectory(const TrajectorySpec& spec) {
  spec.validate();
  const double length = spec.length_m;
  const double slot_arc = std::min(length, kSlotArcRadius * kPi / 2.0);

  std::vector<PathPiece> pieces;
  double initial_tangent = 0.0;
  double heading_offset = 0.0;  // heading relative to the direction of travel
  switch (spec.preset) {
    case TrajectoryPreset::kHomePark:
      pieces = {{length - slot_arc, 0.0}, {slot_arc, 1.0 / kSlotArcRadius}};
      break;
    case TrajectoryPreset::kReverseParkout:
      // Backing out: travel starts along -x while the vehicle faces +x.
      initial_tangent = kPi;
      heading_offset = kPi;
      pieces = {{slot_arc, 1.0 / kSlotArcRadius}, {length - slot_arc, 0.0}};
      break;
    case TrajectoryPreset::kOfficeLot: {
      const double arc = kOfficeArcRadius * deg2rad(kOfficeArcAngleDeg);
      pieces = {{kOfficeLeadIn, 0.0},
                {arc, 1.0 / kOfficeArcRadius},
                {arc, -1.0 / kOfficeArcRadius},
                {length - kOfficeLeadIn - 2.0 * arc, 0.0}};
      break;
    }
  }

  const Pose offset =
      Pose::from_yaw(deg2rad(spec.angular_offset_deg), Vec3(0.0, spec.lateral_offset_m, 0.0));
  const auto n = static_cast<std::size_t>(std::floor(length / spec.frame_spacing_m + 1e-9)) + 1;
  std::vector<Pose> poses;
  poses.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = static_cast<double>(i) * spec.frame_spacing_m;
    const PlanarState st = evaluate_path(pieces, initial_tangent, s);
    const double heading = std::remainder(st.tangent + heading_offset, 2.0 * kPi);
    const Pose local = Pose::from_yaw(heading, Vec3(st.position.x(), st.position.y(), 0.0));
    poses.push_back(compose(offset, local));
  }
  return poses;
}

PerturbationSpec PerturbationSpec::none() {
  PerturbationSpec p;
  p.gps_pos_sigma_m = 0.0;
  p.gps_yaw_sigma_deg = 0.0;
  return p;
}

void PerturbationSpec::validate() const {
  check_probability(descriptor_flip_prob, "perturbation.descriptor_flip_prob");
  check_probability(landmark_churn_frac, "perturbation.landmark_churn_frac");
  check_probability(dropout_prob, "perturbation.dropout_prob");
  check_sigma(pixel_noise_sigma, "perturbation.pixel_noise_sigma");
  check_sigma(gps_pos_sigma_m, "perturbation.gps_pos_sigma_m");
  check_sigma(gps_yaw_sigma_deg, "perturbation.gps_yaw_sigma_deg");
}

std::size_t FrameObservations::size() const {
  std::size_t n = 0;
  for (const auto& cam : per_camera) n += cam.size();
  return n;
}

FrameObservations render_observations(const World& world, const CameraRig& rig,
                                      const Pose& world_from_vehicle,
                                      const PerturbationSpec& pert, std::uint64_t seed,
                                      std::size_t frame_index) {
  pert.validate();
  FrameObservations frame;
  frame.frame_index = frame_index;
  frame.ground_truth_pose = world_from_vehicle;
  frame.per_camera.resize(rig.size());

  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t c = 0; c < rig.size(); ++c) {
    const FisheyeIntrinsics& intr = rig.camera(c).intrinsics;
    const Pose cam_from_world = rig.cam_from_world(c, world_from_vehicle);
    auto& out = frame.per_camera[c];
    for (const auto& lm : world.landmarks) {
      const Vec3 p = cam_from_world * lm.position;
      const double range = p.norm();
      if (range > kMaxObservationRange || range < 1e-9) continue;
      const auto pixel = project_camera_point(intr, p);
      if (!pixel) continue;

      std::mt19937_64 rng(mix_seed({seed, kTagRender, c, lm.id}));
      const double u_drop = uni(rng);
      const double nx = gauss(rng);
      const double ny = gauss(rng);
      if (u_drop < pert.dropout_prob) continue;

      Observation obs;
      obs.pixel = *pixel + pert.pixel_noise_sigma * Vec2(nx, ny);
      if (pert.pixel_noise_sigma > 0.0) {
        const double theta = (obs.pixel - intr.principal_point).norm() / intr.focal;
        if (!intr.in_bounds(obs.pixel) || theta > intr.theta_max) continue;
      }
      obs.descriptor = lm.descriptor;
      flip_bits(obs.descriptor, pert.descriptor_flip_prob, rng);
      obs.cls = lm.cls;
      obs.true_landmark_id = lm.id;
      out.push_back(obs);
    }
  }
  return frame;
}

World perturb_session(const World& world, const PerturbationSpec& pert, std::uint64_t seed) {
  pert.validate();
  World out = world;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (auto& lm : out.landmarks) {
    std::mt19937_64 rng(mix_seed({seed, kTagSession, lm.id}));
    const double u_churn = uni(rng);
    const double churn_dir = 2.0 * kPi * uni(rng);
    const double churn_dist = 2.0 + 4.0 * uni(rng);
    const Descriptor fresh = random_descriptor(rng);
    const double move_dir = 2.0 * kPi * uni(rng);
    const double move_dist = 1.0 + 4.0 * uni(rng);

    if (is_dynamic(lm.cls)) {
      if (pert.dynamic_resample) {
        lm.position += move_dist * Vec3(std::cos(move_dir), std::sin(move_dir), 0.0);
      }
    } else if (u_churn < pert.landmark_churn_frac) {
      lm.position += churn_dist * Vec3(std::cos(churn_dir), std::sin(churn_dir), 0.0);
      lm.descriptor = fresh;
    }
    flip_bits(lm.descriptor, pert.descriptor_flip_prob, rng);
  }
  return out;
}

Pose simulate_gps(const Pose& truth, const PerturbationSpec& pert, std::uint64_t seed) {
  pert.validate();
  if (pert.gps_pos_sigma_m == 0.0 && pert.gps_yaw_sigma_deg == 0.0) return truth;
  std::mt19937_64 rng(mix_seed({seed, kTagGps}));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double dx = pert.gps_pos_sigma_m * gauss(rng);
  const double dy = pert.gps_pos_sigma_m * gauss(rng);
  const double dyaw = deg2rad(pert.gps_yaw_sigma_deg) * gauss(rng);
  const Eigen::Quaterniond rz(Eigen::AngleAxisd(dyaw, Vec3::UnitZ()));
  return Pose(rz * truth.rotation(), truth.translation() + Vec3(dx, dy, 0.0));
}

Session render_session(const World& world, const CameraRig& rig,
                       const std::vector<Pose>& trajectory, const PerturbationSpec& pert,
                       std::uint64_t seed, std::string name) {
  Session session;
  session.name = std::move(name);
  if (!trajectory.empty()) {
    session.start_pose = trajectory.front();
    session.gps_pose = simulate_gps(trajectory.front(), pert, seed);
  }
  session.frames.reserve(trajectory.size());
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    session.frames.push_back(
        render_observations(world, rig, trajectory[i], pert, mix_seed({seed, kTagFrame, i}), i));
  }
  return session;
}

std::vector<Vec2> trajectory_keepout(const std::vector<Pose>& trajectory, const CameraRig& rig) {
  std::vector<Vec2> out;
  out.reserve(trajectory.size() * (rig.size() + 1));
  for (const auto& pose : trajectory) {
    out.push_back(pose.translation().head<2>());
    for (std::size_t c = 0; c < rig.size(); ++c) {
      out.push_back((pose * rig.camera_center(c)).head<2>());
    }
  }
  return out;
}

void write_world_text(std::ostream& out, const World& world, const std::vector<Pose>& trajectory) {
  out << "# ttpark world v1 seed " << world.seed << '\n';
  for (const auto& lm : world.landmarks) {
    out << "L " << lm.id << ' ' << text::format_double(lm.position.x()) << ' '
        << text::format_double(lm.position.y()) << ' ' << text::format_double(lm.position.z())
        << ' ' << class_name(lm.cls) << ' ' << lm.descriptor.to_hex() << '\n';
  }
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    out << "P " << i << ' ' << text::format_pose(trajectory[i]) << '\n';
  }
}

WorldFile read_world_text(std::istream& in) {
  WorldFile file;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = text::split_ws(line);
    if (tokens.empty()) continue;
    const std::string ctx = "world line " + std::to_string(line_no);
    if (tokens[0].starts_with('#')) {
      for (std::size_t i = 1; i + 1 < tokens.size(); ++i) {
        if (tokens[i] == "seed") file.world.seed = text::parse_u64(tokens[i + 1], ctx);
      }
      continue;
    }
    if (tokens[0] == "L") {
      if (tokens.size() != 7) throw Error(ErrorCode::kConfig, ctx + ": L record needs 7 fields");
      GroundTruthLandmark lm;
      lm.id = static_cast<std::uint32_t>(text::parse_u64(tokens[1], ctx));
      if (lm.id != file.world.landmarks.size()) {
        throw Error(ErrorCode::kConfig, ctx + ": landmark ids must be dense and ordered");
      }
      lm.position = Vec3(text::parse_double(tokens[2], ctx), text::parse_double(tokens[3], ctx),
                         text::parse_double(tokens[4], ctx));
      lm.cls = parse_class(tokens[5]);
      lm.descriptor = Descriptor::from_hex(tokens[6]);
      file.world.landmarks.push_back(lm);
    } else if (tokens[0] == "P") {
      if (tokens.size() != 9) throw Error(ErrorCode::kConfig, ctx + ": P record needs 9 fields");
      file.trajectory.push_back(text::parse_pose(tokens, 2, ctx));
    } else {
      throw Error(ErrorCode::kConfig, ctx + ": unknown record '" + std::string(tokens[0]) + "'");
    }
  }
  return file;
}

void write_session_text(std::ostream& out, const Session& session) {
  out << "# ttpark session v1\n";
  out << "S " << (session.name.empty() ? "-" : session.name) << '\n';
  out << "T " << text::format_pose(session.start_pose) << '\n';
  out << "G " << text::format_pose(session.gps_pose) << '\n';
  for (const auto& frame : session.frames) {
    out << "F " << frame.frame_index << ' ' << text::format_pose(frame.ground_truth_pose) << '\n';
    for (std::size_t c = 0; c < frame.per_camera.size(); ++c) {
      for (const auto& obs : frame.per_camera[c]) {
        out << "O " << c << ' ' << text::format_double(obs.pixel.x()) << ' '
            << text::format_double(obs.pixel.y()) << ' ' << class_name(obs.cls) << ' '
            << obs.descriptor.to_hex() << ' ' << obs.true_landmark_id << '\n';
      }
    }
  }
}

Session read_session_text(std::istream& in, std::size_t n_cameras) {
  Session session;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = text::split_ws(line);
    if (tokens.empty() || tokens[0].starts_with('#')) continue;
    const std::string ctx = "session line " + std::to_string(line_no);
    if (tokens[0] == "S") {
      if (tokens.size() != 2) throw Error(ErrorCode::kConfig, ctx + ": S record needs a name");
      session.name = tokens[1] == "-" ? "" : std::string(tokens[1]);
    } else if (tokens[0] == "T") {
      session.start_pose = text::parse_pose(tokens, 1, ctx);
    } else if (tokens[0] == "G") {
      session.gps_pose = text::parse_pose(tokens, 1, ctx);
    } else if (tokens[0] == "F") {
      if (tokens.size() != 9) throw Error(ErrorCode::kConfig, ctx + ": F record needs 9 fields");
      FrameObservations frame;
      frame.frame_index = text::parse_u64(tokens[1], ctx);
      frame.ground_truth_pose = text::parse_pose(tokens, 2, ctx);
      frame.per_camera.resize(n_cameras);
      session.frames.push_back(std::move(frame));
    } else if (tokens[0] == "O") {
      if (session.frames.empty()) {
        throw Error(ErrorCode::kConfig, ctx + ": observation before any frame");
      }
      if (tokens.size() != 7) throw Error(ErrorCode::kConfig, ctx + ": O record needs 7 fields");
      const auto cam = text::parse_u64(tokens[1], ctx);
      if (cam >= n_cameras) throw Error(ErrorCode::kConfig, ctx + ": camera index out of range");
      Observation obs;
      obs.pixel = Vec2(text::parse_double(tokens[2], ctx), text::parse_double(tokens[3], ctx));
      obs.cls = parse_class(tokens[4]);
      obs.descriptor = Descriptor::from_hex(tokens[5]);
      obs.true_landmark_id = static_cast<std::uint32_t>(text::parse_u64(tokens[6], ctx));
      session.frames.back().per_camera[cam].push_back(obs);
    } else {
      throw Error(ErrorCode::kConfig, ctx + ": unknown record '" + std::string(tokens[0]) + "'");
    }
  }
  return session;
}

}  // namespace ttpark
