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
// Seeded generators and shared fixtures for the unit tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "ttpark/bundle_adjustment.hpp"
#include "ttpark/errors.hpp"
#include "ttpark/geometry.hpp"
#include "ttpark/map_store.hpp"
#include "ttpark/scenario.hpp"

namespace ttpark::testing {

/// The code of the ttpark::Error thrown by `f`, or nullopt when it returns.
template <typename F>
std::optional<ErrorCode> error_code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal(double sigma) { return std::normal_distribution<double>(0.0, sigma)(rng_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

  Vec3 vec3(double scale) { return Vec3(uniform(-scale, scale), uniform(-scale, scale), uniform(-scale, scale)); }

  Eigen::Quaterniond rotation() {
    // Uniform on SO(3) via a normalized 4D Gaussian.
    Eigen::Quaterniond q(normal(1.0), normal(1.0), normal(1.0), normal(1.0));
    return q.normalized();
  }

  Pose pose(double translation_scale) { return Pose(rotation(), vec3(translation_scale)); }

  Descriptor descriptor() {
    Descriptor d;
    for (auto& w : d.words) w = rng_();
    return d;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// Keyframes driving along +x at 0.5 m spacing with landmarks scattered
/// around them, observed exactly (pixel noise optional) by the surround rig.
struct BAProblem {
  CameraRig rig = CameraRig::surround_view();
  std::vector<Keyframe> keyframes;
  std::vector<MapLandmark> landmarks;
  std::vector<Pose> true_poses;
  std::vector<Vec3> true_points;
};

inline BAProblem make_ba_problem(std::uint64_t seed, std::size_t n_keyframes, std::size_t n_landmarks,
                                 double pixel_noise = 0.0) {
  Gen g(seed);
  BAProblem p;
  for (std::size_t k = 0; k < n_keyframes; ++k) {
    const Pose pose = Pose::from_yaw(g.uniform(-0.05, 0.05), Vec3(0.5 * static_cast<double>(k), g.uniform(-0.1, 0.1), 0.0));
    p.true_poses.push_back(pose);
    Keyframe kf;
    kf.id = static_cast<std::uint32_t>(k);
    kf.pose = pose;
    kf.frame_index = 2 * k;
    p.keyframes.push_back(kf);
  }
  for (std::size_t j = 0; j < n_landmarks; ++j) {
    const double ang = g.uniform(-kPi, kPi);
    const double range = g.uniform(4.0, 12.0);
    const Vec3 x(1.0 + range * std::cos(ang), range * std::sin(ang), g.uniform(0.2, 4.0));
    p.true_points.push_back(x);
    MapLandmark lm;
    lm.id = static_cast<std::uint32_t>(j);
    lm.position = x;
    lm.descriptor = g.descriptor();
    p.landmarks.push_back(lm);
  }
  for (Keyframe& kf : p.keyframes) {
    for (std::size_t c = 0; c < p.rig.size(); ++c) {
      const Pose cfw = p.rig.cam_from_world(c, kf.pose);
      for (const MapLandmark& lm : p.landmarks) {
        const auto px = project(p.rig.camera(c).intrinsics, cfw, lm.position);
        if (!px) continue;
        KeyframeObservation o;
        o.camera = static_cast<std::uint8_t>(c);
        o.pixel = *px + Vec2(g.normal(1.0), g.normal(1.0)) * pixel_noise;
        o.descriptor = lm.descriptor;
        o.landmark_id = lm.id;
        kf.observations.push_back(o);
      }
    }
  }
  for (MapLandmark& lm : p.landmarks) {
    for (const Keyframe& kf : p.keyframes) {
      for (const auto& o : kf.observations) lm.observation_count += o.landmark_id == lm.id ? 1 : 0;
    }
  }
  return p;
}

/// The default scenario with every perturbation knob at zero.
inline ScenarioConfig noiseless_config() {
  ScenarioConfig c;
  c.perturbation = PerturbationSpec::none();
  return c;
}

/// Simulation and training of the noiseless default scenario, shared by the
/// tests of one binary.
struct NominalScene {
  ScenarioConfig config;
  SimulatedScene scene;
  TrainResult trained;
};

inline const NominalScene& nominal_scene() {
  static const NominalScene s = [] {
    NominalScene n;
    n.config = noiseless_config();
    n.scene = simulate(n.config);
    n.trained = train(n.scene.training, scenario_rig(n.config), make_train_config(n.config));
    return n;
  }();
  return s;
}

inline Eigen::VectorXd weighted_residuals(const std::vector<Keyframe>& kfs, const std::vector<MapLandmark>& lms,
                                   const CameraRig& rig) {
  const ResidualSet rs = reprojection_residuals(kfs, lms, rig);
  Eigen::VectorXd r = rs.residuals;
  for (std::size_t i = 0; i < rs.weights.size(); ++i) r.segment<2>(2 * i) *= std::sqrt(rs.weights[i]);
  return r;
}

// Central differences over every column: 6 left-tangent coordinates of each
// keyframe's vehicle_from_world, then each landmark position.
inline Eigen::MatrixXd numeric_jacobian(const BAProblem& p, double h) {
  const std::size_t n_cols = 6 * p.keyframes.size() + 3 * p.landmarks.size();
  const Eigen::Index rows = weighted_residuals(p.keyframes, p.landmarks, p.rig).size();
  Eigen::MatrixXd j(rows, n_cols);
  for (std::size_t k = 0; k < p.keyframes.size(); ++k) {
    for (int a = 0; a < 6; ++a) {
      Vec6 d = Vec6::Zero();
      d[a] = h;
      auto plus = p.keyframes, minus = p.keyframes;
      plus[k].pose = inverse(retract_left(inverse(p.keyframes[k].pose), d));
      minus[k].pose = inverse(retract_left(inverse(p.keyframes[k].pose), -d));
      j.col(6 * k + a) = (weighted_residuals(plus, p.landmarks, p.rig) -
                          weighted_residuals(minus, p.landmarks, p.rig)) / (2 * h);
    }
  }
  for (std::size_t l = 0; l < p.landmarks.size(); ++l) {
    for (int a = 0; a < 3; ++a) {
      auto plus = p.landmarks, minus = p.landmarks;
      plus[l].position[a] += h;
      minus[l].position[a] -= h;
      j.col(6 * p.keyframes.size() + 3 * l + a) =
          (weighted_residuals(p.keyframes, plus, p.rig) - weighted_residuals(p.keyframes, minus, p.rig)) / (2 * h);
    }
  }
  return j;
}

// Rows whose landmark projects inside the lens model; the rest carry a
// saturated residual with a zero Jacobian.
inline std::vector<bool> in_model_rows(const BAProblem& p) {
  std::vector<bool> rows;
  for (const auto& kf : p.keyframes) {
    for (const auto& o : kf.observations) {
      const bool ok = project(p.rig.camera(o.camera).intrinsics, p.rig.cam_from_world(o.camera, kf.pose),
                              p.landmarks[o.landmark_id].position)
                          .has_value();
      rows.push_back(ok);
      rows.push_back(ok);
    }
  }
  return rows;
}

inline double max_relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const std::vector<bool>& rows) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (!rows[static_cast<std::size_t>(i)]) continue;
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      const double scale = std::max({1.0, std::abs(a(i, c)), std::abs(b(i, c))});
      worst = std::max(worst, std::abs(a(i, c) - b(i, c)) / scale);
    }
  }
  return worst;
}

/// make_ba_problem with 0.3 px noise, every keyframe but the first moved and
/// every landmark displaced by up to 0.1 m.
inline BAProblem perturbed_problem(std::uint64_t seed) {
  BAProblem p = make_ba_problem(seed, 5, 50, 0.3);
  Gen g(seed + 1000);
  for (std::size_t k = 1; k < p.keyframes.size(); ++k) {
    Vec6 d;
    d << g.vec3(0.01), g.vec3(0.05);
    p.keyframes[k].pose = inverse(retract_left(inverse(p.keyframes[k].pose), d));
  }
  for (auto& lm : p.landmarks) lm.position += g.vec3(0.1);
  return p;
}

// A random valid map. Pixels and weights are drawn as floats since the file
// stores them in single precision.
inline TrainedMap random_map(Gen& g, std::size_t n_kf, std::size_t n_lm, std::size_t max_obs) {
  TrainedMap m;
  m.rig = CameraRig::surround_view();
  m.global_ba_done = true;
  m.metadata.scenario = "map_" + std::to_string(g.index(1000));
  m.metadata.created = static_cast<std::int64_t>(g.index(2000000000)) - 1000000000;
  m.metadata.seed = g.engine()();
  m.metadata.start_pose = g.pose(50.0);
  std::size_t frame = g.index(5);
  for (std::size_t k = 0; k < n_kf; ++k) {
    Keyframe kf;
    kf.id = static_cast<std::uint32_t>(k);
    kf.frame_index = frame;
    frame += 1 + g.index(4);
    kf.pose = g.pose(100.0);
    const std::size_t n_obs = g.index(max_obs + 1);
    for (std::size_t i = 0; i < n_obs; ++i) {
      KeyframeObservation o;
      o.camera = static_cast<std::uint8_t>(g.index(m.rig.size()));
      o.pixel = Vec2(static_cast<float>(g.uniform(0, 640)), static_cast<float>(g.uniform(0, 480)));
      o.landmark_id = static_cast<std::uint32_t>(g.index(n_lm));
      o.weight = static_cast<float>(g.uniform(0, 1));
      o.descriptor = g.descriptor();
      kf.observations.push_back(o);
    }
    m.keyframes.push_back(kf);
  }
  for (std::size_t j = 0; j < n_lm; ++j) {
    MapLandmark lm;
    lm.id = static_cast<std::uint32_t>(j);
    lm.position = g.vec3(1000.0);
    lm.descriptor = g.descriptor();
    lm.cls = kAllSemanticClasses[g.index(kAllSemanticClasses.size())];
    lm.observation_count = static_cast<std::uint32_t>(g.index(100));
    m.landmarks.push_back(lm);
  }
  return m;
}

inline std::vector<Pose> truth_of(const Session& s) {
  std::vector<Pose> out;
  for (const auto& f : s.frames) out.push_back(f.ground_truth_pose);
  return out;
}

}  // namespace ttpark::testing
