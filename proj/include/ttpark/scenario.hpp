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
 * @file scenario.hpp
 * @brief Scenario configuration (flat `key = value` text with dotted
 *        sections) and the end-to-end scene runner used by the command line
 *        tool and the acceptance harness.
 *
 * A scenario is one training drive and one replay drive through the same
 * world. The training drive follows the trajectory preset with zero offsets;
 * the replay drive applies trajectory.lateral_offset_m and
 * angular_offset_deg and sees the world after perturb_session. Pixel noise
 * and dropout describe the sensor and apply to both drives; the remaining
 * perturbation knobs only affect the replay.
 */
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ttpark/evaluation.hpp"
#include "ttpark/replay.hpp"
#include "ttpark/simworld.hpp"
#include "ttpark/training.hpp"

namespace ttpark {

struct ScenarioConfig {
  std::string name = "home_park";
  std::uint64_t seed = 1;

  std::size_t n_landmarks = 800;
  /// Landmark box; unset means the trajectory footprint plus world_margin_m
  /// on every side, world_height_m tall.
  std::optional<Vec3> world_extent;
  double world_margin_m = 12.0;
  double world_height_m = 6.0;
  ClassMix class_mix = default_class_mix();
  /// Unset means derived from `seed`.
  std::optional<std::uint64_t> world_seed;
  double clearance_m = 1.5;

  TrajectorySpec trajectory;
  PerturbationSpec perturbation;

  std::optional<double> rig_focal;
  std::optional<double> rig_theta_max_deg;

  BAConfig ba;
  KeyframePolicy keyframe;
  MatchOptions match;
  ReplayConfig replay;

  std::string scene_label = "Scene1";
  std::string training_id = "T1";
  std::string replay_id = "R1";
  double diff_days = 0.0;

  std::string output_dir = "out";

  /// Throws kConfig naming the offending key.
  void validate() const;
};

/// Parses `key = value` lines; '#' starts a comment. Unknown keys, repeated
/// keys and bad values throw kConfig as "<source>:<line>: <key>: <reason>".
ScenarioConfig parse_config(std::istream& in, const std::string& source = "config");
ScenarioConfig load_config(const std::string& path);
/// Every key with its current value, in parse_config's syntax.
void write_config(std::ostream& out, const ScenarioConfig& config);

CameraRig scenario_rig(const ScenarioConfig& config);
std::vector<Pose> training_trajectory(const ScenarioConfig& config);
std::vector<Pose> replay_trajectory(const ScenarioConfig& config);
/// Generated around the training trajectory, which is kept clear of
/// landmarks.
World scenario_world(const ScenarioConfig& config);

TrainConfig make_train_config(const ScenarioConfig& config);
ReplayConfig make_replay_config(const ScenarioConfig& config);

struct SimulatedScene {
  World world;
  std::vector<Pose> training_trajectory;
  Session training;
  World replay_world;
  std::vector<Pose> replay_trajectory;
  Session replay;
};

SimulatedScene simulate(const ScenarioConfig& config);
Session simulate_training(const ScenarioConfig& config, const World& world);
Session simulate_replay(const ScenarioConfig& config, const World& world);

SceneMeta scene_meta(const ScenarioConfig& config, const Session& replay_session);

struct SceneRun {
  TrainResult trained;
  std::vector<RelocResult> results;
  EvalReport report;
};

/// simulate, train, replay, evaluate.
SceneRun run_scene(const ScenarioConfig& config);

/// Six scenes sharing the base world, training drive and seeds:
///   Scene1  no change
///   Scene2  descriptor flips 0.1
///   Scene3  churn 0.3
///   Scene4  1 m lateral offset
///   Scene5  flips 0.1, churn 0.3, 1 m offset
///   Scene6  flips 0.2, churn 0.3, 1 m offset
std::vector<ScenarioConfig> table1_style_preset(const ScenarioConfig& base);
std::vector<ScenarioConfig> expand_preset(const std::string& name, const ScenarioConfig& base);

}  // namespace ttpark
