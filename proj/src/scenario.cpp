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
#include "ttpark/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include "ttpark/errors.hpp"
#include "ttpark/random.hpp"
#include "ttpark/text_format.hpp"

namespace ttpark {

namespace {

constexpr std::uint64_t kTagWorld = 0x776f726c;    // "worl"
constexpr std::uint64_t kTagTrain = 0x74726e;      // "trn"
constexpr std::uint64_t kTagReplay = 0x72706c;     // "rpl"
constexpr std::uint64_t kTagPerturb = 0x707274;    // "prt"
constexpr std::uint64_t kTagGps = 0x677073;        // "gps"
constexpr std::uint64_t kTagPipeline = 0x706970;   // "pip"

using Setter = std::function<void(ScenarioConfig&, std::string_view)>;
using Getter = std::function<std::string(const ScenarioConfig&)>;

struct Key {
  Setter set;
  Getter get;
};

[[noreturn]] void bad(const std::string& why) { throw Error(ErrorCode::kConfig, why); }

double as_double(std::string_view v) {
  const double d = text::parse_double(v, "value");
  if (!std::isfinite(d)) bad("must be finite");
  return d;
}

double positive(std::string_view v) {
  const double d = as_double(v);
  if (!(d > 0.0)) bad("must be > 0");
  return d;
}

double non_negative(std::string_view v) {
  const double d = as_double(v);
  if (!(d >= 0.0)) bad("must be >= 0");
  return d;
}

double probability(std::string_view v) {
  const double d = as_double(v);
  if (!(d >= 0.0 && d <= 1.0)) bad("must lie in [0, 1]");
  return d;
}

std::size_t count_at_least(std::string_view v, std::size_t lo) {
  if (!v.empty() && v.front() == '-') bad("must be >= " + std::to_string(lo));
  const std::uint64_t n = text::parse_u64(v, "value");
  if (n < lo) bad("must be >= " + std::to_string(lo));
  return static_cast<std::size_t>(n);
}

bool as_bool(std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad("expected true or false");
}

std::string word(std::string_view v) {
  if (v.empty() || text::split_ws(v).size() != 1) bad("expected a single word");
  return std::string(v);
}

ClassMix parse_class_mix(std::string_view v) {
  ClassMix mix;
  std::set<SemanticClass> seen;
  double total = 0.0;
  std::string spaced(v);
  std::replace(spaced.begin(), spaced.end(), ',', ' ');
  for (std::string_view tok : text::split_ws(spaced)) {
    const auto colon = tok.find(':');
    if (colon == std::string_view::npos) bad("expected class:weight entries");
    const SemanticClass cls = parse_class(tok.substr(0, colon));
    if (!seen.insert(cls).second) bad("class listed twice");
    const double w = non_negative(tok.substr(colon + 1));
    total += w;
    mix.emplace_back(cls, w);
  }
  if (mix.empty()) bad("class_mix is empty");
  if (!(total > 0.0)) bad("class_mix weights sum to zero");
  return mix;
}

std::string format_class_mix(const ClassMix& mix) {
  std::string out;
  for (const auto& [cls, w] : mix) {
    if (!out.empty()) out += ' ';
    out += std::string(class_name(cls)) + ':' + text::format_double(w);
  }
  return out;
}

std::string fmt(double v) { return text::format_double(v); }
std::string fmt_bool(bool b) { return b ? "true" : "false"; }

const std::map<std::string, Key, std::less<>>& keys() {
  using C = ScenarioConfig;
  using V = std::string_view;
  static const std::map<std::string, Key, std::less<>> table{
      {"name", {[](C& c, V v) { c.name = word(v); }, [](const C& c) { return c.name; }}},
      {"seed",
       {[](C& c, V v) { c.seed = text::parse_u64(v, "value"); },
        [](const C& c) { return std::to_string(c.seed); }}},

      {"world.n_landmarks",
       {[](C& c, V v) { c.n_landmarks = count_at_least(v, 1); },
        [](const C& c) { return std::to_string(c.n_landmarks); }}},
      {"world.extent",
       {[](C& c, V v) {
          const auto tok = text::split_ws(v);
          if (tok.size() != 3) bad("expected three lengths 'x y z'");
          c.world_extent = Vec3(positive(tok[0]), positive(tok[1]), positive(tok[2]));
        },
        [](const C& c) {
          if (!c.world_extent) return std::string("auto");
          return fmt(c.world_extent->x()) + ' ' + fmt(c.world_extent->y()) + ' ' +
                 fmt(c.world_extent->z());
        }}},
      {"world.margin_m",
       {[](C& c, V v) { c.world_margin_m = positive(v); },
        [](const C& c) { return fmt(c.world_margin_m); }}},
      {"world.height_m",
       {[](C& c, V v) { c.world_height_m = positive(v); },
        [](const C& c) { return fmt(c.world_height_m); }}},
      {"world.class_mix",
       {[](C& c, V v) { c.class_mix = parse_class_mix(v); },
        [](const C& c) { return format_class_mix(c.class_mix); }}},
      {"world.seed",
       {[](C& c, V v) { c.world_seed = text::parse_u64(v, "value"); },
        [](const C& c) { return c.world_seed ? std::to_string(*c.world_seed) : "auto"; }}},
      {"world.clearance_m",
       {[](C& c, V v) { c.clearance_m = non_negative(v); },
        [](const C& c) { return fmt(c.clearance_m); }}},

      {"trajectory.preset",
       {[](C& c, V v) { c.trajectory.preset = parse_preset(v); },
        [](const C& c) { return std::string(preset_name(c.trajectory.preset)); }}},
      {"trajectory.length_m",
       {[](C& c, V v) { c.trajectory.length_m = positive(v); },
        [](const C& c) { return fmt(c.trajectory.length_m); }}},
      {"trajectory.frame_spacing_m",
       {[](C& c, V v) { c.trajectory.frame_spacing_m = positive(v); },
        [](const C& c) { return fmt(c.trajectory.frame_spacing_m); }}},
      {"trajectory.lateral_offset_m",
       {[](C& c, V v) { c.trajectory.lateral_offset_m = as_double(v); },
        [](const C& c) { return fmt(c.trajectory.lateral_offset_m); }}},
      {"trajectory.angular_offset_deg",
       {[](C& c, V v) { c.trajectory.angular_offset_deg = as_double(v); },
        [](const C& c) { return fmt(c.trajectory.angular_offset_deg); }}},

      {"perturbation.descriptor_flip_prob",
       {[](C& c, V v) { c.perturbation.descriptor_flip_prob = probability(v); },
        [](const C& c) { return fmt(c.perturbation.descriptor_flip_prob); }}},
      {"perturbation.landmark_churn_frac",
       {[](C& c, V v) { c.perturbation.landmark_churn_frac = probability(v); },
        [](const C& c) { return fmt(c.perturbation.landmark_churn_frac); }}},
      {"perturbation.dynamic_resample",
       {[](C& c, V v) { c.perturbation.dynamic_resample = as_bool(v); },
        [](const C& c) { return fmt_bool(c.perturbation.dynamic_resample); }}},
      {"perturbation.pixel_noise_sigma",
       {[](C& c, V v) { c.perturbation.pixel_noise_sigma = non_negative(v); },
        [](const C& c) { return fmt(c.perturbation.pixel_noise_sigma); }}},
      {"perturbation.dropout_prob",
       {[](C& c, V v) { c.perturbation.dropout_prob = probability(v); },
        [](const C& c) { return fmt(c.perturbation.dropout_prob); }}},
      {"perturbation.gps_pos_sigma_m",
       {[](C& c, V v) { c.perturbation.gps_pos_sigma_m = non_negative(v); },
        [](const C& c) { return fmt(c.perturbation.gps_pos_sigma_m); }}},
      {"perturbation.gps_yaw_sigma_deg",
       {[](C& c, V v) { c.perturbation.gps_yaw_sigma_deg = non_negative(v); },
        [](const C& c) { return fmt(c.perturbation.gps_yaw_sigma_deg); }}},

      {"rig.focal",
       {[](C& c, V v) { c.rig_focal = positive(v); },
        [](const C& c) { return c.rig_focal ? fmt(*c.rig_focal) : "default"; }}},
      {"rig.theta_max_deg",
       {[](C& c, V v) {
          const double d = positive(v);
          if (d > 180.0) bad("must be <= 180");
          c.rig_theta_max_deg = d;
        },
        [](const C& c) { return c.rig_theta_max_deg ? fmt(*c.rig_theta_max_deg) : "default"; }}},

      {"ba.window_n",
       {[](C& c, V v) { c.ba.window_n = count_at_least(v, 2); },
        [](const C& c) { return std::to_string(c.ba.window_n); }}},
      {"ba.max_iterations",
       {[](C& c, V v) { c.ba.max_iterations = static_cast<int>(count_at_least(v, 1)); },
        [](const C& c) { return std::to_string(c.ba.max_iterations); }}},
      {"ba.initial_damping",
       {[](C& c, V v) { c.ba.initial_damping = positive(v); },
        [](const C& c) { return fmt(c.ba.initial_damping); }}},
      {"ba.huber_delta_px",
       {[](C& c, V v) { c.ba.huber_delta_px = positive(v); },
        [](const C& c) { return fmt(c.ba.huber_delta_px); }}},
      {"ba.convergence_tol",
       {[](C& c, V v) { c.ba.convergence_tol = positive(v); },
        [](const C& c) { return fmt(c.ba.convergence_tol); }}},

      {"keyframe.trans_thresh_m",
       {[](C& c, V v) { c.keyframe.trans_thresh_m = positive(v); },
        [](const C& c) { return fmt(c.keyframe.trans_thresh_m); }}},
      {"keyframe.rot_thresh_deg",
       {[](C& c, V v) { c.keyframe.rot_thresh_deg = positive(v); },
        [](const C& c) { return fmt(c.keyframe.rot_thresh_deg); }}},

      {"match.max_dist",
       {[](C& c, V v) {
          const std::size_t d = count_at_least(v, 0);
          if (d > 256) bad("must be <= 256");
          c.match.max_dist = static_cast<int>(d);
        },
        [](const C& c) { return std::to_string(c.match.max_dist); }}},
      {"match.ratio",
       {[](C& c, V v) {
          const double r = positive(v);
          if (r > 1.0) bad("must lie in (0, 1]");
          c.match.ratio = r;
        },
        [](const C& c) { return fmt(c.match.ratio); }}},
      {"match.mutual_best",
       {[](C& c, V v) { c.match.mutual_best = as_bool(v); },
        [](const C& c) { return fmt_bool(c.match.mutual_best); }}},

      {"replay.min_inliers",
       {[](C& c, V v) { c.replay.min_inliers = count_at_least(v, 4); },
        [](const C& c) { return std::to_string(c.replay.min_inliers); }}},
      {"replay.search_radius_m",
       {[](C& c, V v) { c.replay.search_radius_m = positive(v); },
        [](const C& c) { return fmt(c.replay.search_radius_m); }}},
      {"replay.candidate_keyframes",
       {[](C& c, V v) { c.replay.candidate_keyframes = count_at_least(v, 1); },
        [](const C& c) { return std::to_string(c.replay.candidate_keyframes); }}},
      {"replay.reacquire_after",
       {[](C& c, V v) { c.replay.reacquire_after = count_at_least(v, 1); },
        [](const C& c) { return std::to_string(c.replay.reacquire_after); }}},

      {"scene.label", {[](C& c, V v) { c.scene_label = word(v); }, [](const C& c) { return c.scene_label; }}},
      {"scene.training_id",
       {[](C& c, V v) { c.training_id = word(v); }, [](const C& c) { return c.training_id; }}},
      {"scene.replay_id",
       {[](C& c, V v) { c.replay_id = word(v); }, [](const C& c) { return c.replay_id; }}},
      {"scene.diff_days",
       {[](C& c, V v) { c.diff_days = non_negative(v); }, [](const C& c) { return fmt(c.diff_days); }}},

      {"output.dir", {[](C& c, V v) { c.output_dir = word(v); }, [](const C& c) { return c.output_dir; }}},
  };
  return table;
}

Vec2 footprint_min(const std::vector<Pose>& traj) {
  Vec2 lo = traj.front().translation().head<2>();
  for (const Pose& p : traj) lo = lo.cwiseMin(p.translation().head<2>());
  return lo;
}

Vec2 footprint_max(const std::vector<Pose>& traj) {
  Vec2 hi = traj.front().translation().head<2>();
  for (const Pose& p : traj) hi = hi.cwiseMax(p.translation().head<2>());
  return hi;
}

}  // namespace

void ScenarioConfig::validate() const {
  auto wrap = [](const char* key, auto&& check) {
    try {
      check();
    } catch (const Error& e) {
      throw Error(ErrorCode::kConfig, std::string(key) + ": " + e.what());
    }
  };
  wrap("trajectory", [&] { trajectory.validate(); });
  wrap("perturbation", [&] { perturbation.validate(); });
  wrap("ba", [&] { ba.validate(); });
  wrap("replay", [&] { replay.validate(); });
  wrap("rig", [&] { scenario_rig(*this).validate(); });
  if (n_landmarks == 0) throw Error(ErrorCode::kConfig, "world.n_landmarks: must be >= 1");
}

ScenarioConfig parse_config(std::istream& in, const std::string& source) {
  ScenarioConfig config;
  std::set<std::string, std::less<>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string_view body = text::trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::kConfig, where + "expected 'key = value'");
    }
    const std::string key(text::trim(body.substr(0, eq)));
    const std::string_view value = text::trim(body.substr(eq + 1));
    const auto it = keys().find(key);
    if (it == keys().end()) throw Error(ErrorCode::kConfig, where + key + ": unknown key");
    if (!seen.insert(key).second) throw Error(ErrorCode::kConfig, where + key + ": repeated key");
    try {
      it->second.set(config, value);
    } catch (const Error& e) {
      throw Error(ErrorCode::kConfig, where + key + ": " + e.what());
    }
  }
  try {
    config.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, source + ": " + e.what());
  }
  return config;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config '" + path + "'");
  return parse_config(in, path);
}

void write_config(std::ostream& out, const ScenarioConfig& config) {
  for (const auto& [key, k] : keys()) {
    const std::string v = k.get(config);
    if (v == "auto" || v == "default") continue;
    out << key << " = " << v << '\n';
  }
}

CameraRig scenario_rig(const ScenarioConfig& config) {
  CameraRig base = CameraRig::surround_view();
  if (!config.rig_focal && !config.rig_theta_max_deg) return base;
  std::vector<RigCamera> cams = base.cameras();
  for (RigCamera& cam : cams) {
    if (config.rig_focal) cam.intrinsics.focal = *config.rig_focal;
    if (config.rig_theta_max_deg) cam.intrinsics.theta_max = deg2rad(*config.rig_theta_max_deg);
  }
  return CameraRig(std::move(cams));
}

std::vector<Pose> training_trajectory(const ScenarioConfig& config) {
  TrajectorySpec spec = config.trajectory;
  spec.lateral_offset_m = 0.0;
  spec.angular_offset_deg = 0.0;
  return generate_trajectory(spec);
}

std::vector<Pose> replay_trajectory(const ScenarioConfig& config) {
  return generate_trajectory(config.trajectory);
}

World scenario_world(const ScenarioConfig& config) {
  const std::vector<Pose> traj = training_trajectory(config);
  const Vec2 lo = footprint_min(traj);
  const Vec2 hi = footprint_max(traj);
  WorldSpec spec;
  spec.n_landmarks = config.n_landmarks;
  spec.class_mix = config.class_mix;
  spec.seed = config.world_seed ? *config.world_seed : mix_seed({config.seed, kTagWorld});
  spec.center = 0.5 * (lo + hi);
  spec.extent = config.world_extent
                    ? *config.world_extent
                    : Vec3(hi.x() - lo.x() + 2.0 * config.world_margin_m,
                           hi.y() - lo.y() + 2.0 * config.world_margin_m, config.world_height_m);
  spec.keepout = trajectory_keepout(traj, scenario_rig(config));
  spec.clearance_m = config.clearance_m;
  return generate_world(spec);
}

TrainConfig make_train_config(const ScenarioConfig& config) {
  TrainConfig tc;
  tc.ba = config.ba;
  tc.keyframe = config.keyframe;
  tc.tracking.match = config.match;
  tc.tracking.pose.huber_delta_px = config.ba.huber_delta_px;
  tc.seed = mix_seed({config.seed, kTagPipeline, kTagTrain});
  tc.scenario = config.name;
  return tc;
}

ReplayConfig make_replay_config(const ScenarioConfig& config) {
  ReplayConfig rc = config.replay;
  rc.huber_delta_px = config.ba.huber_delta_px;
  rc.tracking.match = config.match;
  rc.tracking.pose.huber_delta_px = config.ba.huber_delta_px;
  rc.seed = mix_seed({config.seed, kTagPipeline, kTagReplay});
  return rc;
}

Session simulate_training(const ScenarioConfig& config, const World& world) {
  // Training sees the unperturbed world through the same sensor.
  PerturbationSpec sensor = PerturbationSpec::none();
  sensor.pixel_noise_sigma = config.perturbation.pixel_noise_sigma;
  sensor.dropout_prob = config.perturbation.dropout_prob;
  return render_session(world, scenario_rig(config), training_trajectory(config), sensor,
                        mix_seed({config.seed, kTagTrain}), config.training_id);
}

Session simulate_replay(const ScenarioConfig& config, const World& world) {
  const World later = perturb_session(world, config.perturbation, mix_seed({config.seed, kTagPerturb}));
  const std::vector<Pose> traj = replay_trajectory(config);
  Session s = render_session(later, scenario_rig(config), traj, config.perturbation,
                             mix_seed({config.seed, kTagReplay}), config.replay_id);
  s.gps_pose = simulate_gps(traj.front(), config.perturbation, mix_seed({config.seed, kTagGps}));
  return s;
}

SimulatedScene simulate(const ScenarioConfig& config) {
  config.validate();
  SimulatedScene scene;
  scene.world = scenario_world(config);
  scene.training_trajectory = training_trajectory(config);
  scene.training = simulate_training(config, scene.world);
  scene.replay_world =
      perturb_session(scene.world, config.perturbation, mix_seed({config.seed, kTagPerturb}));
  scene.replay_trajectory = replay_trajectory(config);
  scene.replay = simulate_replay(config, scene.world);
  return scene;
}

SceneMeta scene_meta(const ScenarioConfig& config, const Session& replay_session) {
  SceneMeta meta;
  meta.scene = config.scene_label;
  meta.training = config.training_id;
  meta.replay = config.replay_id;
  meta.diff_days = config.diff_days;
  meta.replay_start = replay_session.start_pose;
  return meta;
}

SceneRun run_scene(const ScenarioConfig& config) {
  const SimulatedScene scene = simulate(config);
  SceneRun run;
  run.trained = train(scene.training, scenario_rig(config), make_train_config(config));
  run.results = replay(run.trained.map, scene.replay.frames, scene.replay.gps_pose,
                       make_replay_config(config));
  std::vector<Pose> truth;
  truth.reserve(scene.replay.frames.size());
  for (const auto& f : scene.replay.frames) truth.push_back(f.ground_truth_pose);
  run.report = make_report(scene_meta(config, scene.replay), run.trained.map, run.results, truth);
  return run;
}

std::vector<ScenarioConfig> table1_style_preset(const ScenarioConfig& base) {
  struct Row {
    double flip, churn, offset, days;
  };
  // Time labels only order the scenes; the simulation has no clock.
  const Row rows[6] = {{0.0, 0.0, 0.0, 0.0}, {0.1, 0.0, 0.0, 1.0},  {0.0, 0.3, 0.0, 7.0},
                       {0.0, 0.0, 1.0, 14.0}, {0.1, 0.3, 1.0, 30.0}, {0.2, 0.3, 1.0, 60.0}};
  std::vector<ScenarioConfig> out;
  for (int i = 0; i < 6; ++i) {
    ScenarioConfig c = base;
    c.perturbation.descriptor_flip_prob = rows[i].flip;
    c.perturbation.landmark_churn_frac = rows[i].churn;
    c.trajectory.lateral_offset_m = rows[i].offset;
    c.diff_days = rows[i].days;
    c.scene_label = "Scene" + std::to_string(i + 1);
    c.training_id = "T1";
    c.replay_id = "R" + std::to_string(i + 1);
    c.output_dir = base.output_dir + "/scene" + std::to_string(i + 1);
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<ScenarioConfig> expand_preset(const std::string& name, const ScenarioConfig& base) {
  if (name == "table1-style") return table1_style_preset(base);
  throw Error(ErrorCode::kConfig, "--preset: unknown preset '" + name + "'");
}

}  // namespace ttpark
