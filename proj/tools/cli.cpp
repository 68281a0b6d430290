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
#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "ttpark/errors.hpp"
#include "ttpark/map_store.hpp"
#include "ttpark/scenario.hpp"
#include "ttpark/text_format.hpp"

namespace ttpark::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string preset;
  std::string session;
  std::string map;
  std::string results;
};

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig: return kExitConfig;
    case ErrorCode::kIo:
    case ErrorCode::kNotAMap:
    case ErrorCode::kVersion:
    case ErrorCode::kCorruption: return kExitIo;
    default: return kExitPipeline;
  }
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

ScenarioConfig resolve_config(const Options& opt) {
  ScenarioConfig cfg = opt.config.empty() ? ScenarioConfig{} : load_config(opt.config);
  if (opt.seed) cfg.seed = *opt.seed;
  if (!opt.out.empty()) cfg.output_dir = opt.out;
  cfg.validate();
  return cfg;
}

std::vector<ScenarioConfig> resolve_scenes(const Options& opt) {
  const ScenarioConfig base = resolve_config(opt);
  if (opt.preset.empty()) return {base};
  return expand_preset(opt.preset, base);
}

fs::path ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw Error(ErrorCode::kIo, "cannot create output directory '" + dir.string() + "'");
  }
  return dir;
}

template <typename Writer>
void write_file(const fs::path& path, Writer&& writer) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  writer(f);
  f.flush();
  if (!f) throw Error(ErrorCode::kIo, "write failed for '" + path.string() + "'");
}

std::ifstream open_in(const std::string& path, const char* what) {
  if (path.empty()) throw Error(ErrorCode::kConfig, std::string("--") + what + " is required");
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot open " + std::string(what) + " '" + path + "'");
  return f;
}

Session read_session_file(const std::string& path, std::size_t n_cameras) {
  std::ifstream f = open_in(path, "session");
  try {
    return read_session_text(f, n_cameras);
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.what());
  }
}

std::vector<Pose> truth_of(const Session& s) {
  std::vector<Pose> truth;
  truth.reserve(s.frames.size());
  for (const auto& f : s.frames) truth.push_back(f.ground_truth_pose);
  return truth;
}

int cmd_simulate(const Options& opt, std::ostream& out) {
  for (const ScenarioConfig& cfg : resolve_scenes(opt)) {
    const fs::path dir = ensure_dir(cfg.output_dir);
    const SimulatedScene scene = simulate(cfg);
    const fs::path world = dir / "world.txt";
    const fs::path train = dir / "train_session.txt";
    const fs::path rep = dir / "replay_session.txt";
    const fs::path conf = dir / "scenario.cfg";
    write_file(world, [&](std::ostream& f) { write_world_text(f, scene.world, scene.training_trajectory); });
    write_file(train, [&](std::ostream& f) { write_session_text(f, scene.training); });
    write_file(rep, [&](std::ostream& f) { write_session_text(f, scene.replay); });
    write_file(conf, [&](std::ostream& f) { write_config(f, cfg); });
    out << world.string() << '\n' << train.string() << '\n' << rep.string() << '\n' << conf.string() << '\n';
  }
  return kExitOk;
}

int cmd_train(const Options& opt, std::ostream& out) {
  const ScenarioConfig cfg = resolve_config(opt);
  const CameraRig rig = scenario_rig(cfg);
  const Session session = read_session_file(opt.session, rig.size());
  const TrainResult r = train(session, rig, make_train_config(cfg));
  const fs::path dir = ensure_dir(cfg.output_dir);
  const fs::path map_path = opt.map.empty() ? dir / "map.ttpm" : fs::path(opt.map);
  const std::size_t bytes = save_map(r.map, map_path);
  write_file(dir / "keyframes.txt", [&](std::ostream& f) { write_diagnostics(f, r.diagnostics); });
  write_file(dir / "points.txt", [&](std::ostream& f) { write_point_cloud(f, r.map); });
  out << "map " << map_path.string() << " (" << bytes << " bytes)\n"
      << "keyframes " << r.map.keyframes.size() << " landmarks " << r.map.landmarks.size()
      << " rmse_px " << text::format_double(r.global_ba.final_rmse_px) << '\n';
  return kExitOk;
}

int cmd_replay(const Options& opt, std::ostream& out) {
  const ScenarioConfig cfg = resolve_config(opt);
  if (opt.map.empty()) throw Error(ErrorCode::kConfig, "--map is required");
  const TrainedMap map = load_map(opt.map);
  const Session session = read_session_file(opt.session, map.rig.size());
  const auto results = replay(map, session.frames, session.gps_pose, make_replay_config(cfg));
  const fs::path dir = ensure_dir(cfg.output_dir);
  const fs::path path = dir / "results.txt";
  write_file(path, [&](std::ostream& f) { write_results_text(f, results); });
  std::size_t loc = 0;
  for (const auto& r : results) loc += r.status == RelocStatus::kLocalized ? 1 : 0;
  const double frac = results.empty() ? 0.0 : static_cast<double>(loc) / static_cast<double>(results.size());
  out << "results " << path.string() << '\n'
      << "localized " << loc << '/' << results.size() << " fraction " << text::format_fixed(frac, 3) << '\n';
  return kExitOk;
}

void emit_reports(const fs::path& dir, const std::vector<EvalReport>& reports, std::ostream& out) {
  write_file(dir / "report.csv", [&](std::ostream& f) { write_report_csv(f, reports); });
  write_file(dir / "report.txt", [&](std::ostream& f) { write_report_table(f, reports); });
  write_report_table(out, reports);
}

int cmd_eval(const Options& opt, std::ostream& out) {
  if (!opt.preset.empty()) {
    std::vector<EvalReport> reports;
    const auto scenes = resolve_scenes(opt);
    for (const ScenarioConfig& cfg : scenes) reports.push_back(run_scene(cfg).report);
    emit_reports(ensure_dir(resolve_config(opt).output_dir), reports, out);
    return kExitOk;
  }
  const ScenarioConfig cfg = resolve_config(opt);
  std::ifstream rf = open_in(opt.results, "results");
  std::vector<RelocResult> results;
  try {
    results = read_results_text(rf);
  } catch (const Error& e) {
    throw Error(e.code(), opt.results + ": " + e.what());
  }
  std::optional<TrainedMap> map;
  if (!opt.map.empty()) map = load_map(opt.map);
  const Session session = read_session_file(opt.session, map ? map->rig.size() : 4);
  const std::vector<Pose> truth = truth_of(session);

  EvalReport report;
  if (map) {
    report = make_report(scene_meta(cfg, session), *map, results, truth);
  } else {
    // Without a map only the rate is defined.
    const SceneMeta meta = scene_meta(cfg, session);
    report.scene = meta.scene;
    report.training = meta.training;
    report.replay = meta.replay;
    report.time_difference_days = meta.diff_days;
    report.start_distance_m = std::numeric_limits<double>::quiet_NaN();
    report.avg_position_offset_m = std::numeric_limits<double>::quiet_NaN();
    report.avg_angle_offset_deg = std::numeric_limits<double>::quiet_NaN();
    report.relocalization_rate_percent = relocalization_rate(results, truth);
  }
  emit_reports(ensure_dir(cfg.output_dir), {report}, out);
  return kExitOk;
}

int cmd_dump(const Options& opt, std::ostream& out) {
  if (opt.map.empty()) throw Error(ErrorCode::kConfig, "--map is required");
  const TrainedMap map = load_map(opt.map);
  if (opt.out.empty()) {
    write_map_text(out, map);
  } else {
    write_file(opt.out, [&](std::ostream& f) { write_map_text(f, map); });
    out << opt.out << '\n';
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ttpark: trained parking with a surround-view visual SLAM", "ttpark"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "scenario config file");
    sub->add_option("--seed", opt.seed, "overrides the config seed");
    sub->add_option("--out", opt.out, "output directory");
  };
  CLI::App* sim = app.add_subcommand("simulate", "write world and session files");
  add_common(sim);
  sim->add_option("--preset", opt.preset, "scene preset (table1-style)");
  CLI::App* trn = app.add_subcommand("train", "build a map from a training session");
  add_common(trn);
  trn->add_option("--session", opt.session, "training session file")->required();
  trn->add_option("--map", opt.map, "map output path (default OUT/map.ttpm)");
  CLI::App* rep = app.add_subcommand("replay", "relocalize a session against a map");
  add_common(rep);
  rep->add_option("--map", opt.map, "map file")->required();
  rep->add_option("--session", opt.session, "replay session file")->required();
  CLI::App* evl = app.add_subcommand("eval", "score replay results");
  add_common(evl);
  evl->add_option("--preset", opt.preset, "run a scene preset end to end (table1-style)");
  evl->add_option("--results", opt.results, "replay results file");
  evl->add_option("--session", opt.session, "replay session file with ground truth");
  evl->add_option("--map", opt.map, "map file, needed for distance and offset columns");
  CLI::App* dmp = app.add_subcommand("dump", "print a map as text");
  dmp->add_option("--map", opt.map, "map file")->required();
  dmp->add_option("--out", opt.out, "write to this file instead of stdout");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error CONFIG: " << one_line(e.what()) << '\n';
    return kExitConfig;
  }

  try {
    if (sim->parsed()) return cmd_simulate(opt, out);
    if (trn->parsed()) return cmd_train(opt, out);
    if (rep->parsed()) return cmd_replay(opt, out);
    if (evl->parsed()) return cmd_eval(opt, out);
    return cmd_dump(opt, out);
  } catch (const Error& e) {
    err << "error " << error_code_name(e.code()) << ": " << one_line(e.what()) << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error INTERNAL: " << one_line(e.what()) << '\n';
    return kExitPipeline;
  }
}

}  // namespace ttpark::cli
