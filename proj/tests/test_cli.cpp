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
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "support.hpp"
#include "ttpark/map_store.hpp"
#include "ttpark/text_format.hpp"

namespace ttpark {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Outcome o;
  o.code = cli::run(args, out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / "ttpark_cli_test" / info->name();
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  fs::path write_config(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }

  // Simulate the given config into `sub` and return that directory.
  fs::path simulate(const std::string& config_text, const std::string& sub) {
    const fs::path cfg = write_config(sub + ".cfg", config_text);
    const Outcome o = run_cli({"simulate", "--config", cfg.string(), "--out", (dir_ / sub).string()});
    EXPECT_EQ(o.code, 0) << o.err;
    return dir_ / sub;
  }

  fs::path dir_;
};

const char* kNoiseless =
    "# sensor and GPS noise off\n"
    "perturbation.gps_pos_sigma_m = 0\n"
    "perturbation.gps_yaw_sigma_deg = 0\n";

TEST_F(CliTest, SimulateMinimalConfigWritesEveryFile) {
  const fs::path cfg = write_config("min.cfg", "name = tiny\n");
  const Outcome o = run_cli({"simulate", "--config", cfg.string(), "--out", (dir_ / "sim").string()});
  ASSERT_EQ(o.code, 0) << o.err;
  for (const char* f : {"world.txt", "train_session.txt", "replay_session.txt", "scenario.cfg"}) {
    EXPECT_TRUE(fs::exists(dir_ / "sim" / f)) << f;
    EXPECT_NE(o.out.find((dir_ / "sim" / f).string()), std::string::npos) << f;
  }
  EXPECT_TRUE(o.err.empty());
}

TEST_F(CliTest, NegativeFrameSpacingNamesTheKey) {
  const fs::path cfg = write_config("bad.cfg", "name = x\ntrajectory.frame_spacing_m = -1\n");
  const Outcome o = run_cli({"simulate", "--config", cfg.string(), "--out", (dir_ / "sim").string()});
  EXPECT_EQ(o.code, cli::kExitConfig);
  EXPECT_EQ(o.err.rfind("error CONFIG: ", 0), 0u) << o.err;
  EXPECT_NE(o.err.find("trajectory.frame_spacing_m"), std::string::npos) << o.err;
  EXPECT_NE(o.err.find(":2:"), std::string::npos) << o.err;
  EXPECT_EQ(line_count(o.err), 1u);
  EXPECT_FALSE(fs::exists(dir_ / "sim" / "world.txt"));
}

TEST_F(CliTest, UnknownKeysAndBadFlagsAreConfigErrors) {
  const fs::path cfg = write_config("bad.cfg", "perturbation.flip = 0.1\n");
  Outcome o = run_cli({"simulate", "--config", cfg.string()});
  EXPECT_EQ(o.code, cli::kExitConfig);
  EXPECT_NE(o.err.find("perturbation.flip"), std::string::npos) << o.err;
  o = run_cli({"simulate", "--frobnicate"});
  EXPECT_EQ(o.code, cli::kExitConfig);
  EXPECT_EQ(line_count(o.err), 1u);
  o = run_cli({});
  EXPECT_EQ(o.code, cli::kExitConfig);
  o = run_cli({"simulate", "--config", (dir_ / "missing.cfg").string()});
  EXPECT_EQ(o.code, cli::kExitIo);
  o = run_cli({"--help"});
  EXPECT_EQ(o.code, cli::kExitOk);
  EXPECT_NE(o.out.find("simulate"), std::string::npos);
}

TEST_F(CliTest, SimulateIsByteReproducible) {
  const fs::path a = simulate("name = twice\n", "a");
  const fs::path b = simulate("name = twice\n", "b");
  for (const char* f : {"world.txt", "train_session.txt", "replay_session.txt"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
}

TEST_F(CliTest, SeedFlagOverridesTheConfig) {
  const fs::path cfg = write_config("s.cfg", "seed = 5\n");
  ASSERT_EQ(run_cli({"simulate", "--config", cfg.string(), "--out", (dir_ / "a").string()}).code, 0);
  ASSERT_EQ(run_cli({"simulate", "--config", cfg.string(), "--seed", "6", "--out", (dir_ / "b").string()}).code, 0);
  EXPECT_NE(slurp(dir_ / "a" / "world.txt"), slurp(dir_ / "b" / "world.txt"));
  EXPECT_NE(slurp(dir_ / "b" / "scenario.cfg").find("seed = 6"), std::string::npos);
}

TEST_F(CliTest, TrainNoiselessSessionReportsTinyRmse) {
  const fs::path sim = simulate(kNoiseless, "sim");
  const Outcome o = run_cli({"train", "--session", (sim / "train_session.txt").string(), "--out", sim.string()});
  ASSERT_EQ(o.code, 0) << o.err;
  const auto pos = o.out.find("rmse_px ");
  ASSERT_NE(pos, std::string::npos) << o.out;
  const double rmse = std::stod(o.out.substr(pos + 8));
  EXPECT_LT(rmse, 1e-6);
  EXPECT_NE(o.out.find("keyframes "), std::string::npos);
  for (const char* f : {"map.ttpm", "keyframes.txt", "points.txt"}) EXPECT_TRUE(fs::exists(sim / f)) << f;
  EXPECT_NE(o.out.find("(" + std::to_string(fs::file_size(sim / "map.ttpm")) + " bytes)"), std::string::npos);
}

TEST_F(CliTest, TrainEmptySessionFails) {
  const fs::path empty = dir_ / "empty.txt";
  std::ofstream(empty).close();
  const Outcome o = run_cli({"train", "--session", empty.string(), "--out", (dir_ / "o").string()});
  EXPECT_EQ(o.code, cli::kExitPipeline);
  EXPECT_EQ(o.err.rfind("error BOOTSTRAP: ", 0), 0u) << o.err;
}

TEST_F(CliTest, TrainUnwritableMapPathNamesThePath) {
  const fs::path sim = simulate(kNoiseless, "sim");
  const std::string bad = "/nonexistent-ttpark-dir/sub/map.ttpm";
  const Outcome o = run_cli({"train", "--session", (sim / "train_session.txt").string(), "--out", sim.string(),
                             "--map", bad});
  EXPECT_EQ(o.code, cli::kExitIo);
  EXPECT_NE(o.err.find(bad), std::string::npos) << o.err;
}

class TrainedCliTest : public CliTest {
 protected:
  void SetUp() override {
    CliTest::SetUp();
    sim_ = simulate(kNoiseless, "sim");
    const Outcome o = run_cli({"train", "--session", (sim_ / "train_session.txt").string(), "--out", sim_.string()});
    ASSERT_EQ(o.code, 0) << o.err;
  }

  fs::path sim_;
};

TEST_F(TrainedCliTest, SelfReplayPrintsFullFraction) {
  const Outcome o = run_cli({"replay", "--map", (sim_ / "map.ttpm").string(), "--session",
                             (sim_ / "train_session.txt").string(), "--out", sim_.string()});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("fraction 1.000"), std::string::npos) << o.out;
  const Outcome e = run_cli({"eval", "--results", (sim_ / "results.txt").string(), "--session",
                             (sim_ / "train_session.txt").string(), "--map", (sim_ / "map.ttpm").string(),
                             "--out", sim_.string()});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NE(e.out.find("100.00"), std::string::npos) << e.out;
  const std::string csv = slurp(sim_ / "report.csv");
  EXPECT_EQ(line_count(csv), 2u);
  EXPECT_EQ(csv.substr(csv.size() - 8), ",100.00\n");
}

TEST_F(TrainedCliTest, CorruptMapIsRejectedWithAnOffset) {
  std::string bytes = slurp(sim_ / "map.ttpm");
  bytes[bytes.size() / 2] ^= 0x10;
  const fs::path bad = dir_ / "bad.ttpm";
  std::ofstream(bad, std::ios::binary) << bytes;
  const Outcome o = run_cli({"replay", "--map", bad.string(), "--session", (sim_ / "train_session.txt").string(),
                             "--out", sim_.string()});
  EXPECT_EQ(o.code, cli::kExitIo);
  EXPECT_EQ(o.err.rfind("error CORRUPTION: ", 0), 0u) << o.err;
  EXPECT_NE(o.err.find("byte offset"), std::string::npos) << o.err;
}

TEST_F(TrainedCliTest, PerturbedReplayWritesOneRowPerFrame) {
  const std::string cfg_text = std::string(kNoiseless) + "perturbation.descriptor_flip_prob = 0.2\n";
  const fs::path cfg = write_config("flip.cfg", cfg_text);
  ASSERT_EQ(run_cli({"simulate", "--config", cfg.string(), "--out", (dir_ / "flip").string()}).code, 0);
  const Outcome o = run_cli({"replay", "--config", cfg.string(), "--map", (sim_ / "map.ttpm").string(), "--session",
                             (dir_ / "flip" / "replay_session.txt").string(), "--out", (dir_ / "flip").string()});
  ASSERT_EQ(o.code, 0) << o.err;
  const auto pos = o.out.find("fraction ");
  ASSERT_NE(pos, std::string::npos);
  const double fraction = std::stod(o.out.substr(pos + 9));
  EXPECT_GT(fraction, 0.0);
  EXPECT_LT(fraction, 1.0);
  std::ifstream sf(dir_ / "flip" / "replay_session.txt");
  const Session s = read_session_text(sf, 4);
  EXPECT_EQ(line_count(slurp(dir_ / "flip" / "results.txt")), s.frames.size());
}

TEST_F(TrainedCliTest, DumpMatchesTheBinaryMap) {
  const Outcome o = run_cli({"dump", "--map", (sim_ / "map.ttpm").string()});
  ASSERT_EQ(o.code, 0) << o.err;
  std::istringstream in(o.out);
  EXPECT_EQ(read_map_text(in), load_map(sim_ / "map.ttpm"));
  const Outcome f = run_cli({"dump", "--map", (sim_ / "map.ttpm").string(), "--out", (dir_ / "map.txt").string()});
  ASSERT_EQ(f.code, 0) << f.err;
  EXPECT_EQ(slurp(dir_ / "map.txt"), o.out);
}

// Five frames, four localized on the truth and one 0.3 m off.
TEST_F(CliTest, EvalHandWrittenResults) {
  Session s;
  s.name = "hand";
  std::ostringstream results;
  for (std::size_t i = 0; i < 5; ++i) {
    FrameObservations f;
    f.frame_index = i;
    f.ground_truth_pose = Pose::from_yaw(0.1 * static_cast<double>(i), Vec3(static_cast<double>(i), 0, 0));
    f.per_camera.resize(4);
    s.frames.push_back(f);
    Pose est = f.ground_truth_pose;
    if (i == 3) est = compose(est, Pose::from_yaw(0, Vec3(0.3, 0, 0)));
    results << i << " LOC " << text::format_pose(est) << " 40 0.5\n";
  }
  {
    std::ofstream sf(dir_ / "session.txt");
    write_session_text(sf, s);
  }
  std::ofstream(dir_ / "results.txt") << results.str();
  const Outcome o = run_cli({"eval", "--results", (dir_ / "results.txt").string(), "--session",
                             (dir_ / "session.txt").string(), "--out", dir_.string()});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("80.00"), std::string::npos) << o.out;
  EXPECT_NE(slurp(dir_ / "report.csv").find(",80.00\n"), std::string::npos);

  // One results row short of the session.
  std::string four = results.str();
  four.erase(four.rfind('\n', four.size() - 2) + 1);
  std::ofstream(dir_ / "short.txt") << four;
  const Outcome bad = run_cli({"eval", "--results", (dir_ / "short.txt").string(), "--session",
                               (dir_ / "session.txt").string(), "--out", dir_.string()});
  EXPECT_EQ(bad.code, cli::kExitPipeline);
  EXPECT_EQ(bad.err.rfind("error ALIGNMENT: ", 0), 0u) << bad.err;
}

TEST_F(CliTest, EvalPresetWritesSixRows) {
  const Outcome o = run_cli({"eval", "--preset", "table1-style", "--out", dir_.string()});
  ASSERT_EQ(o.code, 0) << o.err;
  const std::string csv = slurp(dir_ / "report.csv");
  EXPECT_EQ(line_count(csv), 7u);
  EXPECT_EQ(csv.rfind(kReportCsvHeader, 0), 0u);
  for (int i = 1; i <= 6; ++i) EXPECT_NE(csv.find("Scene" + std::to_string(i) + ",T1,R"), std::string::npos);
  EXPECT_EQ(line_count(o.out), 8u);  // header, rule, six rows
}

TEST_F(CliTest, EndToEndIsByteReproducible) {
  const std::string cfg_text = "perturbation.pixel_noise_sigma = 0.5\nperturbation.descriptor_flip_prob = 0.1\n";
  for (const char* sub : {"a", "b"}) {
    const fs::path d = simulate(cfg_text, sub);
    const std::string cfg = (dir_ / (std::string(sub) + ".cfg")).string();
    ASSERT_EQ(run_cli({"train", "--config", cfg, "--session", (d / "train_session.txt").string(), "--out", d.string()}).code, 0);
    ASSERT_EQ(run_cli({"replay", "--config", cfg, "--map", (d / "map.ttpm").string(), "--session",
                       (d / "replay_session.txt").string(), "--out", d.string()})
                  .code,
              0);
    ASSERT_EQ(run_cli({"eval", "--config", cfg, "--results", (d / "results.txt").string(), "--session",
                       (d / "replay_session.txt").string(), "--map", (d / "map.ttpm").string(), "--out", d.string()})
                  .code,
              0);
  }
  for (const char* f : {"world.txt", "train_session.txt", "replay_session.txt", "map.ttpm", "keyframes.txt",
                        "points.txt", "results.txt", "report.csv", "report.txt"}) {
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
}

}  // namespace
}  // namespace ttpark
