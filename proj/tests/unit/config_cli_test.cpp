#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "cli.hpp"
#include "ivrl/config.hpp"
#include "ivrl/errors.hpp"
#include "test_support.hpp"

using namespace ivrl;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// A config small enough that a 3x3x2 sweep finishes in seconds.
std::string tiny_config(const fs::path& out) {
  return R"({
    "scenario": { "grid_width": 8, "grid_height": 6, "episode_limit": 20, "spawn_depth": 2, "spawn_height": 3,
                  "allies": { "ranged": 1, "melee": 1 }, "enemies": { "ranged": 1, "melee": 1 } },
    "learner": { "agent_hidden": [8], "mixer_embed": 4, "qtran_hidden": [8], "epsilon_horizon": 200 },
    "run": { "total_env_steps": 120, "eval_period": 60, "eval_episodes": 2, "buffer_capacity": 50,
             "output_dir": ")" + out.generic_string() + R"(" }
  })";
}

std::vector<fs::path> files_matching(const fs::path& dir, const std::string& prefix) {
  std::vector<fs::path> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().filename().string().rfind(prefix, 0) == 0) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

class EnvGuard {
 public:
  explicit EnvGuard(const char* value) {
    if (value) ::setenv(cli::kOutputDirEnv, value, 1);
    else ::unsetenv(cli::kOutputDirEnv);
  }
  ~EnvGuard() { ::unsetenv(cli::kOutputDirEnv); }
};

}  // namespace

TEST(Config, EmptyObjectGivesDefaults) {
  const ExperimentConfig c = parse_experiment_config("{}");
  EXPECT_EQ(c.total_env_steps, 50000u);
  EXPECT_EQ(c.learner.algorithm, Algorithm::QMIX);
  const RunConfig r = c.to_run_config();
  EXPECT_EQ(r.profile.weights(), preset_profile(Algorithm::QMIX, Personality::Neutral).weights());
}

TEST(Config, ShippedConfigsParse) {
  for (const char* name : {"default.json", "smoke.json"})
    EXPECT_NO_THROW(load_experiment_config(fs::path(IVRL_CONFIG_DIR) / name).to_run_config()) << name;
  const ExperimentConfig d = load_experiment_config(fs::path(IVRL_CONFIG_DIR) / "default.json");
  EXPECT_EQ(d.to_run_config().learner.agent_hidden, parse_experiment_config("{}").learner.agent_hidden);
}

TEST(Config, PresetFollowsLearnerUnlessNamed) {
  const auto c = parse_experiment_config(R"({"critic":{"personality":"Coward"},"learner":{"algorithm":"QTRAN"}})");
  EXPECT_EQ(c.to_run_config().profile.weights(), preset_profile(Algorithm::QTRAN, Personality::Coward).weights());
  const auto d = parse_experiment_config(
      R"({"critic":{"personality":"Coward","preset_algorithm":"IQL"},"learner":{"algorithm":"QTRAN"}})");
  EXPECT_EQ(d.to_run_config().profile.weights(), preset_profile(Algorithm::IQL, Personality::Coward).weights());
}

TEST(Config, CustomWeights) {
  const auto c = parse_experiment_config(R"({"critic":{"weights":[2,-0.5,-0.5]}})");
  const auto p = c.to_run_config().profile;
  EXPECT_EQ(p.weights(), (std::array<double, 3>{2, -0.5, -0.5}));
}

TEST(Config, ErrorsNameTheKey) {
  auto message = [](const std::string& text) -> std::string {
    try {
      parse_experiment_config(text).to_run_config();
    } catch (const ConfigError& e) {
      return e.what();
    }
    return "";
  };
  EXPECT_NE(message(R"({"learner":{"gama":0.9}})").find("learner.gama"), std::string::npos);
  EXPECT_NE(message(R"({"run":{"seed":"one"}})").find("run.seed"), std::string::npos);
  EXPECT_NE(message(R"({"critic":{"weights":[1,2]}})").find("critic.weights"), std::string::npos);
  EXPECT_NE(message(R"({"learner":{"gamma":1.5}})").find("gamma"), std::string::npos);
  EXPECT_NE(message(R"({"run":{"eval_episodes":0}})").find("eval_episodes"), std::string::npos);
  EXPECT_NE(message("{not json").size(), 0u);
}

TEST(Config, MissingFileIsIoError) { EXPECT_THROW(load_experiment_config("/nonexistent/cfg.json"), IoError); }

TEST(Cli, ValidationExitCodes) {
  const auto dir = ivrl::testing::scratch_dir("cli_codes");
  const CliResult missing = run({"train", "--config", (dir / "missing.json").string()});
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.err.find("missing.json"), std::string::npos);

  ivrl::testing::write_file(dir / "bad.json", R"({"run":{"eval_episodes":0}})");
  EXPECT_EQ(run({"train", "--config", (dir / "bad.json").string()}).code, 1);

  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, TrainWritesSeededFiles) {
  const auto dir = ivrl::testing::scratch_dir("cli_train");
  ivrl::testing::write_file(dir / "cfg.json", tiny_config(dir / "cfg_out"));
  EnvGuard env(nullptr);
  const CliResult r = run({"train", "--config", (dir / "cfg.json").string(), "--seed", "9"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "cfg_out" / "metrics_QMIX_Neutral_seed9.csv"));
  EXPECT_TRUE(fs::exists(dir / "cfg_out" / "checkpoint_QMIX_Neutral_seed9.ckpt"));
}

TEST(Cli, OutputDirPrecedence) {
  const auto dir = ivrl::testing::scratch_dir("cli_precedence");
  ivrl::testing::write_file(dir / "cfg.json", tiny_config(dir / "from_config"));
  const std::string cfg = (dir / "cfg.json").string();
  {
    EnvGuard env((dir / "from_env").c_str());
    ASSERT_EQ(run({"train", "--config", cfg}).code, 0);
    ASSERT_EQ(run({"train", "--config", cfg, "--out", (dir / "from_flag").string()}).code, 0);
  }
  EXPECT_FALSE(fs::exists(dir / "from_config"));
  EXPECT_EQ(files_matching(dir / "from_env", "metrics_").size(), 1u);
  EXPECT_EQ(files_matching(dir / "from_flag", "metrics_").size(), 1u);
}

TEST(Cli, EvalReproducesAndValidates) {
  const auto dir = ivrl::testing::scratch_dir("cli_eval");
  ivrl::testing::write_file(dir / "cfg.json", tiny_config(dir / "out"));
  const std::string cfg = (dir / "cfg.json").string();
  EnvGuard env(nullptr);
  ASSERT_EQ(run({"train", "--config", cfg}).code, 0);
  const std::string ckpt = (dir / "out" / "checkpoint_QMIX_Neutral_seed1.ckpt").string();
  const CliResult a = run({"eval", "--config", cfg, "--checkpoint", ckpt, "--episodes", "3"});
  const CliResult b = run({"eval", "--config", cfg, "--checkpoint", ckpt, "--episodes", "3"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(run({"eval", "--config", cfg, "--checkpoint", ckpt, "--episodes", "0"}).code, 1);
  EXPECT_EQ(run({"eval", "--config", cfg, "--checkpoint", (dir / "none.ckpt").string()}).code, 1);

  // A checkpoint trained on a different network width is rejected.
  ivrl::testing::write_file(dir / "wide.json", R"({"learner":{"agent_hidden":[32]}})");
  EXPECT_EQ(run({"eval", "--config", (dir / "wide.json").string(), "--checkpoint", ckpt}).code, 1);

  ivrl::testing::write_file(dir / "junk.ckpt", "not a checkpoint");
  EXPECT_EQ(run({"eval", "--config", cfg, "--checkpoint", (dir / "junk.ckpt").string()}).code, 1);
}

TEST(Cli, SweepAndPlot) {
  const auto dir = ivrl::testing::scratch_dir("cli_sweep");
  ivrl::testing::write_file(dir / "cfg.json", tiny_config(dir / "unused"));
  const std::string cfg = (dir / "cfg.json").string();
  EnvGuard env(nullptr);
  const CliResult r = run({"sweep", "--config", cfg, "--seeds", "1,2", "--out", (dir / "a").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csvs = files_matching(dir / "a", "metrics_");
  EXPECT_EQ(csvs.size(), 18u);

  ASSERT_EQ(run({"sweep", "--config", cfg, "--seeds", "1,2", "--out", (dir / "b").string()}).code, 0);
  for (const auto& p : csvs) EXPECT_EQ(ivrl::testing::read_file(p), ivrl::testing::read_file(dir / "b" / p.filename())) << p;

  const CliResult plot =
      run({"plot", "--in", (dir / "a").string(), "--metric", "battle_won_mean", "--out", (dir / "charts").string()});
  ASSERT_EQ(plot.code, 0) << plot.err;
  const auto charts = files_matching(dir / "charts", "battle_won_mean_");
  ASSERT_EQ(charts.size(), 3u);
  for (const auto& c : charts) {
    const std::string svg = ivrl::testing::read_file(c);
    std::size_t lines = 0;
    for (std::size_t at = svg.find("<polyline"); at != std::string::npos; at = svg.find("<polyline", at + 1)) ++lines;
    EXPECT_EQ(lines, 3u) << c;
  }

  EXPECT_EQ(run({"plot", "--in", (dir / "a").string(), "--metric", "bogus", "--out", (dir / "c").string()}).code, 1);
  fs::create_directories(dir / "empty");
  EXPECT_EQ(run({"plot", "--in", (dir / "empty").string(), "--metric", "battle_won_mean", "--out",
                 (dir / "c").string()})
                .code,
            1);
  EXPECT_EQ(run({"sweep", "--config", cfg, "--personalities", "Brave"}).code, 1);
}
