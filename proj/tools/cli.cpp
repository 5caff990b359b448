#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <filesystem>
#include <map>
#include <regex>
#include <sstream>

#include "CLI11.hpp"

#include "ivrl/checkpoint.hpp"
#include "ivrl/config.hpp"
#include "ivrl/errors.hpp"
#include "ivrl/harness.hpp"
#include "ivrl/metrics_io.hpp"

namespace ivrl::cli {

namespace {

namespace fs = std::filesystem;

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// Unreadable inputs are validation failures (exit 1); I/O errors while
// writing results stay runtime failures (exit 2).
ExperimentConfig read_config(const std::string& path) {
  try {
    return load_experiment_config(path);
  } catch (const IoError& e) {
    throw InvalidInput(e.what());
  }
}

Checkpoint read_checkpoint(const std::string& path) {
  try {
    return load_checkpoint(path);
  } catch (const IoError& e) {
    throw InvalidInput(e.what());
  }
}

// Precedence: flag > environment variable > config file.
void apply_output_override(ExperimentConfig& cfg, const std::string& out_flag) {
  if (!out_flag.empty()) {
    cfg.output_dir = out_flag;
  } else if (const char* env = std::getenv(kOutputDirEnv)) {
    if (*env) cfg.output_dir = env;
  }
}

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct EvalArgs {
  std::string config;
  std::string checkpoint;
  long long episodes = 16;
  std::optional<std::uint64_t> seed;
  std::string trace;
};

struct SweepArgs {
  std::string config;
  std::string personalities = "Coward,Neutral,Reckless";
  std::string algorithms = "QMIX,IQL,QTRAN";
  std::string seeds = "1";
  std::string out;
};

struct PlotArgs {
  std::string in;
  std::string metric;
  std::string out;
  std::size_t smooth = 1;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  ExperimentConfig cfg = read_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  apply_output_override(cfg, a.out);
  const RunConfig run = cfg.to_run_config();
  const RunSummary s = train(run);
  out << s.metrics_path.string() << '\n' << s.checkpoint_path.string() << '\n';
  return kOk;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (a.episodes < 1) throw InvalidInput("--episodes must be at least 1");
  ExperimentConfig cfg = read_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  const RunConfig run = cfg.to_run_config();
  const Checkpoint ckpt = read_checkpoint(a.checkpoint);
  const BattleEnv env(run.scenario);
  const LearnerShape shape = learner_shape(env);
  if (ckpt.params.agent.input_width() != shape.input_width || ckpt.params.agent.output_width() != shape.n_actions)
    throw InvalidInput("checkpoint agent network is " + std::to_string(ckpt.params.agent.input_width()) + " -> " +
                       std::to_string(ckpt.params.agent.output_width()) + " but the scenario needs " +
                       std::to_string(shape.input_width) + " -> " + std::to_string(shape.n_actions));
  const std::vector<InnateValueProfile> profiles(shape.n_agents, run.profile);
  const RngStream rng = RngStream(run.seed).derive("cli-eval");
  if (!a.trace.empty()) {
    std::ofstream trace(a.trace);
    if (!trace) throw IoError("cannot open trace file " + a.trace);
    RngStream episode_rng = rng.derive(std::uint64_t{0});
    rollout_episode(env, ckpt.params.agent, profiles, 0.0, episode_rng, &trace);
  }
  const MetricsRecord rec = evaluate(env, ckpt.params.agent, profiles, static_cast<std::size_t>(a.episodes), rng,
                                     ckpt.step, run.eval_workers);
  out << format_csv_row(rec) << '\n';
  return kOk;
}

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  ExperimentConfig base = read_config(a.config);
  apply_output_override(base, a.out);
  std::vector<Personality> personalities;
  for (const auto& s : split_list(a.personalities)) {
    auto p = parse_personality(s);
    if (!p || *p == Personality::Custom) throw InvalidInput("unknown personality '" + s + "'");
    personalities.push_back(*p);
  }
  std::vector<Algorithm> algorithms;
  for (const auto& s : split_list(a.algorithms)) {
    auto alg = parse_algorithm(s);
    if (!alg) throw InvalidInput("unknown algorithm '" + s + "'");
    algorithms.push_back(*alg);
  }
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split_list(a.seeds)) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      seeds.push_back(v);
    } catch (const std::logic_error&) {
      throw InvalidInput("invalid seed '" + s + "'");
    }
  }
  if (personalities.empty() || algorithms.empty() || seeds.empty())
    throw InvalidInput("--personalities, --algorithms and --seeds must be non-empty");

  // Validate every cell before the first run starts.
  std::vector<RunConfig> runs;
  for (Algorithm alg : algorithms)
    for (Personality p : personalities)
      for (std::uint64_t seed : seeds) {
        ExperimentConfig cfg = base;
        cfg.learner.algorithm = alg;
        cfg.critic = CriticSpec{p, alg, std::nullopt};
        cfg.seed = seed;
        runs.push_back(cfg.to_run_config());
      }
  for (const RunConfig& run : runs) out << train(run).metrics_path.string() << '\n';
  return kOk;
}

int cmd_plot(const PlotArgs& a, std::ostream& out) {
  if (!is_metric_name(a.metric)) throw InvalidInput("unknown metric '" + a.metric + "'");
  if (!fs::is_directory(a.in)) throw InvalidInput("input directory '" + a.in + "' does not exist");
  static const std::regex name_re(R"(metrics_([A-Za-z]+)_([A-Za-z]+)_seed(\d+)\.csv)");
  // algorithm -> personality -> per-seed record lists
  std::map<std::string, std::map<std::string, std::vector<std::vector<MetricsRecord>>>> found;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(a.in))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    std::smatch m;
    const std::string name = path.filename().string();
    if (!std::regex_match(name, m, name_re)) continue;
    found[m[1]][m[2]].push_back(read_csv(path));
  }
  if (found.empty()) throw InvalidInput("no metrics CSV files found in '" + a.in + "'");

  fs::create_directories(a.out);
  for (const auto& [alg, by_personality] : found) {
    std::map<std::string, std::vector<MetricsRecord>> series;
    for (const auto& [personality, runs] : by_personality) {
      // Mean over seeds, truncated to the shortest run.
      std::size_t len = runs.front().size();
      for (const auto& r : runs) len = std::min(len, r.size());
      std::vector<MetricsRecord> mean(len);
      for (std::size_t k = 0; k < len; ++k) {
        MetricsRecord acc = runs.front()[k];
        acc.battle_won_mean = acc.dead_allies_mean = acc.dead_enemies_mean = acc.mean_innate_return = 0.0;
        for (const auto& r : runs) {
          acc.battle_won_mean += r[k].battle_won_mean;
          acc.dead_allies_mean += r[k].dead_allies_mean;
          acc.dead_enemies_mean += r[k].dead_enemies_mean;
          acc.mean_innate_return += r[k].mean_innate_return;
        }
        const double n = static_cast<double>(runs.size());
        acc.battle_won_mean /= n;
        acc.dead_allies_mean /= n;
        acc.dead_enemies_mean /= n;
        acc.mean_innate_return /= n;
        mean[k] = acc;
      }
      series[personality] = std::move(mean);
    }
    const fs::path path = fs::path(a.out) / (a.metric + "_" + alg + ".svg");
    ChartOptions opts;
    opts.title = a.metric + " (" + alg + ")";
    opts.smoothing_window = a.smooth;
    render_chart(series, a.metric, path, opts);
    out << path.string() << '\n';
  }
  return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Innate-value multi-agent battle workbench", "ivrl"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train one learner with one critic profile");
  train_cmd->add_option("--config", train_args.config, "Experiment config file")->required();
  train_cmd->add_option("--seed", train_args.seed, "Override the master seed");
  train_cmd->add_option("--out", train_args.out, "Override the output directory");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  eval_cmd->add_option("--config", eval_args.config, "Experiment config file")->required();
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--episodes", eval_args.episodes, "Number of evaluation episodes");
  eval_cmd->add_option("--seed", eval_args.seed, "Evaluation seed (defaults to the config seed)");
  eval_cmd->add_option("--trace", eval_args.trace, "Write a per-step JSON trace of one episode");

  SweepArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train every personality x algorithm x seed cell");
  sweep_cmd->add_option("--config", sweep_args.config, "Base experiment config file")->required();
  sweep_cmd->add_option("--personalities", sweep_args.personalities, "Comma-separated personalities");
  sweep_cmd->add_option("--algorithms", sweep_args.algorithms, "Comma-separated algorithms");
  sweep_cmd->add_option("--seeds", sweep_args.seeds, "Comma-separated seeds");
  sweep_cmd->add_option("--out", sweep_args.out, "Override the output directory");

  PlotArgs plot_args;
  auto* plot_cmd = app.add_subcommand("plot", "Render one SVG chart per algorithm from sweep CSVs");
  plot_cmd->add_option("--in", plot_args.in, "Directory with sweep metrics CSVs")->required();
  plot_cmd->add_option("--metric", plot_args.metric, "Metric column to plot")->required();
  plot_cmd->add_option("--out", plot_args.out, "Output directory for the charts")->required();
  plot_cmd->add_option("--smooth", plot_args.smooth, "Moving-average window (evaluations)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  }

  try {
    if (*train_cmd) return cmd_train(train_args, out);
    if (*eval_cmd) return cmd_eval(eval_args, out);
    if (*sweep_cmd) return cmd_sweep(sweep_args, out);
    if (*plot_cmd) return cmd_plot(plot_args, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kValidation;
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const CorruptFile& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kRuntime;
  }
  return kValidation;
}

}  // namespace ivrl::cli
