#include "ivrl/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "ivrl/errors.hpp"

namespace ivrl {

namespace {

using nlohmann::json;

// Walks one JSON object, remembering which keys were read so the rest can
// be reported as unknown.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(where("") + " must be an object");
  }

  ~Section() = default;

  std::string where(std::string_view key) const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  const json* find(std::string_view key) {
    seen_.insert(std::string(key));
    auto it = node_.find(std::string(key));
    return it == node_.end() ? nullptr : &*it;
  }

  std::optional<Section> section(std::string_view key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    return Section(*v, where(key));
  }

  void read(std::string_view key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(where(key) + " must be a number");
      out = v->get<double>();
      if (!std::isfinite(out)) throw ConfigError(where(key) + " must be finite");
    }
  }

  template <typename Int>
  void read_int(std::string_view key, Int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(where(key) + " must be an integer");
      if constexpr (std::is_unsigned_v<Int>) {
        if (v->is_number_unsigned()) {
          out = static_cast<Int>(v->get<std::uint64_t>());
        } else {
          const auto x = v->get<std::int64_t>();
          if (x < 0) throw ConfigError(where(key) + " must be non-negative");
          out = static_cast<Int>(x);
        }
      } else {
        const auto x = v->get<std::int64_t>();
        if (x < -1000000000LL || x > 1000000000LL) throw ConfigError(where(key) + " is out of range");
        out = static_cast<Int>(x);
      }
    }
  }

  std::optional<std::string> read_string(std::string_view key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    if (!v->is_string()) throw ConfigError(where(key) + " must be a string");
    return v->get<std::string>();
  }

  void read_widths(std::string_view key, std::vector<std::size_t>& out) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_array()) throw ConfigError(where(key) + " must be an array of positive integers");
    out.clear();
    for (const auto& e : *v) {
      if (!e.is_number_unsigned() || e.get<std::uint64_t>() == 0)
        throw ConfigError(where(key) + " must be an array of positive integers");
      out.push_back(static_cast<std::size_t>(e.get<std::uint64_t>()));
    }
  }

  void reject_unknown() const {
    for (auto it = node_.begin(); it != node_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + where(it.key()) + "'");
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

void parse_unit(Section s, UnitSpec& u) {
  s.read("max_hp", u.max_hp);
  s.read("max_shield", u.max_shield);
  s.read("attack_damage", u.attack_damage);
  s.read_int("attack_range", u.attack_range);
  s.read_int("sight_range", u.sight_range);
  s.read("shield_regen_rate", u.shield_regen_rate);
  s.read_int("regen_delay", u.regen_delay);
  s.reject_unknown();
}

void parse_team(Section s, TeamComposition& t) {
  s.read_int("ranged", t.ranged);
  s.read_int("melee", t.melee);
  s.reject_unknown();
}

void parse_scenario(Section s, ScenarioConfig& c) {
  s.read_int("grid_width", c.grid_width);
  s.read_int("grid_height", c.grid_height);
  s.read_int("episode_limit", c.episode_limit);
  s.read_int("spawn_depth", c.spawn_depth);
  s.read_int("spawn_height", c.spawn_height);
  if (auto t = s.section("allies")) parse_team(std::move(*t), c.allies);
  if (auto t = s.section("enemies")) parse_team(std::move(*t), c.enemies);
  if (auto u = s.section("ranged")) parse_unit(std::move(*u), c.ranged);
  if (auto u = s.section("melee")) parse_unit(std::move(*u), c.melee);
  s.reject_unknown();
}

void parse_critic(Section s, CriticSpec& c) {
  if (auto p = s.read_string("personality")) {
    c.personality = parse_personality(*p);
    if (!c.personality) throw ConfigError(s.where("personality") + ": unknown personality '" + *p + "'");
  }
  if (auto a = s.read_string("preset_algorithm")) {
    c.preset_algorithm = parse_algorithm(*a);
    if (!c.preset_algorithm) throw ConfigError(s.where("preset_algorithm") + ": unknown algorithm '" + *a + "'");
  }
  if (const json* w = s.find("weights")) {
    if (!w->is_array() || w->size() != 3)
      throw ConfigError(s.where("weights") + " must be a three-element array [BW, SL, HP]");
    std::array<double, 3> arr{};
    for (std::size_t i = 0; i < 3; ++i) {
      if (!(*w)[i].is_number()) throw ConfigError(s.where("weights") + " entries must be numbers");
      arr[i] = (*w)[i].get<double>();
      if (!std::isfinite(arr[i])) throw ConfigError(s.where("weights") + " entries must be finite");
    }
    c.weights = arr;
  }
  s.reject_unknown();
}

void parse_learner(Section s, LearnerConfig& c) {
  if (auto a = s.read_string("algorithm")) {
    auto alg = parse_algorithm(*a);
    if (!alg) throw ConfigError(s.where("algorithm") + ": unknown algorithm '" + *a + "'");
    c.algorithm = *alg;
  }
  s.read("gamma", c.gamma);
  s.read("learning_rate", c.learning_rate);
  s.read_int("batch_size", c.batch_size);
  s.read_int("target_update_period", c.target_update_period);
  s.read("epsilon_start", c.epsilon.start);
  s.read("epsilon_end", c.epsilon.end);
  s.read_int("epsilon_horizon", c.epsilon.horizon);
  s.read("lambda_opt", c.lambda_opt);
  s.read("lambda_nopt", c.lambda_nopt);
  s.read("grad_clip", c.grad_clip);
  s.read_widths("agent_hidden", c.agent_hidden);
  s.read_int("mixer_embed", c.mixer_embed);
  s.read_widths("qtran_hidden", c.qtran_hidden);
  s.reject_unknown();
}

void parse_run(Section s, ExperimentConfig& c) {
  s.read_int("total_env_steps", c.total_env_steps);
  s.read_int("eval_period", c.eval_period);
  s.read_int("eval_episodes", c.eval_episodes);
  s.read_int("seed", c.seed);
  if (auto d = s.read_string("output_dir")) c.output_dir = *d;
  s.read_int("buffer_capacity", c.buffer_capacity);
  s.read_int("eval_workers", c.eval_workers);
  s.reject_unknown();
}

}  // namespace

InnateValueProfile resolve_profile(const CriticSpec& critic, Algorithm learner_algorithm) {
  const Algorithm row = critic.preset_algorithm.value_or(learner_algorithm);
  if (critic.weights) {
    const auto& w = *critic.weights;
    InnateValueProfile p{w[0], w[1], w[2], critic.personality.value_or(Personality::Custom)};
    if (p.personality != Personality::Custom && !(p == preset_profile(row, p.personality)))
      throw ConfigError("critic.weights do not match the " + std::string(to_string(p.personality)) + " preset for " +
                        std::string(to_string(row)) + "; label them Custom or drop the personality");
    return p;
  }
  const Personality personality = critic.personality.value_or(Personality::Neutral);
  if (personality == Personality::Custom) throw ConfigError("critic.personality Custom requires critic.weights");
  return preset_profile(row, personality);
}

RunConfig ExperimentConfig::to_run_config() const {
  RunConfig r;
  r.scenario = scenario;
  r.learner = learner;
  r.profile = resolve_profile(critic, learner.algorithm);
  r.total_env_steps = total_env_steps;
  r.eval_period = eval_period;
  r.eval_episodes = eval_episodes;
  r.seed = seed;
  r.output_dir = output_dir;
  r.buffer_capacity = buffer_capacity;
  r.eval_workers = eval_workers;
  r.validate();
  return r;
}

ExperimentConfig parse_experiment_config(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Section top(root, "");
  if (auto s = top.section("scenario")) parse_scenario(std::move(*s), c.scenario);
  if (auto s = top.section("critic")) parse_critic(std::move(*s), c.critic);
  if (auto s = top.section("learner")) parse_learner(std::move(*s), c.learner);
  if (auto s = top.section("run")) parse_run(std::move(*s), c);
  top.reject_unknown();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

}  // namespace ivrl
