#include "ivrl/learners.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ivrl/errors.hpp"

namespace ivrl {

namespace {

// A batch of episodes laid out step-major: step m, agent i lives in row
// m * n_agents + i of the per-agent matrices.
struct FlatBatch {
  std::size_t steps = 0;
  std::size_t n_agents = 0;
  std::size_t n_actions = 0;
  Matrix obs;
  Matrix next_obs;
  Matrix states;
  Matrix next_states;
  std::vector<std::uint8_t> masks;
  std::vector<std::uint8_t> next_masks;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<double> team;
  std::vector<std::uint8_t> terminal;

  std::span<const std::uint8_t> mask(std::size_t row) const {
    return {masks.data() + row * n_actions, n_actions};
  }
  std::span<const std::uint8_t> next_mask(std::size_t row) const {
    return {next_masks.data() + row * n_actions, n_actions};
  }
};

FlatBatch flatten_batch(std::span<const EpisodePtr> batch, const LearnerParams& params) {
  if (batch.empty()) throw InvalidInput("learner loss: empty batch (replay not ready)");
  FlatBatch fb;
  const EpisodeRecord& first = *batch.front();
  fb.n_agents = first.n_agents;
  fb.n_actions = first.n_actions;
  const std::size_t in_w = params.agent.input_width();
  const std::size_t s_w = first.states.front().size();
  for (const auto& ep : batch) {
    if (ep->n_agents != fb.n_agents || ep->n_actions != fb.n_actions || ep->states.front().size() != s_w ||
        ep->observations.front().cols() != in_w)
      throw InvalidInput("learner loss: batch episodes disagree with the network widths");
    fb.steps += ep->length();
  }
  if (params.agent.output_width() != fb.n_actions)
    throw InvalidInput("learner loss: agent network output width != action count");

  const std::size_t rows = fb.steps * fb.n_agents;
  fb.obs = Matrix(rows, in_w);
  fb.next_obs = Matrix(rows, in_w);
  fb.states = Matrix(fb.steps, s_w);
  fb.next_states = Matrix(fb.steps, s_w);
  fb.masks.reserve(rows * fb.n_actions);
  fb.next_masks.reserve(rows * fb.n_actions);
  fb.actions.reserve(rows);
  fb.rewards.reserve(rows);
  fb.team.reserve(fb.steps);
  fb.terminal.reserve(fb.steps);

  std::size_t m = 0;
  for (const auto& ep : batch) {
    for (std::size_t t = 0; t < ep->length(); ++t, ++m) {
      const StepRecord s = ep->step(t);
      std::copy(s.observations.data().begin(), s.observations.data().end(),
                fb.obs.data().begin() + m * fb.n_agents * in_w);
      std::copy(s.next_observations.data().begin(), s.next_observations.data().end(),
                fb.next_obs.data().begin() + m * fb.n_agents * in_w);
      std::copy(s.state.begin(), s.state.end(), fb.states.row(m).begin());
      std::copy(s.next_state.begin(), s.next_state.end(), fb.next_states.row(m).begin());
      fb.masks.insert(fb.masks.end(), s.masks.begin(), s.masks.end());
      fb.next_masks.insert(fb.next_masks.end(), s.next_masks.begin(), s.next_masks.end());
      fb.actions.insert(fb.actions.end(), s.actions.begin(), s.actions.end());
      fb.rewards.insert(fb.rewards.end(), s.rewards.begin(), s.rewards.end());
      fb.team.push_back(s.team_reward);
      fb.terminal.push_back(s.terminal ? 1 : 0);
    }
  }
  return fb;
}

// Inactive (dead) agents are offered the no-op alone.
bool is_active(std::span<const std::uint8_t> mask) {
  if (mask.empty() || !mask[action::kNoOp]) return true;
  for (std::size_t a = 1; a < mask.size(); ++a)
    if (mask[a]) return true;
  return false;
}

double masked_max(std::span<const double> q, std::span<const std::uint8_t> mask) {
  return q[static_cast<std::size_t>(masked_argmax(q, mask))];
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(m.row(rows[r]).begin(), m.row(rows[r]).end(), out.row(r).begin());
  return out;
}

// Offsets of each parameter block inside the flat gradient.
std::vector<std::size_t> block_offsets(const LearnerParams& p) {
  std::vector<std::size_t> offsets;
  std::size_t o = 0;
  for (const ParameterVector* b : p.blocks()) {
    offsets.push_back(o);
    o += b->size();
  }
  return offsets;
}

std::span<double> block_grad(std::vector<double>& grad, const std::vector<std::size_t>& offsets,
                             const LearnerParams& p, std::size_t block) {
  return {grad.data() + offsets[block], p.blocks()[block]->size()};
}

struct MixForward {
  ForwardTrace w1;
  ForwardTrace b1;
  ForwardTrace w2;
  ForwardTrace b2;
  Matrix pre;  // steps x embed
  std::vector<double> out;
};

MixForward mix_forward(const MixerParams& mixer, const Matrix& qs, const Matrix& states) {
  if (qs.cols() != mixer.n_agents) throw InvalidInput("qmix_mix: agent value count != mixer agent count");
  if (states.cols() != mixer.hyper_w1.input_width()) throw InvalidInput("qmix_mix: global state width mismatch");
  MixForward f;
  f.w1 = forward_trace(mixer.hyper_w1, states);
  f.b1 = forward_trace(mixer.hyper_b1, states);
  f.w2 = forward_trace(mixer.hyper_w2, states);
  f.b2 = forward_trace(mixer.hyper_b2, states);
  const std::size_t E = mixer.embed;
  const std::size_t n = mixer.n_agents;
  f.pre = Matrix(qs.rows(), E);
  f.out.assign(qs.rows(), 0.0);
  for (std::size_t m = 0; m < qs.rows(); ++m) {
    const auto w1 = f.w1.output().row(m);
    const auto b1 = f.b1.output().row(m);
    const auto w2 = f.w2.output().row(m);
    auto pre = f.pre.row(m);
    double out = f.b2.output()(m, 0);
    for (std::size_t k = 0; k < E; ++k) {
      double acc = b1[k];
      for (std::size_t i = 0; i < n; ++i) acc += qs(m, i) * w1[i * E + k];
      pre[k] = acc;
      if (acc > 0.0) out += acc * w2[k];
    }
    f.out[m] = out;
  }
  return f;
}

// Back-propagates d(loss)/d(out) through the mixer. Hypernetwork gradients
// are added into the four spans; returns d(loss)/d(agent q).
Matrix mix_backward(const MixerParams& mixer, const MixForward& f, const Matrix& qs, std::span<const double> d_out,
                    std::span<double> g_w1, std::span<double> g_b1, std::span<double> g_w2, std::span<double> g_b2) {
  const std::size_t E = mixer.embed;
  const std::size_t n = mixer.n_agents;
  const std::size_t M = qs.rows();
  Matrix d_w1(M, n * E), d_b1(M, E), d_w2(M, E), d_b2(M, 1), d_qs(M, n);
  for (std::size_t m = 0; m < M; ++m) {
    const double g = d_out[m];
    const auto w1 = f.w1.output().row(m);
    const auto w2 = f.w2.output().row(m);
    const auto pre = f.pre.row(m);
    d_b2(m, 0) = g;
    for (std::size_t k = 0; k < E; ++k) {
      if (pre[k] <= 0.0) continue;
      d_w2(m, k) = g * pre[k];
      const double dpre = g * w2[k];
      d_b1(m, k) = dpre;
      for (std::size_t i = 0; i < n; ++i) {
        d_w1(m, i * E + k) = dpre * qs(m, i);
        d_qs(m, i) += dpre * w1[i * E + k];
      }
    }
  }
  backward(mixer.hyper_w1, f.w1, d_w1, g_w1);
  backward(mixer.hyper_b1, f.b1, d_b1, g_b1);
  backward(mixer.hyper_w2, f.w2, d_w2, g_w2);
  backward(mixer.hyper_b2, f.b2, d_b2, g_b2);
  return d_qs;
}

// Masked greedy actions and values for every row of a Q matrix.
void greedy(const Matrix& q, std::span<const std::uint8_t> masks, std::size_t n_actions, std::vector<int>& actions,
            std::vector<double>& values) {
  actions.resize(q.rows());
  values.resize(q.rows());
  for (std::size_t r = 0; r < q.rows(); ++r) {
    const auto mask = masks.subspan(r * n_actions, n_actions);
    actions[r] = masked_argmax(q.row(r), mask);
    values[r] = q(r, static_cast<std::size_t>(actions[r]));
  }
}

Matrix joint_inputs(const Matrix& states, std::span<const int> actions, std::size_t n_agents, std::size_t n_actions) {
  const std::size_t sw = states.cols();
  Matrix out(states.rows(), sw + n_agents * n_actions);
  for (std::size_t m = 0; m < states.rows(); ++m) {
    std::copy(states.row(m).begin(), states.row(m).end(), out.row(m).begin());
    for (std::size_t i = 0; i < n_agents; ++i)
      out(m, sw + i * n_actions + static_cast<std::size_t>(actions[m * n_agents + i])) = 1.0;
  }
  return out;
}

void require_finite(const LossResult& r, const char* what) {
  if (!std::isfinite(r.loss)) throw NumericError(std::string(what) + ": non-finite loss");
  for (double g : r.gradient)
    if (!std::isfinite(g)) throw NumericError(std::string(what) + ": non-finite gradient");
}

}  // namespace

double EpsilonSchedule::at(std::uint64_t t) const {
  if (t >= horizon) return end;
  const double frac = static_cast<double>(t) / static_cast<double>(horizon);
  return std::max(end, start - (start - end) * frac);
}

void LearnerConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) { throw ConfigError("learner." + field + " " + why); };
  if (!(gamma >= 0.0 && gamma < 1.0)) fail("gamma", "must lie in [0, 1)");
  if (!(std::isfinite(learning_rate) && learning_rate >= 0.0)) fail("learning_rate", "must be non-negative");
  if (batch_size == 0) fail("batch_size", "must be positive");
  if (target_update_period == 0) fail("target_update_period", "must be at least 1");
  if (!(epsilon.start >= 0.0 && epsilon.start <= 1.0)) fail("epsilon_start", "must lie in [0, 1]");
  if (!(epsilon.end >= 0.0 && epsilon.end <= 1.0)) fail("epsilon_end", "must lie in [0, 1]");
  if (epsilon.end > epsilon.start) fail("epsilon_end", "must not exceed epsilon_start");
  if (!(std::isfinite(lambda_opt) && lambda_opt >= 0.0)) fail("lambda_opt", "must be non-negative");
  if (!(std::isfinite(lambda_nopt) && lambda_nopt >= 0.0)) fail("lambda_nopt", "must be non-negative");
  if (!std::isfinite(grad_clip)) fail("grad_clip", "must be finite");
  for (std::size_t h : agent_hidden)
    if (h == 0) fail("agent_hidden", "widths must be positive");
  for (std::size_t h : qtran_hidden)
    if (h == 0) fail("qtran_hidden", "widths must be positive");
  if (mixer_embed == 0) fail("mixer_embed", "must be positive");
}

std::vector<ParameterVector*> LearnerParams::blocks() {
  std::vector<ParameterVector*> b{&agent};
  if (mixer) {
    b.push_back(&mixer->hyper_w1);
    b.push_back(&mixer->hyper_b1);
    b.push_back(&mixer->hyper_w2);
    b.push_back(&mixer->hyper_b2);
  }
  if (qtran) {
    b.push_back(&qtran->joint);
    b.push_back(&qtran->value);
  }
  return b;
}

std::vector<const ParameterVector*> LearnerParams::blocks() const {
  auto mutable_blocks = const_cast<LearnerParams*>(this)->blocks();
  return {mutable_blocks.begin(), mutable_blocks.end()};
}

std::size_t LearnerParams::size() const {
  std::size_t n = 0;
  for (const ParameterVector* b : blocks()) n += b->size();
  return n;
}

std::vector<double> LearnerParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(size());
  for (const ParameterVector* b : blocks()) flat.insert(flat.end(), b->values().begin(), b->values().end());
  return flat;
}

void LearnerParams::assign(std::span<const double> flat) {
  if (flat.size() != size()) throw InvalidInput("LearnerParams::assign: length mismatch");
  std::size_t o = 0;
  for (ParameterVector* b : blocks()) {
    std::copy(flat.begin() + o, flat.begin() + o + b->size(), b->values().begin());
    o += b->size();
  }
}

LearnerParams init_learner_params(const LearnerConfig& config, const LearnerShape& shape, RngStream& rng) {
  config.validate();
  if (shape.n_agents == 0 || shape.n_actions == 0 || shape.input_width == 0 || shape.state_width == 0)
    throw ConfigError("learner shape has a zero width");
  LearnerParams p;
  p.algorithm = config.algorithm;
  RngStream agent_rng = rng.derive("agent");
  p.agent = init_params(mlp_layers(shape.input_width, config.agent_hidden, shape.n_actions), agent_rng);
  if (config.algorithm == Algorithm::QMIX) {
    MixerParams m;
    m.n_agents = shape.n_agents;
    m.embed = config.mixer_embed;
    RngStream r = rng.derive("mixer");
    const std::size_t E = config.mixer_embed;
    const std::vector<std::size_t> none;
    const std::vector<std::size_t> one{E};
    m.hyper_w1 = init_params(mlp_layers(shape.state_width, none, shape.n_agents * E, Activation::AbsoluteValue), r);
    m.hyper_b1 = init_params(mlp_layers(shape.state_width, none, E), r);
    m.hyper_w2 = init_params(mlp_layers(shape.state_width, none, E, Activation::AbsoluteValue), r);
    m.hyper_b2 = init_params(mlp_layers(shape.state_width, one, 1), r);
    p.mixer = std::move(m);
  } else if (config.algorithm == Algorithm::QTRAN) {
    QtranHeads h;
    h.n_agents = shape.n_agents;
    h.n_actions = shape.n_actions;
    RngStream r = rng.derive("qtran");
    h.joint = init_params(mlp_layers(shape.state_width + shape.n_agents * shape.n_actions, config.qtran_hidden, 1), r);
    h.value = init_params(mlp_layers(shape.state_width, config.qtran_hidden, 1), r);
    p.qtran = std::move(h);
  }
  return p;
}

int masked_argmax(std::span<const double> q, std::span<const std::uint8_t> mask) {
  if (q.size() != mask.size()) throw InvalidInput("masked_argmax: value and mask lengths differ");
  int best = -1;
  for (std::size_t a = 0; a < q.size(); ++a)
    if (mask[a] && (best < 0 || q[a] > q[static_cast<std::size_t>(best)])) best = static_cast<int>(a);
  if (best < 0) throw ContractViolation("no action is available under the mask");
  return best;
}

JointAction select_actions(const ParameterVector& agent_q, const Matrix& observations,
                           std::span<const std::uint8_t> masks, double epsilon, RngStream& rng) {
  const std::size_t n = observations.rows();
  const std::size_t A = agent_q.output_width();
  if (masks.size() != n * A) throw InvalidInput("select_actions: mask size != agents * actions");
  const Matrix q = forward(agent_q, observations);
  JointAction actions(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto mask = masks.subspan(i * A, A);
    std::size_t allowed = 0;
    for (auto m : mask) allowed += m ? 1 : 0;
    if (allowed == 0) throw ContractViolation("select_actions: agent " + std::to_string(i) + " has no available action");
    const bool explore = rng.uniform01() < epsilon;
    if (explore) {
      std::size_t pick = rng.uniform_index(allowed);
      for (std::size_t a = 0; a < A; ++a)
        if (mask[a] && pick-- == 0) {
          actions[i] = static_cast<int>(a);
          break;
        }
    } else {
      actions[i] = masked_argmax(q.row(i), mask);
    }
  }
  return actions;
}

double td_target(double reward, double next_best_q, bool terminal, double gamma) {
  return terminal ? reward : reward + gamma * next_best_q;
}

double state_value(const ParameterVector& agent_q, std::span<const double> observation,
                   std::span<const std::uint8_t> mask) {
  const std::vector<double> q = forward(agent_q, observation);
  return masked_max(q, mask);
}

LossResult iql_loss(std::span<const EpisodePtr> batch, const LearnerParams& params, const LearnerParams& target,
                    const LearnerConfig& config) {
  const FlatBatch fb = flatten_batch(batch, params);
  const std::size_t n = fb.n_agents;
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < fb.steps * n; ++r)
    if (is_active(fb.mask(r))) rows.push_back(r);

  LossResult result;
  result.gradient.assign(params.size(), 0.0);
  if (rows.empty()) return result;

  const Matrix next_q = forward(target.agent, select_rows(fb.next_obs, rows));
  ForwardTrace trace = forward_trace(params.agent, select_rows(fb.obs, rows));
  const Matrix& q = trace.output();
  Matrix upstream(rows.size(), fb.n_actions);
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  double loss = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t r = rows[k];
    const std::size_t m = r / n;
    const auto next_mask = fb.next_mask(r);
    const bool terminal = fb.terminal[m] != 0 || !is_active(next_mask);
    const double next_best = terminal ? 0.0 : masked_max(next_q.row(k), next_mask);
    const double y = td_target(fb.rewards[r], next_best, terminal, config.gamma);
    const std::size_t a = static_cast<std::size_t>(fb.actions[r]);
    const double err = q(k, a) - y;
    loss += err * err;
    upstream(k, a) = 2.0 * err * inv_n;
  }
  result.loss = loss * inv_n;
  backward(params.agent, trace, upstream, std::span<double>(result.gradient).subspan(0, params.agent.size()));
  require_finite(result, "iql_loss");
  return result;
}

double qmix_mix(std::span<const double> agent_chosen_qs, std::span<const double> global_state,
                const MixerParams& mixer) {
  if (agent_chosen_qs.size() != mixer.n_agents) throw InvalidInput("qmix_mix: agent value count != mixer agent count");
  Matrix qs(1, agent_chosen_qs.size());
  std::copy(agent_chosen_qs.begin(), agent_chosen_qs.end(), qs.row(0).begin());
  Matrix s(1, global_state.size());
  std::copy(global_state.begin(), global_state.end(), s.row(0).begin());
  return mix_forward(mixer, qs, s).out[0];
}

MixGradient qmix_mix_gradient(std::span<const double> agent_chosen_qs, std::span<const double> global_state,
                              const MixerParams& mixer) {
  if (agent_chosen_qs.size() != mixer.n_agents) throw InvalidInput("qmix_mix: agent value count != mixer agent count");
  Matrix qs(1, agent_chosen_qs.size());
  std::copy(agent_chosen_qs.begin(), agent_chosen_qs.end(), qs.row(0).begin());
  Matrix s(1, global_state.size());
  std::copy(global_state.begin(), global_state.end(), s.row(0).begin());
  const MixForward f = mix_forward(mixer, qs, s);
  MixGradient g;
  g.value = f.out[0];
  const std::size_t n1 = mixer.hyper_w1.size(), n2 = mixer.hyper_b1.size(), n3 = mixer.hyper_w2.size();
  g.mixer_params.assign(n1 + n2 + n3 + mixer.hyper_b2.size(), 0.0);
  std::span<double> all(g.mixer_params);
  const double one = 1.0;
  const Matrix dq = mix_backward(mixer, f, qs, std::span<const double>(&one, 1), all.subspan(0, n1),
                                 all.subspan(n1, n2), all.subspan(n1 + n2, n3), all.subspan(n1 + n2 + n3));
  g.agent_qs.assign(dq.data().begin(), dq.data().end());
  return g;
}

LossResult qmix_loss(std::span<const EpisodePtr> batch, const LearnerParams& params, const LearnerParams& target,
                     const LearnerConfig& config) {
  if (!params.mixer || !target.mixer) throw InvalidInput("qmix_loss: learner has no mixer");
  const FlatBatch fb = flatten_batch(batch, params);
  const std::size_t n = fb.n_agents;
  const std::size_t M = fb.steps;

  // Target: per-agent masked greedy values mixed by the target mixer.
  const Matrix next_q = forward(target.agent, fb.next_obs);
  std::vector<int> next_actions;
  std::vector<double> next_values;
  greedy(next_q, fb.next_masks, fb.n_actions, next_actions, next_values);
  Matrix next_qs(M, n);
  std::copy(next_values.begin(), next_values.end(), next_qs.data().begin());
  const MixForward target_mix = mix_forward(*target.mixer, next_qs, fb.next_states);

  ForwardTrace trace = forward_trace(params.agent, fb.obs);
  Matrix chosen(M, n);
  for (std::size_t r = 0; r < M * n; ++r) chosen.data()[r] = trace.output()(r, static_cast<std::size_t>(fb.actions[r]));
  const MixForward mix = mix_forward(*params.mixer, chosen, fb.states);

  LossResult result;
  result.gradient.assign(params.size(), 0.0);
  std::vector<double> d_out(M);
  double loss = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    const double y = td_target(fb.team[m], target_mix.out[m], fb.terminal[m] != 0, config.gamma);
    const double err = mix.out[m] - y;
    loss += err * err;
    d_out[m] = 2.0 * err / static_cast<double>(M);
  }
  result.loss = loss / static_cast<double>(M);

  const auto offsets = block_offsets(params);
  const Matrix d_chosen = mix_backward(*params.mixer, mix, chosen, d_out, block_grad(result.gradient, offsets, params, 1),
                                       block_grad(result.gradient, offsets, params, 2),
                                       block_grad(result.gradient, offsets, params, 3),
                                       block_grad(result.gradient, offsets, params, 4));
  Matrix upstream(M * n, fb.n_actions);
  for (std::size_t r = 0; r < M * n; ++r) upstream(r, static_cast<std::size_t>(fb.actions[r])) = d_chosen.data()[r];
  backward(params.agent, trace, upstream, block_grad(result.gradient, offsets, params, 0));
  require_finite(result, "qmix_loss");
  return result;
}

QtranLossResult qtran_losses(std::span<const EpisodePtr> batch, const LearnerParams& params,
                             const LearnerParams& target, const LearnerConfig& config) {
  if (!params.qtran || !target.qtran) throw InvalidInput("qtran_losses: learner has no QTRAN heads");
  const FlatBatch fb = flatten_batch(batch, params);
  const std::size_t n = fb.n_agents;
  const std::size_t A = fb.n_actions;
  const std::size_t M = fb.steps;
  const QtranHeads& heads = *params.qtran;
  const double inv_m = 1.0 / static_cast<double>(M);

  // TD target from the target joint network at the target agents' greedy
  // joint action.
  const Matrix next_q = forward(target.agent, fb.next_obs);
  std::vector<int> next_actions;
  std::vector<double> next_values;
  greedy(next_q, fb.next_masks, A, next_actions, next_values);
  const Matrix next_joint = forward(target.qtran->joint, joint_inputs(fb.next_states, next_actions, n, A));

  ForwardTrace joint_taken = forward_trace(heads.joint, joint_inputs(fb.states, fb.actions, n, A));
  ForwardTrace agent = forward_trace(params.agent, fb.obs);
  ForwardTrace value = forward_trace(heads.value, fb.states);
  std::vector<int> greedy_actions;
  std::vector<double> greedy_values;
  greedy(agent.output(), fb.masks, A, greedy_actions, greedy_values);
  const Matrix joint_greedy = forward(heads.joint, joint_inputs(fb.states, greedy_actions, n, A));

  QtranLossResult result;
  result.gradient.assign(params.size(), 0.0);
  Matrix d_joint(M, 1), d_value(M, 1), d_agent(M * n, A);
  for (std::size_t m = 0; m < M; ++m) {
    const double q_jt = joint_taken.output()(m, 0);
    const double y = td_target(fb.team[m], next_joint(m, 0), fb.terminal[m] != 0, config.gamma);
    const double td_err = q_jt - y;
    result.td += td_err * td_err;
    d_joint(m, 0) = 2.0 * td_err * inv_m;

    const double v = value.output()(m, 0);
    double sum_greedy = 0.0;
    double sum_taken = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum_greedy += greedy_values[m * n + i];
      sum_taken += agent.output()(m * n + i, static_cast<std::size_t>(fb.actions[m * n + i]));
    }
    const double opt_err = sum_greedy - joint_greedy(m, 0) + v;
    const double nopt_err = std::min(sum_taken - q_jt + v, 0.0);
    result.opt += opt_err * opt_err;
    result.nopt += nopt_err * nopt_err;

    const double g_opt = config.lambda_opt * 2.0 * opt_err * inv_m;
    const double g_nopt = config.lambda_nopt * 2.0 * nopt_err * inv_m;
    d_value(m, 0) = g_opt + g_nopt;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = m * n + i;
      d_agent(r, static_cast<std::size_t>(greedy_actions[r])) += g_opt;
      d_agent(r, static_cast<std::size_t>(fb.actions[r])) += g_nopt;
    }
  }
  result.td *= inv_m;
  result.opt *= inv_m;
  result.nopt *= inv_m;
  result.total = result.td + config.lambda_opt * result.opt + config.lambda_nopt * result.nopt;

  const auto offsets = block_offsets(params);
  backward(params.agent, agent, d_agent, block_grad(result.gradient, offsets, params, 0));
  backward(heads.joint, joint_taken, d_joint, block_grad(result.gradient, offsets, params, 1));
  backward(heads.value, value, d_value, block_grad(result.gradient, offsets, params, 2));
  LossResult check{result.total, {}};
  require_finite(check, "qtran_losses");
  for (double g : result.gradient)
    if (!std::isfinite(g)) throw NumericError("qtran_losses: non-finite gradient");
  return result;
}

LossResult learner_loss(std::span<const EpisodePtr> batch, const LearnerParams& params, const LearnerParams& target,
                        const LearnerConfig& config) {
  switch (config.algorithm) {
    case Algorithm::IQL: return iql_loss(batch, params, target, config);
    case Algorithm::QMIX: return qmix_loss(batch, params, target, config);
    case Algorithm::QTRAN: {
      QtranLossResult r = qtran_losses(batch, params, target, config);
      return {r.total, std::move(r.gradient)};
    }
  }
  throw InvalidInput("learner_loss: unknown algorithm");
}

bool maybe_update_target(std::uint64_t step_counter, std::uint64_t period, const LearnerParams& params,
                         LearnerParams& target) {
  if (period == 0) throw InvalidInput("maybe_update_target: period must be at least 1");
  if (step_counter % period != 0) return false;
  target = params;
  return true;
}

}  // namespace ivrl
