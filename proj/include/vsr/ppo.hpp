#pragma once

// PPO with GAE for one individual's actor/critic.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "vsr/autodiff.hpp"
#include "vsr/policy.hpp"
#include "vsr/rollout.hpp"

namespace vsr {

inline constexpr double kFailedFitness = -1e9;

struct PpoConfig {
  double clip = 0.2;
  double gamma = 0.99;
  double lambda = 0.95;
  double learning_rate = 3e-4;
  int epochs = 4;
  int minibatch = 64;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double max_grad_norm = 0.5;
  int steps_per_batch = 1024;
  int total_updates = 30;
};

struct Advantages {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// values has one entry per step plus the bootstrap value for the step after
/// the last. Advantages are not normalized here.
inline Advantages gae(std::span<const double> rewards, std::span<const double> values, std::span<const std::uint8_t> dones,
                      double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n + 1 || dones.size() != n) throw std::invalid_argument("gae: length mismatch");
  Advantages out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double live = dones[t] != 0 ? 0.0 : 1.0;
    const double delta = rewards[t] + gamma * values[t + 1] * live - values[t];
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[t] = next_adv;
    out.returns[t] = next_adv + values[t];
  }
  return out;
}

inline void normalize(std::vector<double>& x) {
  if (x.empty()) return;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  const double sd = std::max(std::sqrt(var / static_cast<double>(x.size())), 1e-8);
  for (double& v : x) v = (v - mean) / sd;
}

inline Advantages buffer_advantages(const RolloutBuffer& buf, const PpoConfig& cfg) {
  std::vector<double> rewards, values;
  std::vector<std::uint8_t> dones;
  for (const auto& s : buf.steps) {
    rewards.push_back(s.reward);
    values.push_back(s.value);
    dones.push_back(s.done ? 1 : 0);
  }
  values.push_back(buf.bootstrap_value);
  Advantages a = gae(rewards, values, dones, cfg.gamma, cfg.lambda);
  normalize(a.advantages);
  return a;
}

struct AdamState {
  std::vector<Mat> m;
  std::vector<Mat> v;
  long step = 0;
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double total_loss = 0.0;
  bool ok = true;
};

struct LossGraph {
  ad::Var total;
  ad::Var policy_loss;
  ad::Var value_loss;
  ad::Var entropy;
  double clip_fraction = 0.0;
  std::vector<ad::Var> leaves;  // parallel to parameters(params)
};

/// Builds the PPO loss for the given sample indices on `tape`.
inline LossGraph ppo_loss(ad::Tape& tape, const PolicyParams& params, const GraphTopology& topo,
                          const RolloutBuffer& buf, const Advantages& adv, std::span<const std::size_t> idx,
                          const PpoConfig& cfg, bool requires_grad = true) {
  const auto b = static_cast<int>(idx.size());
  std::vector<const Observation*> obs;
  Mat actions(b, static_cast<Eigen::Index>(topo.actuator_keys.size()));
  Mat old_logp(b, 1), advantage(b, 1), returns(b, 1);
  for (int r = 0; r < b; ++r) {
    const auto& s = buf.steps[idx[static_cast<std::size_t>(r)]];
    obs.push_back(&s.obs);
    for (std::size_t k = 0; k < s.action.size(); ++k) actions(r, static_cast<Eigen::Index>(k)) = s.action[k];
    old_logp(r, 0) = s.log_prob;
    advantage(r, 0) = adv.advantages[idx[static_cast<std::size_t>(r)]];
    returns(r, 0) = adv.returns[idx[static_cast<std::size_t>(r)]];
  }
  const Mat input = batch_input(params, obs);

  LossGraph lg;
  const ActorOutput actor = actor_forward_batch(tape, params, topo, input, b, &lg.leaves, requires_grad);
  const ad::Var value = critic_forward_batch(tape, params, topo, input, b, &lg.leaves, requires_grad);

  auto z = ad::mul(ad::sub(tape.constant(actions), actor.mean), ad::exp(ad::scale(actor.log_std, -1.0)));
  auto logp_terms = ad::sub(ad::scale(ad::square(z), -0.5), actor.log_std);
  auto logp = ad::add_scalar(ad::sum_cols(logp_terms), -0.5 * kLog2Pi * static_cast<double>(actions.cols()));
  auto ratio = ad::exp(ad::sub(logp, tape.constant(old_logp)));
  auto a = tape.constant(advantage);
  auto surr1 = ad::mul(ratio, a);
  auto surr2 = ad::mul(ad::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip), a);
  lg.policy_loss = ad::scale(ad::mean(ad::minimum(surr1, surr2)), -1.0);
  lg.value_loss = ad::mean(ad::square(ad::sub(value, tape.constant(returns))));
  lg.entropy = ad::mean(ad::add_scalar(ad::sum_cols(actor.log_std), 0.5 * (kLog2Pi + 1.0) * static_cast<double>(actions.cols())));
  lg.total = ad::sub(ad::add(lg.policy_loss, ad::scale(lg.value_loss, cfg.value_coef)),
                     ad::scale(lg.entropy, cfg.entropy_coef));

  int clipped = 0;
  for (Eigen::Index r = 0; r < b; ++r)
    if (std::abs(ratio.value()(r, 0) - 1.0) > cfg.clip) ++clipped;
  lg.clip_fraction = b > 0 ? static_cast<double>(clipped) / b : 0.0;
  return lg;
}

/// Loss terms over the whole buffer, no gradient.
inline UpdateStats evaluate_loss(const PolicyParams& params, const GraphTopology& topo, const RolloutBuffer& buf,
                                 const Advantages& adv, const PpoConfig& cfg) {
  std::vector<std::size_t> idx(buf.size());
  std::iota(idx.begin(), idx.end(), 0);
  ad::Tape tape;
  const LossGraph lg = ppo_loss(tape, params, topo, buf, adv, idx, cfg, false);
  return {lg.policy_loss.scalar(), lg.value_loss.scalar(), lg.entropy.scalar(), lg.clip_fraction, lg.total.scalar(),
          std::isfinite(lg.total.scalar())};
}

inline void adam_step(std::vector<Mat*>& params, const std::vector<Mat>& grads, AdamState& st, double lr) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-5;
  if (st.m.size() != params.size()) {
    st.m.clear();
    st.v.clear();
    for (const Mat* p : params) {
      st.m.push_back(Mat::Zero(p->rows(), p->cols()));
      st.v.push_back(Mat::Zero(p->rows(), p->cols()));
    }
    st.step = 0;
  }
  st.step += 1;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i] = kBeta1 * st.m[i] + (1.0 - kBeta1) * grads[i];
    st.v[i] = kBeta2 * st.v[i] + (1.0 - kBeta2) * grads[i].cwiseProduct(grads[i]);
    params[i]->array() -= lr * (st.m[i].array() / c1) / ((st.v[i].array() / c2).sqrt() + kEps);
  }
}

/// Epochs of shuffled minibatch updates on one batch. Stats are minibatch
/// averages. A non-finite loss stops the update with ok = false.
inline UpdateStats ppo_update(PolicyParams& params, AdamState& adam, const GraphTopology& topo,
                              const RolloutBuffer& buf, const PpoConfig& cfg, Rng& rng) {
  UpdateStats stats;
  if (buf.size() == 0) return stats;
  const Advantages adv = buffer_advantages(buf, cfg);
  std::vector<std::size_t> order(buf.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t mb = static_cast<std::size_t>(std::max(cfg.minibatch, 1));
  int batches = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    for (std::size_t start = 0; start < order.size(); start += mb) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(mb, order.size() - start));
      ad::Tape tape;
      LossGraph lg = ppo_loss(tape, params, topo, buf, adv, idx, cfg);
      if (!std::isfinite(lg.total.scalar())) {
        stats.ok = false;
        return stats;
      }
      tape.backward(lg.total);
      auto ps = parameters(params);
      std::vector<Mat> grads;
      double sq = 0.0;
      for (const auto& leaf : lg.leaves) {
        grads.push_back(leaf.grad());
        sq += leaf.grad().squaredNorm();
      }
      const double norm = std::sqrt(sq);
      if (!std::isfinite(norm)) {
        stats.ok = false;
        return stats;
      }
      if (norm > cfg.max_grad_norm)
        for (auto& g : grads) g *= cfg.max_grad_norm / norm;
      adam_step(ps, grads, adam, cfg.learning_rate);

      stats.policy_loss += lg.policy_loss.scalar();
      stats.value_loss += lg.value_loss.scalar();
      stats.entropy += lg.entropy.scalar();
      stats.clip_fraction += lg.clip_fraction;
      stats.total_loss += lg.total.scalar();
      ++batches;
    }
  }
  if (batches > 0) {
    stats.policy_loss /= batches;
    stats.value_loss /= batches;
    stats.entropy /= batches;
    stats.clip_fraction /= batches;
    stats.total_loss /= batches;
  }
  return stats;
}

struct UpdateLog {
  int update = 0;
  double mean_return = 0.0;
  double best_return = 0.0;
  UpdateStats stats;
};

struct TrainingResult {
  PolicyParams params;
  double best_return = kFailedFitness;
  bool failed = false;
  std::vector<UpdateLog> log;
};

/// Collects whole episodes until at least steps_per_batch steps are stored.
inline RolloutBuffer collect_batch(const MorphGenome& genome, const PolicyParams& params, const TaskSpec& task,
                                   const SimParams& sim, int steps, Rng& rng, bool& failed) {
  RolloutBuffer buf;
  failed = false;
  while (static_cast<int>(buf.size()) < steps && task.episode_length > 0) {
    EpisodeResult ep = rollout(genome, params, task, sim, rng);
    buf.append(std::move(ep.buffer));
    if (ep.failed) {
      failed = true;
      break;
    }
  }
  return buf;
}

/// Trains a fresh or inherited controller; fitness is the best episodic
/// return seen during training.
inline TrainingResult train_individual(const MorphGenome& genome, PolicyParams params, const TaskSpec& task,
                                       const SimParams& sim, const PpoConfig& cfg, Rng& rng) {
  const auto topo = build_topology(build_body(genome, sim));
  check_actor_keys(params, topo->actuator_keys);
  TrainingResult out;
  AdamState adam;
  double best = -std::numeric_limits<double>::infinity();

  auto record = [&](const RolloutBuffer& buf) {
    for (double r : buf.episode_returns) best = std::max(best, r);
  };

  if (cfg.total_updates == 0) {
    if (cfg.steps_per_batch > 0) {
      bool failed = false;
      RolloutBuffer buf = collect_batch(genome, params, task, sim, cfg.steps_per_batch, rng, failed);
      out.failed = failed;
      record(buf);
    } else {
      best = evaluate_return(genome, params, task, sim);
    }
  }

  for (int u = 0; u < cfg.total_updates && !out.failed; ++u) {
    bool failed = false;
    RolloutBuffer buf = collect_batch(genome, params, task, sim, cfg.steps_per_batch, rng, failed);
    if (failed) {
      out.failed = true;
      break;
    }
    record(buf);
    UpdateLog entry;
    entry.update = u;
    if (!buf.episode_returns.empty())
      entry.mean_return = std::accumulate(buf.episode_returns.begin(), buf.episode_returns.end(), 0.0) /
                          static_cast<double>(buf.episode_returns.size());
    entry.stats = ppo_update(params, adam, *topo, buf, cfg, rng);
    entry.best_return = best;
    out.log.push_back(entry);
    if (!entry.stats.ok) out.failed = true;
  }

  out.params = std::move(params);
  out.best_return = out.failed || !std::isfinite(best) ? kFailedFitness : best;
  return out;
}

}  // namespace vsr
