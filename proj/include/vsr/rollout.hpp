#pragma once

#include <functional>
#include <vector>

#include "vsr/graph.hpp"
#include "vsr/morpho.hpp"
#include "vsr/policy.hpp"
#include "vsr/rng.hpp"
#include "vsr/sim.hpp"

namespace vsr {

struct Transition {
  Observation obs;
  std::vector<double> action;  // raw (unclamped) sample
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  bool done = false;
};

struct RolloutBuffer {
  std::vector<Transition> steps;
  std::vector<double> episode_returns;
  double bootstrap_value = 0.0;  // value after the last step if it is not terminal

  std::size_t size() const { return steps.size(); }
  void append(RolloutBuffer&& other) {
    steps.insert(steps.end(), std::make_move_iterator(other.steps.begin()), std::make_move_iterator(other.steps.end()));
    episode_returns.insert(episode_returns.end(), other.episode_returns.begin(), other.episode_returns.end());
    bootstrap_value = other.bootstrap_value;
  }
};

enum class ActionMode { Sample, Greedy };

struct EpisodeResult {
  double total_return = 0.0;
  bool failed = false;
  RolloutBuffer buffer;
};

using StepObserver = std::function<void(int step, double reward, const SimState& state)>;

/// One episode. Greedy mode uses the clamped mean action and draws nothing
/// from rng. The observer, when set, sees the state after every step.
inline EpisodeResult rollout(const MorphGenome& genome, const PolicyParams& params, const TaskSpec& task,
                             const SimParams& sim, Rng& rng, ActionMode mode = ActionMode::Sample,
                             const StepObserver& observer = {}) {
  SimState state = make_state(genome, task.kind, sim);
  const auto topo = build_topology(state.body);
  check_actor_keys(params, topo->actuator_keys);

  EpisodeResult out;
  for (int t = 0; t < task.episode_length && !state.terminal; ++t) {
    Transition tr;
    tr.obs = observe(state);
    const PolicyOutput po = evaluate(params, *topo, tr.obs);
    std::vector<double> act;
    if (mode == ActionMode::Sample) {
      ActionSample s = sample(po.dist, rng);
      tr.action = std::move(s.raw);
      tr.log_prob = s.log_prob;
      act = std::move(s.action);
    } else {
      act = mode_action(po.dist);
      tr.action = po.dist.mean;
      tr.log_prob = log_prob(po.dist, tr.action);
    }
    tr.value = po.value;
    tr.reward = step(state, act, sim);
    tr.done = state.terminal || t + 1 == task.episode_length;
    out.total_return += tr.reward;
    if (observer) observer(t, tr.reward, state);
    out.buffer.steps.push_back(std::move(tr));
  }
  out.failed = state.failed;
  if (!out.buffer.steps.empty()) out.buffer.episode_returns.push_back(out.total_return);
  return out;
}

/// Return of the deterministic mean-action episode.
inline double evaluate_return(const MorphGenome& genome, const PolicyParams& params, const TaskSpec& task,
                              const SimParams& sim) {
  Rng unused(0);
  return rollout(genome, params, task, sim, unused, ActionMode::Greedy).total_return;
}

}  // namespace vsr
