#pragma once

// Parent-to-child controller transfer across morphology mutations.
//
// GAT policies: the attention layer and MLP hidden layers are shape-invariant
// and copied whole. Actor output rows are matched by actuator key (same cell,
// same type); unmatched child actuators get fresh small-gain rows, and rows of
// removed parent actuators are dropped. The critic is copied whole.
//
// MLP policies: hidden layers copied; actor output slots are kept where the
// slot holds the same actuator key in parent and child, re-initialized otherwise.

#include <algorithm>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "vsr/graph.hpp"
#include "vsr/policy.hpp"
#include "vsr/rng.hpp"

namespace vsr {

struct Correspondence {
  std::vector<std::optional<int>> node_map;      // child node -> parent node
  std::vector<std::optional<int>> actuator_map;  // child actuator -> parent actuator
};

inline Correspondence match(const GraphTopology& parent, const GraphTopology& child) {
  Correspondence c;
  std::map<LatticeKey, int> parent_nodes;
  for (int i = 0; i < parent.node_count(); ++i) parent_nodes.emplace(parent.node_keys[static_cast<std::size_t>(i)], i);
  for (const auto& key : child.node_keys) {
    auto it = parent_nodes.find(key);
    c.node_map.push_back(it == parent_nodes.end() ? std::nullopt : std::optional<int>(it->second));
  }
  std::map<ActuatorKey, int> parent_acts;
  for (std::size_t i = 0; i < parent.actuator_keys.size(); ++i) parent_acts.emplace(parent.actuator_keys[i], static_cast<int>(i));
  for (const auto& key : child.actuator_keys) {
    auto it = parent_acts.find(key);
    c.actuator_map.push_back(it == parent_acts.end() ? std::nullopt : std::optional<int>(it->second));
  }
  return c;
}

inline Correspondence match(const RobotGraph& parent, const RobotGraph& child) {
  return match(*parent.topology, *child.topology);
}

struct InheritanceStats {
  int matched = 0;
  int added = 0;
  int removed = 0;
};

struct Inherited {
  PolicyParams params;
  InheritanceStats stats;
};

inline PolicyParams scratch_init(const GraphTopology& child, ControllerKind kind, FeatureMode mode,
                                 const MlpLayout& layout, Rng& rng) {
  PolicyParams p;
  p.kind = kind;
  p.mode = mode;
  p.layout = layout;
  if (kind == ControllerKind::Gat) {
    p.actor = init_network(kind, kGraphFeatures, child.actuator_keys, true, rng);
    p.critic = init_network(kind, kGraphFeatures, {}, false, rng);
  } else {
    if (child.node_count() > layout.max_nodes) throw std::invalid_argument("robot exceeds the MLP design space");
    p.actor = init_network(kind, layout.input_width(), slot_keys(child.actuator_keys, layout), true, rng);
    p.critic = init_network(kind, layout.input_width(), {}, false, rng);
  }
  return p;
}

/// MapWeights. Depends only on the correspondence and the child's keys.
inline Inherited map_weights(const PolicyParams& parent, const Correspondence& corr, const GraphTopology& child,
                             Rng& rng) {
  if (corr.actuator_map.size() != child.actuator_keys.size() || corr.node_map.size() != child.node_keys.size())
    throw std::invalid_argument("map_weights: correspondence does not describe the child graph");

  Inherited out;
  out.params.kind = parent.kind;
  out.params.mode = parent.mode;
  out.params.layout = parent.layout;
  out.params.critic = parent.critic;

  Network& actor = out.params.actor;
  actor.gat = parent.actor.gat;
  actor.hidden = parent.actor.hidden;
  const OutputHead& ph = parent.actor.head;
  OutputHead& head = actor.head;
  const std::size_t parent_acts = parent.kind == ControllerKind::Gat
                                      ? ph.keys.size()
                                      : static_cast<std::size_t>(std::count_if(ph.keys.begin(), ph.keys.end(),
                                                                               [](const ActuatorKey& k) { return !k.empty(); }));

  if (parent.kind == ControllerKind::Gat) {
    const auto k = static_cast<Eigen::Index>(child.actuator_keys.size());
    head.keys = child.actuator_keys;
    head.weight.resize(k, kHiddenWidth);
    head.bias.resize(1, k);
    head.log_std.resize(1, k);
    for (Eigen::Index r = 0; r < k; ++r) {
      if (const auto& src = corr.actuator_map[static_cast<std::size_t>(r)]) {
        head.weight.row(r) = ph.weight.row(*src);
        head.bias(0, r) = ph.bias(0, *src);
        head.log_std(0, r) = ph.log_std(0, *src);
        out.stats.matched += 1;
      } else {
        head.weight.row(r) = fresh_output_row(rng);
        head.bias(0, r) = 0.0;
        head.log_std(0, r) = kInitLogStd;
        out.stats.added += 1;
      }
    }
  } else {
    head = ph;
    head.keys = slot_keys(child.actuator_keys, parent.layout);
    for (std::size_t s = 0; s < head.keys.size(); ++s) {
      const auto r = static_cast<Eigen::Index>(s);
      if (head.keys[s] == ph.keys[s]) {
        if (!head.keys[s].empty()) out.stats.matched += 1;
        continue;
      }
      head.weight.row(r) = fresh_output_row(rng);
      head.bias(0, r) = 0.0;
      head.log_std(0, r) = kInitLogStd;
      if (!head.keys[s].empty()) out.stats.added += 1;
    }
  }
  out.stats.removed = static_cast<int>(parent_acts) - out.stats.matched;
  return out;
}

inline Inherited map_weights(const PolicyParams& parent, const GraphTopology& parent_graph,
                             const GraphTopology& child_graph, Rng& rng) {
  return map_weights(parent, match(parent_graph, child_graph), child_graph, rng);
}

}  // namespace vsr
