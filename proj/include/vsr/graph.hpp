#pragma once

// Robot graphs: one node per point mass, edges between lattice-adjacent
// vertices (both directions) plus a self-loop on every node.

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "vsr/keys.hpp"
#include "vsr/sim.hpp"

namespace vsr {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kGlobalFeatures = 4;
inline constexpr int kNodeFeatures = 8;
inline constexpr int kGraphFeatures = kGlobalFeatures + kNodeFeatures;

enum class FeatureMode { GlobalTransfer, LocalTransfer };

inline std::string to_string(FeatureMode m) { return m == FeatureMode::GlobalTransfer ? "global" : "local"; }

/// Morphology-dependent part of a graph. Edges are sorted by destination, so
/// the incoming edges of node j occupy [in_offsets[j], in_offsets[j+1]).
struct GraphTopology {
  std::vector<LatticeKey> node_keys;
  std::vector<int> src;
  std::vector<int> dst;
  Mat edge_features;  // E x 2, lattice(dst) - lattice(src)
  std::vector<int> in_offsets;
  std::vector<ActuatorKey> actuator_keys;

  int node_count() const { return static_cast<int>(node_keys.size()); }
  int edge_count() const { return static_cast<int>(src.size()); }
};

struct RobotGraph {
  std::shared_ptr<const GraphTopology> topology;
  Mat node_features;  // N x kGraphFeatures

  int node_count() const { return topology->node_count(); }
  const std::vector<ActuatorKey>& actuator_keys() const { return topology->actuator_keys; }
};

/// Builds a topology from explicit keys. Used for the body-derived topology
/// and for synthetic graphs in tests.
inline std::shared_ptr<const GraphTopology> make_topology(std::vector<LatticeKey> nodes,
                                                          std::vector<ActuatorKey> actuators) {
  auto topo = std::make_shared<GraphTopology>();
  std::vector<std::pair<int, int>> edges;  // (dst, src)
  const auto n = static_cast<int>(nodes.size());
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const int dc = nodes[static_cast<std::size_t>(j)].col - nodes[static_cast<std::size_t>(i)].col;
      const int dr = nodes[static_cast<std::size_t>(j)].row - nodes[static_cast<std::size_t>(i)].row;
      if (std::abs(dc) + std::abs(dr) <= 1) edges.emplace_back(j, i);
    }
  }
  topo->edge_features.resize(static_cast<Eigen::Index>(edges.size()), 2);
  topo->in_offsets.assign(static_cast<std::size_t>(n) + 1, 0);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    auto [j, i] = edges[e];
    topo->src.push_back(i);
    topo->dst.push_back(j);
    const auto r = static_cast<Eigen::Index>(e);
    topo->edge_features(r, 0) = nodes[static_cast<std::size_t>(j)].col - nodes[static_cast<std::size_t>(i)].col;
    topo->edge_features(r, 1) = nodes[static_cast<std::size_t>(j)].row - nodes[static_cast<std::size_t>(i)].row;
    topo->in_offsets[static_cast<std::size_t>(j) + 1] += 1;
  }
  for (std::size_t j = 0; j < static_cast<std::size_t>(n); ++j) topo->in_offsets[j + 1] += topo->in_offsets[j];
  topo->node_keys = std::move(nodes);
  topo->actuator_keys = std::move(actuators);
  return topo;
}

inline std::shared_ptr<const GraphTopology> build_topology(const RobotBody& body) {
  return make_topology(body.vertex_keys, body.actuators);
}

/// Node features for the given observation. Local: [global | node i].
/// Global: [global | mean over nodes], identical on every row.
inline Mat node_features(const Observation& obs, FeatureMode mode) {
  const auto n = obs.nodes.rows();
  Mat x(n, kGraphFeatures);
  for (Eigen::Index r = 0; r < n; ++r)
    for (int k = 0; k < kGlobalFeatures; ++k) x(r, k) = obs.global[static_cast<std::size_t>(k)];
  if (mode == FeatureMode::LocalTransfer) {
    x.rightCols(kNodeFeatures) = obs.nodes;
  } else {
    const Eigen::Matrix<double, 1, kNodeFeatures> mean = obs.nodes.colwise().mean();
    x.rightCols(kNodeFeatures).rowwise() = mean;
  }
  return x;
}

inline RobotGraph build_graph(std::shared_ptr<const GraphTopology> topo, const Observation& obs, FeatureMode mode) {
  if (obs.nodes.rows() != topo->node_count()) throw std::invalid_argument("build_graph: observation does not match body");
  return {std::move(topo), node_features(obs, mode)};
}

inline RobotGraph build_graph(const RobotBody& body, const Observation& obs, FeatureMode mode) {
  return build_graph(build_topology(body), obs, mode);
}

/// Canonical text key: sorted node keys, sorted edge key pairs, actuator keys
/// in order. Features are excluded.
inline std::string graph_hash(const GraphTopology& t) {
  std::vector<LatticeKey> nodes = t.node_keys;
  std::sort(nodes.begin(), nodes.end());
  std::vector<std::pair<LatticeKey, LatticeKey>> edges;
  for (int e = 0; e < t.edge_count(); ++e) {
    edges.emplace_back(t.node_keys[static_cast<std::size_t>(t.src[static_cast<std::size_t>(e)])],
                       t.node_keys[static_cast<std::size_t>(t.dst[static_cast<std::size_t>(e)])]);
  }
  std::sort(edges.begin(), edges.end());
  std::ostringstream out;
  out << "N";
  for (const auto& k : nodes) out << ' ' << k.col << ',' << k.row;
  out << "|E";
  for (const auto& [a, b] : edges) out << ' ' << a.col << ',' << a.row << '>' << b.col << ',' << b.row;
  out << "|A";
  for (const auto& a : t.actuator_keys) out << ' ' << to_string(a);
  return out.str();
}

inline std::string graph_hash(const RobotGraph& g) { return graph_hash(*g.topology); }

/// Edge-list text for fixtures: "src_col,src_row dst_col,dst_row dx dy".
inline std::string dump_edges(const GraphTopology& t) {
  std::ostringstream out;
  for (int e = 0; e < t.edge_count(); ++e) {
    const auto& a = t.node_keys[static_cast<std::size_t>(t.src[static_cast<std::size_t>(e)])];
    const auto& b = t.node_keys[static_cast<std::size_t>(t.dst[static_cast<std::size_t>(e)])];
    out << a.col << ',' << a.row << ' ' << b.col << ',' << b.row << ' ' << t.edge_features(e, 0) << ' '
        << t.edge_features(e, 1) << '\n';
  }
  return out.str();
}

}  // namespace vsr
