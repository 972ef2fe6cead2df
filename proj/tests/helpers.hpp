#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "vsr/graph.hpp"
#include "vsr/morpho.hpp"
#include "vsr/rng.hpp"
#include "vsr/sim.hpp"

namespace testing_helpers {

using vsr::Mat;

inline Mat random_matrix(Eigen::Index rows, Eigen::Index cols, vsr::Rng& rng, double scale = 1.0) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline vsr::Observation random_observation(int nodes, vsr::Rng& rng) {
  vsr::Observation obs;
  for (auto& g : obs.global) g = rng.normal();
  obs.nodes.resize(nodes, vsr::kNodeFeatures);
  for (Eigen::Index i = 0; i < obs.nodes.size(); ++i) obs.nodes.data()[i] = rng.normal();
  return obs;
}

/// Up to max_nodes distinct lattice points in a 4x4 patch, plus a random
/// actuator list. Not necessarily a voxel body.
inline std::shared_ptr<const vsr::GraphTopology> random_topology(int max_nodes, vsr::Rng& rng) {
  std::vector<vsr::LatticeKey> all;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) all.push_back({c, r});
  for (std::size_t i = all.size(); i > 1; --i) std::swap(all[i - 1], all[rng.index(i)]);
  const int n = 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(max_nodes)));
  all.resize(static_cast<std::size_t>(n));
  std::vector<vsr::ActuatorKey> acts;
  const int k = 1 + static_cast<int>(rng.index(4));
  for (int i = 0; i < k; ++i)
    acts.push_back({i, 0, rng.bernoulli(0.5) ? vsr::VoxelType::HorizontalActuator : vsr::VoxelType::VerticalActuator});
  return vsr::make_topology(all, acts);
}

inline std::vector<int> random_permutation(int n, vsr::Rng& rng) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = p.size(); i > 1; --i) std::swap(p[i - 1], p[rng.index(i)]);
  return p;
}

}  // namespace testing_helpers
