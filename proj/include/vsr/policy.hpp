#pragma once

// Actor/critic networks.
//
// GAT controllers: one single-head attention round over the robot graph,
// mean pooling over nodes, tanh MLP hidden layers, and an output head with
// one row per actuator (actor) or a single row (critic).
//
// MLP baseline: the observation is flattened and zero-padded to a width that
// covers the largest morphology in the design space; the actor head has one
// row per actuator slot and is truncated to the robot's actuator count.

#include <Eigen/Core>
#include <Eigen/QR>

#include <algorithm>
#include <charconv>
#include <cstring>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vsr/autodiff.hpp"
#include "vsr/graph.hpp"
#include "vsr/rng.hpp"

namespace vsr {

inline constexpr int kGatWidth = 32;
inline constexpr int kHiddenWidth = 64;
inline constexpr double kLeakySlope = 0.2;
inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kInitLogStd = -0.5;
inline const double kHiddenGain = std::numbers::sqrt2;
inline const double kOutputGain = 0.01 * kHiddenGain;

enum class ControllerKind { Gat, Mlp };

inline std::string to_string(ControllerKind k) { return k == ControllerKind::Gat ? "gat" : "mlp"; }

struct Dense {
  Mat weight;  // in x out
  Mat bias;    // 1 x out
};

struct GatLayer {
  Mat w_self;   // F x H
  Mat w_edge;   // 2 x H
  Mat att_dst;  // H x 1, applied to x_dst W_self
  Mat att_msg;  // H x 1, applied to the message
};

/// Final layer. weight row r belongs to keys[r]. log_std is empty for critics.
struct OutputHead {
  std::vector<ActuatorKey> keys;
  Mat weight;   // rows x kHiddenWidth
  Mat bias;     // 1 x rows
  Mat log_std;  // 1 x rows, actor only
};

struct Network {
  std::optional<GatLayer> gat;
  std::vector<Dense> hidden;
  OutputHead head;
};

/// Fixed MLP-baseline sizes derived from the design-space bounding box.
struct MlpLayout {
  int max_nodes = 36;
  int action_slots = 25;

  static MlpLayout for_design_space(int width, int height) { return {(width + 1) * (height + 1), width * height}; }
  int input_width() const { return kGlobalFeatures + kNodeFeatures * max_nodes; }
  bool operator==(const MlpLayout&) const = default;
};

struct PolicyParams {
  ControllerKind kind = ControllerKind::Gat;
  FeatureMode mode = FeatureMode::LocalTransfer;
  MlpLayout layout;
  Network actor;
  Network critic;
};

// -- parameter enumeration -------------------------------------------------

template <typename NetT, typename Fn>
void for_each_param(NetT& net, Fn&& fn) {
  if (net.gat) {
    fn(net.gat->w_self);
    fn(net.gat->w_edge);
    fn(net.gat->att_dst);
    fn(net.gat->att_msg);
  }
  for (auto& d : net.hidden) {
    fn(d.weight);
    fn(d.bias);
  }
  fn(net.head.weight);
  fn(net.head.bias);
  if (net.head.log_std.size() > 0) fn(net.head.log_std);
}

inline std::vector<Mat*> parameters(PolicyParams& p) {
  std::vector<Mat*> out;
  for_each_param(p.actor, [&](Mat& m) { out.push_back(&m); });
  for_each_param(p.critic, [&](Mat& m) { out.push_back(&m); });
  return out;
}

inline std::vector<const Mat*> parameters(const PolicyParams& p) {
  std::vector<const Mat*> out;
  for_each_param(p.actor, [&](const Mat& m) { out.push_back(&m); });
  for_each_param(p.critic, [&](const Mat& m) { out.push_back(&m); });
  return out;
}

/// Exact equality of structure, keys and every parameter bit.
inline bool identical(const PolicyParams& a, const PolicyParams& b) {
  if (a.kind != b.kind || a.mode != b.mode || !(a.layout == b.layout)) return false;
  if (a.actor.head.keys != b.actor.head.keys || a.critic.head.keys != b.critic.head.keys) return false;
  auto pa = parameters(a);
  auto pb = parameters(b);
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->rows() != pb[i]->rows() || pa[i]->cols() != pb[i]->cols()) return false;
    if (std::memcmp(pa[i]->data(), pb[i]->data(), sizeof(double) * static_cast<std::size_t>(pa[i]->size())) != 0)
      return false;
  }
  return true;
}

// -- initialization --------------------------------------------------------

/// Random matrix with orthonormal rows or columns (whichever is fewer), times gain.
inline Mat orthogonal(int rows, int cols, double gain, Rng& rng) {
  const int big = std::max(rows, cols), small = std::min(rows, cols);
  Mat a(big, small);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  Eigen::HouseholderQR<Mat> qr(a);
  Mat q = qr.householderQ() * Mat::Identity(big, small);
  const Mat r = qr.matrixQR();
  for (int k = 0; k < small; ++k)
    if (r(k, k) < 0.0) q.col(k) *= -1.0;
  if (rows < cols) q.transposeInPlace();
  return q * gain;
}

inline Mat fresh_output_row(Rng& rng) { return orthogonal(1, kHiddenWidth, kOutputGain, rng); }

inline Network init_network(ControllerKind kind, int input_width, std::vector<ActuatorKey> keys, bool actor, Rng& rng) {
  Network net;
  int width = input_width;
  if (kind == ControllerKind::Gat) {
    GatLayer g;
    g.w_self = orthogonal(kGraphFeatures, kGatWidth, 1.0, rng);
    g.w_edge = orthogonal(2, kGatWidth, 1.0, rng);
    g.att_dst = orthogonal(kGatWidth, 1, 1.0, rng);
    g.att_msg = orthogonal(kGatWidth, 1, 1.0, rng);
    net.gat = std::move(g);
    width = kGatWidth;
  }
  for (int layer = 0; layer < 2; ++layer) {
    net.hidden.push_back({orthogonal(width, kHiddenWidth, kHiddenGain, rng), Mat::Zero(1, kHiddenWidth)});
    width = kHiddenWidth;
  }
  const int rows = actor ? static_cast<int>(keys.size()) : 1;
  net.head.keys = actor ? std::move(keys) : std::vector<ActuatorKey>{};
  net.head.weight = rows > 0 ? orthogonal(rows, kHiddenWidth, actor ? kOutputGain : 1.0, rng) : Mat(0, kHiddenWidth);
  net.head.bias = Mat::Zero(1, rows);
  if (actor) net.head.log_std = Mat::Constant(1, rows, kInitLogStd);
  return net;
}

/// Actor head keys for an MLP: actuator keys padded with empty slots.
inline std::vector<ActuatorKey> slot_keys(const std::vector<ActuatorKey>& keys, const MlpLayout& layout) {
  if (static_cast<int>(keys.size()) > layout.action_slots)
    throw std::invalid_argument("actuator count exceeds the MLP action slots");
  std::vector<ActuatorKey> out(keys);
  out.resize(static_cast<std::size_t>(layout.action_slots));
  return out;
}

// -- batched forward on a tape ----------------------------------------------

/// Index arrays for B copies of one topology stacked into a single graph.
struct BatchIndex {
  int batch = 0;
  int nodes = 0;
  std::vector<int> src;
  std::vector<int> dst;
  std::vector<int> in_offsets;
  std::vector<int> pool_offsets;
  Mat edge_features;

  static BatchIndex build(const GraphTopology& t, int batch) {
    BatchIndex b;
    b.batch = batch;
    b.nodes = t.node_count();
    const int n = t.node_count(), e = t.edge_count();
    b.src.reserve(static_cast<std::size_t>(batch * e));
    b.dst.reserve(static_cast<std::size_t>(batch * e));
    b.edge_features.resize(static_cast<Eigen::Index>(batch) * e, 2);
    b.in_offsets.push_back(0);
    for (int s = 0; s < batch; ++s) {
      for (int k = 0; k < e; ++k) {
        b.src.push_back(t.src[static_cast<std::size_t>(k)] + s * n);
        b.dst.push_back(t.dst[static_cast<std::size_t>(k)] + s * n);
      }
      b.edge_features.middleRows(static_cast<Eigen::Index>(s) * e, e) = t.edge_features;
      for (int j = 1; j <= n; ++j) b.in_offsets.push_back(t.in_offsets[static_cast<std::size_t>(j)] + s * e);
    }
    for (int s = 0; s <= batch; ++s) b.pool_offsets.push_back(s * n);
    return b;
  }
};

/// GAT round on stacked graphs. x: (B*N) x F. Returns (B*N) x H embeddings.
inline ad::Var gat_layer_forward(ad::Tape& tape, const GatLayer& g, const BatchIndex& idx, ad::Var x,
                                 std::vector<ad::Var>* leaves, bool requires_grad) {
  auto w_self = tape.leaf(g.w_self, requires_grad);
  auto w_edge = tape.leaf(g.w_edge, requires_grad);
  auto att_dst = tape.leaf(g.att_dst, requires_grad);
  auto att_msg = tape.leaf(g.att_msg, requires_grad);
  if (leaves) leaves->insert(leaves->end(), {w_self, w_edge, att_dst, att_msg});

  auto xw = ad::matmul(x, w_self);
  auto edges = tape.constant(idx.edge_features);
  auto msg = ad::leaky_relu(ad::add(ad::gather_rows(xw, idx.src), ad::matmul(edges, w_edge)), kLeakySlope);
  auto logits = ad::add(ad::matmul(ad::gather_rows(xw, idx.dst), att_dst), ad::matmul(msg, att_msg));
  auto alpha = ad::segment_softmax(logits, idx.in_offsets);
  return ad::tanh(ad::scatter_add_rows(ad::mul(msg, alpha), idx.dst, static_cast<Eigen::Index>(idx.batch) * idx.nodes));
}

/// Everything up to (not including) the output head. Returns B x kHiddenWidth.
inline ad::Var trunk_forward(ad::Tape& tape, const Network& net, const Mat& input, const BatchIndex* idx,
                             std::vector<ad::Var>* leaves, bool requires_grad) {
  ad::Var h = tape.constant(input);
  if (net.gat) {
    if (!idx) throw std::invalid_argument("GAT forward needs graph indices");
    h = ad::segment_mean_rows(gat_layer_forward(tape, *net.gat, *idx, h, leaves, requires_grad), idx->pool_offsets);
  }
  for (const auto& d : net.hidden) {
    auto w = tape.leaf(d.weight, requires_grad);
    auto b = tape.leaf(d.bias, requires_grad);
    if (leaves) leaves->insert(leaves->end(), {w, b});
    h = ad::tanh(ad::add(ad::matmul(h, w), b));
  }
  return h;
}

struct ActorOutput {
  ad::Var mean;     // B x K
  ad::Var log_std;  // B x K
};

/// Input matrix for a batch of observations: stacked node features for GAT,
/// one padded flat row per observation for MLP.
inline Mat flatten_observation(const Observation& obs, const MlpLayout& layout) {
  const int width = layout.input_width();
  const auto used = kGlobalFeatures + kNodeFeatures * obs.nodes.rows();
  if (used > width) throw std::invalid_argument("observation exceeds the MLP pad width");
  Mat row = Mat::Zero(1, width);
  for (int k = 0; k < kGlobalFeatures; ++k) row(0, k) = obs.global[static_cast<std::size_t>(k)];
  for (Eigen::Index r = 0; r < obs.nodes.rows(); ++r)
    row.block(0, kGlobalFeatures + kNodeFeatures * r, 1, kNodeFeatures) = obs.nodes.row(r);
  return row;
}

inline Mat batch_input(const PolicyParams& p, std::span<const Observation* const> obs) {
  if (obs.empty()) throw std::invalid_argument("empty observation batch");
  if (p.kind == ControllerKind::Gat) {
    const auto n = obs.front()->nodes.rows();
    Mat x(n * static_cast<Eigen::Index>(obs.size()), kGraphFeatures);
    for (std::size_t s = 0; s < obs.size(); ++s)
      x.middleRows(static_cast<Eigen::Index>(s) * n, n) = node_features(*obs[s], p.mode);
    return x;
  }
  Mat x(static_cast<Eigen::Index>(obs.size()), p.layout.input_width());
  for (std::size_t s = 0; s < obs.size(); ++s) x.row(static_cast<Eigen::Index>(s)) = flatten_observation(*obs[s], p.layout);
  return x;
}

inline void check_actor_keys(const PolicyParams& p, const std::vector<ActuatorKey>& keys) {
  const auto& head = p.actor.head.keys;
  if (p.kind == ControllerKind::Gat) {
    if (head != keys) throw std::invalid_argument("actor output rows do not match the graph's actuator keys");
    return;
  }
  if (keys.size() > head.size() || !std::equal(keys.begin(), keys.end(), head.begin()))
    throw std::invalid_argument("MLP actor slots do not match the robot's actuator keys");
}

inline ActorOutput actor_forward_batch(ad::Tape& tape, const PolicyParams& p, const GraphTopology& topo,
                                       const Mat& input, int batch, std::vector<ad::Var>* leaves,
                                       bool requires_grad) {
  check_actor_keys(p, topo.actuator_keys);
  std::optional<BatchIndex> idx;
  if (p.kind == ControllerKind::Gat) idx = BatchIndex::build(topo, batch);
  auto h = trunk_forward(tape, p.actor, input, idx ? &*idx : nullptr, leaves, requires_grad);
  auto w = tape.leaf(p.actor.head.weight, requires_grad);
  auto b = tape.leaf(p.actor.head.bias, requires_grad);
  auto ls = tape.leaf(p.actor.head.log_std, requires_grad);
  if (leaves) leaves->insert(leaves->end(), {w, b, ls});
  auto mean = ad::tanh(ad::add(ad::matmul(h, ad::transpose(w)), b));
  auto log_std = ad::clamp(ad::broadcast_rows(ls, batch), kLogStdMin, kLogStdMax);
  const auto k = static_cast<Eigen::Index>(topo.actuator_keys.size());
  if (p.kind == ControllerKind::Mlp && k != mean.cols()) {
    mean = ad::slice_cols(mean, 0, k);
    log_std = ad::slice_cols(log_std, 0, k);
  }
  return {mean, log_std};
}

inline ad::Var critic_forward_batch(ad::Tape& tape, const PolicyParams& p, const GraphTopology& topo,
                                    const Mat& input, int batch, std::vector<ad::Var>* leaves, bool requires_grad) {
  std::optional<BatchIndex> idx;
  if (p.kind == ControllerKind::Gat) idx = BatchIndex::build(topo, batch);
  auto h = trunk_forward(tape, p.critic, input, idx ? &*idx : nullptr, leaves, requires_grad);
  auto w = tape.leaf(p.critic.head.weight, requires_grad);
  auto b = tape.leaf(p.critic.head.bias, requires_grad);
  if (leaves) leaves->insert(leaves->end(), {w, b});
  return ad::add(ad::matmul(h, ad::transpose(w)), b);
}

// -- single-sample API ------------------------------------------------------

struct ActionDistribution {
  std::vector<double> mean;
  std::vector<double> log_std;

  std::size_t size() const { return mean.size(); }
};

/// Node embeddings (N x H) of one graph.
inline Mat gat_forward(const GatLayer& g, const RobotGraph& graph) {
  if (graph.node_features.cols() != kGraphFeatures) throw std::invalid_argument("gat_forward: feature width mismatch");
  ad::Tape tape;
  const auto idx = BatchIndex::build(*graph.topology, 1);
  return gat_layer_forward(tape, g, idx, tape.constant(graph.node_features), nullptr, false).value();
}

inline Eigen::RowVectorXd pool(const Mat& embeddings) {
  if (embeddings.rows() < 1) throw std::invalid_argument("pool: no nodes");
  return embeddings.colwise().mean();
}

namespace detail {

inline ActionDistribution to_distribution(const ActorOutput& out) {
  ActionDistribution d;
  const Mat& m = out.mean.value();
  const Mat& s = out.log_std.value();
  d.mean.assign(m.data(), m.data() + m.cols());
  d.log_std.assign(s.data(), s.data() + s.cols());
  return d;
}

}  // namespace detail

inline ActionDistribution actor_forward(const PolicyParams& p, const RobotGraph& g) {
  if (p.kind != ControllerKind::Gat) throw std::invalid_argument("actor_forward expects a GAT policy");
  ad::Tape tape;
  return detail::to_distribution(actor_forward_batch(tape, p, *g.topology, g.node_features, 1, nullptr, false));
}

inline double critic_forward(const PolicyParams& p, const RobotGraph& g) {
  if (p.kind != ControllerKind::Gat) throw std::invalid_argument("critic_forward expects a GAT policy");
  ad::Tape tape;
  return critic_forward_batch(tape, p, *g.topology, g.node_features, 1, nullptr, false).scalar();
}

inline ActionDistribution mlp_actor_forward(const PolicyParams& p, const GraphTopology& topo, const Observation& obs) {
  if (p.kind != ControllerKind::Mlp) throw std::invalid_argument("mlp_actor_forward expects an MLP policy");
  ad::Tape tape;
  return detail::to_distribution(
      actor_forward_batch(tape, p, topo, flatten_observation(obs, p.layout), 1, nullptr, false));
}

inline double mlp_critic_forward(const PolicyParams& p, const GraphTopology& topo, const Observation& obs) {
  if (p.kind != ControllerKind::Mlp) throw std::invalid_argument("mlp_critic_forward expects an MLP policy");
  ad::Tape tape;
  return critic_forward_batch(tape, p, topo, flatten_observation(obs, p.layout), 1, nullptr, false).scalar();
}

struct PolicyOutput {
  ActionDistribution dist;
  double value = 0.0;
};

/// Actor and critic on one observation, for either controller kind.
inline PolicyOutput evaluate(const PolicyParams& p, const GraphTopology& topo, const Observation& obs) {
  const Observation* one[] = {&obs};
  const Mat x = batch_input(p, one);
  ad::Tape tape;
  PolicyOutput out;
  out.dist = detail::to_distribution(actor_forward_batch(tape, p, topo, x, 1, nullptr, false));
  out.value = critic_forward_batch(tape, p, topo, x, 1, nullptr, false).scalar();
  return out;
}

// -- diagonal Gaussian ------------------------------------------------------

inline const double kLog2Pi = std::log(2.0 * std::numbers::pi);

struct ActionSample {
  std::vector<double> raw;     // unclamped draw; log_prob refers to this
  std::vector<double> action;  // clamped to [-1, 1] for the simulator
  double log_prob = 0.0;
};

inline double log_prob(const ActionDistribution& d, std::span<const double> a) {
  if (a.size() != d.size()) throw std::invalid_argument("log_prob: action size mismatch");
  double lp = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double z = (a[i] - d.mean[i]) * std::exp(-d.log_std[i]);
    lp += -0.5 * z * z - d.log_std[i] - 0.5 * kLog2Pi;
  }
  return lp;
}

inline double entropy(const ActionDistribution& d) {
  double h = 0.0;
  for (double ls : d.log_std) h += 0.5 * (kLog2Pi + 1.0) + ls;
  return h;
}

inline ActionSample sample(const ActionDistribution& d, Rng& rng) {
  ActionSample s;
  s.raw.resize(d.size());
  s.action.resize(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    s.raw[i] = d.mean[i] + std::exp(d.log_std[i]) * rng.normal();
    s.action[i] = std::clamp(s.raw[i], -1.0, 1.0);
  }
  s.log_prob = log_prob(d, s.raw);
  return s;
}

/// Greedy action: the clamped mean.
inline std::vector<double> mode_action(const ActionDistribution& d) {
  std::vector<double> a(d.mean);
  for (auto& x : a) x = std::clamp(x, -1.0, 1.0);
  return a;
}

}  // namespace vsr
