#pragma once

// Deterministic 2D mass-spring simulator for voxel robots.
//
// Each non-empty voxel contributes its four corner vertices (shared with
// neighbours) and six springs: four edges and two diagonals. Shared edges are
// merged into one spring. Integration is semi-implicit Euler, run as
// `substeps` sub-steps of dt / substeps per control step.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vsr/keys.hpp"
#include "vsr/morpho.hpp"

namespace vsr {

using Vec2 = Eigen::Vector2d;

struct SimParams {
  double voxel_size = 0.1;   // m
  double voxel_mass = 0.25;  // kg
  double stiffness_rigid = 4000.0;
  double stiffness_soft = 800.0;
  double stiffness_actuator = 1500.0;
  double damping = 2.0;      // N s / m, per spring
  double friction = 0.8;
  double gravity = 9.8;
  double dt = 0.01;          // control step, s
  int substeps = 10;
  double actuation_gain = 0.5;
  double min_rest_scale = 0.6;
  double max_rest_scale = 1.6;
  double contact_stiffness = 2000.0;  // robot/box penalty, N/m
  double box_gap = 0.5;               // voxels between robot and box
};

/// Visits every floating-point field with its config name. substeps is the
/// only integer field and is handled by callers.
template <typename Params, typename Fn>
void for_each_field(Params& p, Fn&& fn) {
  fn("voxel_size", p.voxel_size);
  fn("voxel_mass", p.voxel_mass);
  fn("stiffness_rigid", p.stiffness_rigid);
  fn("stiffness_soft", p.stiffness_soft);
  fn("stiffness_actuator", p.stiffness_actuator);
  fn("damping", p.damping);
  fn("friction", p.friction);
  fn("gravity", p.gravity);
  fn("dt", p.dt);
  fn("actuation_gain", p.actuation_gain);
  fn("min_rest_scale", p.min_rest_scale);
  fn("max_rest_scale", p.max_rest_scale);
  fn("contact_stiffness", p.contact_stiffness);
  fn("box_gap", p.box_gap);
}

enum class TaskKind { WalkerLite, PusherLite };

inline std::string to_string(TaskKind t) {
  return t == TaskKind::WalkerLite ? "WalkerLite" : "PusherLite";
}

inline std::optional<TaskKind> parse_task(std::string_view s) {
  if (s == "WalkerLite" || s == "walker" || s == "walker-lite") return TaskKind::WalkerLite;
  if (s == "PusherLite" || s == "pusher" || s == "pusher-lite") return TaskKind::PusherLite;
  return std::nullopt;
}

struct TaskSpec {
  TaskKind kind = TaskKind::WalkerLite;
  int episode_length = 256;
};

struct PointMass {
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  double mass = 0.0;
};

enum class SpringAxis { Horizontal, Vertical, Diagonal };

struct Spring {
  int a = 0;
  int b = 0;
  double rest_length = 0.0;
  double stiffness = 0.0;
  double damping = 0.0;
  SpringAxis axis = SpringAxis::Diagonal;
  std::array<int, 2> actuators{-1, -1};  // owning actuator indices, -1 if unused
};

/// A drawn voxel: grid cell, material and its corner vertex ids (TL, TR, BR, BL).
struct VoxelCell {
  int col = 0;
  int row = 0;
  VoxelType type = VoxelType::Empty;
  std::array<int, 4> vertices{};
};

struct RobotBody {
  std::vector<PointMass> masses;
  std::vector<Spring> springs;
  std::vector<ActuatorKey> actuators;           // row-major grid order
  std::vector<LatticeKey> vertex_keys;          // parallel to masses
  std::vector<std::array<double, 4>> vertex_types;  // normalized histogram of incident types 1..4
  std::vector<Vec2> rest_positions;
  std::vector<VoxelCell> voxels;
};

/// Rigid one-voxel block used by PusherLite.
struct Block {
  std::vector<PointMass> masses;
  std::vector<Spring> springs;
};

struct SimState {
  RobotBody body;
  std::optional<Block> box;
  TaskKind task = TaskKind::WalkerLite;
  int steps = 0;
  bool terminal = false;
  bool failed = false;
};

/// Global features (4) plus per-node features (N x 8).
struct Observation {
  std::array<double, 4> global{};
  Eigen::Matrix<double, Eigen::Dynamic, 8, Eigen::RowMajor> nodes;
};

inline double voxel_stiffness(VoxelType t, const SimParams& p) {
  switch (t) {
    case VoxelType::Rigid: return p.stiffness_rigid;
    case VoxelType::Soft: return p.stiffness_soft;
    case VoxelType::HorizontalActuator:
    case VoxelType::VerticalActuator: return p.stiffness_actuator;
    case VoxelType::Empty: break;
  }
  return 0.0;
}

inline RobotBody build_body(const MorphGenome& g, const SimParams& p = {}) {
  if (auto v = validate(g); !v) throw std::invalid_argument("build_body: invalid genome (" + v.reason + ")");
  const int W = g.width(), H = g.height();
  const double s = p.voxel_size;
  RobotBody body;

  std::vector<int> vid(static_cast<std::size_t>((W + 1) * (H + 1)), -1);
  auto lattice = [&](int c, int r) -> int& { return vid[static_cast<std::size_t>(r * (W + 1) + c)]; };
  auto touched = [&](int c, int r) {
    for (int dr = -1; dr <= 0; ++dr)
      for (int dc = -1; dc <= 0; ++dc)
        if (g.contains(c + dc, r + dr) && g.at(c + dc, r + dr) != VoxelType::Empty) return true;
    return false;
  };

  int lowest_row = 0;
  for (int r = 0; r <= H; ++r)
    for (int c = 0; c <= W; ++c)
      if (touched(c, r)) lowest_row = std::max(lowest_row, r);

  for (int r = 0; r <= H; ++r) {
    for (int c = 0; c <= W; ++c) {
      if (!touched(c, r)) continue;
      lattice(c, r) = static_cast<int>(body.masses.size());
      PointMass m;
      m.position = Vec2(c * s, (lowest_row - r) * s);
      body.masses.push_back(m);
      body.vertex_keys.push_back({c, r});
      body.vertex_types.push_back({0, 0, 0, 0});
    }
  }

  struct Pending {
    Spring spring;
    double stiffness_sum = 0.0;
    int owners = 0;
  };
  std::map<std::pair<int, int>, std::size_t> spring_index;
  std::vector<Pending> pending;
  auto add_spring = [&](int a, int b, SpringAxis axis, double k, int actuator) {
    auto key = std::minmax(a, b);
    auto [it, inserted] = spring_index.try_emplace({key.first, key.second}, pending.size());
    if (inserted) {
      Pending pd;
      pd.spring.a = key.first;
      pd.spring.b = key.second;
      pd.spring.axis = axis;
      pd.spring.damping = p.damping;
      pd.spring.rest_length = (body.masses[static_cast<std::size_t>(b)].position -
                               body.masses[static_cast<std::size_t>(a)].position).norm();
      pending.push_back(pd);
    }
    Pending& pd = pending[it->second];
    pd.stiffness_sum += k;
    pd.owners += 1;
    if (actuator >= 0) {
      auto& slots = pd.spring.actuators;
      (slots[0] < 0 ? slots[0] : slots[1]) = actuator;
    }
  };

  std::vector<double> counts(body.masses.size() * 4, 0.0);
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      const VoxelType t = g.at(c, r);
      if (t == VoxelType::Empty) continue;
      const int tl = lattice(c, r), tr = lattice(c + 1, r), br = lattice(c + 1, r + 1), bl = lattice(c, r + 1);
      const double k = voxel_stiffness(t, p);
      int act = -1;
      if (is_actuator(t)) {
        act = static_cast<int>(body.actuators.size());
        body.actuators.push_back({c, r, t});
      }
      const int h_act = t == VoxelType::HorizontalActuator ? act : -1;
      const int v_act = t == VoxelType::VerticalActuator ? act : -1;
      add_spring(tl, tr, SpringAxis::Horizontal, k, h_act);
      add_spring(bl, br, SpringAxis::Horizontal, k, h_act);
      add_spring(tl, bl, SpringAxis::Vertical, k, v_act);
      add_spring(tr, br, SpringAxis::Vertical, k, v_act);
      add_spring(tl, br, SpringAxis::Diagonal, k, -1);
      add_spring(tr, bl, SpringAxis::Diagonal, k, -1);

      for (int v : {tl, tr, br, bl}) {
        body.masses[static_cast<std::size_t>(v)].mass += p.voxel_mass / 4.0;
        counts[static_cast<std::size_t>(v) * 4 + static_cast<std::size_t>(voxel_code(t) - 1)] += 1.0;
      }
      body.voxels.push_back({c, r, t, {tl, tr, br, bl}});
    }
  }
  for (auto& pd : pending) {
    pd.spring.stiffness = pd.stiffness_sum / pd.owners;
    body.springs.push_back(pd.spring);
  }
  for (std::size_t v = 0; v < body.masses.size(); ++v) {
    double total = 0.0;
    for (int k = 0; k < 4; ++k) total += counts[v * 4 + static_cast<std::size_t>(k)];
    for (int k = 0; k < 4; ++k) body.vertex_types[v][static_cast<std::size_t>(k)] = counts[v * 4 + static_cast<std::size_t>(k)] / total;
    body.rest_positions.push_back(body.masses[v].position);
  }
  return body;
}

inline Vec2 center_of_mass(std::span<const PointMass> masses) {
  Vec2 acc = Vec2::Zero();
  double total = 0.0;
  for (const auto& m : masses) {
    acc += m.mass * m.position;
    total += m.mass;
  }
  return total > 0.0 ? Vec2(acc / total) : Vec2::Zero();
}

inline Vec2 com_velocity(std::span<const PointMass> masses) {
  Vec2 acc = Vec2::Zero();
  double total = 0.0;
  for (const auto& m : masses) {
    acc += m.mass * m.velocity;
    total += m.mass;
  }
  return total > 0.0 ? Vec2(acc / total) : Vec2::Zero();
}

inline Block make_block(double left, const SimParams& p) {
  const double s = p.voxel_size;
  Block b;
  const Vec2 corners[4] = {{left, s}, {left + s, s}, {left + s, 0.0}, {left, 0.0}};  // TL TR BR BL
  for (const auto& c : corners) b.masses.push_back({c, Vec2::Zero(), p.voxel_mass / 4.0});
  auto spring = [&](int a, int c, SpringAxis axis) {
    Spring sp;
    sp.a = a;
    sp.b = c;
    sp.axis = axis;
    sp.stiffness = p.stiffness_rigid;
    sp.damping = p.damping;
    sp.rest_length = (b.masses[static_cast<std::size_t>(c)].position - b.masses[static_cast<std::size_t>(a)].position).norm();
    b.springs.push_back(sp);
  };
  spring(0, 1, SpringAxis::Horizontal);
  spring(3, 2, SpringAxis::Horizontal);
  spring(0, 3, SpringAxis::Vertical);
  spring(1, 2, SpringAxis::Vertical);
  spring(0, 2, SpringAxis::Diagonal);
  spring(1, 3, SpringAxis::Diagonal);
  return b;
}

inline SimState make_state(const MorphGenome& g, TaskKind task, const SimParams& p = {}) {
  SimState st;
  st.body = build_body(g, p);
  st.task = task;
  if (task == TaskKind::PusherLite) {
    double right = 0.0;
    for (const auto& m : st.body.masses) right = std::max(right, m.position.x());
    st.box = make_block(right + p.box_gap * p.voxel_size, p);
  }
  return st;
}

/// Rest length of a spring under the given actions (empty span = all zero).
inline double effective_rest_length(const Spring& sp, std::span<const double> actions, const SimParams& p) {
  if (sp.actuators[0] < 0 || actions.empty()) return sp.rest_length;
  double scale = 0.0;
  int n = 0;
  for (int a : sp.actuators) {
    if (a < 0) continue;
    const double u = std::clamp(actions[static_cast<std::size_t>(a)], -1.0, 1.0);
    scale += 1.0 + p.actuation_gain * u;
    ++n;
  }
  return sp.rest_length * std::clamp(scale / n, p.min_rest_scale, p.max_rest_scale);
}

namespace detail {

inline void accumulate_springs(std::span<const PointMass> ms, std::span<const Spring> springs,
                               std::span<const double> actions, const SimParams& p, std::vector<Vec2>& force) {
  for (const auto& sp : springs) {
    const auto& a = ms[static_cast<std::size_t>(sp.a)];
    const auto& b = ms[static_cast<std::size_t>(sp.b)];
    const Vec2 d = b.position - a.position;
    const double len = d.norm();
    if (len < 1e-12) continue;
    const Vec2 n = d / len;
    const double rest = effective_rest_length(sp, actions, p);
    const double f = sp.stiffness * (len - rest) + sp.damping * (b.velocity - a.velocity).dot(n);
    force[static_cast<std::size_t>(sp.a)] += f * n;
    force[static_cast<std::size_t>(sp.b)] -= f * n;
  }
}

inline void integrate(std::span<PointMass> ms, std::span<const Vec2> force, double h, const SimParams& p) {
  for (std::size_t i = 0; i < ms.size(); ++i) {
    auto& m = ms[i];
    m.velocity += h * force[i] / m.mass;
    if (m.position.y() <= 0.0 && m.velocity.y() < 0.0) {
      const double dvn = -m.velocity.y();
      m.velocity.y() = 0.0;
      const double vt = m.velocity.x();
      const double dvt = std::min(std::abs(vt), p.friction * dvn);
      m.velocity.x() -= std::copysign(dvt, vt);
    }
    m.position += h * m.velocity;
    if (m.position.y() < 0.0) {
      m.position.y() = 0.0;
      if (m.velocity.y() < 0.0) m.velocity.y() = 0.0;
    }
  }
}

inline bool all_finite(std::span<const PointMass> ms) {
  for (const auto& m : ms)
    if (!m.position.allFinite() || !m.velocity.allFinite()) return false;
  return true;
}

}  // namespace detail

/// Advances one control step. Returns the task reward for the step.
inline double step(SimState& st, std::span<const double> actions, const SimParams& p = {}) {
  if (!actions.empty() && actions.size() != st.body.actuators.size()) {
    throw std::invalid_argument("step: action count does not match actuator count");
  }
  if (p.dt <= 0.0 || p.substeps <= 0) throw std::invalid_argument("step: dt and substeps must be positive");
  if (st.terminal) return 0.0;

  auto tracked = [&]() {
    return st.task == TaskKind::PusherLite && st.box ? center_of_mass(st.box->masses).x()
                                                     : center_of_mass(st.body.masses).x();
  };
  const double before = tracked();
  const double h = p.dt / p.substeps;
  auto& robot = st.body.masses;
  std::vector<Vec2> f_robot(robot.size());
  std::vector<Vec2> f_box(st.box ? st.box->masses.size() : 0);

  for (int sub = 0; sub < p.substeps; ++sub) {
    for (std::size_t i = 0; i < robot.size(); ++i) f_robot[i] = Vec2(0.0, -p.gravity * robot[i].mass);
    detail::accumulate_springs(robot, st.body.springs, actions, p, f_robot);
    if (st.box) {
      auto& bm = st.box->masses;
      for (std::size_t i = 0; i < bm.size(); ++i) f_box[i] = Vec2(0.0, -p.gravity * bm[i].mass);
      detail::accumulate_springs(bm, st.box->springs, {}, p, f_box);

      double x0 = bm[0].position.x(), x1 = x0, y0 = bm[0].position.y(), y1 = y0;
      for (const auto& m : bm) {
        x0 = std::min(x0, m.position.x());
        x1 = std::max(x1, m.position.x());
        y0 = std::min(y0, m.position.y());
        y1 = std::max(y1, m.position.y());
      }
      for (std::size_t i = 0; i < robot.size(); ++i) {
        const Vec2& q = robot[i].position;
        if (q.x() <= x0 || q.x() >= x1 || q.y() <= y0 || q.y() >= y1) continue;
        const double depth[4] = {q.x() - x0, x1 - q.x(), q.y() - y0, y1 - q.y()};
        const Vec2 dir[4] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
        const auto k = static_cast<std::size_t>(std::min_element(depth, depth + 4) - depth);
        const Vec2 push = p.contact_stiffness * depth[k] * dir[k];
        f_robot[i] += push;
        for (auto& fb : f_box) fb -= push / static_cast<double>(f_box.size());
      }
      detail::integrate(bm, f_box, h, p);
    }
    detail::integrate(robot, f_robot, h, p);
  }

  st.steps += 1;
  if (!detail::all_finite(robot) || (st.box && !detail::all_finite(st.box->masses))) {
    st.terminal = true;
    st.failed = true;
    return 0.0;
  }
  return tracked() - before;
}

inline double kinetic_energy(const SimState& st) {
  double e = 0.0;
  for (const auto& m : st.body.masses) e += 0.5 * m.mass * m.velocity.squaredNorm();
  if (st.box)
    for (const auto& m : st.box->masses) e += 0.5 * m.mass * m.velocity.squaredNorm();
  return e;
}

/// Body rotation relative to its rest shape: the angle of the least-squares
/// rotation mapping rest offsets onto current offsets (both about the COM).
inline double body_orientation(const RobotBody& body) {
  const Vec2 com = center_of_mass(body.masses);
  Vec2 rest_com = Vec2::Zero();
  double total = 0.0;
  for (std::size_t i = 0; i < body.masses.size(); ++i) {
    rest_com += body.masses[i].mass * body.rest_positions[i];
    total += body.masses[i].mass;
  }
  rest_com /= total;
  double cross = 0.0, dot = 0.0;
  for (std::size_t i = 0; i < body.masses.size(); ++i) {
    const Vec2 r0 = body.rest_positions[i] - rest_com;
    const Vec2 r = body.masses[i].position - com;
    const double w = body.masses[i].mass;
    cross += w * (r0.x() * r.y() - r0.y() * r.x());
    dot += w * r0.dot(r);
  }
  if (std::abs(cross) < 1e-15 && std::abs(dot) < 1e-15) return 0.0;
  return std::atan2(cross, dot);
}

inline Observation observe(const SimState& st) {
  const auto& body = st.body;
  const Vec2 com = center_of_mass(body.masses);
  const Vec2 vel = com_velocity(body.masses);
  Observation obs;
  obs.global[0] = vel.x();
  obs.global[1] = vel.y();
  obs.global[2] = body_orientation(body);
  obs.global[3] = st.task == TaskKind::PusherLite && st.box ? center_of_mass(st.box->masses).x() - com.x() : com.x();
  obs.nodes.resize(static_cast<Eigen::Index>(body.masses.size()), 8);
  for (std::size_t i = 0; i < body.masses.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const auto& m = body.masses[i];
    obs.nodes(r, 0) = m.position.x() - com.x();
    obs.nodes(r, 1) = m.position.y() - com.y();
    obs.nodes(r, 2) = m.velocity.x();
    obs.nodes(r, 3) = m.velocity.y();
    for (int k = 0; k < 4; ++k) obs.nodes(r, 4 + k) = body.vertex_types[i][static_cast<std::size_t>(k)];
  }
  return obs;
}

}  // namespace vsr
