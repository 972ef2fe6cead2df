#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "vsr/morpho.hpp"
#include "vsr/sim.hpp"

using namespace vsr;

namespace {

constexpr auto E = VoxelType::Empty;
constexpr auto R = VoxelType::Rigid;
constexpr auto S = VoxelType::Soft;
constexpr auto H = VoxelType::HorizontalActuator;
constexpr auto V = VoxelType::VerticalActuator;

SimState free_mass(double y0) {
  SimState st;
  PointMass m;
  m.position = Vec2(0.3, y0);
  m.mass = 0.1;
  st.body.masses.push_back(m);
  st.body.vertex_keys.push_back({0, 0});
  st.body.vertex_types.push_back({1, 0, 0, 0});
  st.body.rest_positions.push_back(m.position);
  return st;
}

bool same_state(const SimState& a, const SimState& b) {
  if (a.body.masses.size() != b.body.masses.size()) return false;
  for (std::size_t i = 0; i < a.body.masses.size(); ++i) {
    if (a.body.masses[i].position != b.body.masses[i].position) return false;
    if (a.body.masses[i].velocity != b.body.masses[i].velocity) return false;
  }
  return true;
}

}  // namespace

TEST(BuildBody, SingleVoxel) {
  auto body = build_body(MorphGenome(1, 1, {H}));
  EXPECT_EQ(body.masses.size(), 4u);
  EXPECT_EQ(body.springs.size(), 6u);
  ASSERT_EQ(body.actuators.size(), 1u);
  EXPECT_EQ(body.actuators[0], (ActuatorKey{0, 0, H}));
  double total = 0.0;
  for (const auto& m : body.masses) total += m.mass;
  EXPECT_DOUBLE_EQ(total, SimParams{}.voxel_mass);
}

TEST(BuildBody, TwoVoxelsShareAnEdge) {
  auto body = build_body(MorphGenome(2, 1, {R, V}));
  EXPECT_EQ(body.masses.size(), 6u);
  EXPECT_EQ(body.springs.size(), 11u);  // 7 distinct edges + 4 diagonals
  int diagonals = 0;
  for (const auto& s : body.springs) diagonals += s.axis == SpringAxis::Diagonal;
  EXPECT_EQ(diagonals, 4);
  // The shared vertical edge blends both materials and is driven by the vertical actuator.
  const SimParams p;
  int shared = 0;
  for (const auto& s : body.springs) {
    if (s.axis == SpringAxis::Vertical && std::abs(s.stiffness - 0.5 * (p.stiffness_rigid + p.stiffness_actuator)) < 1e-9) {
      ++shared;
      EXPECT_EQ(s.actuators[0], 0);
    }
  }
  EXPECT_EQ(shared, 1);
}

TEST(BuildBody, FullGridVertexCount) {
  for (int w = 1; w <= 5; ++w)
    for (int h = 1; h <= 5; ++h)
      EXPECT_EQ(build_body(MorphGenome::filled(w, h, H)).masses.size(), static_cast<std::size_t>((w + 1) * (h + 1)));
}

TEST(BuildBody, ActuatorsInRowMajorOrder) {
  MorphGenome g(3, 2, {V, R, H, H, S, V});
  auto body = build_body(g);
  std::vector<ActuatorKey> expect{{0, 0, V}, {2, 0, H}, {0, 1, H}, {2, 1, V}};
  EXPECT_EQ(body.actuators, expect);
}

TEST(BuildBody, RestsOnGround) {
  MorphGenome g(3, 3, {E, H, E, E, R, E, E, E, E});
  auto body = build_body(g);
  double lowest = 1e9;
  for (const auto& m : body.masses) lowest = std::min(lowest, m.position.y());
  EXPECT_EQ(lowest, 0.0);
  std::set<LatticeKey> keys(body.vertex_keys.begin(), body.vertex_keys.end());
  EXPECT_EQ(keys.size(), 6u);
}

TEST(Step, EquilibriumWithoutGravity) {
  SimParams p;
  p.gravity = 0.0;
  auto st = make_state(MorphGenome(2, 2, {R, S, H, V}), TaskKind::WalkerLite, p);
  const SimState before = st;
  std::vector<double> zero(st.body.actuators.size(), 0.0);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(step(st, zero, p), 0.0);
  EXPECT_TRUE(same_state(st, before));
}

TEST(Step, FreeFallMatchesClosedForm) {
  // Semi-implicit Euler: v_n = -n g dt, y_n = y0 - g dt^2 n(n+1)/2.
  SimParams p;
  p.substeps = 1;
  const double y0 = 10.0;
  auto st = free_mass(y0);
  for (int n = 1; n <= 60; ++n) {
    step(st, {}, p);
    const double expect = y0 - p.gravity * p.dt * p.dt * n * (n + 1) / 2.0;
    ASSERT_NEAR(st.body.masses[0].position.y(), expect, 1e-12) << "step " << n;
  }
}

TEST(Step, SubstepsFollowTheSameRecurrence) {
  SimParams p;
  const double y0 = 10.0;
  auto st = free_mass(y0);
  for (int i = 0; i < 5; ++i) step(st, {}, p);
  const int n = 5 * p.substeps;
  const double h = p.dt / p.substeps;
  EXPECT_NEAR(st.body.masses[0].position.y(), y0 - p.gravity * h * h * n * (n + 1) / 2.0, 1e-12);
}

TEST(Step, OmittedActionsEqualZeroActions) {
  MorphGenome g(3, 2, {H, R, V, S, H, H});
  SimParams p;
  auto a = make_state(g, TaskKind::PusherLite, p);
  auto b = a;
  std::vector<double> zero(a.body.actuators.size(), 0.0);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(step(a, zero, p), step(b, {}, p));
  }
  EXPECT_TRUE(same_state(a, b));
}

TEST(Step, RejectsWrongActionCount) {
  auto st = make_state(MorphGenome(1, 1, {H}), TaskKind::WalkerLite);
  std::vector<double> two{0.0, 0.0};
  EXPECT_THROW(step(st, two), std::invalid_argument);
}

TEST(Step, NonFiniteStateTerminates) {
  auto st = make_state(MorphGenome(1, 1, {H}), TaskKind::WalkerLite);
  st.body.masses[0].velocity.x() = std::numeric_limits<double>::quiet_NaN();
  EXPECT_EQ(step(st, {}), 0.0);
  EXPECT_TRUE(st.terminal);
  EXPECT_TRUE(st.failed);
  EXPECT_EQ(step(st, {}), 0.0);
}

TEST(Step, RestLengthStaysClamped) {
  Rng rng(8);
  SimParams p;
  auto body = build_body(MorphGenome(3, 2, {H, V, H, V, H, V}), p);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> act(body.actuators.size());
    for (auto& a : act) a = rng.uniform(-3.0, 3.0);
    for (const auto& s : body.springs) {
      const double r = effective_rest_length(s, act, p) / s.rest_length;
      ASSERT_GE(r, p.min_rest_scale - 1e-15);
      ASSERT_LE(r, p.max_rest_scale + 1e-15);
    }
  }
}

TEST(Step, ActuationChangesAxisAlignedSprings) {
  SimParams p;
  auto body = build_body(MorphGenome(1, 1, {H}), p);
  std::vector<double> act{1.0};
  for (const auto& s : body.springs) {
    const double scale = effective_rest_length(s, act, p) / s.rest_length;
    EXPECT_DOUBLE_EQ(scale, s.axis == SpringAxis::Horizontal ? 1.5 : 1.0);
  }
}

TEST(Step, WalkerRewardTelescopes) {
  Rng rng(2);
  SimParams p;
  auto st = make_state(MorphGenome(3, 2, {H, R, V, S, H, H}), TaskKind::WalkerLite, p);
  const double x0 = center_of_mass(st.body.masses).x();
  double total = 0.0;
  std::vector<double> act(st.body.actuators.size());
  for (int t = 0; t < 300; ++t) {
    for (auto& a : act) a = std::sin(0.2 * t) + 0.3 * rng.normal();
    total += step(st, act, p);
  }
  EXPECT_NEAR(total, center_of_mass(st.body.masses).x() - x0, 1e-9);
}

TEST(Step, PusherRewardTracksBox) {
  SimParams p;
  auto st = make_state(MorphGenome(2, 1, {H, H}), TaskKind::PusherLite, p);
  ASSERT_TRUE(st.box);
  const double x0 = center_of_mass(st.box->masses).x();
  double total = 0.0;
  std::vector<double> act{1.0, 1.0};
  for (int t = 0; t < 200; ++t) {
    act[0] = act[1] = (t / 10) % 2 ? 1.0 : -1.0;
    total += step(st, act, p);
  }
  EXPECT_NEAR(total, center_of_mass(st.box->masses).x() - x0, 1e-9);
}

TEST(Step, RobotCanPushTheBox) {
  // Expanding a horizontal actuator sitting next to the box closes the gap.
  SimParams p;
  p.box_gap = 0.2;
  auto st = make_state(MorphGenome(3, 1, {R, R, H}), TaskKind::PusherLite, p);
  const double x0 = center_of_mass(st.box->masses).x();
  std::vector<double> act{1.0};
  for (int t = 0; t < 100; ++t) step(st, act, p);
  EXPECT_GT(center_of_mass(st.box->masses).x(), x0 + 1e-3);
}

TEST(Step, DeterministicTrajectories) {
  MorphGenome g(2, 2, {H, V, R, H});
  auto a = make_state(g, TaskKind::WalkerLite);
  auto b = make_state(g, TaskKind::WalkerLite);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> act{std::sin(0.1 * t), std::cos(0.1 * t), 0.5};
    EXPECT_EQ(step(a, act), step(b, act));
  }
  EXPECT_TRUE(same_state(a, b));
}

TEST(Step, StaysStableAndDissipatesUnderRandomGenomes) {
  Rng gen(21);
  for (int trial = 0; trial < 40; ++trial) {
    const int w = 1 + static_cast<int>(gen.index(3)), h = 1 + static_cast<int>(gen.index(3));
    auto st = make_state(random_genome(w, h, gen), TaskKind::WalkerLite);
    double peak = 0.0;
    for (int t = 0; t < 1000; ++t) {
      step(st, {});
      peak = std::max(peak, kinetic_energy(st));
    }
    ASSERT_FALSE(st.failed);
    EXPECT_LT(kinetic_energy(st), peak);
  }
}

TEST(Observe, SymmetricBodyAtRest) {
  auto st = make_state(MorphGenome(3, 2, {R, H, R, S, S, S}), TaskKind::WalkerLite);
  auto obs = observe(st);
  EXPECT_EQ(obs.global[0], 0.0);
  EXPECT_EQ(obs.global[1], 0.0);
  EXPECT_EQ(obs.global[2], 0.0);
  EXPECT_EQ(obs.nodes.rows(), static_cast<Eigen::Index>(st.body.masses.size()));
}

TEST(Observe, TranslationCovariance) {
  auto st = make_state(MorphGenome(2, 2, {H, E, R, V}), TaskKind::WalkerLite);
  for (int t = 0; t < 30; ++t) step(st, std::vector<double>{0.7, -0.4});
  auto shifted = st;
  const double c = 1.25;
  for (auto& m : shifted.body.masses) m.position.x() += c;
  for (auto& r : shifted.body.rest_positions) r.x() += c;
  auto a = observe(st), b = observe(shifted);
  EXPECT_NEAR(b.global[3] - a.global[3], c, 1e-12);
  EXPECT_NEAR(b.global[2], a.global[2], 1e-12);
  EXPECT_TRUE(a.nodes.isApprox(b.nodes, 1e-12));
  EXPECT_LT((a.nodes - b.nodes).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Observe, SingleVoxelHistogramIsOneHot) {
  for (auto t : {H, V}) {
    auto obs = observe(make_state(MorphGenome(1, 1, {t}), TaskKind::WalkerLite));
    for (Eigen::Index r = 0; r < obs.nodes.rows(); ++r)
      for (int k = 0; k < 4; ++k) EXPECT_EQ(obs.nodes(r, 4 + k), k == voxel_code(t) - 1 ? 1.0 : 0.0);
  }
}

TEST(Observe, OrientationFollowsRigidRotation) {
  auto st = make_state(MorphGenome(2, 1, {H, R}), TaskKind::WalkerLite);
  const double angle = 0.3;
  const Vec2 pivot(0.1, 0.05);
  for (auto& m : st.body.masses) {
    const Vec2 d = m.position - pivot;
    m.position = pivot + Vec2(std::cos(angle) * d.x() - std::sin(angle) * d.y(),
                              std::sin(angle) * d.x() + std::cos(angle) * d.y());
  }
  EXPECT_NEAR(observe(st).global[2], angle, 1e-12);
}

TEST(Observe, PusherTaskFeatureIsBoxOffset) {
  auto st = make_state(MorphGenome(1, 1, {H}), TaskKind::PusherLite);
  auto obs = observe(st);
  EXPECT_NEAR(obs.global[3], center_of_mass(st.box->masses).x() - center_of_mass(st.body.masses).x(), 1e-15);
  EXPECT_GT(obs.global[3], 0.0);
}
