#include <gtest/gtest.h>

#include <set>

#include "vsr/morpho.hpp"

using namespace vsr;

namespace {

MorphGenome row(std::initializer_list<VoxelType> cells) {
  return MorphGenome(static_cast<int>(cells.size()), 1, std::vector<VoxelType>(cells));
}

constexpr auto E = VoxelType::Empty;
constexpr auto R = VoxelType::Rigid;
constexpr auto S = VoxelType::Soft;
constexpr auto H = VoxelType::HorizontalActuator;
constexpr auto V = VoxelType::VerticalActuator;

}  // namespace

TEST(Validate, SingleActuatorIsValid) { EXPECT_TRUE(validate(row({H}))); }

TEST(Validate, NoActuator) {
  auto v = validate(row({R, E}));
  EXPECT_FALSE(v);
  EXPECT_EQ(v.reason, "no actuator");
}

TEST(Validate, Disconnected) {
  auto v = validate(row({R, E, H}));
  EXPECT_FALSE(v);
  EXPECT_EQ(v.reason, "disconnected");
}

TEST(Validate, EmptyGrid) {
  auto v = validate(MorphGenome::filled(3, 3, E));
  EXPECT_FALSE(v);
  EXPECT_EQ(v.reason, "empty");
}

TEST(Validate, DiagonalContactIsNotConnected) {
  MorphGenome g(2, 2, {H, E, E, R});
  EXPECT_EQ(validate(g).reason, "disconnected");
}

TEST(Genome, RejectsSizeMismatch) {
  EXPECT_THROW(MorphGenome(2, 2, {H, H, H}), std::invalid_argument);
  EXPECT_THROW(MorphGenome(0, 1, {}), std::invalid_argument);
}

TEST(Mutate, ZeroRateIsIdentity) {
  Rng rng(3);
  Rng gen(4);
  for (int i = 0; i < 50; ++i) {
    auto parent = random_genome(5, 5, gen);
    EXPECT_EQ(mutate(parent, {0.0, 50}, rng), parent);
  }
}

TEST(Mutate, FullRateOnLoneActuatorYieldsActuator) {
  // Oracle: of the five single-cell outcomes only the two actuator types validate.
  std::set<VoxelType> admissible;
  for (int code = 0; code < kVoxelTypeCount; ++code) {
    if (validate(row({static_cast<VoxelType>(code)}))) admissible.insert(static_cast<VoxelType>(code));
  }
  ASSERT_EQ(admissible, (std::set<VoxelType>{H, V}));

  Rng rng(11);
  std::set<VoxelType> seen;
  for (int i = 0; i < 200; ++i) {
    auto child = mutate(row({H}), {1.0, 50}, rng);
    ASSERT_TRUE(admissible.count(child.at(0, 0)));
    seen.insert(child.at(0, 0));
  }
  EXPECT_EQ(seen, admissible);
}

TEST(Mutate, SeededDeterminism) {
  Rng g(1);
  auto parent = random_genome(5, 5, g);
  Rng a(99), b(99);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(mutate(parent, {0.3, 50}, a), mutate(parent, {0.3, 50}, b));
}

TEST(Mutate, AlwaysValid) {
  Rng gen(5);
  for (double rate : {0.05, 0.1, 0.3}) {
    Rng rng(static_cast<std::uint64_t>(rate * 1000));
    for (int i = 0; i < 1000; ++i) {
      const int w = 1 + static_cast<int>(gen.index(5)), h = 1 + static_cast<int>(gen.index(5));
      auto parent = random_genome(w, h, gen);
      ASSERT_TRUE(validate(mutate(parent, {rate, 50}, rng)));
    }
  }
}

TEST(Mutate, ExhaustedRetriesReturnParent) {
  // Rate 1 on a 1x3 row almost never stays connected with an actuator in one retry.
  auto parent = row({H, H, H});
  Rng rng(0);
  int fallbacks = 0;
  for (int i = 0; i < 200; ++i) {
    auto out = mutate_detailed(parent, {1.0, 1}, rng);
    ASSERT_TRUE(validate(out.genome));
    if (out.fell_back) {
      ++fallbacks;
      EXPECT_EQ(out.genome, parent);
    }
  }
  EXPECT_GT(fallbacks, 0);
}

TEST(Serialize, DirectEncoding) { EXPECT_EQ(serialize(row({R, S})), "2 1\n12"); }

TEST(Serialize, RejectsBadCode) {
  try {
    deserialize_genome("2 1\n15");
    FAIL() << "expected an error";
  } catch (const GenomeFormatError& e) {
    EXPECT_STREQ(e.what(), "invalid voxel code");
  }
}

TEST(Serialize, RejectsMalformedInput) {
  EXPECT_THROW(deserialize_genome("2 1\n1x"), GenomeFormatError);
  EXPECT_THROW(deserialize_genome("2 2\n13"), GenomeFormatError);
  EXPECT_THROW(deserialize_genome("2 1\n133"), GenomeFormatError);
  EXPECT_THROW(deserialize_genome("2 1\n10"), GenomeFormatError);  // no actuator
  EXPECT_THROW(deserialize_genome(""), GenomeFormatError);
}

TEST(Serialize, RoundTripRandomGenomes) {
  Rng gen(17);
  for (int i = 0; i < 300; ++i) {
    const int w = 1 + static_cast<int>(gen.index(6)), h = 1 + static_cast<int>(gen.index(6));
    auto g = random_genome(w, h, gen);
    const auto text = serialize(g);
    EXPECT_EQ(deserialize_genome(text), g);
    EXPECT_EQ(serialize(deserialize_genome(text)), text);
  }
}

TEST(Serialize, ToleratesTrailingNewline) {
  EXPECT_EQ(deserialize_genome("2 1\n34\n"), row({H, V}));
}
