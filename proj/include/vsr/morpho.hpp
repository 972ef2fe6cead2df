#pragma once

// Voxel-grid genomes: validity, mutation and the digit-grid text format.

#include <algorithm>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "vsr/rng.hpp"

namespace vsr {

enum class VoxelType : std::uint8_t {
  Empty = 0,
  Rigid = 1,
  Soft = 2,
  HorizontalActuator = 3,
  VerticalActuator = 4,
};

inline constexpr int kVoxelTypeCount = 5;

constexpr bool is_actuator(VoxelType t) {
  return t == VoxelType::HorizontalActuator || t == VoxelType::VerticalActuator;
}

constexpr int voxel_code(VoxelType t) { return static_cast<int>(t); }

class GenomeFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// W x H grid of voxels, row-major, row 0 at the top.
class MorphGenome {
 public:
  MorphGenome(int width, int height, std::vector<VoxelType> cells)
      : width_(width), height_(height), cells_(std::move(cells)) {
    if (width <= 0 || height <= 0) {
      throw std::invalid_argument("genome dimensions must be positive");
    }
    if (cells_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      throw std::invalid_argument("genome cell count does not match dimensions");
    }
  }

  static MorphGenome filled(int width, int height, VoxelType t) {
    return MorphGenome(width, height,
                       std::vector<VoxelType>(static_cast<std::size_t>(width * height), t));
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::span<const VoxelType> cells() const { return cells_; }

  bool contains(int col, int row) const {
    return col >= 0 && row >= 0 && col < width_ && row < height_;
  }
  VoxelType at(int col, int row) const { return cells_[index(col, row)]; }
  void set(int col, int row, VoxelType t) { cells_[index(col, row)] = t; }

  int count_if(auto pred) const {
    return static_cast<int>(std::count_if(cells_.begin(), cells_.end(), pred));
  }

  bool operator==(const MorphGenome&) const = default;

 private:
  std::size_t index(int col, int row) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  int width_;
  int height_;
  std::vector<VoxelType> cells_;
};

struct Validation {
  bool ok = true;
  std::string reason;

  explicit operator bool() const { return ok; }
};

/// Checks, in order: non-empty, single 4-connected component, has an actuator.
inline Validation validate(const MorphGenome& g) {
  const int filled = g.count_if([](VoxelType t) { return t != VoxelType::Empty; });
  if (filled == 0) return {false, "empty"};

  std::vector<char> seen(g.cells().size(), 0);
  std::vector<std::pair<int, int>> stack;
  for (int r = 0; r < g.height() && stack.empty(); ++r) {
    for (int c = 0; c < g.width(); ++c) {
      if (g.at(c, r) != VoxelType::Empty) {
        stack.emplace_back(c, r);
        seen[static_cast<std::size_t>(r * g.width() + c)] = 1;
        break;
      }
    }
  }
  int reached = 0;
  while (!stack.empty()) {
    auto [c, r] = stack.back();
    stack.pop_back();
    ++reached;
    constexpr int dc[] = {1, -1, 0, 0};
    constexpr int dr[] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      int nc = c + dc[k], nr = r + dr[k];
      if (!g.contains(nc, nr) || g.at(nc, nr) == VoxelType::Empty) continue;
      auto idx = static_cast<std::size_t>(nr * g.width() + nc);
      if (seen[idx]) continue;
      seen[idx] = 1;
      stack.emplace_back(nc, nr);
    }
  }
  if (reached != filled) return {false, "disconnected"};

  if (g.count_if(is_actuator) == 0) return {false, "no actuator"};
  return {};
}

struct MutationConfig {
  double per_cell_rate = 0.1;
  int max_retries = 50;
};

struct MutationOutcome {
  MorphGenome genome;
  int attempts = 0;
  bool fell_back = false;  // retries exhausted, parent returned unchanged
};

inline MutationOutcome mutate_detailed(const MorphGenome& parent, const MutationConfig& cfg, Rng& rng) {
  if (cfg.per_cell_rate < 0.0 || cfg.per_cell_rate > 1.0) {
    throw std::invalid_argument("per_cell_rate must lie in [0, 1]");
  }
  if (cfg.per_cell_rate == 0.0) return {parent, 0, false};
  const int tries = std::max(cfg.max_retries, 1);
  for (int attempt = 1; attempt <= tries; ++attempt) {
    MorphGenome child = parent;
    for (int r = 0; r < child.height(); ++r) {
      for (int c = 0; c < child.width(); ++c) {
        if (rng.bernoulli(cfg.per_cell_rate)) {
          child.set(c, r, static_cast<VoxelType>(rng.index(kVoxelTypeCount)));
        }
      }
    }
    if (validate(child)) return {std::move(child), attempt, false};
  }
  return {parent, tries, true};
}

inline MorphGenome mutate(const MorphGenome& parent, const MutationConfig& cfg, Rng& rng) {
  return mutate_detailed(parent, cfg, rng).genome;
}

/// Uniform random cells, rejected until valid. Falls back to a lone
/// actuator in the middle of the box, which is always valid.
inline MorphGenome random_genome(int width, int height, Rng& rng, int max_tries = 10000) {
  for (int i = 0; i < max_tries; ++i) {
    std::vector<VoxelType> cells(static_cast<std::size_t>(width * height));
    for (auto& c : cells) c = static_cast<VoxelType>(rng.index(kVoxelTypeCount));
    MorphGenome g(width, height, std::move(cells));
    if (validate(g)) return g;
  }
  auto g = MorphGenome::filled(width, height, VoxelType::Empty);
  g.set(width / 2, height / 2, VoxelType::HorizontalActuator);
  return g;
}

inline std::string serialize(const MorphGenome& g) {
  std::string out = std::to_string(g.width()) + " " + std::to_string(g.height());
  for (int r = 0; r < g.height(); ++r) {
    out.push_back('\n');
    for (int c = 0; c < g.width(); ++c) out.push_back(static_cast<char>('0' + voxel_code(g.at(c, r))));
  }
  return out;
}

inline MorphGenome deserialize_genome(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string header;
  if (!std::getline(in, header)) throw GenomeFormatError("missing header line");
  std::istringstream hs(header);
  long w = 0, h = 0;
  std::string extra;
  if (!(hs >> w >> h) || (hs >> extra)) throw GenomeFormatError("header must be \"W H\"");
  if (w <= 0 || h <= 0 || w > 1024 || h > 1024) throw GenomeFormatError("dimensions out of range");

  std::vector<VoxelType> cells;
  cells.reserve(static_cast<std::size_t>(w * h));
  std::string line;
  long rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (static_cast<long>(line.size()) != w) throw GenomeFormatError("dimension mismatch");
    for (char ch : line) {
      if (ch < '0' || ch > '9') throw GenomeFormatError("non-digit character");
      if (ch > '4') throw GenomeFormatError("invalid voxel code");
      cells.push_back(static_cast<VoxelType>(ch - '0'));
    }
    ++rows;
  }
  if (rows != h) throw GenomeFormatError("dimension mismatch");
  MorphGenome g(static_cast<int>(w), static_cast<int>(h), std::move(cells));
  if (auto v = validate(g); !v) throw GenomeFormatError("invalid genome: " + v.reason);
  return g;
}

/// FNV-1a of a string, as 16 hex digits.
inline std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : text) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
  return out;
}

inline std::string genome_hash(const MorphGenome& g) { return fnv1a_hex(serialize(g)); }

}  // namespace vsr
