#pragma once

#include <compare>
#include <string>

#include "vsr/morpho.hpp"

namespace vsr {

/// Vertex position in the genome's lattice frame: col in [0, W], row in [0, H],
/// row 0 at the top edge of the grid.
struct LatticeKey {
  int col = 0;
  int row = 0;

  auto operator<=>(const LatticeKey&) const = default;
};

/// Identity of an actuator: the voxel cell it occupies and its type.
/// A key with type Empty marks an unused output slot.
struct ActuatorKey {
  int col = 0;
  int row = 0;
  VoxelType type = VoxelType::Empty;

  bool empty() const { return type == VoxelType::Empty; }
  auto operator<=>(const ActuatorKey&) const = default;
};

inline std::string to_string(const ActuatorKey& k) {
  return std::to_string(k.col) + "," + std::to_string(k.row) + "," + std::to_string(voxel_code(k.type));
}

}  // namespace vsr
