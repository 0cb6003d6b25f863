#pragma once

// Binary policy checkpoint. Little-endian layout:
//
//   offset  size  field
//   0       8     magic "KNRLCKPT"
//   8       4     u32 format version (1)
//   12      4     i32 k
//   16      4     i32 observation dimension D
//   20      4     i32 action dimension (k+1)
//   24      4     i32 hidden layer count H
//   28      4H    i32 hidden widths
//   ..      8     u64 parameter count P
//   ..      48    f64 x6 observation scales: min_x, min_y, extent, speed, distance, time
//   ..      8     f64 reward scale
//   ..      8     f64 log entropy temperature
//   ..      8     u64 gradient updates performed
//   ..      8     u64 transitions collected
//   ..      8P    f64 parameters: actor, critic 1, critic 2, target 1, target 2;
//                 per network, per layer, weights (column-major) then bias.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

#include "knrl/observation.hpp"
#include "knrl/sac.hpp"

namespace knrl {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Checkpoint {
    SacAgent agent;
    ObservationScales scales;
    std::uint64_t transitions{0};
};

std::vector<std::uint8_t> serialize_checkpoint(const SacAgent& agent, const ObservationScales& scales,
                                               std::uint64_t transitions);

/// `cfg` supplies the hyperparameters that are not stored (learning rates,
/// gamma, ...); widths come from the file. When `expected_k` is set, a
/// checkpoint for a different k is rejected with "incompatible k".
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes, const SacConfig& cfg,
                                  std::optional<int> expected_k = std::nullopt);

void save_checkpoint(const std::filesystem::path& path, const SacAgent& agent, const ObservationScales& scales,
                     std::uint64_t transitions);
Checkpoint load_checkpoint(const std::filesystem::path& path, const SacConfig& cfg,
                           std::optional<int> expected_k = std::nullopt);

}  // namespace knrl
