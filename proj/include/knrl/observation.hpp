#pragma once

// Group observation encoding and the group reward.

#include <span>
#include <vector>

#include "knrl/roadnet.hpp"
#include "knrl/simulator.hpp"

namespace knrl {

/// Normalisation constants, fixed per map and stored in checkpoints.
struct ObservationScales {
    double min_x{0.0};
    double min_y{0.0};
    double extent{1.0};    // meters, larger side of the node bounding box
    double speed{1.0};     // m/s, highest speed limit
    double distance{1.0};  // meters, map diameter
    double time{1.0};      // seconds, diameter / highest speed limit

    static ObservationScales for_map(const RoadGraph& g);
};

/// Normalised value written for unreachable member pairs.
inline constexpr double kUnreachableFeature = 2.0;
/// Normalised times are clipped here.
inline constexpr double kMaxTimeFeature = 10.0;

/// 6 features per member plus one per unordered member pair: 6(k+1) + k(k+1)/2.
constexpr int observation_dim(int k) { return 6 * (k + 1) + (k + 1) * k / 2; }

/// Per member, in group order: x, y, speed, time since last stop, distance
/// since last stop, remaining distance to goal. Then, for i < j in
/// lexicographic order, the travel distance from member i to member j.
std::vector<double> encode_observation(std::span<const int> members, const FleetState& fleet,
                                       const RoadGraph& g, const ObservationScales& scales);

/// Sum of member distances travelled over the period. Throws
/// std::invalid_argument on a negative entry.
double group_reward(std::span<const double> deltas);

}  // namespace knrl
