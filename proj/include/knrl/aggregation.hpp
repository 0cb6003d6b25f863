#pragma once

// Merging the actions several groups propose for the same agent.

#include <span>
#include <vector>

namespace knrl {

/// Regularizer added to total distances so co-located agents stay finite.
inline constexpr double kAggregationEpsilon = 1e-6;  // meters

struct ActionProposal {
    int group{0};
    int slot{0};
    double action{0.0};          // speed fraction in [0, 1]
    double total_distance{0.0};  // meters from the agent to the group's other members
};

struct AggregatedAction {
    double action{0.0};
    std::vector<double> weights;  // aligned with the proposals
};

/// Weighted mean with weights proportional to 1 / (total_distance + eps).
/// A single proposal is returned unchanged. If every distance is infinite the
/// proposals are weighted equally. Throws std::invalid_argument when empty.
AggregatedAction aggregate(std::span<const ActionProposal> proposals,
                           double eps = kAggregationEpsilon);

/// Action of the proposal with the smallest total distance, ties by group index.
double aggregate_discrete(std::span<const ActionProposal> proposals);

}  // namespace knrl
