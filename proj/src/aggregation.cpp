#include "knrl/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace knrl {

AggregatedAction aggregate(std::span<const ActionProposal> proposals, double eps) {
    if (proposals.empty()) throw std::invalid_argument("aggregate: no proposals");
    AggregatedAction out;
    if (proposals.size() == 1) {
        out.action = proposals.front().action;
        out.weights = {1.0};
        return out;
    }

    out.weights.resize(proposals.size());
    double total = 0.0;
    for (std::size_t i = 0; i < proposals.size(); ++i) {
        out.weights[i] = 1.0 / (proposals[i].total_distance + eps);
        total += out.weights[i];
    }
    if (!(total > 0.0)) {
        for (auto& w : out.weights) w = 1.0 / static_cast<double>(proposals.size());
    } else {
        for (auto& w : out.weights) w /= total;
    }
    double lo = proposals.front().action;
    double hi = lo;
    for (std::size_t i = 0; i < proposals.size(); ++i) {
        out.action += out.weights[i] * proposals[i].action;
        lo = std::min(lo, proposals[i].action);
        hi = std::max(hi, proposals[i].action);
    }
    // Rounding in the weights must not leave the convex hull.
    out.action = std::clamp(out.action, lo, hi);
    return out;
}

double aggregate_discrete(std::span<const ActionProposal> proposals) {
    if (proposals.empty()) throw std::invalid_argument("aggregate_discrete: no proposals");
    const ActionProposal* best = &proposals.front();
    for (const auto& p : proposals.subspan(1)) {
        if (p.total_distance < best->total_distance ||
            (p.total_distance == best->total_distance && p.group < best->group))
            best = &p;
    }
    return best->action;
}

}  // namespace knrl
