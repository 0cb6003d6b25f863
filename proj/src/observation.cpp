#include "knrl/observation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace knrl {

ObservationScales ObservationScales::for_map(const RoadGraph& g) {
    ObservationScales s;
    s.min_x = g.min_x();
    s.min_y = g.min_y();
    s.extent = g.extent();
    s.speed = g.max_speed_limit();
    s.distance = g.diameter();
    s.time = g.diameter() / g.max_speed_limit();
    return s;
}

std::vector<double> encode_observation(std::span<const int> members, const FleetState& fleet,
                                       const RoadGraph& g, const ObservationScales& scales) {
    const int k = static_cast<int>(members.size()) - 1;
    if (k < 0) throw std::invalid_argument("a group has at least one member");
    std::vector<double> obs;
    obs.reserve(static_cast<std::size_t>(observation_dim(k)));

    for (int id : members) {
        const auto& v = fleet.vehicles.at(static_cast<std::size_t>(id));
        const auto [x, y] = g.coordinates(v.position);
        obs.push_back((x - scales.min_x) / scales.extent);
        obs.push_back((y - scales.min_y) / scales.extent);
        obs.push_back(v.speed / scales.speed);
        obs.push_back(std::min(v.time_since_stop / scales.time, kMaxTimeFeature));
        obs.push_back(std::min(v.distance_since_stop / scales.distance, kMaxTimeFeature));
        obs.push_back(std::min(v.remaining_distance / scales.distance, kMaxTimeFeature));
    }
    for (std::size_t i = 0; i < members.size(); ++i) {
        for (std::size_t j = i + 1; j < members.size(); ++j) {
            const auto& a = fleet.vehicles.at(static_cast<std::size_t>(members[i]));
            const auto& b = fleet.vehicles.at(static_cast<std::size_t>(members[j]));
            const double d = travel_distance(g, a.position, b.position);
            obs.push_back(std::isfinite(d) ? std::min(d / scales.distance, kUnreachableFeature)
                                           : kUnreachableFeature);
        }
    }
    return obs;
}

double group_reward(std::span<const double> deltas) {
    double total = 0.0;
    for (double d : deltas) {
        if (!(d >= 0.0)) throw std::invalid_argument("distance travelled cannot be negative");
        total += d;
    }
    return total;
}

}  // namespace knrl
