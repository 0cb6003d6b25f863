#pragma once

// Discrete-time fleet simulator: acceleration-limited vehicles following
// routes on a RoadGraph, a single-lane headway rule, FIFO service at sites,
// nearest-site dispatching and cycle counting.

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "knrl/roadnet.hpp"

namespace knrl {

/// 5 mph, the congestion threshold of the low-speed metric.
inline constexpr double kLowSpeedThreshold = 2.24;

enum class Phase { traveling, queued, servicing };

const char* to_string(Phase p);

enum class Placement { round_robin };

struct SimConfig {
    int vehicle_count{8};
    double shift_length{7200.0};   // seconds
    double control_period{60.0};   // seconds
    double dt{1.0};                // seconds
    double max_acceleration{1.5};  // m/s^2
    double max_deceleration{3.0};  // m/s^2
    double headway_distance{20.0};  // meters; below this a follower matches its leader's speed
    double standstill_gap{8.0};     // meters kept to a stopped leader
    Placement placement{Placement::round_robin};
    std::vector<EdgeId> placement_edges;  // empty: every edge, ascending id
    std::uint64_t seed{1};

    int steps_per_period() const;
    int periods_per_shift() const;
};

/// Throws std::invalid_argument describing the first violated constraint.
void check(const SimConfig& cfg);

struct VehicleState {
    int id{0};
    Position position;
    double speed{0.0};
    double commanded_speed{0.0};
    double command_fraction{0.0};
    Phase phase{Phase::traveling};
    NodeId goal_site{0};
    std::optional<SiteKind> last_service;  // kind of the last completed service
    double time_since_stop{0.0};
    double distance_since_stop{0.0};
    double remaining_distance{0.0};
    int cycles_completed{0};
    double distance_this_period{0.0};
    double odometer{0.0};
    double service_remaining{0.0};
    bool awaiting_departure{false};  // service finished, waiting for a gap to leave
    std::vector<EdgeId> route;  // route.front() == position.edge while on-road
};

struct SiteQueue {
    std::deque<int> waiting;  // vehicle ids, FIFO
    int in_service{-1};       // vehicle id occupying the server, -1 if idle
};

struct SpeedStats {
    std::uint64_t samples{0};  // vehicle-steps in the traveling phase
    std::uint64_t low_speed_samples{0};
    double speed_sum{0.0};
    std::vector<std::uint64_t> histogram;  // 1 m/s bins
};

struct FleetState {
    double clock{0.0};
    std::vector<VehicleState> vehicles;
    std::map<NodeId, SiteQueue> sites;
    std::mt19937_64 rng;
    SpeedStats speed_stats;
    std::vector<std::string> warnings;
};

struct MetricsSnapshot {
    int total_cycles{0};
    std::vector<int> cycles_per_vehicle;
    double mean_speed{0.0};
    double low_speed_fraction{0.0};
    std::vector<std::uint64_t> speed_histogram;
    std::uint64_t speed_samples{0};
};

/// Placed, dispatched fleet at time zero. Throws std::invalid_argument for
/// N < 1 and Unreachable when a vehicle cannot reach any loading site.
FleetState init_fleet(const RoadGraph& g, const SimConfig& cfg);

/// Per-vehicle speed fractions of the current edge limit, indexed by vehicle id.
/// Out-of-range fractions are clamped and a warning is recorded.
void set_commands(FleetState& state, const RoadGraph& g, std::span<const double> fractions);

/// Advances the fleet by one physics step of length dt.
void step_physics(FleetState& state, const RoadGraph& g, const SimConfig& cfg, double dt);

/// Next goal for a vehicle that just finished service (or was just placed):
/// nearest discharge after loading, nearest loading otherwise; ties by node id.
NodeId dispatch(const FleetState& state, const RoadGraph& g, int vehicle_id);

/// Fraction 1.0 for every vehicle.
std::vector<double> max_speed_policy(const FleetState& state);

MetricsSnapshot metrics(const FleetState& state);

/// Zeroes every vehicle's distance_this_period.
void begin_control_period(FleetState& state);

/// Runs one control period of physics steps.
void run_control_period(FleetState& state, const RoadGraph& g, const SimConfig& cfg);

/// Row-wise directed travel distances between all vehicles (N x N, row-major).
std::vector<double> distance_matrix(const FleetState& state, const RoadGraph& g);

}  // namespace knrl
