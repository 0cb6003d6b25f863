#include "knrl/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>
#include <unordered_map>

namespace knrl {

const char* to_string(Phase p) {
    switch (p) {
        case Phase::traveling: return "traveling";
        case Phase::queued: return "queued";
        case Phase::servicing: return "servicing";
    }
    return "?";
}

int SimConfig::steps_per_period() const {
    return static_cast<int>(std::lround(control_period / dt));
}

int SimConfig::periods_per_shift() const {
    return static_cast<int>(std::floor(shift_length / control_period + 1e-9));
}

void check(const SimConfig& cfg) {
    if (cfg.vehicle_count < 1) throw std::invalid_argument("vehicle count must be at least 1");
    if (!(cfg.dt > 0.0)) throw std::invalid_argument("physics step dt must be positive");
    if (!(cfg.control_period > 0.0)) throw std::invalid_argument("control period must be positive");
    const double ratio = cfg.control_period / cfg.dt;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 || std::round(ratio) < 1.0)
        throw std::invalid_argument("control period must be an integer multiple of dt");
    if (!(cfg.shift_length >= cfg.control_period))
        throw std::invalid_argument("shift length must cover at least one control period");
    if (!(cfg.max_acceleration > 0.0) || !(cfg.max_deceleration > 0.0))
        throw std::invalid_argument("acceleration limits must be positive");
    if (!(cfg.headway_distance >= 0.0) || !(cfg.standstill_gap >= 0.0))
        throw std::invalid_argument("headway and standstill gap must be non-negative");
}

namespace {

constexpr double kArrivalTolerance = 1e-6;  // meters

// Largest speed v with v*dt + (v^2 - v_end^2) / (2 b) <= gap. Choosing the next
// speed under this bound keeps the next step feasible under the same bound, so
// a follower can always stop (or slow to v_end) within `gap` without exceeding
// the deceleration limit.
double safe_speed(double gap, double v_end, double decel, double dt) {
    gap = std::max(gap, 0.0);
    const double bdt = decel * dt;
    return -bdt + std::sqrt(bdt * bdt + v_end * v_end + 2.0 * decel * gap);
}

double draw_service_time(const Site& site, std::mt19937_64& rng) {
    if (site.service_time_spread <= 0.0) return std::max(0.0, site.service_time_mean);
    std::normal_distribution<double> dist(site.service_time_mean, site.service_time_spread);
    for (int i = 0; i < 1000; ++i) {
        const double t = dist(rng);
        if (t >= 0.0) return t;
    }
    return 0.0;
}

const Site& site_at(const RoadGraph& g, NodeId node) {
    for (const auto& s : g.network().sites)
        if (s.node == node) return s;
    throw std::out_of_range("no site at node " + std::to_string(node));
}

struct Leader {
    double gap{kUnreachable};
    double speed{0.0};
};

// Index of on-road vehicles (traveling or waiting at a stop line) per edge.
using Occupancy = std::unordered_map<EdgeId, std::vector<int>>;

Occupancy build_occupancy(const FleetState& s) {
    Occupancy occ;
    for (const auto& v : s.vehicles)
        if (v.phase != Phase::servicing) occ[v.position.edge].push_back(v.id);
    return occ;
}

// Merge precedence key, smaller goes first: vehicles that can no longer stop
// before the merge node, then distance to the merge node, then id.
std::tuple<int, double, int> merge_key(const VehicleState& v, double to_merge, double decel, double dt) {
    const double stopping = v.speed * dt + v.speed * v.speed / (2.0 * decel);
    return {stopping > to_merge ? 0 : 1, to_merge, v.id};
}

// Nearest vehicle ahead of `me` along its route within `lookahead` meters.
// Vehicles entering a route edge from another incoming edge count when their
// merge key ranks first; `me` then stops behind them, or at the merge node if
// they are still farther out.
Leader find_leader(const FleetState& s, const RoadGraph& g, const Occupancy& occ,
                   const VehicleState& me, double lookahead, double decel, double dt) {
    Leader best;
    auto consider = [&](double gap, double speed) {
        if (gap < best.gap) best = {gap, speed};
    };

    if (auto it = occ.find(me.position.edge); it != occ.end()) {
        for (int j : it->second) {
            if (j == me.id) continue;
            const auto& o = s.vehicles[j];
            if (o.position.offset > me.position.offset ||
                (o.position.offset == me.position.offset && o.id < me.id))
                consider(o.position.offset - me.position.offset, o.speed);
        }
    }

    // A merging vehicle projects onto my route at cum - dj, so a merge is in
    // range while its longest other in-edge could bring that point within the
    // lookahead.
    double cum = g.edge(me.position.edge).length - me.position.offset;
    for (std::size_t k = 1; k < me.route.size(); ++k) {
        const EdgeId ek = me.route[k];
        const EdgeId prev = me.route[k - 1];
        const auto& e = g.edge(ek);
        double longest_in = 0.0;
        for (EdgeId f : g.in_edges(e.from))
            if (f != prev) longest_in = std::max(longest_in, g.edge(f).length);
        if (cum - longest_in > lookahead) break;
        for (EdgeId f : g.in_edges(e.from)) {
            if (f == prev) continue;
            auto it = occ.find(f);
            if (it == occ.end()) continue;
            const double flen = g.edge(f).length;
            const auto my_key = merge_key(me, cum, decel, dt);
            for (int j : it->second) {
                const auto& o = s.vehicles[j];
                if (o.phase != Phase::traveling || o.route.size() < 2 || o.route[1] != ek) continue;
                const double dj = flen - o.position.offset;
                if (merge_key(o, dj, decel, dt) < my_key)
                    consider(dj <= cum ? cum - dj : cum, dj <= cum ? o.speed : 0.0);
            }
        }
        if (auto it = occ.find(ek); it != occ.end()) {
            for (int j : it->second) {
                if (j == me.id) continue;
                const auto& o = s.vehicles[j];
                consider(cum + o.position.offset, o.speed);
            }
        }
        cum += e.length;
    }
    return best;
}

void refresh_remaining(VehicleState& v, const RoadGraph& g) {
    v.remaining_distance = v.phase == Phase::traveling ? route_cost(g, v.position, v.route) : 0.0;
}

// True when a vehicle appearing at offset 0 of route.front() would not force
// anyone into an infeasible stop: nobody about to enter that edge behind it,
// and nobody approaching a merge further along the route who would have to
// yield to it.
bool entry_clear(const FleetState& s, const RoadGraph& g, const Occupancy& occ, std::span<const EdgeId> route,
                 int departing, const SimConfig& cfg, double dt) {
    const EdgeId edge = route.front();
    if (auto it = occ.find(edge); it != occ.end()) {
        for (int j : it->second)
            if (s.vehicles[j].position.offset < cfg.standstill_gap) return false;
    }
    auto stopping = [&](const VehicleState& o) {
        return o.speed * dt + o.speed * o.speed / (2.0 * cfg.max_deceleration);
    };
    const NodeId entry = g.edge(edge).from;
    for (const auto& o : s.vehicles) {
        if (o.phase != Phase::traveling) continue;
        double cum = g.edge(o.position.edge).length - o.position.offset;
        const double need = stopping(o) + cfg.standstill_gap;
        for (std::size_t k = 1; k < o.route.size() && cum <= need; ++k) {
            if (o.route[k] == edge && g.edge(o.route[k - 1]).to == entry) return false;
            cum += g.edge(o.route[k]).length;
        }
    }

    // Downstream merges: the new vehicle starts at rest, so it ranks ahead of
    // an uncommitted vehicle that is farther from the merge than it is.
    const double reach = g.max_speed_limit() * dt +
                         g.max_speed_limit() * g.max_speed_limit() / (2.0 * cfg.max_deceleration) +
                         cfg.standstill_gap + cfg.headway_distance;
    double cum = g.edge(edge).length;
    for (std::size_t k = 1; k < route.size() && cum <= reach; ++k) {
        const EdgeId ek = route[k];
        const NodeId merge = g.edge(ek).from;
        for (EdgeId f : g.in_edges(merge)) {
            if (f == route[k - 1]) continue;
            auto it = occ.find(f);
            if (it == occ.end()) continue;
            for (int j : it->second) {
                const auto& o = s.vehicles[j];
                if (j == departing || o.phase != Phase::traveling || o.route.size() < 2 || o.route[1] != ek) continue;
                const double dj = g.edge(f).length - o.position.offset;
                const bool committed = stopping(o) > dj;
                if (!committed && dj >= cum && stopping(o) + cfg.standstill_gap > dj - cum) return false;
            }
        }
        cum += g.edge(ek).length;
    }
    return true;
}

void start_service(FleetState& s, const RoadGraph& g, int vid) {
    auto& v = s.vehicles[vid];
    auto& q = s.sites.at(v.goal_site);
    q.in_service = vid;
    v.phase = Phase::servicing;
    v.speed = 0.0;
    v.service_remaining = draw_service_time(site_at(g, v.goal_site), s.rng);
    v.time_since_stop = 0.0;
    v.distance_since_stop = 0.0;
    v.remaining_distance = 0.0;
}

void arrive(FleetState& s, const RoadGraph& g, int vid) {
    auto& v = s.vehicles[vid];
    auto& q = s.sites.at(v.goal_site);
    v.speed = 0.0;
    v.remaining_distance = 0.0;
    if (q.in_service < 0 && q.waiting.empty()) {
        start_service(s, g, vid);
    } else {
        v.phase = Phase::queued;
        q.waiting.push_back(vid);
    }
}

// Bookkeeping at the end of service: cycle count, next goal and route.
void complete_service(FleetState& s, const RoadGraph& g, int vid) {
    auto& v = s.vehicles[vid];
    const auto kind = site_at(g, v.goal_site).kind;
    if (kind == SiteKind::discharge && v.last_service == SiteKind::loading) ++v.cycles_completed;
    v.last_service = kind;
    v.goal_site = dispatch(s, g, vid);
    v.route = route(g, v.position, v.goal_site);
}

}  // namespace

FleetState init_fleet(const RoadGraph& g, const SimConfig& cfg) {
    check(cfg);
    if (g.network().sites.empty()) throw std::invalid_argument("network has no sites");

    std::vector<EdgeId> edges = cfg.placement_edges;
    if (edges.empty()) {
        for (const auto& e : g.network().edges) edges.push_back(e.id);
        std::sort(edges.begin(), edges.end());
    }
    for (auto e : edges)
        if (!g.has_edge(e)) throw std::invalid_argument("placement edge " + std::to_string(e) + " does not exist");

    FleetState s;
    s.rng.seed(cfg.seed);
    for (const auto& site : g.network().sites) s.sites.emplace(site.node, SiteQueue{});

    s.vehicles.resize(static_cast<std::size_t>(cfg.vehicle_count));
    for (int i = 0; i < cfg.vehicle_count; ++i) {
        auto& v = s.vehicles[i];
        v.id = i;
        v.position = {edges[static_cast<std::size_t>(i) % edges.size()], 0.0};
        v.route = {v.position.edge};
    }
    for (auto& v : s.vehicles) {
        v.goal_site = dispatch(s, g, v.id);
        v.route = route(g, v.position, v.goal_site);
        refresh_remaining(v, g);
    }
    return s;
}

void set_commands(FleetState& state, const RoadGraph& g, std::span<const double> fractions) {
    if (fractions.size() != state.vehicles.size())
        throw std::invalid_argument("expected one command per vehicle");
    for (auto& v : state.vehicles) {
        double f = fractions[static_cast<std::size_t>(v.id)];
        if (!(f >= 0.0 && f <= 1.0)) {
            const double clamped = std::isnan(f) ? 0.0 : std::clamp(f, 0.0, 1.0);
            state.warnings.push_back("vehicle " + std::to_string(v.id) + ": command " +
                                     std::to_string(f) + " clamped to " + std::to_string(clamped));
            f = clamped;
        }
        v.command_fraction = f;
        v.commanded_speed = f * g.edge(v.position.edge).speed_limit;
    }
}

NodeId dispatch(const FleetState& state, const RoadGraph& g, int vehicle_id) {
    const auto& v = state.vehicles.at(static_cast<std::size_t>(vehicle_id));
    const SiteKind wanted =
        v.last_service == SiteKind::loading ? SiteKind::discharge : SiteKind::loading;
    NodeId best = -1;
    double best_d = kUnreachable;
    for (const auto& site : g.network().sites) {
        if (site.kind != wanted) continue;
        const double d = distance_to_node(g, v.position, site.node);
        if (d == kUnreachable) continue;
        if (d < best_d || (d == best_d && site.node < best)) {
            best_d = d;
            best = site.node;
        }
    }
    if (best_d == kUnreachable)
        throw Unreachable("vehicle " + std::to_string(vehicle_id) + " cannot reach any " +
                          to_string(wanted) + " site");
    return best;
}

void step_physics(FleetState& state, const RoadGraph& g, const SimConfig& cfg, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    const double a_max = cfg.max_acceleration;
    const double b_max = cfg.max_deceleration;

    const Occupancy occ = build_occupancy(state);
    const std::size_t n = state.vehicles.size();

    // Speeds for this step are decided from the state at the start of the step.
    std::vector<double> next_speed(n, 0.0);
    std::vector<double> leader_gap(n, kUnreachable);
    for (const auto& v : state.vehicles) {
        if (v.phase != Phase::traveling) continue;
        const auto& e0 = g.edge(v.position.edge);
        double target = std::min(v.commanded_speed, e0.speed_limit);

        const double v_up = v.speed + a_max * dt;
        const double reach = v_up * dt + v_up * v_up / (2.0 * b_max);
        const double lookahead = std::max(cfg.headway_distance, reach + cfg.standstill_gap);

        // Slower edges ahead and the stop at the goal.
        double cum = e0.length - v.position.offset;
        for (std::size_t k = 1; k < v.route.size() && cum <= reach; ++k) {
            const auto& ek = g.edge(v.route[k]);
            if (ek.speed_limit < target)
                target = std::min(target, safe_speed(cum, ek.speed_limit, b_max, dt));
            cum += ek.length;
        }
        target = std::min(target, safe_speed(v.remaining_distance, 0.0, b_max, dt));

        const Leader lead = find_leader(state, g, occ, v, lookahead, b_max, dt);
        if (lead.gap != kUnreachable) {
            target = std::min(target, safe_speed(lead.gap - cfg.standstill_gap, 0.0, b_max, dt));
            if (lead.gap < cfg.headway_distance) target = std::min(target, lead.speed);
            leader_gap[v.id] = lead.gap;
        }
        target = std::max(target, 0.0);

        double vn = std::clamp(target, v.speed - b_max * dt, v.speed + a_max * dt);
        vn = std::max(vn, 0.0);
        // Only reachable from inconsistent starting states (e.g. co-located
        // vehicles): never move through the leader or past the goal.
        if (vn * dt > leader_gap[v.id]) vn = std::max(0.0, leader_gap[v.id]) / dt;
        if (vn * dt > v.remaining_distance) vn = v.remaining_distance / dt;
        next_speed[v.id] = vn;
    }

    for (auto& v : state.vehicles) {
        if (v.phase == Phase::queued) v.time_since_stop += dt;
        if (v.phase != Phase::traveling) continue;

        const double vn = next_speed[v.id];
        auto& st = state.speed_stats;
        ++st.samples;
        st.speed_sum += vn;
        if (vn < kLowSpeedThreshold) ++st.low_speed_samples;
        const auto bin = static_cast<std::size_t>(std::floor(vn));
        if (st.histogram.size() <= bin) st.histogram.resize(bin + 1, 0);
        ++st.histogram[bin];

        v.speed = vn;
        const double step = vn * dt;
        v.distance_this_period += step;
        v.odometer += step;
        v.distance_since_stop += step;
        v.time_since_stop += dt;

        double left = step;
        while (true) {
            const auto& e = g.edge(v.position.edge);
            const double room = e.length - v.position.offset;
            if (left < room) {
                v.position.offset += left;
                break;
            }
            left -= room;
            if (v.route.size() > 1) {
                v.route.erase(v.route.begin());
                v.position = {v.route.front(), 0.0};
                v.commanded_speed = v.command_fraction * g.edge(v.position.edge).speed_limit;
            } else {
                v.position.offset = e.length;
                break;
            }
        }
        refresh_remaining(v, g);
        if (v.remaining_distance <= kArrivalTolerance) {
            v.position = {v.route.back(), g.edge(v.route.back()).length};
            v.route = {v.position.edge};
            arrive(state, g, v.id);
        }
    }

    // Service progress, departures and FIFO admission, sites in node order.
    for (auto& [node, q] : state.sites) {
        if (q.in_service >= 0) {
            auto& v = state.vehicles[q.in_service];
            v.service_remaining -= dt;
            if (v.service_remaining <= 1e-9) {
                if (!v.awaiting_departure) {
                    complete_service(state, g, v.id);
                    v.awaiting_departure = true;
                }
                const Occupancy now = build_occupancy(state);
                const EdgeId next = v.route.at(1);
                if (entry_clear(state, g, now, std::span(v.route).subspan(1), v.id, cfg, dt)) {
                    v.route.erase(v.route.begin());
                    v.position = {next, 0.0};
                    v.phase = Phase::traveling;
                    v.speed = 0.0;
                    v.service_remaining = 0.0;
                    v.awaiting_departure = false;
                    v.time_since_stop = 0.0;
                    v.distance_since_stop = 0.0;
                    v.commanded_speed = v.command_fraction * g.edge(next).speed_limit;
                    refresh_remaining(v, g);
                    q.in_service = -1;
                }
            }
        }
        if (q.in_service < 0 && !q.waiting.empty()) {
            const int vid = q.waiting.front();
            q.waiting.pop_front();
            start_service(state, g, vid);
        }
    }

    state.clock += dt;
}

std::vector<double> max_speed_policy(const FleetState& state) {
    return std::vector<double>(state.vehicles.size(), 1.0);
}

MetricsSnapshot metrics(const FleetState& state) {
    MetricsSnapshot m;
    for (const auto& v : state.vehicles) {
        m.cycles_per_vehicle.push_back(v.cycles_completed);
        m.total_cycles += v.cycles_completed;
    }
    const auto& st = state.speed_stats;
    m.speed_samples = st.samples;
    if (st.samples > 0) {
        m.mean_speed = st.speed_sum / static_cast<double>(st.samples);
        m.low_speed_fraction =
            static_cast<double>(st.low_speed_samples) / static_cast<double>(st.samples);
    }
    m.speed_histogram = st.histogram;
    return m;
}

void begin_control_period(FleetState& state) {
    for (auto& v : state.vehicles) v.distance_this_period = 0.0;
}

void run_control_period(FleetState& state, const RoadGraph& g, const SimConfig& cfg) {
    const int steps = cfg.steps_per_period();
    for (int i = 0; i < steps; ++i) step_physics(state, g, cfg, cfg.dt);
}

std::vector<double> distance_matrix(const FleetState& state, const RoadGraph& g) {
    const std::size_t n = state.vehicles.size();
    std::vector<double> d(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j)
                d[i * n + j] = travel_distance(g, state.vehicles[i].position, state.vehicles[j].position);
    return d;
}

}  // namespace knrl
