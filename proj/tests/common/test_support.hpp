#pragma once

// Random instances and brute-force reference implementations shared by the
// unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "knrl/grouping.hpp"
#include "knrl/nn.hpp"
#include "knrl/roadnet.hpp"
#include "knrl/simulator.hpp"

namespace knrl::testing {

/// Strongly connected random graph: a directed ring over all nodes plus
/// `chords` random extra edges. Site 0 loads, the last node discharges.
inline RoadNetwork random_network(int nodes, int chords, std::mt19937_64& rng, double min_len = 5.0,
                                  double max_len = 200.0) {
    std::uniform_real_distribution<double> len(min_len, max_len);
    std::uniform_real_distribution<double> coord(0.0, 1000.0);
    std::uniform_int_distribution<int> pick(0, nodes - 1);
    RoadNetwork net;
    for (int i = 0; i < nodes; ++i) net.nodes.push_back({i, coord(rng), coord(rng)});
    EdgeId id = 1;
    for (int i = 0; i < nodes; ++i) net.edges.push_back({id++, i, (i + 1) % nodes, len(rng), 10.0});
    for (int c = 0; c < chords; ++c) {
        const int a = pick(rng);
        const int b = pick(rng);
        if (a == b) continue;
        net.edges.push_back({id++, a, b, len(rng), 5.0 + 10.0 * std::uniform_real_distribution<double>()(rng)});
    }
    net.sites.push_back({0, SiteKind::loading, 30.0, 5.0});
    net.sites.push_back({nodes - 1, SiteKind::discharge, 20.0, 5.0});
    return net;
}

/// Position strictly inside a random edge.
inline Position random_position(const RoadGraph& g, std::mt19937_64& rng) {
    const auto& edges = g.network().edges;
    const auto& e = edges[std::uniform_int_distribution<std::size_t>(0, edges.size() - 1)(rng)];
    return {e.id, std::uniform_real_distribution<double>(0.01, 0.99)(rng) * e.length};
}

/// Minimum over every simple node path of the position-to-position cost.
inline double brute_force_distance(const RoadGraph& g, const Position& a, const Position& b) {
    if (a == b) return 0.0;
    const auto& ea = g.edge(a.edge);
    const auto& eb = g.edge(b.edge);
    double best = std::numeric_limits<double>::infinity();
    if (a.edge == b.edge && b.offset >= a.offset) best = b.offset - a.offset;

    std::set<NodeId> visited;
    std::function<void(NodeId, double)> dfs = [&](NodeId at, double cost) {
        if (at == eb.from) best = std::min(best, (ea.length - a.offset) + cost + b.offset);
        for (EdgeId out : g.out_edges(at)) {
            const auto& e = g.edge(out);
            if (visited.contains(e.to)) continue;
            visited.insert(e.to);
            dfs(e.to, cost + e.length);
            visited.erase(e.to);
        }
    };
    visited.insert(ea.to);
    dfs(ea.to, 0.0);
    return best;
}

/// Reference grouping: for every anchor, scan all k-subsets of the other
/// agents and keep the one whose sorted (distance, id) list is smallest; then
/// collapse identical member sets onto the smallest anchor.
inline std::map<std::vector<int>, int> brute_force_groups(const std::vector<double>& d, int n, int k) {
    std::map<std::vector<int>, int> retained;  // sorted members -> anchor
    for (int anchor = 0; anchor < n; ++anchor) {
        std::vector<int> others;
        for (int j = 0; j < n; ++j)
            if (j != anchor) others.push_back(j);
        std::vector<std::pair<double, int>> best;
        std::vector<int> best_set;
        std::vector<bool> mask(others.size(), false);
        std::fill(mask.begin(), mask.begin() + k, true);
        do {
            std::vector<std::pair<double, int>> key;
            std::vector<int> set{anchor};
            bool finite = true;
            for (std::size_t i = 0; i < others.size(); ++i) {
                if (!mask[i]) continue;
                const double dist = d[static_cast<std::size_t>(anchor * n + others[i])];
                if (!std::isfinite(dist)) finite = false;
                key.emplace_back(dist, others[i]);
                set.push_back(others[i]);
            }
            if (!finite) continue;
            std::sort(key.begin(), key.end());
            if (best_set.empty() || key < best) {
                best = key;
                best_set = set;
            }
        } while (std::prev_permutation(mask.begin(), mask.end()));
        std::sort(best_set.begin(), best_set.end());
        retained.emplace(best_set, anchor);  // keeps the first (smallest) anchor
    }
    return retained;
}

/// Random asymmetric distance matrix from vehicle positions on a random graph.
inline std::vector<double> random_distance_matrix(int n, std::mt19937_64& rng) {
    const int nodes = std::uniform_int_distribution<int>(3, 9)(rng);
    const RoadGraph g(random_network(nodes, nodes, rng));
    std::vector<Position> pos;
    for (int i = 0; i < n; ++i) pos.push_back(random_position(g, rng));
    std::vector<double> d(static_cast<std::size_t>(n * n), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) d[static_cast<std::size_t>(i * n + j)] = travel_distance(g, pos[i], pos[j]);
    return d;
}

/// Circle of n equally spaced agents with circular (shorter-arc) distance.
inline std::vector<double> circle_distances(int n) {
    std::vector<double> d(static_cast<std::size_t>(n * n), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const int step = std::abs(i - j);
            d[static_cast<std::size_t>(i * n + j)] = std::min(step, n - step);
        }
    return d;
}

/// `clusters` tight clusters of `size` agents, far apart from each other.
inline std::vector<double> cluster_distances(int clusters, int size, std::mt19937_64& rng) {
    const int n = clusters * size;
    std::uniform_real_distribution<double> near(1.0, 10.0);
    std::uniform_real_distribution<double> far(1000.0, 2000.0);
    std::vector<double> d(static_cast<std::size_t>(n * n), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) d[static_cast<std::size_t>(i * n + j)] = (i / size == j / size) ? near(rng) : far(rng);
    return d;
}

inline std::map<std::vector<int>, int> retained_sets(const GroupSet& gs) {
    std::map<std::vector<int>, int> out;
    for (const auto& g : gs.groups) {
        auto m = g.members;
        std::sort(m.begin(), m.end());
        out.emplace(m, g.anchor);
    }
    return out;
}

/// Relative error of one tensor: |analytic - numeric| / max(|analytic|, |numeric|).
inline double relative_error(const nn::Matrix& analytic, const nn::Matrix& numeric) {
    const double scale = std::max({analytic.norm(), numeric.norm(), 1e-10});
    return (analytic - numeric).norm() / scale;
}

/// Central finite differences over every entry of every tensor of `net`;
/// returns the relative error per tensor (w0, b0, w1, b1, ...).
inline std::vector<double> gradient_errors(nn::Mlp& net, const nn::Gradients& grads,
                                           const std::function<double()>& loss, double h = 1e-5) {
    std::vector<double> errors;
    auto numeric = [&](auto& tensor) {
        nn::Matrix out(tensor.rows(), tensor.cols());
        for (Eigen::Index i = 0; i < tensor.size(); ++i) {
            const double keep = tensor(i);
            tensor(i) = keep + h;
            const double up = loss();
            tensor(i) = keep - h;
            const double down = loss();
            tensor(i) = keep;
            out(i) = (up - down) / (2.0 * h);
        }
        return out;
    };
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
        auto& layer = net.layers()[l];
        errors.push_back(relative_error(grads.at(l).w, numeric(layer.w)));
        errors.push_back(relative_error(nn::Matrix(grads.at(l).b), numeric(layer.b)));
    }
    return errors;
}

struct CongestionReport {
    int pass_throughs{0};      // a follower moved past the vehicle ahead of it on the same edge
    int speed_violations{0};   // above the edge limit or beyond the acceleration limits
    int steps{0};
};

/// Runs `periods` control periods with uniform random commands and checks,
/// after every physics step, that vehicles sharing an edge keep their order
/// and that speeds respect the limits.
inline CongestionReport run_congestion_episode(const RoadGraph& g, const SimConfig& cfg, int periods,
                                               std::mt19937_64& rng) {
    CongestionReport report;
    FleetState s = init_fleet(g, cfg);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double tol = 1e-9;
    for (int p = 0; p < periods; ++p) {
        std::vector<double> fractions(s.vehicles.size());
        for (auto& f : fractions) f = u(rng);
        set_commands(s, g, fractions);
        for (int step = 0; step < cfg.steps_per_period(); ++step) {
            const auto before = s.vehicles;
            step_physics(s, g, cfg, cfg.dt);
            ++report.steps;
            const auto& after = s.vehicles;
            for (std::size_t i = 0; i < after.size(); ++i) {
                const auto& v = after[i];
                if (v.phase == Phase::traveling && before[i].phase == Phase::traveling) {
                    const double limit = g.edge(before[i].position.edge).speed_limit;
                    if (v.speed > limit + tol || v.speed > before[i].speed + cfg.max_acceleration * cfg.dt + tol ||
                        v.speed < before[i].speed - cfg.max_deceleration * cfg.dt - tol)
                        ++report.speed_violations;
                }
                for (std::size_t j = 0; j < after.size(); ++j) {
                    if (i == j) continue;
                    const auto& a0 = before[i];
                    const auto& b0 = before[j];
                    const auto& a1 = after[i];
                    const auto& b1 = after[j];
                    if (a0.phase == Phase::servicing || b0.phase == Phase::servicing) continue;
                    if (a1.phase == Phase::servicing || b1.phase == Phase::servicing) continue;
                    if (a0.position.edge != b0.position.edge || a1.position.edge != a0.position.edge ||
                        b1.position.edge != a0.position.edge)
                        continue;
                    if (a0.position.offset < b0.position.offset && a1.position.offset > b1.position.offset)
                        ++report.pass_throughs;
                }
            }
        }
    }
    return report;
}

}  // namespace knrl::testing
