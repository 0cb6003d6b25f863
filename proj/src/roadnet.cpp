#include "knrl/roadnet.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_set>

namespace knrl {

const char* to_string(SiteKind kind) {
    return kind == SiteKind::loading ? "loading" : "discharge";
}

namespace {

std::string join_errors(const std::vector<ValidationError>& errors) {
    std::ostringstream os;
    os << "invalid road network:";
    for (const auto& e : errors) os << "\n  " << e.element << ": " << e.message;
    return os.str();
}

// Nodes reachable from `start` following directed edges (or reversed edges).
std::vector<char> reachable(const RoadNetwork& net,
                            const std::unordered_map<NodeId, std::size_t>& index,
                            std::size_t start, bool reverse) {
    std::vector<std::vector<std::size_t>> adj(net.nodes.size());
    for (const auto& e : net.edges) {
        auto f = index.find(e.from);
        auto t = index.find(e.to);
        if (f == index.end() || t == index.end()) continue;
        if (reverse)
            adj[t->second].push_back(f->second);
        else
            adj[f->second].push_back(t->second);
    }
    std::vector<char> seen(net.nodes.size(), 0);
    std::vector<std::size_t> stack{start};
    seen[start] = 1;
    while (!stack.empty()) {
        auto u = stack.back();
        stack.pop_back();
        for (auto v : adj[u]) {
            if (!seen[v]) {
                seen[v] = 1;
                stack.push_back(v);
            }
        }
    }
    return seen;
}

}  // namespace

std::vector<ValidationError> validate(const RoadNetwork& net) {
    std::vector<ValidationError> errors;
    auto err = [&](std::string element, std::string message) {
        errors.push_back({std::move(element), std::move(message)});
    };

    std::unordered_map<NodeId, std::size_t> node_index;
    for (std::size_t i = 0; i < net.nodes.size(); ++i) {
        const auto& n = net.nodes[i];
        if (!node_index.emplace(n.id, i).second)
            err("node " + std::to_string(n.id), "duplicate node id");
        if (!std::isfinite(n.x) || !std::isfinite(n.y))
            err("node " + std::to_string(n.id), "non-finite coordinates");
    }
    if (net.nodes.empty()) err("network", "no nodes");

    std::unordered_set<EdgeId> edge_ids;
    for (const auto& e : net.edges) {
        const auto name = "edge " + std::to_string(e.id);
        if (!edge_ids.insert(e.id).second) err(name, "duplicate edge id");
        if (!node_index.contains(e.from))
            err(name, "from-node " + std::to_string(e.from) + " does not exist");
        if (!node_index.contains(e.to))
            err(name, "to-node " + std::to_string(e.to) + " does not exist");
        if (!(e.length > 0.0) || !std::isfinite(e.length)) err(name, "non-positive length");
        if (!(e.speed_limit > 0.0) || !std::isfinite(e.speed_limit))
            err(name, "non-positive speed limit");
        if (e.from == e.to) err(name, "self loop");
    }

    bool has_loading = false;
    bool has_discharge = false;
    std::unordered_set<NodeId> site_nodes;
    for (const auto& s : net.sites) {
        const auto name = "site at node " + std::to_string(s.node);
        if (!node_index.contains(s.node)) err(name, "node does not exist");
        if (!site_nodes.insert(s.node).second) err(name, "more than one site on this node");
        if (!(s.service_time_mean >= 0.0) || !std::isfinite(s.service_time_mean))
            err(name, "negative service-time mean");
        if (!(s.service_time_spread >= 0.0) || !std::isfinite(s.service_time_spread))
            err(name, "negative service-time spread");
        has_loading |= s.kind == SiteKind::loading;
        has_discharge |= s.kind == SiteKind::discharge;
    }
    if (!has_loading) err("network", "no loading site");
    if (!has_discharge) err("network", "no discharge site");

    // Strong connectivity over site nodes: every site reachable from the first
    // one and the first one reachable from every site.
    std::vector<std::size_t> site_idx;
    for (const auto& s : net.sites) {
        auto it = node_index.find(s.node);
        if (it != node_index.end()) site_idx.push_back(it->second);
    }
    if (site_idx.size() > 1) {
        auto fwd = reachable(net, node_index, site_idx.front(), false);
        auto bwd = reachable(net, node_index, site_idx.front(), true);
        for (auto i : site_idx) {
            if (!fwd[i] || !bwd[i]) {
                err("site at node " + std::to_string(net.nodes[i].id),
                    "not strongly connected with the other sites");
            }
        }
    }
    return errors;
}

InvalidNetwork::InvalidNetwork(std::vector<ValidationError> errors)
    : std::runtime_error(join_errors(errors)), errors_(std::move(errors)) {}

RoadGraph::RoadGraph(RoadNetwork net) : net_(std::move(net)) {
    if (auto errors = validate(net_); !errors.empty()) throw InvalidNetwork(std::move(errors));

    const auto n = net_.nodes.size();
    for (std::size_t i = 0; i < n; ++i) node_index_.emplace(net_.nodes[i].id, i);
    for (std::size_t i = 0; i < net_.edges.size(); ++i) edge_index_.emplace(net_.edges[i].id, i);

    out_.assign(n, {});
    in_.assign(n, {});
    for (const auto& e : net_.edges) {
        out_[node_index_.at(e.from)].push_back(e.id);
        in_[node_index_.at(e.to)].push_back(e.id);
        max_speed_limit_ = std::max(max_speed_limit_, e.speed_limit);
    }
    for (auto& v : out_) std::sort(v.begin(), v.end());
    for (auto& v : in_) std::sort(v.begin(), v.end());

    // Dijkstra from every node.
    dist_.assign(n * n, kUnreachable);
    using Item = std::pair<double, std::size_t>;
    for (std::size_t s = 0; s < n; ++s) {
        double* row = &dist_[s * n];
        row[s] = 0.0;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
        pq.emplace(0.0, s);
        while (!pq.empty()) {
            auto [d, u] = pq.top();
            pq.pop();
            if (d > row[u]) continue;
            for (auto eid : out_[u]) {
                const auto& e = edge(eid);
                auto v = node_index_.at(e.to);
                double nd = d + e.length;
                if (nd < row[v]) {
                    row[v] = nd;
                    pq.emplace(nd, v);
                }
            }
        }
    }
    for (double d : dist_)
        if (std::isfinite(d)) diameter_ = std::max(diameter_, d);
    if (diameter_ <= 0.0) diameter_ = 1.0;

    double max_x = net_.nodes.front().x;
    double max_y = net_.nodes.front().y;
    min_x_ = max_x;
    min_y_ = max_y;
    for (const auto& nd : net_.nodes) {
        min_x_ = std::min(min_x_, nd.x);
        min_y_ = std::min(min_y_, nd.y);
        max_x = std::max(max_x, nd.x);
        max_y = std::max(max_y, nd.y);
    }
    extent_ = std::max({max_x - min_x_, max_y - min_y_, 1.0});
}

const Edge& RoadGraph::edge(EdgeId id) const {
    auto it = edge_index_.find(id);
    if (it == edge_index_.end()) throw std::out_of_range("unknown edge " + std::to_string(id));
    return net_.edges[it->second];
}

const Node& RoadGraph::node(NodeId id) const { return net_.nodes[node_idx(id)]; }

std::size_t RoadGraph::node_idx(NodeId id) const {
    auto it = node_index_.find(id);
    if (it == node_index_.end()) throw std::out_of_range("unknown node " + std::to_string(id));
    return it->second;
}

const std::vector<EdgeId>& RoadGraph::out_edges(NodeId id) const { return out_[node_idx(id)]; }
const std::vector<EdgeId>& RoadGraph::in_edges(NodeId id) const { return in_[node_idx(id)]; }

double RoadGraph::node_distance(NodeId from, NodeId to) const {
    return dist_[node_idx(from) * node_count() + node_idx(to)];
}

std::pair<double, double> RoadGraph::coordinates(const Position& p) const {
    const auto& e = edge(p.edge);
    const auto& a = node(e.from);
    const auto& b = node(e.to);
    const double t = std::clamp(p.offset / e.length, 0.0, 1.0);
    return {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
}

Position RoadGraph::node_position(NodeId id) const {
    const auto& in = in_edges(id);
    if (!in.empty()) return {in.front(), edge(in.front()).length};
    const auto& out = out_edges(id);
    if (!out.empty()) return {out.front(), 0.0};
    throw std::out_of_range("node " + std::to_string(id) + " has no edges");
}

bool RoadGraph::valid_position(const Position& p) const noexcept {
    auto it = edge_index_.find(p.edge);
    if (it == edge_index_.end()) return false;
    return p.offset >= 0.0 && p.offset <= net_.edges[it->second].length;
}

double travel_distance(const RoadGraph& g, const Position& a, const Position& b) {
    if (a.edge == b.edge && b.offset >= a.offset) return b.offset - a.offset;
    const auto& ea = g.edge(a.edge);
    const auto& eb = g.edge(b.edge);
    const double mid = g.node_distance(ea.to, eb.from);
    if (mid == kUnreachable) return kUnreachable;
    return (ea.length - a.offset) + mid + b.offset;
}

double distance_to_node(const RoadGraph& g, const Position& from, NodeId to) {
    const auto& e = g.edge(from.edge);
    const double mid = g.node_distance(e.to, to);
    if (mid == kUnreachable) return kUnreachable;
    return (e.length - from.offset) + mid;
}

std::vector<EdgeId> route(const RoadGraph& g, const Position& from, NodeId to) {
    const auto& first = g.edge(from.edge);
    if (g.node_distance(first.to, to) == kUnreachable)
        throw Unreachable("node " + std::to_string(to) + " unreachable from edge " +
                          std::to_string(from.edge));
    std::vector<EdgeId> path{from.edge};
    NodeId u = first.to;
    while (u != to) {
        const double remaining = g.node_distance(u, to);
        const double tol = 1e-9 * (1.0 + remaining);
        EdgeId chosen = -1;
        for (auto eid : g.out_edges(u)) {  // ascending id: first match wins ties
            const auto& e = g.edge(eid);
            const double via = g.node_distance(e.to, to);
            if (via == kUnreachable) continue;
            if (std::abs(e.length + via - remaining) <= tol) {
                chosen = eid;
                break;
            }
        }
        if (chosen < 0) throw Unreachable("routing table inconsistent");
        path.push_back(chosen);
        u = g.edge(chosen).to;
    }
    return path;
}

double route_cost(const RoadGraph& g, const Position& from, const std::vector<EdgeId>& edges) {
    if (edges.empty()) return 0.0;
    double cost = g.edge(edges.front()).length - from.offset;
    for (std::size_t i = 1; i < edges.size(); ++i) cost += g.edge(edges[i]).length;
    return cost;
}

}  // namespace knrl
