#pragma once

// Directed road graph, positions on edges, shortest-path routing and the
// directed travel-distance metric used to decide which vehicles are "near".

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace knrl {

using NodeId = std::int64_t;
using EdgeId = std::int64_t;

/// Sentinel returned for pairs with no directed path between them.
inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

enum class SiteKind { loading, discharge };

const char* to_string(SiteKind kind);

struct Node {
    NodeId id{0};
    double x{0.0};  // meters
    double y{0.0};  // meters
};

struct Edge {
    EdgeId id{0};
    NodeId from{0};
    NodeId to{0};
    double length{0.0};       // meters
    double speed_limit{0.0};  // meters/second
};

struct Site {
    NodeId node{0};
    SiteKind kind{SiteKind::loading};
    double service_time_mean{0.0};    // seconds
    double service_time_spread{0.0};  // seconds
};

/// Raw map description, as loaded from a scenario file. Not guaranteed valid;
/// run `validate` or construct a `RoadGraph` (which validates) before use.
struct RoadNetwork {
    std::vector<Node> nodes;
    std::vector<Edge> edges;
    std::vector<Site> sites;
};

struct ValidationError {
    std::string element;  // e.g. "edge 3", "node 7", "network"
    std::string message;
};

/// Every violated invariant, with the offending element. Empty means valid.
std::vector<ValidationError> validate(const RoadNetwork& net);

class InvalidNetwork : public std::runtime_error {
public:
    explicit InvalidNetwork(std::vector<ValidationError> errors);
    const std::vector<ValidationError>& errors() const noexcept { return errors_; }

private:
    std::vector<ValidationError> errors_;
};

class Unreachable : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Position {
    EdgeId edge{0};
    double offset{0.0};  // meters from the edge's from-node

    friend bool operator==(const Position&, const Position&) = default;
};

/// Immutable, validated view of a RoadNetwork with all-pairs node distances.
/// Read-only after construction, so one instance can be shared by any number
/// of simulations.
class RoadGraph {
public:
    explicit RoadGraph(RoadNetwork net);

    const RoadNetwork& network() const noexcept { return net_; }

    std::size_t node_count() const noexcept { return net_.nodes.size(); }
    std::size_t edge_count() const noexcept { return net_.edges.size(); }

    const Edge& edge(EdgeId id) const;
    const Node& node(NodeId id) const;
    bool has_edge(EdgeId id) const noexcept { return edge_index_.contains(id); }
    bool has_node(NodeId id) const noexcept { return node_index_.contains(id); }

    /// Outgoing edges of a node, ascending by edge id.
    const std::vector<EdgeId>& out_edges(NodeId id) const;
    /// Incoming edges of a node, ascending by edge id.
    const std::vector<EdgeId>& in_edges(NodeId id) const;

    /// Shortest directed node-to-node distance, kUnreachable if none.
    double node_distance(NodeId from, NodeId to) const;

    /// Largest finite node-to-node distance.
    double diameter() const noexcept { return diameter_; }
    double max_speed_limit() const noexcept { return max_speed_limit_; }

    /// Bounding box of node coordinates.
    double min_x() const noexcept { return min_x_; }
    double min_y() const noexcept { return min_y_; }
    double extent() const noexcept { return extent_; }

    /// (x, y) of a position, linearly interpolated along the edge.
    std::pair<double, double> coordinates(const Position& p) const;

    /// Position sitting exactly on a node: the end of its smallest-id
    /// incoming edge, or the start of its smallest-id outgoing edge.
    Position node_position(NodeId id) const;

    bool valid_position(const Position& p) const noexcept;

private:
    std::size_t node_idx(NodeId id) const;

    RoadNetwork net_;
    std::unordered_map<NodeId, std::size_t> node_index_;
    std::unordered_map<EdgeId, std::size_t> edge_index_;
    std::vector<std::vector<EdgeId>> out_;
    std::vector<std::vector<EdgeId>> in_;
    std::vector<double> dist_;  // row-major node_count x node_count
    double diameter_{0.0};
    double max_speed_limit_{0.0};
    double min_x_{0.0};
    double min_y_{0.0};
    double extent_{1.0};
};

/// Shortest directed distance from a to b: rest of a's edge, then the shortest
/// node path, then b's offset. Zero when a == b. Not symmetric in general.
double travel_distance(const RoadGraph& g, const Position& a, const Position& b);

/// Shortest directed distance from a position to a node.
double distance_to_node(const RoadGraph& g, const Position& from, NodeId to);

/// Edge sequence from a position to a node, starting with the current edge.
/// Among equal-cost paths the one whose first differing edge has the smaller
/// id wins. Throws Unreachable.
std::vector<EdgeId> route(const RoadGraph& g, const Position& from, NodeId to);

/// Sum of the edge lengths a route still has to cover from `from`.
double route_cost(const RoadGraph& g, const Position& from, const std::vector<EdgeId>& edges);

}  // namespace knrl
