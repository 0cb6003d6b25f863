#include "knrl/grouping.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace knrl {

DistanceMatrix::DistanceMatrix(std::span<const double> values, int n) : values_(values), n_(n) {
    if (n < 0 || values.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(n))
        throw std::invalid_argument("distance matrix must be N x N");
}

GroupSet form_groups(const DistanceMatrix& d, int k) {
    const int n = d.size();
    if (k < 0) throw std::invalid_argument("k must be non-negative");
    if (n < k + 1)
        throw GroupingError("insufficient agents: N=" + std::to_string(n) + " < k+1=" +
                            std::to_string(k + 1));

    GroupSet gs;
    gs.n = n;
    gs.k = k;
    std::map<std::vector<int>, int> seen;  // sorted member set -> retained group index

    std::vector<int> peers;
    for (int anchor = 0; anchor < n; ++anchor) {
        peers.clear();
        for (int j = 0; j < n; ++j)
            if (j != anchor && std::isfinite(d(anchor, j))) peers.push_back(j);
        if (static_cast<int>(peers.size()) < k)
            throw GroupingError("disconnected agent: agent " + std::to_string(anchor) + " reaches only " +
                                std::to_string(peers.size()) + " peers, needs " + std::to_string(k));
        std::partial_sort(peers.begin(), peers.begin() + k, peers.end(), [&](int a, int b) {
            const double da = d(anchor, a);
            const double db = d(anchor, b);
            return da < db || (da == db && a < b);
        });

        Group g;
        g.anchor = anchor;
        g.members.reserve(static_cast<std::size_t>(k) + 1);
        g.members.push_back(anchor);
        g.members.insert(g.members.end(), peers.begin(), peers.begin() + k);

        std::vector<int> key = g.members;
        std::sort(key.begin(), key.end());
        if (seen.contains(key)) continue;
        seen.emplace(std::move(key), gs.m());

        g.total_distance.assign(g.members.size(), 0.0);
        for (std::size_t a = 0; a < g.members.size(); ++a)
            for (std::size_t b = 0; b < g.members.size(); ++b)
                if (a != b) g.total_distance[a] += d(g.members[a], g.members[b]);
        gs.groups.push_back(std::move(g));
    }
    return gs;
}

std::string BoundViolation::describe() const {
    return "group count out of bounds: N=" + std::to_string(n) + " k=" + std::to_string(k) +
           " m=" + std::to_string(m);
}

std::optional<BoundViolation> verify_bounds(int n, int k, int m) {
    const int lower = (n + k) / (k + 1);  // ceil(n / (k+1))
    if (m < lower || m > n) return BoundViolation{n, k, m};
    return std::nullopt;
}

std::optional<BoundViolation> verify_bounds(const GroupSet& gs) {
    return verify_bounds(gs.n, gs.k, gs.m());
}

std::vector<std::vector<Membership>> membership_index(const GroupSet& gs) {
    std::vector<std::vector<Membership>> index(static_cast<std::size_t>(gs.n));
    for (int gi = 0; gi < gs.m(); ++gi) {
        const auto& g = gs.groups[static_cast<std::size_t>(gi)];
        for (std::size_t s = 0; s < g.members.size(); ++s)
            index[static_cast<std::size_t>(g.members[s])].push_back(
                {gi, static_cast<int>(s), g.total_distance[s]});
    }
    return index;
}

}  // namespace knrl
