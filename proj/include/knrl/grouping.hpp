#pragma once

// k-nearest group formation over a (possibly asymmetric) distance matrix,
// removal of groups with identical member sets, and the group-count bound
// ceil(N / (k+1)) <= m <= N.

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace knrl {

struct Group {
    int anchor{0};
    /// k+1 agent ids: anchor first, then ascending distance from the anchor,
    /// ties by ascending id.
    std::vector<int> members;
    /// Per member, summed row distance from that member to the other k members.
    std::vector<double> total_distance;
};

struct GroupSet {
    std::vector<Group> groups;  // ascending anchor id
    int n{0};
    int k{0};

    int m() const noexcept { return static_cast<int>(groups.size()); }
};

class GroupingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Square distance matrix in row-major order; entry (i, j) is the distance
/// from agent i to agent j. Infinite entries mark unreachable pairs.
class DistanceMatrix {
public:
    DistanceMatrix(std::span<const double> values, int n);

    int size() const noexcept { return n_; }
    double operator()(int from, int to) const noexcept { return values_[static_cast<std::size_t>(from * n_ + to)]; }

private:
    std::span<const double> values_;
    int n_;
};

/// One candidate per agent (itself plus its k nearest by row distance, ties
/// by id); candidates with the same member set collapse onto the one with the
/// smallest anchor id. Throws GroupingError on N < k+1 ("insufficient agents")
/// or when an agent has fewer than k reachable peers ("disconnected agent").
GroupSet form_groups(const DistanceMatrix& distances, int k);

struct BoundViolation {
    int n{0};
    int k{0};
    int m{0};

    std::string describe() const;
};

/// Checks ceil(N/(k+1)) <= m <= N.
std::optional<BoundViolation> verify_bounds(int n, int k, int m);
std::optional<BoundViolation> verify_bounds(const GroupSet& gs);

struct Membership {
    int group{0};  // index into GroupSet::groups
    int slot{0};   // position within the group's member list
    double total_distance{0.0};
};

/// For every agent id 0..N-1, the retained groups that contain it.
std::vector<std::vector<Membership>> membership_index(const GroupSet& gs);

}  // namespace knrl
