#include <doctest.h>

#include <algorithm>
#include <array>
#include <random>

#include "knrl/grouping.hpp"
#include "test_support.hpp"

using namespace knrl;

namespace {

GroupSet groups_of(const std::vector<double>& d, int n, int k) { return form_groups(DistanceMatrix(d, n), k); }

int score_sum(const GroupSet& gs) {
    int total = 0;
    for (const auto& memberships : membership_index(gs)) total += static_cast<int>(memberships.size());
    return total;
}

}  // namespace

TEST_CASE("equally spaced circle keeps every group") {
    const auto d = testing::circle_distances(8);
    const auto gs = groups_of(d, 8, 2);
    CHECK(gs.m() == 8);
    CHECK(!verify_bounds(gs));
}

TEST_CASE("k = 0 gives singleton groups with zero total distance") {
    std::mt19937_64 rng(1);
    const auto d = testing::random_distance_matrix(9, rng);
    const auto gs = groups_of(d, 9, 0);
    CHECK(gs.m() == 9);
    const auto idx = membership_index(gs);
    for (int i = 0; i < 9; ++i) {
        REQUIRE(idx[i].size() == 1);
        CHECK(idx[i][0].total_distance == 0.0);
        CHECK(gs.groups[idx[i][0].group].members == std::vector<int>{i});
    }
}

TEST_CASE("k = N-1 gives one group of everyone") {
    std::mt19937_64 rng(2);
    for (int n : {2, 5, 11}) {
        const auto d = testing::random_distance_matrix(n, rng);
        const auto gs = groups_of(d, n, n - 1);
        REQUIRE(gs.m() == 1);
        CHECK(gs.groups[0].anchor == 0);
        CHECK(gs.groups[0].members.size() == static_cast<std::size_t>(n));
    }
}

TEST_CASE("tight clusters become exactly the groups") {
    std::mt19937_64 rng(3);
    const auto d = testing::cluster_distances(3, 5, rng);
    const auto gs = groups_of(d, 15, 4);
    REQUIRE(gs.m() == 3);
    for (int c = 0; c < 3; ++c) {
        auto members = gs.groups[c].members;
        std::sort(members.begin(), members.end());
        CHECK(members == std::vector<int>{5 * c, 5 * c + 1, 5 * c + 2, 5 * c + 3, 5 * c + 4});
        CHECK(gs.groups[c].anchor == 5 * c);
    }
    for (const auto& m : membership_index(gs)) CHECK(m.size() == 1);
    CHECK(testing::retained_sets(gs) == testing::brute_force_groups(d, 15, 4));
}

TEST_CASE("members are ordered by distance from the anchor with ties by id") {
    // Row 0: agents 1..4 at distances 5, 3, 3, 9.
    const int n = 5;
    std::vector<double> d(n * n, 1.0);
    for (int i = 0; i < n; ++i) d[i * n + i] = 0.0;
    d[1] = 5.0;
    d[2] = 3.0;
    d[3] = 3.0;
    d[4] = 9.0;
    const auto gs = groups_of(d, n, 3);
    CHECK(gs.groups[0].anchor == 0);
    CHECK(gs.groups[0].members == std::vector<int>{0, 2, 3, 1});
    CHECK(gs.groups[0].total_distance[0] == doctest::Approx(11.0));
}

TEST_CASE("grouping uses the row of the anchor in an asymmetric matrix") {
    // 0 sees 1 as near, 1 sees 2 as near.
    const std::vector<double> d{0, 1, 50, 50, 0, 1, 1, 50, 0};
    const auto gs = groups_of(d, 3, 1);
    const auto sets = testing::retained_sets(gs);
    CHECK(sets.count({0, 1}) == 1);
    CHECK(sets.count({1, 2}) == 1);
    CHECK(sets.at({0, 2}) == 2);
}

TEST_CASE("retained sets match the brute-force oracle on random instances") {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 100; ++t) {
        const int n = std::uniform_int_distribution<int>(1, 12)(rng);
        const int k = std::uniform_int_distribution<int>(0, n - 1)(rng);
        const auto d = testing::random_distance_matrix(n, rng);
        const auto gs = groups_of(d, n, k);
        CHECK(testing::retained_sets(gs) == testing::brute_force_groups(d, n, k));
    }
}

TEST_CASE("group-count bounds and the score identity hold on random instances") {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 200; ++t) {
        const int k = std::array{0, 1, 2, 4, 7}[t % 5];
        const int n = std::uniform_int_distribution<int>(k + 1, 30)(rng);
        const auto d = testing::random_distance_matrix(n, rng);
        const auto gs = groups_of(d, n, k);
        CHECK(!verify_bounds(gs));
        CHECK(score_sum(gs) == gs.m() * (k + 1));
        for (const auto& m : membership_index(gs)) CHECK(!m.empty());
    }
}

TEST_CASE("regrouping an unchanged matrix gives the same groups") {
    std::mt19937_64 rng(6);
    const auto d = testing::random_distance_matrix(10, rng);
    const auto a = groups_of(d, 10, 3);
    const auto b = groups_of(d, 10, 3);
    REQUIRE(a.m() == b.m());
    for (int i = 0; i < a.m(); ++i) {
        CHECK(a.groups[i].anchor == b.groups[i].anchor);
        CHECK(a.groups[i].members == b.groups[i].members);
    }
}

TEST_CASE("bound checks on hand-picked counts") {
    CHECK(!verify_bounds(13, 4, 3));
    const auto low = verify_bounds(13, 4, 2);
    REQUIRE(low);
    CHECK(low->n == 13);
    CHECK(low->k == 4);
    CHECK(low->m == 2);
    CHECK(!verify_bounds(8, 2, 8));
    CHECK(verify_bounds(8, 2, 9));
}

TEST_CASE("too few agents or unreachable peers are errors") {
    const std::vector<double> two{0, 1, 1, 0};
    CHECK_THROWS_WITH_AS(groups_of(two, 2, 2), doctest::Contains("insufficient agents"), GroupingError);
    const double inf = kUnreachable;
    const std::vector<double> split{0, 1, inf, 1, 0, inf, inf, inf, 0};
    CHECK_THROWS_WITH_AS(groups_of(split, 3, 1), doctest::Contains("disconnected agent"), GroupingError);
}

TEST_CASE("unreachable entries are never chosen while finite peers suffice") {
    const double inf = kUnreachable;
    const std::vector<double> d{0, inf, 4, 1, 0, 2, 3, inf, 0};
    const auto gs = groups_of(d, 3, 1);
    // The anchor's own row decides membership, so its total stays finite.
    for (const auto& g : gs.groups) CHECK(g.total_distance.front() != inf);
}
