#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "knrl/nn.hpp"

namespace knrl {

/// One retained group's experience over a control period.
struct GroupTransition {
    std::vector<int> members;      // ordered as in the group
    std::vector<double> obs;       // encoded group observation
    std::vector<double> actions;   // executed actions in [-1, 1], one per member
    double reward{0.0};            // meters, summed over members
    std::vector<double> next_obs;  // same members, after the period
    bool time_limit{false};        // last period of the shift
};

/// Column-per-sample minibatch.
struct Batch {
    nn::Matrix obs;
    nn::Matrix actions;
    nn::Vector rewards;
    nn::Matrix next_obs;
    std::vector<char> time_limit;

    int size() const noexcept { return static_cast<int>(rewards.size()); }
};

/// Fixed-capacity ring of transitions; once full, the oldest entry is
/// overwritten first. Sampling is uniform with replacement.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, int obs_dim, int action_dim);

    void push(const GroupTransition& t);
    Batch sample(int batch_size, std::mt19937_64& rng) const;
    /// i = 0 is the oldest stored transition.
    GroupTransition at(std::size_t i) const;

    std::size_t size() const noexcept { return size_; }
    std::size_t capacity() const noexcept { return capacity_; }
    std::uint64_t total_pushed() const noexcept { return pushed_; }

private:
    std::size_t slot(std::size_t i) const noexcept;

    std::size_t capacity_;
    int obs_dim_;
    int action_dim_;
    std::size_t size_{0};
    std::size_t next_{0};
    std::uint64_t pushed_{0};
    nn::Matrix obs_;
    nn::Matrix actions_;
    nn::Vector rewards_;
    nn::Matrix next_obs_;
    std::vector<char> time_limit_;
    std::vector<int> members_;
};

}  // namespace knrl
