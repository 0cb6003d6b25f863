#include "knrl/replay.hpp"

#include <stdexcept>

namespace knrl {

ReplayBuffer::ReplayBuffer(std::size_t capacity, int obs_dim, int action_dim)
    : capacity_(capacity), obs_dim_(obs_dim), action_dim_(action_dim) {
    if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
    const auto cap = static_cast<Eigen::Index>(capacity);
    obs_.resize(obs_dim, cap);
    actions_.resize(action_dim, cap);
    rewards_.resize(cap);
    next_obs_.resize(obs_dim, cap);
    time_limit_.resize(capacity);
    members_.resize(capacity * static_cast<std::size_t>(action_dim));
}

void ReplayBuffer::push(const GroupTransition& t) {
    if (static_cast<int>(t.obs.size()) != obs_dim_ || static_cast<int>(t.next_obs.size()) != obs_dim_ ||
        static_cast<int>(t.actions.size()) != action_dim_ ||
        static_cast<int>(t.members.size()) != action_dim_)
        throw std::invalid_argument("transition dimensions do not match the buffer");
    if (!(t.reward >= 0.0)) throw std::invalid_argument("transition reward must be non-negative");

    const auto c = static_cast<Eigen::Index>(next_);
    obs_.col(c) = Eigen::Map<const nn::Vector>(t.obs.data(), obs_dim_);
    next_obs_.col(c) = Eigen::Map<const nn::Vector>(t.next_obs.data(), obs_dim_);
    actions_.col(c) = Eigen::Map<const nn::Vector>(t.actions.data(), action_dim_);
    rewards_(c) = t.reward;
    time_limit_[next_] = t.time_limit ? 1 : 0;
    std::copy(t.members.begin(), t.members.end(),
              members_.begin() + static_cast<std::ptrdiff_t>(next_ * static_cast<std::size_t>(action_dim_)));

    next_ = (next_ + 1) % capacity_;
    if (size_ < capacity_) ++size_;
    ++pushed_;
}

std::size_t ReplayBuffer::slot(std::size_t i) const noexcept {
    return size_ < capacity_ ? i : (next_ + i) % capacity_;
}

Batch ReplayBuffer::sample(int batch_size, std::mt19937_64& rng) const {
    if (size_ == 0) throw std::logic_error("cannot sample from an empty replay buffer");
    if (batch_size <= 0) throw std::invalid_argument("batch size must be positive");
    std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
    Batch b;
    b.obs.resize(obs_dim_, batch_size);
    b.next_obs.resize(obs_dim_, batch_size);
    b.actions.resize(action_dim_, batch_size);
    b.rewards.resize(batch_size);
    b.time_limit.resize(static_cast<std::size_t>(batch_size));
    for (int j = 0; j < batch_size; ++j) {
        const auto c = static_cast<Eigen::Index>(pick(rng));
        b.obs.col(j) = obs_.col(c);
        b.next_obs.col(j) = next_obs_.col(c);
        b.actions.col(j) = actions_.col(c);
        b.rewards(j) = rewards_(c);
        b.time_limit[static_cast<std::size_t>(j)] = time_limit_[static_cast<std::size_t>(c)];
    }
    return b;
}

GroupTransition ReplayBuffer::at(std::size_t i) const {
    if (i >= size_) throw std::out_of_range("replay index out of range");
    const auto s = slot(i);
    const auto c = static_cast<Eigen::Index>(s);
    GroupTransition t;
    t.obs.assign(obs_.col(c).data(), obs_.col(c).data() + obs_dim_);
    t.next_obs.assign(next_obs_.col(c).data(), next_obs_.col(c).data() + obs_dim_);
    t.actions.assign(actions_.col(c).data(), actions_.col(c).data() + action_dim_);
    t.reward = rewards_(c);
    t.time_limit = time_limit_[s] != 0;
    const auto base = members_.begin() + static_cast<std::ptrdiff_t>(s * static_cast<std::size_t>(action_dim_));
    t.members.assign(base, base + action_dim_);
    return t;
}

}  // namespace knrl
