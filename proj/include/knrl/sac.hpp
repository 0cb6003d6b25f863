#pragma once

// Soft actor-critic for the shared group policy: squashed-Gaussian actor,
// twin critics with polyak-averaged targets, fixed or learned temperature.
// One SacAgent holds the only parameter set; every group is evaluated by it.

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include "knrl/nn.hpp"
#include "knrl/replay.hpp"

namespace knrl {

struct SacConfig {
    double gamma{0.99};
    double tau{0.005};
    double alpha{0.2};
    bool auto_alpha{false};
    double target_entropy{0.0};  // used when auto_alpha; 0 means -(k+1)
    double actor_lr{3e-4};
    double critic_lr{3e-4};
    double alpha_lr{3e-4};
    int batch_size{256};
    std::size_t buffer_capacity{200000};
    std::size_t warmup{1000};
    int updates_per_step{1};
    std::vector<int> hidden{128, 128};
};

enum class ActionMode { stochastic, deterministic };

struct ActionSample {
    nn::Matrix actions;   // (k+1) x batch, in [-1, 1]
    nn::Vector log_prob;  // batch
};

struct UpdateStats {
    double critic_loss{0.0};
    double actor_loss{0.0};
    double alpha{0.0};
    double mean_log_prob{0.0};
};

class NonFiniteLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

class SacAgent {
public:
    /// Critic Q-value and its gradient with respect to the action, per column.
    using CriticFn = std::function<void(const nn::Matrix& obs, const nn::Matrix& actions,
                                        nn::Vector& q, nn::Matrix& dq_da)>;

    struct CriticLoss {
        double value{0.0};
        nn::Vector target;
        nn::Gradients q1;
        nn::Gradients q2;
    };

    struct ActorLoss {
        double value{0.0};
        double mean_log_prob{0.0};
        nn::Gradients actor;
    };

    SacAgent(int k, int obs_dim, const SacConfig& cfg, double reward_scale, std::uint64_t seed,
             bool zero_policy_output = false);

    int k() const noexcept { return k_; }
    int obs_dim() const noexcept { return obs_dim_; }
    int action_dim() const noexcept { return k_ + 1; }
    const SacConfig& config() const noexcept { return cfg_; }
    double reward_scale() const noexcept { return reward_scale_; }
    double alpha() const noexcept;
    double log_alpha() const noexcept { return log_alpha_; }

    /// Actions for a batch of observations (obs_dim x batch).
    ActionSample act(const nn::Matrix& obs, ActionMode mode, std::mt19937_64& rng) const;
    /// Stochastic actions with explicit standard-normal noise ((k+1) x batch).
    ActionSample act_with_noise(const nn::Matrix& obs, const nn::Matrix& noise) const;

    /// Bootstrapped critic targets r/scale + gamma * (min target Q - alpha log pi).
    /// The shift cutoff is not a terminal state, so every target bootstraps.
    nn::Vector critic_targets(const Batch& batch, const nn::Matrix& next_noise) const;
    CriticLoss critic_loss(const Batch& batch, const nn::Matrix& next_noise, bool with_gradients) const;

    /// mean(alpha log pi(a|s) - Q(s, a)) with a reparameterised by `noise`.
    /// Q defaults to the minimum of the two online critics.
    ActorLoss actor_loss(const nn::Matrix& obs, const nn::Matrix& noise, bool with_gradients,
                         const CriticFn* critic = nullptr) const;

    /// One full SAC step on a minibatch.
    UpdateStats update(const Batch& batch, std::mt19937_64& rng);

    void apply_actor_gradients(const nn::Gradients& grads);
    void set_alpha(double alpha);

    nn::Mlp& actor() noexcept { return actor_; }
    nn::Mlp& q1() noexcept { return q1_; }
    nn::Mlp& q2() noexcept { return q2_; }
    nn::Mlp& q1_target() noexcept { return q1_target_; }
    nn::Mlp& q2_target() noexcept { return q2_target_; }
    const nn::Mlp& actor() const noexcept { return actor_; }
    const nn::Mlp& q1() const noexcept { return q1_; }
    const nn::Mlp& q2() const noexcept { return q2_; }
    const nn::Mlp& q1_target() const noexcept { return q1_target_; }
    const nn::Mlp& q2_target() const noexcept { return q2_target_; }

    std::uint64_t update_count() const noexcept { return updates_; }
    void set_update_count(std::uint64_t n) noexcept { updates_ = n; }
    void set_log_alpha(double v) noexcept { log_alpha_ = v; }

private:
    nn::Vector min_q(const nn::Mlp& a, const nn::Mlp& b, const nn::Matrix& obs, const nn::Matrix& act) const;
    double target_entropy() const noexcept;

    int k_;
    int obs_dim_;
    SacConfig cfg_;
    double reward_scale_;
    double log_alpha_;
    std::uint64_t updates_{0};

    nn::Mlp actor_;
    nn::Mlp q1_;
    nn::Mlp q2_;
    nn::Mlp q1_target_;
    nn::Mlp q2_target_;
    nn::Adam actor_opt_;
    nn::Adam q1_opt_;
    nn::Adam q2_opt_;
    nn::ScalarAdam alpha_opt_;
};

/// Standard-normal matrix filled column by column from `rng`.
nn::Matrix gaussian_noise(int rows, int cols, std::mt19937_64& rng);

}  // namespace knrl
