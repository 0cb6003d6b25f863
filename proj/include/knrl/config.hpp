#pragma once

// Scenario / run configuration. One YAML file holds the map, the simulator
// settings, learner hyperparameters and run options:
//
//   name: <scenario id>
//   nodes:   - {id, x, y}
//   edges:   - {id, from, to, speed_limit, length (optional: straight-line)}
//   sites:   - {node, kind: loading|discharge, service_time_mean, service_time_spread}
//   sim:     {vehicle_count, shift_length, control_period, dt, max_acceleration,
//             max_deceleration, headway_distance, standstill_gap, placement,
//             placement_edges, seed}
//   learner: {gamma, tau, alpha, auto_alpha, target_entropy, actor_lr, critic_lr,
//             alpha_lr, batch_size, buffer_capacity, warmup, updates_per_step, hidden}
//   run:     {k, episodes, eval_episodes, train_seed, eval_seed, eval_vehicle_count,
//             policy: knn-rl|max-speed|random, output_dir, run_id}
//
// Unknown keys anywhere are rejected.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "knrl/roadnet.hpp"
#include "knrl/sac.hpp"
#include "knrl/simulator.hpp"

namespace knrl {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class PolicyMode { knn_rl, max_speed, random };

const char* to_string(PolicyMode mode);
PolicyMode parse_policy_mode(const std::string& text);

struct RunConfig {
    std::string scenario_name;
    std::string scenario_path;
    RoadNetwork network;
    SimConfig sim;
    SacConfig learner;

    int k{3};
    int episodes{300};
    int eval_episodes{20};
    std::uint64_t train_seed{1};
    std::uint64_t eval_seed{100000};  // evaluation episode i uses eval_seed + i
    int eval_vehicle_count{0};        // 0: same as sim.vehicle_count
    PolicyMode policy{PolicyMode::knn_rl};
    std::string output_dir{"runs/default"};
    std::string run_id{"run"};

    int effective_eval_vehicle_count() const;
    std::vector<std::uint64_t> eval_seeds() const;
};

/// Parses YAML text. Throws ConfigError on malformed input or unknown keys.
RunConfig parse_run_config(const std::string& yaml_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Throws ConfigError if k+1 exceeds the smallest fleet used for training or
/// evaluation, or if the simulator settings are inconsistent.
void check(const RunConfig& cfg);

}  // namespace knrl
