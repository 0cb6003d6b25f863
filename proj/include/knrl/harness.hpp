#pragma once

// Episode runner, training loop, evaluation and run comparison.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "knrl/checkpoint.hpp"
#include "knrl/config.hpp"
#include "knrl/grouping.hpp"
#include "knrl/observation.hpp"
#include "knrl/replay.hpp"
#include "knrl/sac.hpp"
#include "knrl/simulator.hpp"

namespace knrl {

/// Thrown when a formed group set violates the group-count bounds.
class BoundViolationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Per-control-period record.
struct PeriodRow {
    int episode{0};
    int period{0};
    double sim_time{0.0};
    int groups{0};          // 0 for baseline policies
    int total_cycles{0};    // cumulative within the episode
    double mean_speed{0.0};  // traveling vehicle-steps of this period
    double low_speed_fraction{0.0};
    double distance{0.0};   // fleet distance travelled this period
    int updates{0};
    double critic_loss{0.0};  // means over this period's updates; 0 without updates
    double actor_loss{0.0};
    double alpha{0.0};
};

/// Per-episode record.
struct EpisodeRow {
    std::string run_id;
    std::string scenario;
    std::string policy;
    int episode{0};
    std::uint64_t seed{0};
    int vehicles{0};
    int k{0};
    int total_cycles{0};
    double mean_speed{0.0};
    double low_speed_fraction{0.0};
    double reward_sum{0.0};  // fleet distance, meters: the sum of every vehicle's reward
    std::vector<int> cycles_per_vehicle;
    std::vector<std::uint64_t> speed_histogram;
};

struct EpisodeCounters {
    int control_periods{0};
    int group_formations{0};
    int warnings{0};
};

/// Everything the runner needs to drive one episode.
struct EpisodeSpec {
    const RoadGraph* graph{nullptr};
    SimConfig sim;
    PolicyMode policy{PolicyMode::max_speed};
    int k{0};
    SacAgent* agent{nullptr};             // knn-rl only
    const ObservationScales* scales{nullptr};  // knn-rl only
    ReplayBuffer* buffer{nullptr};        // non-null: collect transitions and learn
    std::mt19937_64* policy_rng{nullptr};  // exploration / random baseline
    ActionMode action_mode{ActionMode::deterministic};
    int episode_index{0};
};

struct EpisodeResult {
    EpisodeRow row;
    std::vector<PeriodRow> periods;
    EpisodeCounters counters;
};

/// Uniform fractions in [0, 1], one per vehicle.
std::vector<double> random_policy(const FleetState& fleet, std::mt19937_64& rng);

/// Fractions for every vehicle from the shared group policy: forms groups once,
/// checks the bounds, encodes and acts per group, then aggregates per vehicle.
struct GroupDecision {
    GroupSet groups;
    nn::Matrix obs;      // D x m
    nn::Matrix actions;  // (k+1) x m, in [-1, 1]
    std::vector<double> fractions;
};
GroupDecision decide_group_actions(const FleetState& fleet, const RoadGraph& g, int k, const SacAgent& agent,
                                   const ObservationScales& scales, ActionMode mode, std::mt19937_64& rng,
                                   bool uniform_actions = false);

EpisodeResult run_episode(const EpisodeSpec& spec);

/// Derived seed for stream `stream` of a run seeded with `base`.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Reward scale control_period * max_speed_limit * (k+1).
double reward_scale_for(const RoadGraph& g, const SimConfig& sim, int k);

struct TrainResult {
    std::vector<EpisodeResult> episodes;
    std::filesystem::path checkpoint;
    std::uint64_t transitions{0};
    std::uint64_t updates{0};
};

/// Progress callback, invoked after each episode.
using ProgressFn = std::function<void(const EpisodeResult&)>;

/// Trains the shared policy for cfg.episodes shifts and writes
/// episodes.csv, periods.csv, speed_hist.csv, timing.csv and checkpoint.bin
/// to `out_dir`.
TrainResult train(const RunConfig& cfg, const std::filesystem::path& out_dir, const ProgressFn& progress = {});

/// Evaluates `policy` on cfg.eval_seeds() with cfg.effective_eval_vehicle_count()
/// vehicles. knn-rl needs a checkpoint and acts deterministically.
std::vector<EpisodeResult> evaluate(const RunConfig& cfg, PolicyMode policy,
                                    const std::optional<std::filesystem::path>& checkpoint,
                                    const ProgressFn& progress = {});

void write_episode_csv(const std::filesystem::path& path, const std::vector<EpisodeResult>& episodes);
void write_period_csv(const std::filesystem::path& path, const std::vector<EpisodeResult>& episodes);
void write_speed_histogram_csv(const std::filesystem::path& path, const std::vector<EpisodeResult>& episodes);

/// Reads the per-episode table written by write_episode_csv.
std::vector<EpisodeRow> read_episode_csv(const std::filesystem::path& path);

struct RunSummary {
    std::string label;
    int episodes{0};
    double mean{0.0};
    double sd{0.0};  // sample standard deviation
    double min{0.0};
    double max{0.0};
    double mean_low_speed_fraction{0.0};
};

struct Comparison {
    RunSummary a;
    RunSummary b;
    double difference{0.0};  // mean(a) - mean(b)
    double ci_low{0.0};
    double ci_high{0.0};
    double confidence{0.9};
    int resamples{0};
    bool scenario_mismatch{false};  // the runs name different scenarios
    bool excludes_zero() const noexcept { return ci_low > 0.0 || ci_high < 0.0; }
};

RunSummary summarize(const std::string& label, const std::vector<double>& cycles,
                     const std::vector<double>& low_speed_fractions = {});

/// Percentile bootstrap of mean(a) - mean(b), resampling each run
/// independently with replacement. Each run needs at least two episodes.
Comparison compare_runs(const std::string& label_a, const std::vector<EpisodeRow>& a, const std::string& label_b,
                        const std::vector<EpisodeRow>& b, double confidence = 0.9, int resamples = 10000,
                        std::uint64_t seed = 7);

}  // namespace knrl
