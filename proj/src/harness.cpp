#include "knrl/harness.hpp"

#include <fmt/format.h>
#include <fmt/os.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "knrl/aggregation.hpp"

namespace knrl {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    // splitmix64 over the pair
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double reward_scale_for(const RoadGraph& g, const SimConfig& sim, int k) {
    return sim.control_period * g.max_speed_limit() * static_cast<double>(k + 1);
}

std::vector<double> random_policy(const FleetState& fleet, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> out(fleet.vehicles.size());
    for (auto& f : out) f = u(rng);
    return out;
}

GroupDecision decide_group_actions(const FleetState& fleet, const RoadGraph& g, int k, const SacAgent& agent,
                                   const ObservationScales& scales, ActionMode mode, std::mt19937_64& rng,
                                   bool uniform_actions) {
    const int n = static_cast<int>(fleet.vehicles.size());
    const auto dist = distance_matrix(fleet, g);
    GroupDecision d;
    d.groups = form_groups(DistanceMatrix(dist, n), k);
    if (auto v = verify_bounds(d.groups)) throw BoundViolationError(v->describe());

    const int m = d.groups.m();
    const int dim = observation_dim(k);
    d.obs.resize(dim, m);
    for (int gi = 0; gi < m; ++gi) {
        const auto enc = encode_observation(d.groups.groups[static_cast<std::size_t>(gi)].members, fleet, g, scales);
        d.obs.col(gi) = Eigen::Map<const nn::Vector>(enc.data(), dim);
    }
    if (uniform_actions) {
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        d.actions.resize(k + 1, m);
        for (int c = 0; c < m; ++c)
            for (int r = 0; r <= k; ++r) d.actions(r, c) = u(rng);
    } else {
        d.actions = agent.act(d.obs, mode, rng).actions;
    }

    const auto index = membership_index(d.groups);
    d.fractions.assign(static_cast<std::size_t>(n), 0.0);
    std::vector<ActionProposal> proposals;
    for (int i = 0; i < n; ++i) {
        proposals.clear();
        for (const auto& mem : index[static_cast<std::size_t>(i)])
            proposals.push_back({mem.group, mem.slot, 0.5 * (d.actions(mem.slot, mem.group) + 1.0), mem.total_distance});
        d.fractions[static_cast<std::size_t>(i)] = aggregate(proposals).action;
    }
    return d;
}

namespace {

struct PeriodAccumulator {
    std::uint64_t samples{0};
    std::uint64_t low{0};
    double sum{0.0};

    static PeriodAccumulator of(const SpeedStats& s) { return {s.samples, s.low_speed_samples, s.speed_sum}; }
};

}  // namespace

EpisodeResult run_episode(const EpisodeSpec& spec) {
    const RoadGraph& g = *spec.graph;
    const bool rl = spec.policy == PolicyMode::knn_rl;
    if (rl && (spec.agent == nullptr || spec.scales == nullptr))
        throw std::invalid_argument("knn-rl episode needs an agent and observation scales");
    if (spec.policy != PolicyMode::max_speed && spec.policy_rng == nullptr)
        throw std::invalid_argument("episode needs a policy random stream");
    const bool learning = rl && spec.buffer != nullptr;

    EpisodeResult res;
    FleetState fleet = init_fleet(g, spec.sim);
    const int n = spec.sim.vehicle_count;
    const int periods = spec.sim.periods_per_shift();
    std::mt19937_64 update_rng(derive_seed(spec.sim.seed, 3));

    for (int p = 0; p < periods; ++p) {
        PeriodRow row;
        row.episode = spec.episode_index;
        row.period = p;

        std::optional<GroupDecision> decision;
        std::vector<double> fractions;
        switch (spec.policy) {
            case PolicyMode::max_speed: fractions = max_speed_policy(fleet); break;
            case PolicyMode::random: fractions = random_policy(fleet, *spec.policy_rng); break;
            case PolicyMode::knn_rl: {
                const bool warm = learning && spec.buffer->total_pushed() < spec.agent->config().warmup;
                decision = decide_group_actions(fleet, g, spec.k, *spec.agent, *spec.scales, spec.action_mode,
                                                *spec.policy_rng, warm);
                ++res.counters.group_formations;
                row.groups = decision->groups.m();
                fractions = decision->fractions;
                break;
            }
        }
        set_commands(fleet, g, fractions);
        begin_control_period(fleet);
        const auto before = PeriodAccumulator::of(fleet.speed_stats);
        run_control_period(fleet, g, spec.sim);
        ++res.counters.control_periods;
        const auto after = PeriodAccumulator::of(fleet.speed_stats);

        const auto samples = after.samples - before.samples;
        row.sim_time = fleet.clock;
        row.mean_speed = samples > 0 ? (after.sum - before.sum) / static_cast<double>(samples) : 0.0;
        row.low_speed_fraction =
            samples > 0 ? static_cast<double>(after.low - before.low) / static_cast<double>(samples) : 0.0;
        for (const auto& v : fleet.vehicles) {
            row.distance += v.distance_this_period;
            row.total_cycles += v.cycles_completed;
        }

        if (learning) {
            const bool last = p + 1 == periods;
            for (const auto& grp : decision->groups.groups) {
                GroupTransition t;
                t.members = grp.members;
                const auto dim = static_cast<std::size_t>(decision->obs.rows());
                const int gi = static_cast<int>(&grp - decision->groups.groups.data());
                t.obs.assign(decision->obs.col(gi).data(), decision->obs.col(gi).data() + dim);
                std::vector<double> deltas;
                for (int mbr : grp.members) {
                    const auto& v = fleet.vehicles[static_cast<std::size_t>(mbr)];
                    t.actions.push_back(2.0 * v.command_fraction - 1.0);
                    deltas.push_back(v.distance_this_period);
                }
                t.reward = group_reward(deltas);
                t.next_obs = encode_observation(grp.members, fleet, g, *spec.scales);
                t.time_limit = last;
                spec.buffer->push(t);
            }
            if (spec.buffer->total_pushed() >= spec.agent->config().warmup &&
                spec.buffer->size() >= static_cast<std::size_t>(1)) {
                for (int u = 0; u < spec.agent->config().updates_per_step; ++u) {
                    const auto batch = spec.buffer->sample(spec.agent->config().batch_size, update_rng);
                    const auto st = spec.agent->update(batch, update_rng);
                    row.critic_loss += st.critic_loss;
                    row.actor_loss += st.actor_loss;
                    ++row.updates;
                }
                if (row.updates > 0) {
                    row.critic_loss /= row.updates;
                    row.actor_loss /= row.updates;
                }
            }
            row.alpha = spec.agent->alpha();
        }
        res.periods.push_back(row);
    }

    const auto snap = metrics(fleet);
    auto& er = res.row;
    er.policy = to_string(spec.policy);
    er.episode = spec.episode_index;
    er.seed = spec.sim.seed;
    er.vehicles = n;
    er.k = rl ? spec.k : 0;
    er.total_cycles = snap.total_cycles;
    er.mean_speed = snap.mean_speed;
    er.low_speed_fraction = snap.low_speed_fraction;
    er.cycles_per_vehicle = snap.cycles_per_vehicle;
    er.speed_histogram = snap.speed_histogram;
    for (const auto& v : fleet.vehicles) er.reward_sum += v.odometer;
    res.counters.warnings = static_cast<int>(fleet.warnings.size());
    return res;
}

TrainResult train(const RunConfig& cfg, const std::filesystem::path& out_dir, const ProgressFn& progress) {
    check(cfg);
    const RoadGraph g(cfg.network);
    const auto scales = ObservationScales::for_map(g);
    const int dim = observation_dim(cfg.k);
    SacAgent agent(cfg.k, dim, cfg.learner, reward_scale_for(g, cfg.sim, cfg.k), derive_seed(cfg.train_seed, 1));
    ReplayBuffer buffer(cfg.learner.buffer_capacity, dim, cfg.k + 1);
    std::mt19937_64 policy_rng(derive_seed(cfg.train_seed, 2));

    std::filesystem::create_directories(out_dir);
    TrainResult result;
    std::vector<double> seconds;
    for (int e = 0; e < cfg.episodes; ++e) {
        const auto t0 = std::chrono::steady_clock::now();
        EpisodeSpec spec;
        spec.graph = &g;
        spec.sim = cfg.sim;
        spec.sim.seed = derive_seed(cfg.train_seed, 1000 + static_cast<std::uint64_t>(e));
        spec.policy = PolicyMode::knn_rl;
        spec.k = cfg.k;
        spec.agent = &agent;
        spec.scales = &scales;
        spec.buffer = &buffer;
        spec.policy_rng = &policy_rng;
        spec.action_mode = ActionMode::stochastic;
        spec.episode_index = e;
        result.episodes.push_back(run_episode(spec));
        result.episodes.back().row.run_id = cfg.run_id;
        result.episodes.back().row.scenario = cfg.scenario_name;
        seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        if (progress) progress(result.episodes.back());
    }

    write_episode_csv(out_dir / "episodes.csv", result.episodes);
    write_period_csv(out_dir / "periods.csv", result.episodes);
    write_speed_histogram_csv(out_dir / "speed_hist.csv", result.episodes);
    {
        auto out = fmt::output_file((out_dir / "timing.csv").string());
        out.print("episode,wall_seconds\n");
        for (std::size_t i = 0; i < seconds.size(); ++i) out.print("{},{:.6f}\n", i, seconds[i]);
    }
    result.checkpoint = out_dir / "checkpoint.bin";
    result.transitions = buffer.total_pushed();
    result.updates = agent.update_count();
    save_checkpoint(result.checkpoint, agent, scales, result.transitions);
    return result;
}

std::vector<EpisodeResult> evaluate(const RunConfig& cfg, PolicyMode policy,
                                    const std::optional<std::filesystem::path>& checkpoint,
                                    const ProgressFn& progress) {
    check(cfg);
    const RoadGraph g(cfg.network);
    std::optional<Checkpoint> ckpt;
    if (policy == PolicyMode::knn_rl) {
        if (!checkpoint) throw ConfigError("knn-rl evaluation needs a checkpoint");
        ckpt.emplace(load_checkpoint(*checkpoint, cfg.learner, cfg.k));
    }
    std::vector<EpisodeResult> out;
    const auto seeds = cfg.eval_seeds();
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        std::mt19937_64 rng(derive_seed(seeds[i], 4));
        EpisodeSpec spec;
        spec.graph = &g;
        spec.sim = cfg.sim;
        spec.sim.seed = seeds[i];
        spec.sim.vehicle_count = cfg.effective_eval_vehicle_count();
        spec.policy = policy;
        spec.k = cfg.k;
        spec.policy_rng = &rng;
        spec.action_mode = ActionMode::deterministic;
        spec.episode_index = static_cast<int>(i);
        if (ckpt) {
            spec.agent = &ckpt->agent;
            spec.scales = &ckpt->scales;
        }
        out.push_back(run_episode(spec));
        out.back().row.run_id = cfg.run_id;
        out.back().row.scenario = cfg.scenario_name;
        if (progress) progress(out.back());
    }
    return out;
}

void write_episode_csv(const std::filesystem::path& path, const std::vector<EpisodeResult>& episodes) {
    auto out = fmt::output_file(path.string());
    out.print(
        "run_id,scenario,policy,episode,seed,vehicles,k,total_cycles,mean_speed,low_speed_fraction,reward_sum,"
        "cycles_per_vehicle\n");
    for (const auto& e : episodes) {
        const auto& r = e.row;
        out.print("{},{},{},{},{},{},{},{},{:.9g},{:.9g},{:.9g},{}\n", r.run_id, r.scenario, r.policy, r.episode,
                  r.seed, r.vehicles, r.k, r.total_cycles, r.mean_speed, r.low_speed_fraction, r.reward_sum,
                  fmt::join(r.cycles_per_vehicle, ";"));
    }
}

void write_period_csv(const std::filesystem::path& path, const std::vector<EpisodeResult>& episodes) {
    auto out = fmt::output_file(path.string());
    out.print(
        "episode,period,sim_time,groups,total_cycles,mean_speed,low_speed_fraction,distance,updates,critic_loss,"
        "actor_loss,alpha\n");
    for (const auto& e : episodes)
        for (const auto& p : e.periods)
            out.print("{},{},{:.9g},{},{},{:.9g},{:.9g},{:.9g},{},{:.9g},{:.9g},{:.9g}\n", p.episode, p.period,
                      p.sim_time, p.groups, p.total_cycles, p.mean_speed, p.low_speed_fraction, p.distance,
                      p.updates, p.critic_loss, p.actor_loss, p.alpha);
}

void write_speed_histogram_csv(const std::filesystem::path& path, const std::vector<EpisodeResult>& episodes) {
    auto out = fmt::output_file(path.string());
    out.print("episode,bin_low_mps,count\n");
    for (const auto& e : episodes)
        for (std::size_t b = 0; b < e.row.speed_histogram.size(); ++b)
            out.print("{},{},{}\n", e.row.episode, b, e.row.speed_histogram[b]);
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) parts.push_back(cur);
    if (!s.empty() && s.back() == sep) parts.emplace_back();
    return parts;
}

}  // namespace

std::vector<EpisodeRow> read_episode_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty file");
    const auto header = split(line, ',');
    auto col = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ConfigError(path.string() + ": missing column " + name);
        return static_cast<std::size_t>(it - header.begin());
    };
    const auto c_run = col("run_id"), c_scn = col("scenario"), c_pol = col("policy"), c_ep = col("episode"),
               c_seed = col("seed"), c_veh = col("vehicles"), c_k = col("k"), c_cyc = col("total_cycles"),
               c_spd = col("mean_speed"), c_low = col("low_speed_fraction"), c_rew = col("reward_sum"),
               c_per = col("cycles_per_vehicle");
    std::vector<EpisodeRow> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != header.size())
            throw ConfigError(fmt::format("{}:{}: expected {} fields, got {}", path.string(), lineno, header.size(),
                                          f.size()));
        try {
            EpisodeRow r;
            r.run_id = f[c_run];
            r.scenario = f[c_scn];
            r.policy = f[c_pol];
            r.episode = std::stoi(f[c_ep]);
            r.seed = std::stoull(f[c_seed]);
            r.vehicles = std::stoi(f[c_veh]);
            r.k = std::stoi(f[c_k]);
            r.total_cycles = std::stoi(f[c_cyc]);
            r.mean_speed = std::stod(f[c_spd]);
            r.low_speed_fraction = std::stod(f[c_low]);
            r.reward_sum = std::stod(f[c_rew]);
            for (const auto& c : split(f[c_per], ';'))
                if (!c.empty()) r.cycles_per_vehicle.push_back(std::stoi(c));
            rows.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw ConfigError(fmt::format("{}:{}: malformed number", path.string(), lineno));
        }
    }
    return rows;
}

RunSummary summarize(const std::string& label, const std::vector<double>& cycles,
                     const std::vector<double>& low_speed_fractions) {
    RunSummary s;
    s.label = label;
    s.episodes = static_cast<int>(cycles.size());
    if (cycles.empty()) return s;
    const double n = static_cast<double>(cycles.size());
    s.mean = std::accumulate(cycles.begin(), cycles.end(), 0.0) / n;
    double ss = 0.0;
    for (double c : cycles) ss += (c - s.mean) * (c - s.mean);
    s.sd = cycles.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    const auto [lo, hi] = std::minmax_element(cycles.begin(), cycles.end());
    s.min = *lo;
    s.max = *hi;
    if (!low_speed_fractions.empty())
        s.mean_low_speed_fraction = std::accumulate(low_speed_fractions.begin(), low_speed_fractions.end(), 0.0) /
                                    static_cast<double>(low_speed_fractions.size());
    return s;
}

Comparison compare_runs(const std::string& label_a, const std::vector<EpisodeRow>& a, const std::string& label_b,
                        const std::vector<EpisodeRow>& b, double confidence, int resamples, std::uint64_t seed) {
    if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("each run needs at least two episodes");
    if (!(confidence > 0.0 && confidence < 1.0)) throw std::invalid_argument("confidence must be in (0, 1)");
    if (resamples < 1) throw std::invalid_argument("resamples must be positive");
    auto cycles = [](const std::vector<EpisodeRow>& rows) {
        std::vector<double> c, l;
        for (const auto& r : rows) {
            c.push_back(r.total_cycles);
            l.push_back(r.low_speed_fraction);
        }
        return std::pair{c, l};
    };
    const auto [ca, la] = cycles(a);
    const auto [cb, lb] = cycles(b);

    Comparison cmp;
    cmp.a = summarize(label_a, ca, la);
    cmp.b = summarize(label_b, cb, lb);
    cmp.difference = cmp.a.mean - cmp.b.mean;
    cmp.confidence = confidence;
    cmp.resamples = resamples;
    for (const auto& r : b)
        if (r.scenario != a.front().scenario) cmp.scenario_mismatch = true;
    for (const auto& r : a)
        if (r.scenario != a.front().scenario) cmp.scenario_mismatch = true;

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick_a(0, ca.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_b(0, cb.size() - 1);
    std::vector<double> diffs(static_cast<std::size_t>(resamples));
    for (auto& d : diffs) {
        double sa = 0.0, sb = 0.0;
        for (std::size_t i = 0; i < ca.size(); ++i) sa += ca[pick_a(rng)];
        for (std::size_t i = 0; i < cb.size(); ++i) sb += cb[pick_b(rng)];
        d = sa / static_cast<double>(ca.size()) - sb / static_cast<double>(cb.size());
    }
    std::sort(diffs.begin(), diffs.end());
    const double tail = (1.0 - confidence) / 2.0;
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(diffs.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, diffs.size() - 1);
        return diffs[lo] + (pos - static_cast<double>(lo)) * (diffs[hi] - diffs[lo]);
    };
    cmp.ci_low = quantile(tail);
    cmp.ci_high = quantile(1.0 - tail);
    return cmp;
}

}  // namespace knrl
