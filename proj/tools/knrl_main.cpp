// knrl command-line tool.
//
// Exit codes: 0 success, 1 configuration / input error, 2 runtime error.
// KNRL_OUTPUT_DIR overrides the output directory from the scenario file;
// an explicit --out flag overrides both.

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "knrl/checkpoint.hpp"
#include "knrl/config.hpp"
#include "knrl/grouping.hpp"
#include "knrl/harness.hpp"
#include "knrl/roadnet.hpp"
#include "knrl/simulator.hpp"

namespace fs = std::filesystem;
using namespace knrl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

fs::path output_dir(const RunConfig& cfg, const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("KNRL_OUTPUT_DIR"); env != nullptr && *env != '\0') return env;
    return cfg.output_dir;
}

void print_episode(const EpisodeResult& e) {
    fmt::print("episode {:4d}  seed {:>20}  cycles {:4d}  mean speed {:6.3f}  low-speed {:.3f}\n", e.row.episode,
               e.row.seed, e.row.total_cycles, e.row.mean_speed, e.row.low_speed_fraction);
    std::fflush(stdout);
}

struct TrainArgs {
    std::string scenario;
    std::string out;
    std::optional<int> episodes;
    std::optional<std::uint64_t> seed;
    std::string run_id;
    bool quiet{false};
};

int cmd_train(const TrainArgs& a) {
    auto cfg = load_run_config(a.scenario);
    if (a.episodes) cfg.episodes = *a.episodes;
    if (a.seed) cfg.train_seed = *a.seed;
    if (!a.run_id.empty()) cfg.run_id = a.run_id;
    check(cfg);
    const auto out = output_dir(cfg, a.out);
    ProgressFn progress;
    if (!a.quiet) progress = print_episode;
    const auto res = train(cfg, out, progress);
    fmt::print("trained {} episodes, {} transitions, {} updates\ncheckpoint: {}\n", res.episodes.size(),
               res.transitions, res.updates, res.checkpoint.string());
    return kExitOk;
}

struct EvalArgs {
    std::string scenario;
    std::string out;
    std::string policy{"knn-rl"};
    std::string checkpoint;
    std::optional<int> episodes;
    std::optional<int> vehicles;
    std::optional<std::uint64_t> seed;
    std::string run_id;
    bool quiet{false};
};

int cmd_eval(const EvalArgs& a) {
    auto cfg = load_run_config(a.scenario);
    const auto policy = parse_policy_mode(a.policy);
    if (a.episodes) cfg.eval_episodes = *a.episodes;
    if (a.vehicles) cfg.eval_vehicle_count = *a.vehicles;
    if (a.seed) cfg.eval_seed = *a.seed;
    cfg.run_id = a.run_id.empty() ? a.policy : a.run_id;
    check(cfg);
    const auto out = output_dir(cfg, a.out);
    std::optional<fs::path> ckpt;
    if (!a.checkpoint.empty()) ckpt = a.checkpoint;
    else if (policy == PolicyMode::knn_rl) ckpt = out / "checkpoint.bin";

    ProgressFn progress;
    if (!a.quiet) progress = print_episode;
    const auto eps = evaluate(cfg, policy, ckpt, progress);
    fs::create_directories(out);
    const auto file = out / fmt::format("eval_{}_n{}.csv", a.policy, cfg.effective_eval_vehicle_count());
    write_episode_csv(file, eps);
    std::vector<double> cycles, low;
    for (const auto& e : eps) {
        cycles.push_back(e.row.total_cycles);
        low.push_back(e.row.low_speed_fraction);
    }
    const auto s = summarize(cfg.run_id, cycles, low);
    fmt::print("{}: {} episodes, cycles mean {:.3f} sd {:.3f} min {} max {}, low-speed fraction {:.4f}\n{}\n",
               s.label, s.episodes, s.mean, s.sd, s.min, s.max, s.mean_low_speed_fraction, file.string());
    return kExitOk;
}

struct CompareArgs {
    std::string a;
    std::string b;
    double confidence{0.9};
    int resamples{10000};
    std::uint64_t seed{7};
    bool json{false};
};

int cmd_compare(const CompareArgs& args) {
    const auto ra = read_episode_csv(args.a);
    const auto rb = read_episode_csv(args.b);
    if (ra.size() < 2 || rb.size() < 2) throw ConfigError("each run needs at least two episodes");
    auto label = [](const std::vector<EpisodeRow>& rows, const std::string& path) {
        return rows.front().run_id.empty() ? path : rows.front().run_id;
    };
    const auto cmp = compare_runs(label(ra, args.a), ra, label(rb, args.b), rb, args.confidence, args.resamples,
                                  args.seed);
    if (cmp.scenario_mismatch) fmt::print(stderr, "warning: the runs were recorded on different scenarios\n");
    if (args.json) {
        auto run = [](const RunSummary& s) {
            return nlohmann::json{{"label", s.label}, {"episodes", s.episodes}, {"mean", s.mean}, {"sd", s.sd},
                                  {"min", s.min}, {"max", s.max}, {"low_speed_fraction", s.mean_low_speed_fraction}};
        };
        nlohmann::json j{{"a", run(cmp.a)},
                         {"b", run(cmp.b)},
                         {"difference", cmp.difference},
                         {"ci_low", cmp.ci_low},
                         {"ci_high", cmp.ci_high},
                         {"confidence", cmp.confidence},
                         {"resamples", cmp.resamples},
                         {"excludes_zero", cmp.excludes_zero()},
                         {"scenario_mismatch", cmp.scenario_mismatch}};
        std::cout << j.dump(2) << "\n";
        return kExitOk;
    }
    fmt::print("{:<24} {:>8} {:>10} {:>10} {:>8} {:>8} {:>10}\n", "run", "episodes", "mean", "sd", "min", "max",
               "low-speed");
    for (const auto* s : {&cmp.a, &cmp.b})
        fmt::print("{:<24} {:>8} {:>10.3f} {:>10.3f} {:>8.0f} {:>8.0f} {:>10.4f}\n", s->label, s->episodes, s->mean,
                   s->sd, s->min, s->max, s->mean_low_speed_fraction);
    fmt::print("difference (a - b): {:.3f}, {:.0f}% bootstrap CI [{:.3f}, {:.3f}] ({} resamples){}\n",
               cmp.difference, 100.0 * cmp.confidence, cmp.ci_low, cmp.ci_high, cmp.resamples,
               cmp.excludes_zero() ? ", excludes 0" : "");
    return kExitOk;
}

struct InspectArgs {
    std::string scenario;
    std::optional<int> k;
    std::optional<std::uint64_t> seed;
    double time{0.0};
    std::string format{"csv"};
};

int cmd_inspect(const InspectArgs& a) {
    auto cfg = load_run_config(a.scenario);
    if (a.k) cfg.k = *a.k;
    if (a.seed) cfg.sim.seed = *a.seed;
    check(cfg);
    if (a.time < 0.0) throw ConfigError("--time must be non-negative");
    const RoadGraph g(cfg.network);
    auto fleet = init_fleet(g, cfg.sim);
    const auto periods = static_cast<int>(a.time / cfg.sim.control_period);
    for (int p = 0; p < periods; ++p) {
        set_commands(fleet, g, max_speed_policy(fleet));
        begin_control_period(fleet);
        run_control_period(fleet, g, cfg.sim);
    }
    const int n = cfg.sim.vehicle_count;
    const auto dist = distance_matrix(fleet, g);
    const auto gs = form_groups(DistanceMatrix(dist, n), cfg.k);
    const auto violation = verify_bounds(gs);

    const int lower = (n + cfg.k) / (cfg.k + 1);
    if (a.format == "json") {
        nlohmann::json j;
        j["time"] = fleet.clock;
        j["n"] = n;
        j["k"] = cfg.k;
        j["m"] = gs.m();
        j["lower_bound"] = lower;
        j["upper_bound"] = n;
        j["bounds_ok"] = !violation.has_value();
        for (const auto& v : fleet.vehicles)
            j["vehicles"].push_back({{"id", v.id},
                                     {"edge", v.position.edge},
                                     {"offset", v.position.offset},
                                     {"speed", v.speed},
                                     {"phase", to_string(v.phase)}});
        for (const auto& grp : gs.groups)
            j["groups"].push_back(
                {{"anchor", grp.anchor}, {"members", grp.members}, {"total_distance", grp.total_distance}});
        std::cout << j.dump(2) << "\n";
    } else if (a.format == "text") {
        fmt::print("t = {:.0f} s, N = {}, k = {}, m = {} (bounds {} <= m <= {}: {})\n", fleet.clock, n, cfg.k,
                   gs.m(), lower, n, violation ? "VIOLATED" : "ok");
        for (const auto& v : fleet.vehicles)
            fmt::print("  vehicle {:3d}  edge {:4d}  offset {:8.2f}  speed {:6.2f}  {}\n", v.id, v.position.edge,
                       v.position.offset, v.speed, to_string(v.phase));
        for (std::size_t i = 0; i < gs.groups.size(); ++i) {
            const auto& grp = gs.groups[i];
            fmt::print("  group {:3d}  anchor {:3d}  members [{}]  total distance [{:.1f}]\n", i, grp.anchor,
                       fmt::join(grp.members, ", "), fmt::join(grp.total_distance, ", "));
        }
    } else {
        fmt::print("group,anchor,members,total_distance,m,lower_bound,upper_bound,bounds_ok\n");
        for (std::size_t i = 0; i < gs.groups.size(); ++i) {
            const auto& grp = gs.groups[i];
            fmt::print("{},{},{},{:.9g},{},{},{},{}\n", i, grp.anchor, fmt::join(grp.members, ";"),
                       fmt::join(grp.total_distance, ";"), gs.m(), lower, n, violation ? 0 : 1);
        }
    }
    return violation ? kExitRuntime : kExitOk;
}

int cmd_validate(const std::string& scenario) {
    const auto cfg = load_run_config(scenario);
    const auto errors = validate(cfg.network);
    for (const auto& e : errors) fmt::print("{}: {}\n", e.element, e.message);
    if (!errors.empty()) return kExitConfig;
    check(cfg);
    const RoadGraph g(cfg.network);
    fmt::print("{}: {} nodes, {} edges, {} sites, diameter {:.1f} m, N = {}, k = {}: ok\n", cfg.scenario_name,
               cfg.network.nodes.size(), cfg.network.edges.size(), cfg.network.sites.size(), g.diameter(),
               cfg.sim.vehicle_count, cfg.k);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"k-nearest multi-agent speed control for haul fleets"};
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train the shared group policy");
    train_cmd->add_option("scenario", train_args.scenario, "scenario YAML")->required();
    train_cmd->add_option("--out", train_args.out, "output directory");
    train_cmd->add_option("--episodes", train_args.episodes, "training episodes");
    train_cmd->add_option("--seed", train_args.seed, "training seed");
    train_cmd->add_option("--run-id", train_args.run_id, "run label written to the CSVs");
    train_cmd->add_flag("--quiet", train_args.quiet, "no per-episode output");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a policy on the evaluation seeds");
    eval_cmd->add_option("scenario", eval_args.scenario, "scenario YAML")->required();
    eval_cmd->add_option("--policy", eval_args.policy, "knn-rl, max-speed or random");
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "checkpoint (default: <out>/checkpoint.bin)");
    eval_cmd->add_option("--out", eval_args.out, "output directory");
    eval_cmd->add_option("--episodes", eval_args.episodes, "evaluation episodes");
    eval_cmd->add_option("--vehicles", eval_args.vehicles, "fleet size for evaluation");
    eval_cmd->add_option("--seed", eval_args.seed, "first evaluation seed");
    eval_cmd->add_option("--run-id", eval_args.run_id, "run label (default: policy name)");
    eval_cmd->add_flag("--quiet", eval_args.quiet, "no per-episode output");

    CompareArgs cmp_args;
    auto* cmp_cmd = app.add_subcommand("compare", "compare cycles of two evaluation CSVs");
    cmp_cmd->add_option("a", cmp_args.a, "episodes CSV of run a")->required();
    cmp_cmd->add_option("b", cmp_args.b, "episodes CSV of run b")->required();
    cmp_cmd->add_option("--confidence", cmp_args.confidence, "confidence level")->check(CLI::Range(0.5, 0.999));
    cmp_cmd->add_option("--resamples", cmp_args.resamples, "bootstrap resamples")->check(CLI::PositiveNumber);
    cmp_cmd->add_option("--seed", cmp_args.seed, "bootstrap seed");
    cmp_cmd->add_flag("--json", cmp_args.json, "JSON output");

    InspectArgs insp_args;
    auto* insp_cmd = app.add_subcommand("inspect-groups", "show the groups formed at a point of a max-speed run");
    insp_cmd->add_option("scenario", insp_args.scenario, "scenario YAML")->required();
    insp_cmd->add_option("--k", insp_args.k, "neighbours per group");
    insp_cmd->add_option("--seed", insp_args.seed, "simulator seed");
    insp_cmd->add_option("--time", insp_args.time, "seconds to simulate first (whole control periods)");
    insp_cmd->add_option("--format", insp_args.format, "csv, json or text")
        ->check(CLI::IsMember({"csv", "json", "text"}));

    std::string validate_path;
    auto* val_cmd = app.add_subcommand("validate-scenario", "check a scenario file");
    val_cmd->add_option("scenario", validate_path, "scenario YAML")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*train_cmd) return cmd_train(train_args);
        if (*eval_cmd) return cmd_eval(eval_args);
        if (*cmp_cmd) return cmd_compare(cmp_args);
        if (*insp_cmd) return cmd_inspect(insp_args);
        if (*val_cmd) return cmd_validate(validate_path);
    } catch (const ConfigError& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return kExitConfig;
    } catch (const InvalidNetwork& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return kExitConfig;
    } catch (const CheckpointError& e) {
        fmt::print(stderr, "checkpoint error: {}\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kExitRuntime;
    }
    return kExitConfig;
}
