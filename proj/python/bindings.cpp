#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "knrl/aggregation.hpp"
#include "knrl/checkpoint.hpp"
#include "knrl/config.hpp"
#include "knrl/grouping.hpp"
#include "knrl/harness.hpp"
#include "knrl/observation.hpp"
#include "knrl/roadnet.hpp"

namespace py = pybind11;
using namespace knrl;

namespace {

py::dict episode_dict(const EpisodeRow& r) {
    py::dict d;
    d["run_id"] = r.run_id;
    d["scenario"] = r.scenario;
    d["policy"] = r.policy;
    d["episode"] = r.episode;
    d["seed"] = r.seed;
    d["vehicles"] = r.vehicles;
    d["k"] = r.k;
    d["total_cycles"] = r.total_cycles;
    d["mean_speed"] = r.mean_speed;
    d["low_speed_fraction"] = r.low_speed_fraction;
    d["reward_sum"] = r.reward_sum;
    d["cycles_per_vehicle"] = r.cycles_per_vehicle;
    return d;
}

py::dict summary_dict(const RunSummary& s) {
    py::dict d;
    d["label"] = s.label;
    d["episodes"] = s.episodes;
    d["mean"] = s.mean;
    d["sd"] = s.sd;
    d["min"] = s.min;
    d["max"] = s.max;
    d["mean_low_speed_fraction"] = s.mean_low_speed_fraction;
    return d;
}

RunConfig load(const std::filesystem::path& scenario, std::optional<int> episodes, std::optional<std::uint64_t> seed) {
    auto cfg = load_run_config(scenario);
    if (episodes) {
        cfg.episodes = *episodes;
        cfg.eval_episodes = *episodes;
    }
    if (seed) {
        cfg.train_seed = *seed;
        cfg.eval_seed = *seed;
    }
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_knrl, m) {
    m.doc() = "k-nearest grouping, fleet simulation and shared-policy training";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_ValueError);
    py::register_exception<GroupingError>(m, "GroupingError", PyExc_ValueError);

    m.def("observation_dim", &observation_dim, py::arg("k"));

    m.def(
        "validate_scenario",
        [](const std::filesystem::path& path) {
            const auto cfg = load_run_config(path);
            std::vector<std::pair<std::string, std::string>> out;
            for (const auto& e : validate(cfg.network)) out.emplace_back(e.element, e.message);
            return out;
        },
        py::arg("path"), "Every violated network invariant as (element, message); empty when valid.");

    m.def(
        "form_groups",
        [](const std::vector<std::vector<double>>& distances, int k) {
            const int n = static_cast<int>(distances.size());
            std::vector<double> flat;
            for (const auto& row : distances) {
                if (static_cast<int>(row.size()) != n) throw std::invalid_argument("distance matrix must be square");
                flat.insert(flat.end(), row.begin(), row.end());
            }
            const auto gs = form_groups(DistanceMatrix(flat, n), k);
            py::list out;
            for (const auto& g : gs.groups) {
                py::dict d;
                d["anchor"] = g.anchor;
                d["members"] = g.members;
                d["total_distance"] = g.total_distance;
                out.append(d);
            }
            return out;
        },
        py::arg("distances"), py::arg("k"), "Retained k-nearest groups for a row-major distance matrix.");

    m.def(
        "bounds_ok", [](int n, int k, int groups) { return !verify_bounds(n, k, groups).has_value(); },
        py::arg("n"), py::arg("k"), py::arg("m"));

    m.def(
        "aggregate",
        [](const std::vector<double>& actions, const std::vector<double>& distances, double eps) {
            if (actions.size() != distances.size()) throw std::invalid_argument("one distance per action");
            std::vector<ActionProposal> p;
            for (std::size_t i = 0; i < actions.size(); ++i)
                p.push_back({static_cast<int>(i), 0, actions[i], distances[i]});
            const auto r = aggregate(p, eps);
            return std::make_pair(r.action, r.weights);
        },
        py::arg("actions"), py::arg("distances"), py::arg("eps") = kAggregationEpsilon,
        "Inverse-distance weighted action and the weights.");

    m.def(
        "train",
        [](const std::filesystem::path& scenario, const std::filesystem::path& out_dir, std::optional<int> episodes,
           std::optional<std::uint64_t> seed) {
            const auto cfg = load(scenario, episodes, seed);
            TrainResult res;
            {
                py::gil_scoped_release release;
                res = train(cfg, out_dir);
            }
            py::dict d;
            py::list rows;
            for (const auto& e : res.episodes) rows.append(episode_dict(e.row));
            d["episodes"] = rows;
            d["checkpoint"] = res.checkpoint;
            d["transitions"] = res.transitions;
            d["updates"] = res.updates;
            return d;
        },
        py::arg("scenario"), py::arg("out_dir"), py::arg("episodes") = py::none(), py::arg("seed") = py::none(),
        "Trains the shared policy and writes metrics and checkpoint.bin to out_dir.");

    m.def(
        "evaluate",
        [](const std::filesystem::path& scenario, const std::string& policy,
           std::optional<std::filesystem::path> checkpoint, std::optional<int> episodes,
           std::optional<int> vehicles) {
            auto cfg = load(scenario, std::nullopt, std::nullopt);
            if (episodes) cfg.eval_episodes = *episodes;
            if (vehicles) cfg.eval_vehicle_count = *vehicles;
            std::vector<EpisodeResult> eps;
            {
                py::gil_scoped_release release;
                eps = evaluate(cfg, parse_policy_mode(policy), checkpoint);
            }
            py::list rows;
            for (const auto& e : eps) rows.append(episode_dict(e.row));
            return rows;
        },
        py::arg("scenario"), py::arg("policy") = "knn-rl", py::arg("checkpoint") = py::none(),
        py::arg("episodes") = py::none(), py::arg("vehicles") = py::none(),
        "Rolls out a policy on the scenario's evaluation seeds.");

    m.def(
        "compare",
        [](const std::filesystem::path& a, const std::filesystem::path& b, double confidence, int resamples,
           std::uint64_t seed) {
            const auto c = compare_runs(a.stem().string(), read_episode_csv(a), b.stem().string(),
                                        read_episode_csv(b), confidence, resamples, seed);
            py::dict d;
            d["a"] = summary_dict(c.a);
            d["b"] = summary_dict(c.b);
            d["difference"] = c.difference;
            d["ci_low"] = c.ci_low;
            d["ci_high"] = c.ci_high;
            d["confidence"] = c.confidence;
            d["excludes_zero"] = c.excludes_zero();
            d["scenario_mismatch"] = c.scenario_mismatch;
            return d;
        },
        py::arg("a"), py::arg("b"), py::arg("confidence") = 0.9, py::arg("resamples") = 10000, py::arg("seed") = 7,
        "Bootstrap comparison of two per-episode CSV files.");
}
