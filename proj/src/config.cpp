#include "knrl/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace knrl {

const char* to_string(PolicyMode mode) {
    switch (mode) {
        case PolicyMode::knn_rl: return "knn-rl";
        case PolicyMode::max_speed: return "max-speed";
        case PolicyMode::random: return "random";
    }
    return "?";
}

PolicyMode parse_policy_mode(const std::string& text) {
    if (text == "knn-rl") return PolicyMode::knn_rl;
    if (text == "max-speed") return PolicyMode::max_speed;
    if (text == "random") return PolicyMode::random;
    throw ConfigError("unknown policy mode '" + text + "' (expected knn-rl, max-speed or random)");
}

int RunConfig::effective_eval_vehicle_count() const {
    return eval_vehicle_count > 0 ? eval_vehicle_count : sim.vehicle_count;
}

std::vector<std::uint64_t> RunConfig::eval_seeds() const {
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < eval_episodes; ++i) seeds.push_back(eval_seed + static_cast<std::uint64_t>(i));
    return seeds;
}

namespace {

void check_keys(const YAML::Node& node, const std::set<std::string>& allowed, const std::string& where) {
    if (!node.IsMap()) throw ConfigError(where + ": expected a mapping");
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (!allowed.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

template <typename T>
T get(const YAML::Node& node, const char* key, const std::string& where) {
    if (!node[key]) throw ConfigError(where + ": missing key '" + key + "'");
    try {
        return node[key].as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError(where + ": bad value for '" + key + "'");
    }
}

template <typename T>
void get_opt(const YAML::Node& node, const char* key, const std::string& where, T& out) {
    if (node[key]) out = get<T>(node, key, where);
}

RoadNetwork parse_network(const YAML::Node& root) {
    RoadNetwork net;
    if (!root["nodes"] || !root["nodes"].IsSequence()) throw ConfigError("missing 'nodes' list");
    if (!root["edges"] || !root["edges"].IsSequence()) throw ConfigError("missing 'edges' list");
    if (!root["sites"] || !root["sites"].IsSequence()) throw ConfigError("missing 'sites' list");

    for (std::size_t i = 0; i < root["nodes"].size(); ++i) {
        const auto n = root["nodes"][i];
        const std::string where = "nodes[" + std::to_string(i) + "]";
        check_keys(n, {"id", "x", "y"}, where);
        net.nodes.push_back({get<NodeId>(n, "id", where), get<double>(n, "x", where), get<double>(n, "y", where)});
    }
    for (std::size_t i = 0; i < root["edges"].size(); ++i) {
        const auto e = root["edges"][i];
        const std::string where = "edges[" + std::to_string(i) + "]";
        check_keys(e, {"id", "from", "to", "length", "speed_limit"}, where);
        Edge edge{get<EdgeId>(e, "id", where), get<NodeId>(e, "from", where), get<NodeId>(e, "to", where), 0.0,
                  get<double>(e, "speed_limit", where)};
        if (e["length"]) {
            edge.length = get<double>(e, "length", where);
        } else {
            auto find = [&](NodeId id) -> const Node& {
                for (const auto& n : net.nodes)
                    if (n.id == id) return n;
                throw ConfigError(where + ": length omitted and node " + std::to_string(id) + " unknown");
            };
            const auto& a = find(edge.from);
            const auto& b = find(edge.to);
            edge.length = std::hypot(b.x - a.x, b.y - a.y);
        }
        net.edges.push_back(edge);
    }
    for (std::size_t i = 0; i < root["sites"].size(); ++i) {
        const auto s = root["sites"][i];
        const std::string where = "sites[" + std::to_string(i) + "]";
        check_keys(s, {"node", "kind", "service_time_mean", "service_time_spread"}, where);
        const auto kind = get<std::string>(s, "kind", where);
        Site site;
        site.node = get<NodeId>(s, "node", where);
        if (kind == "loading")
            site.kind = SiteKind::loading;
        else if (kind == "discharge")
            site.kind = SiteKind::discharge;
        else
            throw ConfigError(where + ": kind must be 'loading' or 'discharge'");
        site.service_time_mean = get<double>(s, "service_time_mean", where);
        site.service_time_spread = 0.0;
        get_opt(s, "service_time_spread", where, site.service_time_spread);
        net.sites.push_back(site);
    }
    return net;
}

void parse_sim(const YAML::Node& n, SimConfig& sim) {
    const std::string where = "sim";
    check_keys(n, {"vehicle_count", "shift_length", "control_period", "dt", "max_acceleration",
                   "max_deceleration", "headway_distance", "standstill_gap", "placement",
                   "placement_edges", "seed"},
               where);
    get_opt(n, "vehicle_count", where, sim.vehicle_count);
    get_opt(n, "shift_length", where, sim.shift_length);
    get_opt(n, "control_period", where, sim.control_period);
    get_opt(n, "dt", where, sim.dt);
    get_opt(n, "max_acceleration", where, sim.max_acceleration);
    get_opt(n, "max_deceleration", where, sim.max_deceleration);
    get_opt(n, "headway_distance", where, sim.headway_distance);
    get_opt(n, "standstill_gap", where, sim.standstill_gap);
    get_opt(n, "placement_edges", where, sim.placement_edges);
    get_opt(n, "seed", where, sim.seed);
    if (n["placement"]) {
        const auto p = get<std::string>(n, "placement", where);
        if (p != "round_robin") throw ConfigError("sim: placement must be 'round_robin'");
        sim.placement = Placement::round_robin;
    }
}

void parse_learner(const YAML::Node& n, SacConfig& l) {
    const std::string where = "learner";
    check_keys(n, {"gamma", "tau", "alpha", "auto_alpha", "target_entropy", "actor_lr", "critic_lr", "alpha_lr",
                   "batch_size", "buffer_capacity", "warmup", "updates_per_step", "hidden"},
               where);
    get_opt(n, "gamma", where, l.gamma);
    get_opt(n, "tau", where, l.tau);
    get_opt(n, "alpha", where, l.alpha);
    get_opt(n, "auto_alpha", where, l.auto_alpha);
    get_opt(n, "target_entropy", where, l.target_entropy);
    get_opt(n, "actor_lr", where, l.actor_lr);
    get_opt(n, "critic_lr", where, l.critic_lr);
    get_opt(n, "alpha_lr", where, l.alpha_lr);
    get_opt(n, "batch_size", where, l.batch_size);
    get_opt(n, "buffer_capacity", where, l.buffer_capacity);
    get_opt(n, "warmup", where, l.warmup);
    get_opt(n, "updates_per_step", where, l.updates_per_step);
    get_opt(n, "hidden", where, l.hidden);
}

void parse_run(const YAML::Node& n, RunConfig& cfg) {
    const std::string where = "run";
    check_keys(n, {"k", "episodes", "eval_episodes", "train_seed", "eval_seed", "eval_vehicle_count", "policy",
                   "output_dir", "run_id"},
               where);
    get_opt(n, "k", where, cfg.k);
    get_opt(n, "episodes", where, cfg.episodes);
    get_opt(n, "eval_episodes", where, cfg.eval_episodes);
    get_opt(n, "train_seed", where, cfg.train_seed);
    get_opt(n, "eval_seed", where, cfg.eval_seed);
    get_opt(n, "eval_vehicle_count", where, cfg.eval_vehicle_count);
    get_opt(n, "output_dir", where, cfg.output_dir);
    get_opt(n, "run_id", where, cfg.run_id);
    if (n["policy"]) cfg.policy = parse_policy_mode(get<std::string>(n, "policy", where));
}

}  // namespace

RunConfig parse_run_config(const std::string& yaml_text) {
    YAML::Node root;
    try {
        root = YAML::Load(yaml_text);
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("malformed YAML: ") + e.what());
    }
    check_keys(root, {"name", "nodes", "edges", "sites", "sim", "learner", "run"}, "scenario");

    RunConfig cfg;
    get_opt(root, "name", "scenario", cfg.scenario_name);
    cfg.network = parse_network(root);
    if (root["sim"]) parse_sim(root["sim"], cfg.sim);
    if (root["learner"]) parse_learner(root["learner"], cfg.learner);
    if (root["run"]) parse_run(root["run"], cfg);
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    auto cfg = parse_run_config(ss.str());
    cfg.scenario_path = path.string();
    return cfg;
}

void check(const RunConfig& cfg) {
    try {
        check(cfg.sim);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("sim: ") + e.what());
    }
    if (cfg.k < 0) throw ConfigError("run: k must be non-negative");
    const int smallest = std::min(cfg.sim.vehicle_count, cfg.effective_eval_vehicle_count());
    if (cfg.k + 1 > smallest)
        throw ConfigError("run: group size k+1=" + std::to_string(cfg.k + 1) + " exceeds the smallest fleet (" +
                          std::to_string(smallest) + " vehicles)");
    if (cfg.episodes < 0 || cfg.eval_episodes < 0) throw ConfigError("run: episode counts must be non-negative");
    if (cfg.learner.batch_size <= 0) throw ConfigError("learner: batch_size must be positive");
    if (cfg.learner.buffer_capacity == 0) throw ConfigError("learner: buffer_capacity must be positive");
    if (cfg.learner.updates_per_step < 0) throw ConfigError("learner: updates_per_step must be non-negative");
    if (!(cfg.learner.alpha > 0.0)) throw ConfigError("learner: alpha must be positive");
    if (cfg.learner.hidden.empty()) throw ConfigError("learner: at least one hidden layer is required");
}

}  // namespace knrl
