#include "knrl/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace knrl {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 8> kMagic{'K', 'N', 'R', 'L', 'C', 'K', 'P', 'T'};

class Writer {
public:
    template <typename T>
    void put(T v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        bytes.insert(bytes.end(), p, p + sizeof(T));
    }
    std::vector<std::uint8_t> bytes;
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

    template <typename T>
    T get() {
        if (at_ + sizeof(T) > bytes_.size()) throw CheckpointError("corrupt checkpoint: truncated");
        T v;
        std::memcpy(&v, bytes_.data() + at_, sizeof(T));
        at_ += sizeof(T);
        return v;
    }
    std::size_t remaining() const noexcept { return bytes_.size() - at_; }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t at_{0};
};

std::vector<nn::Mlp*> networks(SacAgent& a) {
    return {&a.actor(), &a.q1(), &a.q2(), &a.q1_target(), &a.q2_target()};
}

std::vector<const nn::Mlp*> networks(const SacAgent& a) {
    return {&a.actor(), &a.q1(), &a.q2(), &a.q1_target(), &a.q2_target()};
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const SacAgent& agent, const ObservationScales& scales,
                                               std::uint64_t transitions) {
    Writer w;
    for (char c : kMagic) w.put(c);
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::int32_t>(agent.k());
    w.put<std::int32_t>(agent.obs_dim());
    w.put<std::int32_t>(agent.action_dim());
    const auto widths = agent.actor().widths();
    const auto hidden = std::vector<int>(widths.begin() + 1, widths.end() - 1);
    w.put<std::int32_t>(static_cast<std::int32_t>(hidden.size()));
    for (int h : hidden) w.put<std::int32_t>(h);

    std::uint64_t total = 0;
    for (const auto* net : networks(agent)) total += net->parameter_count();
    w.put<std::uint64_t>(total);
    for (double s : {scales.min_x, scales.min_y, scales.extent, scales.speed, scales.distance, scales.time})
        w.put<double>(s);
    w.put<double>(agent.reward_scale());
    w.put<double>(agent.log_alpha());
    w.put<std::uint64_t>(agent.update_count());
    w.put<std::uint64_t>(transitions);

    std::vector<double> buf;
    for (const auto* net : networks(agent)) {
        buf.resize(net->parameter_count());
        net->write_parameters(buf);
        for (double v : buf) w.put<double>(v);
    }
    return std::move(w.bytes);
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes, const SacConfig& cfg,
                                  std::optional<int> expected_k) {
    Reader r(bytes);
    for (char c : kMagic)
        if (r.get<char>() != c) throw CheckpointError("corrupt checkpoint: bad magic");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    const int k = r.get<std::int32_t>();
    const int obs_dim = r.get<std::int32_t>();
    const int act_dim = r.get<std::int32_t>();
    const int hidden_count = r.get<std::int32_t>();
    if (k < 0 || act_dim != k + 1 || obs_dim != observation_dim(k) || hidden_count <= 0 || hidden_count > 64)
        throw CheckpointError("corrupt checkpoint: inconsistent dimensions");
    if (expected_k && *expected_k != k)
        throw CheckpointError("incompatible k: checkpoint has k=" + std::to_string(k) + ", run expects k=" +
                              std::to_string(*expected_k));
    SacConfig shaped = cfg;
    shaped.hidden.clear();
    for (int i = 0; i < hidden_count; ++i) {
        const int h = r.get<std::int32_t>();
        if (h <= 0 || h > 1 << 16) throw CheckpointError("corrupt checkpoint: bad hidden width");
        shaped.hidden.push_back(h);
    }
    const auto total = r.get<std::uint64_t>();

    ObservationScales scales;
    scales.min_x = r.get<double>();
    scales.min_y = r.get<double>();
    scales.extent = r.get<double>();
    scales.speed = r.get<double>();
    scales.distance = r.get<double>();
    scales.time = r.get<double>();
    const double reward_scale = r.get<double>();
    const double log_alpha = r.get<double>();
    const auto updates = r.get<std::uint64_t>();
    const auto transitions = r.get<std::uint64_t>();
    if (!(reward_scale > 0.0)) throw CheckpointError("corrupt checkpoint: bad reward scale");

    SacAgent agent(k, obs_dim, shaped, reward_scale, 0);
    std::uint64_t expected = 0;
    for (const auto* net : networks(std::as_const(agent))) expected += net->parameter_count();
    if (total != expected) throw CheckpointError("corrupt checkpoint: parameter count mismatch");
    if (r.remaining() != total * sizeof(double)) throw CheckpointError("corrupt checkpoint: truncated");

    std::vector<double> buf;
    for (auto* net : networks(agent)) {
        buf.resize(net->parameter_count());
        for (auto& v : buf) v = r.get<double>();
        net->read_parameters(buf);
    }
    agent.set_log_alpha(log_alpha);
    agent.set_update_count(updates);
    return Checkpoint{std::move(agent), scales, transitions};
}

void save_checkpoint(const std::filesystem::path& path, const SacAgent& agent, const ObservationScales& scales,
                     std::uint64_t transitions) {
    const auto bytes = serialize_checkpoint(agent, scales, transitions);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const SacConfig& cfg, std::optional<int> expected_k) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes, cfg, expected_k);
}

}  // namespace knrl
