#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "knrl/checkpoint.hpp"
#include "knrl/nn.hpp"
#include "knrl/observation.hpp"
#include "knrl/replay.hpp"
#include "knrl/sac.hpp"
#include "test_support.hpp"

using namespace knrl;
using nn::Matrix;
using nn::Vector;

namespace {

SacConfig tiny_config() {
    SacConfig cfg;
    cfg.hidden = {8, 8};
    cfg.batch_size = 4;
    return cfg;
}

Batch random_batch(int obs_dim, int act_dim, int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> r(0.0, 200.0);
    Batch b;
    b.obs = Matrix::NullaryExpr(obs_dim, n, [&] { return u(rng); });
    b.actions = Matrix::NullaryExpr(act_dim, n, [&] { return 0.9 * u(rng); });
    b.rewards = Vector::NullaryExpr(n, [&] { return r(rng); });
    b.next_obs = Matrix::NullaryExpr(obs_dim, n, [&] { return u(rng); });
    b.time_limit.assign(static_cast<std::size_t>(n), 0);
    return b;
}

void check_gradients(nn::Mlp& net, const nn::Gradients& grads, const std::function<double()>& loss,
                     const char* name) {
    const auto errors = testing::gradient_errors(net, grads, loss);
    for (std::size_t i = 0; i < errors.size(); ++i) {
        INFO(name << " tensor " << i);
        CHECK(errors[i] < 1e-4);
    }
}

std::vector<double> parameters(const nn::Mlp& net) {
    std::vector<double> p(net.parameter_count());
    net.write_parameters(p);
    return p;
}

}  // namespace

TEST_CASE("critic gradients match central finite differences") {
    const int k = 1;
    const int d = observation_dim(k);
    SacAgent agent(k, d, tiny_config(), 120.0, 42);
    std::mt19937_64 rng(3);
    const auto batch = random_batch(d, k + 1, 4, rng);
    const Matrix next_noise = gaussian_noise(k + 1, 4, rng);
    const auto loss = agent.critic_loss(batch, next_noise, true);
    auto value = [&] { return agent.critic_loss(batch, next_noise, false).value; };
    check_gradients(agent.q1(), loss.q1, value, "critic 1");
    check_gradients(agent.q2(), loss.q2, value, "critic 2");
}

TEST_CASE("actor gradients match central finite differences") {
    const int k = 1;
    const int d = observation_dim(k);
    SacAgent agent(k, d, tiny_config(), 120.0, 43);
    std::mt19937_64 rng(4);
    const auto batch = random_batch(d, k + 1, 4, rng);
    const Matrix noise = gaussian_noise(k + 1, 4, rng);
    const auto loss = agent.actor_loss(batch.obs, noise, true);
    auto value = [&] { return agent.actor_loss(batch.obs, noise, false).value; };
    check_gradients(agent.actor(), loss.actor, value, "actor");
}

TEST_CASE("mlp input gradient matches finite differences") {
    std::mt19937_64 rng(5);
    const nn::Mlp net({5, 8, 8, 3}, rng);
    const Matrix x = Matrix::Random(5, 4);
    const Matrix w = Matrix::Random(3, 4);
    nn::Mlp::Tape tape;
    net.forward(x, tape);
    const Matrix dx = net.backward(tape, w, nullptr);
    Matrix num(5, 4);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Matrix xp = x;
        Matrix xm = x;
        xp(i) += 1e-5;
        xm(i) -= 1e-5;
        num(i) = (net.forward(xp).cwiseProduct(w).sum() - net.forward(xm).cwiseProduct(w).sum()) / 2e-5;
    }
    CHECK(testing::relative_error(dx, num) < 1e-4);
}

TEST_CASE("zeroed policy output acts at the midpoint") {
    SacAgent agent(2, observation_dim(2), tiny_config(), 1.0, 1, true);
    std::mt19937_64 rng(1);
    const Matrix obs = Matrix::Random(observation_dim(2), 5);
    const auto s = agent.act(obs, ActionMode::deterministic, rng);
    CHECK(s.actions.cwiseAbs().maxCoeff() == 0.0);
    CHECK(s.actions.rows() == 3);
}

TEST_CASE("stochastic actions are reproducible and bounded") {
    SacAgent agent(3, observation_dim(3), tiny_config(), 1.0, 2);
    const Matrix obs = Matrix::Random(observation_dim(3), 16);
    std::mt19937_64 a(9);
    std::mt19937_64 b(9);
    const auto x = agent.act(obs, ActionMode::stochastic, a);
    const auto y = agent.act(obs, ActionMode::stochastic, b);
    CHECK(x.actions == y.actions);
    CHECK(x.log_prob == y.log_prob);
    CHECK(x.actions.cwiseAbs().maxCoeff() <= 1.0);
}

TEST_CASE("wrong observation size is rejected") {
    SacAgent agent(1, observation_dim(1), tiny_config(), 1.0, 2);
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(agent.act(Matrix::Zero(5, 1), ActionMode::deterministic, rng), std::invalid_argument);
}

TEST_CASE("one-dimensional log density matches numerical integration") {
    // For k = 0 the policy is a single squashed Gaussian. The probability mass
    // of a small interval around a sampled action, integrated in the
    // pre-squash variable, divided by the interval width approximates the
    // density of the action.
    SacAgent agent(0, 3, tiny_config(), 1.0, 11);
    const Matrix obs = Matrix::Constant(3, 1, 0.4);
    std::mt19937_64 rng(0);
    const double mu = std::atanh(agent.act(obs, ActionMode::deterministic, rng).actions(0, 0));
    const double sigma = std::atanh(agent.act_with_noise(obs, Matrix::Constant(1, 1, 1.0)).actions(0, 0)) - mu;
    REQUIRE(sigma > 0.0);

    for (const double eps : {-1.7, -0.4, 0.0, 0.8, 2.1}) {
        const auto s = agent.act_with_noise(obs, Matrix::Constant(1, 1, eps));
        const double a = s.actions(0, 0);
        const double half = 1e-4 * (1.0 - a * a);
        const double lo = std::atanh(a - half);
        const double hi = std::atanh(a + half);
        const int steps = 2000;  // Simpson
        const double step = (hi - lo) / steps;
        auto pdf = [&](double u) {
            const double z = (u - mu) / sigma;
            return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
        };
        double mass = pdf(lo) + pdf(hi);
        for (int i = 1; i < steps; ++i) mass += (i % 2 == 1 ? 4.0 : 2.0) * pdf(lo + i * step);
        mass *= step / 3.0;
        CHECK(std::exp(s.log_prob(0)) == doctest::Approx(mass / (2.0 * half)).epsilon(1e-6));
    }
}

TEST_CASE("with gamma zero the critic target is the scaled reward") {
    auto cfg = tiny_config();
    cfg.gamma = 0.0;
    SacAgent agent(1, 13, cfg, 250.0, 5);
    std::mt19937_64 rng(6);
    auto batch = random_batch(13, 2, 6, rng);
    batch.time_limit.assign(6, 1);  // a time limit still bootstraps; with gamma 0 nothing is added
    const Vector target = agent.critic_targets(batch, gaussian_noise(2, 6, rng));
    for (int i = 0; i < 6; ++i) CHECK(target(i) == doctest::Approx(batch.rewards(i) / 250.0));
}

TEST_CASE("time-limit flags do not cut the bootstrap") {
    SacAgent agent(1, 13, tiny_config(), 250.0, 5);
    std::mt19937_64 rng(6);
    auto batch = random_batch(13, 2, 6, rng);
    const Matrix noise = gaussian_noise(2, 6, rng);
    const Vector open = agent.critic_targets(batch, noise);
    batch.time_limit.assign(6, 1);
    CHECK(agent.critic_targets(batch, noise) == open);
}

TEST_CASE("critic target uses the smaller target critic") {
    auto cfg = tiny_config();
    cfg.gamma = 0.5;
    SacAgent agent(0, 4, cfg, 1.0, 7);
    // Make both target critics constant: 3 and 1.
    for (auto* net : {&agent.q1_target(), &agent.q2_target()}) {
        for (auto& layer : net->layers()) {
            layer.w.setZero();
            layer.b.setZero();
        }
    }
    agent.q1_target().layers().back().b(0) = 3.0;
    agent.q2_target().layers().back().b(0) = 1.0;
    std::mt19937_64 rng(1);
    const auto batch = random_batch(4, 1, 3, rng);
    const Matrix noise = gaussian_noise(1, 3, rng);
    const Vector target = agent.critic_targets(batch, noise);
    const auto next = agent.act_with_noise(batch.next_obs, noise);
    for (int i = 0; i < 3; ++i)
        CHECK(target(i) == doctest::Approx(batch.rewards(i) + 0.5 * (1.0 - agent.alpha() * next.log_prob(i))));
}

TEST_CASE("with tau one the targets equal the online critics after an update") {
    auto cfg = tiny_config();
    cfg.tau = 1.0;
    SacAgent agent(1, 13, cfg, 100.0, 8);
    std::mt19937_64 rng(2);
    agent.update(random_batch(13, 2, 4, rng), rng);
    CHECK(parameters(agent.q1_target()) == parameters(agent.q1()));
    CHECK(parameters(agent.q2_target()) == parameters(agent.q2()));
    CHECK(agent.update_count() == 1);
}

TEST_CASE("non-finite loss raises with a diagnostic") {
    SacAgent agent(1, 13, tiny_config(), 100.0, 8);
    std::mt19937_64 rng(2);
    auto batch = random_batch(13, 2, 4, rng);
    batch.rewards(1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(agent.update(batch, rng), doctest::Contains("non-finite critic loss"), NonFiniteLoss);
}

TEST_CASE("larger temperature never lowers policy entropy on a fixed-critic bandit") {
    // One state, one action, Q(a) = -4 (a - 0.3)^2. The actor is trained
    // against this fixed critic to convergence for each temperature.
    const SacAgent::CriticFn critic = [](const Matrix&, const Matrix& a, Vector& q, Matrix& dq) {
        q = (-4.0 * (a.array() - 0.3).square()).matrix().transpose();
        dq = -8.0 * (a.array() - 0.3).matrix();
    };
    std::vector<double> entropy;
    for (const double alpha : {0.02, 0.1, 0.3, 1.0}) {
        auto cfg = tiny_config();
        cfg.hidden = {16, 16};
        cfg.actor_lr = 5e-3;
        cfg.alpha = alpha;
        SacAgent agent(0, 2, cfg, 1.0, 21);
        std::mt19937_64 rng(4);
        const Matrix obs = Matrix::Constant(2, 128, 0.5);
        for (int it = 0; it < 1500; ++it) {
            const auto loss = agent.actor_loss(obs, gaussian_noise(1, 128, rng), true, &critic);
            agent.apply_actor_gradients(loss.actor);
        }
        const Matrix big = Matrix::Constant(2, 20000, 0.5);
        entropy.push_back(-agent.act(big, ActionMode::stochastic, rng).log_prob.mean());
    }
    for (std::size_t i = 1; i < entropy.size(); ++i) CHECK(entropy[i] >= entropy[i - 1]);
}

TEST_CASE("polyak averaging interpolates parameters") {
    std::mt19937_64 rng(1);
    nn::Mlp a({3, 4, 1}, rng);
    const nn::Mlp b({3, 4, 1}, rng);
    const auto pa = parameters(a);
    const auto pb = parameters(b);
    a.polyak_from(b, 0.25);
    const auto mixed = parameters(a);
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(mixed[i] == doctest::Approx(0.25 * pb[i] + 0.75 * pa[i]));
}

namespace {

GroupTransition transition(int tag, int obs_dim = 3, int act_dim = 2) {
    GroupTransition t;
    t.members = std::vector<int>(static_cast<std::size_t>(act_dim), tag);
    t.obs.assign(static_cast<std::size_t>(obs_dim), tag);
    t.actions.assign(static_cast<std::size_t>(act_dim), 0.5);
    t.reward = tag;
    t.next_obs.assign(static_cast<std::size_t>(obs_dim), tag + 0.5);
    t.time_limit = tag % 2 == 1;
    return t;
}

}  // namespace

TEST_CASE("replay keeps its capacity and evicts the oldest entries first") {
    ReplayBuffer buf(4, 3, 2);
    for (int i = 0; i < 10; ++i) {
        buf.push(transition(i));
        CHECK(buf.size() <= buf.capacity());
    }
    CHECK(buf.size() == 4);
    CHECK(buf.total_pushed() == 10);
    for (std::size_t i = 0; i < 4; ++i) CHECK(buf.at(i).reward == 6.0 + static_cast<double>(i));
    CHECK(buf.at(1).time_limit);
    CHECK(buf.at(1).next_obs == std::vector<double>(3, 7.5));
    CHECK_THROWS_AS(buf.at(4), std::out_of_range);
}

TEST_CASE("replay sampling is seeded and roughly uniform") {
    ReplayBuffer buf(10, 3, 2);
    for (int i = 0; i < 10; ++i) buf.push(transition(i));
    std::mt19937_64 a(5);
    std::mt19937_64 b(5);
    const auto x = buf.sample(64, a);
    const auto y = buf.sample(64, b);
    CHECK(x.rewards == y.rewards);
    CHECK(x.obs == y.obs);
    CHECK(x.size() == 64);

    std::vector<int> counts(10, 0);
    std::mt19937_64 rng(6);
    for (int t = 0; t < 200; ++t) {
        const auto s = buf.sample(100, rng);
        for (int i = 0; i < s.size(); ++i) ++counts[static_cast<int>(s.rewards(i))];
        for (int i = 0; i < s.size(); ++i) CHECK(s.obs(0, i) == s.rewards(i));
    }
    for (int c : counts) CHECK(std::abs(c - 2000) < 200);
}

TEST_CASE("replay rejects malformed transitions and empty sampling") {
    ReplayBuffer buf(4, 3, 2);
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(buf.sample(1, rng), std::logic_error);
    CHECK_THROWS_AS(buf.push(transition(1, 4, 2)), std::invalid_argument);
    auto negative = transition(1);
    negative.reward = -1.0;
    CHECK_THROWS_AS(buf.push(negative), std::invalid_argument);
    CHECK_THROWS_AS(ReplayBuffer(0, 3, 2), std::invalid_argument);
}

TEST_CASE("checkpoint round trip is byte exact") {
    SacAgent agent(3, observation_dim(3), tiny_config(), 321.0, 12);
    std::mt19937_64 rng(3);
    agent.update(random_batch(observation_dim(3), 4, 8, rng), rng);
    ObservationScales scales{1.0, 2.0, 300.0, 15.0, 900.0, 60.0};
    const auto bytes = serialize_checkpoint(agent, scales, 77);
    const auto back = deserialize_checkpoint(bytes, tiny_config(), 3);
    CHECK(serialize_checkpoint(back.agent, back.scales, back.transitions) == bytes);
    CHECK(parameters(back.agent.actor()) == parameters(agent.actor()));
    CHECK(back.transitions == 77);
    CHECK(back.scales.distance == 900.0);
    CHECK(back.agent.update_count() == 1);
    CHECK(back.agent.reward_scale() == 321.0);
}

TEST_CASE("checkpoint files round trip through disk") {
    SacAgent agent(1, observation_dim(1), tiny_config(), 10.0, 1);
    const auto path = std::filesystem::temp_directory_path() / "knrl_unit_checkpoint.bin";
    save_checkpoint(path, agent, ObservationScales{}, 5);
    const auto back = load_checkpoint(path, tiny_config());
    CHECK(parameters(back.agent.q2_target()) == parameters(agent.q2_target()));
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_checkpoint(path, tiny_config()), CheckpointError);
}

TEST_CASE("damaged or mismatched checkpoints are rejected") {
    SacAgent agent(4, observation_dim(4), tiny_config(), 10.0, 1);
    const auto bytes = serialize_checkpoint(agent, ObservationScales{}, 0);

    auto truncated = bytes;
    truncated.resize(bytes.size() - 9);
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(truncated, tiny_config()), doctest::Contains("corrupt checkpoint"),
                         CheckpointError);
    auto header_only = bytes;
    header_only.resize(20);
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(header_only, tiny_config()), doctest::Contains("corrupt checkpoint"),
                         CheckpointError);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(bad_magic, tiny_config()), doctest::Contains("corrupt checkpoint"),
                         CheckpointError);
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(bytes, tiny_config(), 3), doctest::Contains("incompatible k"),
                         CheckpointError);
    auto bad_version = bytes;
    bad_version[8] = 9;
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(bad_version, tiny_config()), doctest::Contains("version"),
                         CheckpointError);
}
