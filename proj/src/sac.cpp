#include "knrl/sac.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace knrl {

using nn::Matrix;
using nn::Vector;

namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// log(1 - tanh(u)^2), evaluated without cancellation.
double log_dtanh(double u) { return 2.0 * (std::numbers::ln2 - u - softplus(-2.0 * u)); }

struct PolicyHead {
    Matrix mean;
    Matrix log_std;    // clamped
    Matrix in_range;   // 1 where the raw log-std was inside the clamp interval
    Matrix std;
    Matrix u;          // pre-squash sample
    Matrix a;          // tanh(u)
    Vector log_prob;
};

PolicyHead squash(const Matrix& out, const Matrix& noise, int action_dim) {
    PolicyHead h;
    const auto n = out.cols();
    h.mean = out.topRows(action_dim);
    const Matrix raw = out.bottomRows(action_dim);
    h.log_std = raw.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
    h.in_range = ((raw.array() >= kLogStdMin) && (raw.array() <= kLogStdMax)).cast<double>().matrix();
    h.std = h.log_std.array().exp().matrix();
    h.u = h.mean + h.std.cwiseProduct(noise);
    h.a = h.u.array().tanh().matrix();
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    h.log_prob.resize(n);
    for (Eigen::Index c = 0; c < n; ++c) {
        double lp = 0.0;
        for (int r = 0; r < action_dim; ++r) {
            const double e = noise(r, c);
            lp += -0.5 * e * e - h.log_std(r, c) - half_log_2pi - log_dtanh(h.u(r, c));
        }
        h.log_prob(c) = lp;
    }
    return h;
}

Matrix stack(const Matrix& top, const Matrix& bottom) {
    Matrix m(top.rows() + bottom.rows(), top.cols());
    m.topRows(top.rows()) = top;
    m.bottomRows(bottom.rows()) = bottom;
    return m;
}

}  // namespace

Matrix gaussian_noise(int rows, int cols, std::mt19937_64& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    Matrix m(rows, cols);
    for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) m(r, c) = n01(rng);
    return m;
}

SacAgent::SacAgent(int k, int obs_dim, const SacConfig& cfg, double reward_scale, std::uint64_t seed,
                   bool zero_policy_output)
    : k_(k), obs_dim_(obs_dim), cfg_(cfg), reward_scale_(reward_scale), log_alpha_(std::log(cfg.alpha)),
      alpha_opt_(cfg.alpha_lr) {
    if (k < 0) throw std::invalid_argument("k must be non-negative");
    if (obs_dim <= 0) throw std::invalid_argument("observation dimension must be positive");
    if (!(reward_scale > 0.0)) throw std::invalid_argument("reward scale must be positive");
    if (!(cfg.alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
    std::mt19937_64 rng(seed);
    const int a = action_dim();

    std::vector<int> actor_w{obs_dim};
    actor_w.insert(actor_w.end(), cfg.hidden.begin(), cfg.hidden.end());
    actor_w.push_back(2 * a);
    std::vector<int> critic_w{obs_dim + a};
    critic_w.insert(critic_w.end(), cfg.hidden.begin(), cfg.hidden.end());
    critic_w.push_back(1);

    actor_ = nn::Mlp(actor_w, rng, zero_policy_output);
    q1_ = nn::Mlp(critic_w, rng);
    q2_ = nn::Mlp(critic_w, rng);
    q1_target_ = q1_;
    q2_target_ = q2_;
    actor_opt_ = nn::Adam(actor_, cfg.actor_lr);
    q1_opt_ = nn::Adam(q1_, cfg.critic_lr);
    q2_opt_ = nn::Adam(q2_, cfg.critic_lr);
}

double SacAgent::alpha() const noexcept { return std::exp(log_alpha_); }

void SacAgent::set_alpha(double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
    log_alpha_ = std::log(alpha);
}

double SacAgent::target_entropy() const noexcept {
    return cfg_.target_entropy != 0.0 ? cfg_.target_entropy : -static_cast<double>(action_dim());
}

ActionSample SacAgent::act(const Matrix& obs, ActionMode mode, std::mt19937_64& rng) const {
    if (obs.rows() != obs_dim_)
        throw std::invalid_argument("observation dimension " + std::to_string(obs.rows()) +
                                    " does not match policy input " + std::to_string(obs_dim_));
    const Matrix noise = mode == ActionMode::stochastic
                             ? gaussian_noise(action_dim(), static_cast<int>(obs.cols()), rng)
                             : Matrix::Zero(action_dim(), obs.cols());
    const auto head = squash(actor_.forward(obs), noise, action_dim());
    return {head.a, head.log_prob};
}

ActionSample SacAgent::act_with_noise(const Matrix& obs, const Matrix& noise) const {
    if (obs.rows() != obs_dim_) throw std::invalid_argument("observation dimension mismatch");
    const auto head = squash(actor_.forward(obs), noise, action_dim());
    return {head.a, head.log_prob};
}

Vector SacAgent::min_q(const nn::Mlp& a, const nn::Mlp& b, const Matrix& obs, const Matrix& act) const {
    const Matrix in = stack(obs, act);
    const Matrix qa = a.forward(in);
    const Matrix qb = b.forward(in);
    return qa.row(0).cwiseMin(qb.row(0)).transpose();
}

Vector SacAgent::critic_targets(const Batch& batch, const Matrix& next_noise) const {
    const auto next = squash(actor_.forward(batch.next_obs), next_noise, action_dim());
    const Vector q_next = min_q(q1_target_, q2_target_, batch.next_obs, next.a);
    const double al = alpha();
    return batch.rewards / reward_scale_ + cfg_.gamma * (q_next - al * next.log_prob);
}

SacAgent::CriticLoss SacAgent::critic_loss(const Batch& batch, const Matrix& next_noise,
                                           bool with_gradients) const {
    CriticLoss out;
    out.target = critic_targets(batch, next_noise);
    const Matrix in = stack(batch.obs, batch.actions);
    const double n = static_cast<double>(batch.size());

    auto one = [&](const nn::Mlp& q, nn::Gradients& grads) {
        nn::Mlp::Tape tape;
        const Matrix pred = q.forward(in, tape);
        const Matrix err = pred - out.target.transpose();
        if (with_gradients) {
            grads = q.zero_gradients();
            q.backward(tape, (2.0 / n) * err, &grads);
        }
        return err.squaredNorm() / n;
    };
    out.value = one(q1_, out.q1) + one(q2_, out.q2);
    return out;
}

SacAgent::ActorLoss SacAgent::actor_loss(const Matrix& obs, const Matrix& noise, bool with_gradients,
                                         const CriticFn* critic) const {
    const int a = action_dim();
    const double n = static_cast<double>(obs.cols());
    const double al = alpha();

    nn::Mlp::Tape actor_tape;
    const auto head = squash(actor_.forward(obs, actor_tape), noise, a);

    Vector q(obs.cols());
    Matrix dq_da(a, obs.cols());
    if (critic != nullptr) {
        (*critic)(obs, head.a, q, dq_da);
    } else {
        const Matrix in = stack(obs, head.a);
        nn::Mlp::Tape t1;
        nn::Mlp::Tape t2;
        const Matrix v1 = q1_.forward(in, t1);
        const Matrix v2 = q2_.forward(in, t2);
        Matrix pick1 = (v1.array() <= v2.array()).cast<double>().matrix();
        Matrix pick2 = Matrix::Ones(1, obs.cols()) - pick1;
        q = v1.row(0).cwiseMin(v2.row(0)).transpose();
        if (with_gradients) {
            const Matrix g1 = q1_.backward(t1, pick1, nullptr);
            const Matrix g2 = q2_.backward(t2, pick2, nullptr);
            dq_da = (g1 + g2).bottomRows(a);
        }
    }

    ActorLoss out;
    out.mean_log_prob = head.log_prob.mean();
    out.value = (al * head.log_prob - q).mean();
    if (!with_gradients) return out;

    // d/du of the loss per element; noise is held fixed (reparameterisation).
    const Matrix one_minus_a2 = (Matrix::Ones(a, obs.cols()) - head.a.cwiseProduct(head.a));
    const Matrix d_u = (-dq_da.cwiseProduct(one_minus_a2) + 2.0 * al * head.a) / n;
    const Matrix d_mean = d_u;
    Matrix d_log_std = d_u.cwiseProduct(head.std).cwiseProduct(noise);
    d_log_std.array() -= al / n;
    d_log_std = d_log_std.cwiseProduct(head.in_range);

    out.actor = actor_.zero_gradients();
    actor_.backward(actor_tape, stack(d_mean, d_log_std), &out.actor);
    return out;
}

void SacAgent::apply_actor_gradients(const nn::Gradients& grads) { actor_opt_.step(actor_, grads); }

UpdateStats SacAgent::update(const Batch& batch, std::mt19937_64& rng) {
    if (batch.size() == 0) throw std::invalid_argument("update needs a non-empty batch");
    UpdateStats stats;

    const Matrix next_noise = gaussian_noise(action_dim(), batch.size(), rng);
    auto closs = critic_loss(batch, next_noise, true);
    if (!std::isfinite(closs.value)) {
        std::ostringstream os;
        os << "non-finite critic loss after " << updates_ << " updates; reward range ["
           << batch.rewards.minCoeff() << ", " << batch.rewards.maxCoeff() << "], target range ["
           << closs.target.minCoeff() << ", " << closs.target.maxCoeff() << "], alpha " << alpha();
        throw NonFiniteLoss(os.str());
    }
    q1_opt_.step(q1_, closs.q1);
    q2_opt_.step(q2_, closs.q2);

    const Matrix noise = gaussian_noise(action_dim(), batch.size(), rng);
    auto aloss = actor_loss(batch.obs, noise, true);
    if (!std::isfinite(aloss.value)) {
        std::ostringstream os;
        os << "non-finite actor loss after " << updates_ << " updates; mean log-prob "
           << aloss.mean_log_prob << ", alpha " << alpha();
        throw NonFiniteLoss(os.str());
    }
    actor_opt_.step(actor_, aloss.actor);

    if (cfg_.auto_alpha) {
        const double grad = -(aloss.mean_log_prob + target_entropy());
        log_alpha_ = alpha_opt_.step(log_alpha_, grad);
    }

    q1_target_.polyak_from(q1_, cfg_.tau);
    q2_target_.polyak_from(q2_, cfg_.tau);
    ++updates_;

    stats.critic_loss = closs.value;
    stats.actor_loss = aloss.value;
    stats.alpha = alpha();
    stats.mean_log_prob = aloss.mean_log_prob;
    return stats;
}

}  // namespace knrl
