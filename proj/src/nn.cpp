#include "knrl/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace knrl::nn {

Mlp::Mlp(const std::vector<int>& widths, std::mt19937_64& rng, bool zero_output) {
    if (widths.size() < 2) throw std::invalid_argument("Mlp needs at least input and output widths");
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        const int in = widths[i];
        const int out = widths[i + 1];
        if (in <= 0 || out <= 0) throw std::invalid_argument("Mlp widths must be positive");
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        std::uniform_real_distribution<double> u(-bound, bound);
        Dense layer{Matrix(out, in), Vector(out)};
        // Column-major fill order keeps initialisation independent of Eigen internals.
        for (int c = 0; c < in; ++c)
            for (int r = 0; r < out; ++r) layer.w(r, c) = u(rng);
        for (int r = 0; r < out; ++r) layer.b(r) = u(rng);
        layers_.push_back(std::move(layer));
    }
    if (zero_output) {
        layers_.back().w.setZero();
        layers_.back().b.setZero();
    }
}

Matrix Mlp::forward(const Matrix& x) const {
    Matrix h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        Matrix z = layers_[i].w * h;
        z.colwise() += layers_[i].b;
        if (i + 1 < layers_.size()) z = z.cwiseMax(0.0);
        h = std::move(z);
    }
    return h;
}

Matrix Mlp::forward(const Matrix& x, Tape& tape) const {
    tape.inputs.clear();
    tape.pre.clear();
    Matrix h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        tape.inputs.push_back(h);
        Matrix z = layers_[i].w * h;
        z.colwise() += layers_[i].b;
        tape.pre.push_back(z);
        h = i + 1 < layers_.size() ? Matrix(z.cwiseMax(0.0)) : z;
    }
    return h;
}

Matrix Mlp::backward(const Tape& tape, const Matrix& dy, Gradients* grads) const {
    Matrix delta = dy;
    for (std::size_t li = layers_.size(); li-- > 0;) {
        if (li + 1 < layers_.size()) {
            delta = delta.cwiseProduct((tape.pre[li].array() > 0.0).cast<double>().matrix());
        }
        if (grads != nullptr) {
            (*grads)[li].w.noalias() += delta * tape.inputs[li].transpose();
            (*grads)[li].b += delta.rowwise().sum();
        }
        delta = layers_[li].w.transpose() * delta;
    }
    return delta;
}

Gradients Mlp::zero_gradients() const {
    Gradients g;
    g.reserve(layers_.size());
    for (const auto& l : layers_)
        g.push_back({Matrix::Zero(l.w.rows(), l.w.cols()), Vector::Zero(l.b.size())});
    return g;
}

int Mlp::input_size() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().w.cols()); }
int Mlp::output_size() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().w.rows()); }

std::vector<int> Mlp::widths() const {
    std::vector<int> w;
    if (layers_.empty()) return w;
    w.push_back(input_size());
    for (const auto& l : layers_) w.push_back(static_cast<int>(l.w.rows()));
    return w;
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.w.size() + l.b.size());
    return n;
}

void Mlp::write_parameters(std::span<double> out) const {
    if (out.size() != parameter_count()) throw std::invalid_argument("parameter span size mismatch");
    std::size_t at = 0;
    for (const auto& l : layers_) {
        std::copy(l.w.data(), l.w.data() + l.w.size(), out.begin() + static_cast<std::ptrdiff_t>(at));
        at += static_cast<std::size_t>(l.w.size());
        std::copy(l.b.data(), l.b.data() + l.b.size(), out.begin() + static_cast<std::ptrdiff_t>(at));
        at += static_cast<std::size_t>(l.b.size());
    }
}

void Mlp::read_parameters(std::span<const double> in) {
    if (in.size() != parameter_count()) throw std::invalid_argument("parameter span size mismatch");
    std::size_t at = 0;
    for (auto& l : layers_) {
        std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(at), l.w.size(), l.w.data());
        at += static_cast<std::size_t>(l.w.size());
        std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(at), l.b.size(), l.b.data());
        at += static_cast<std::size_t>(l.b.size());
    }
}

void Mlp::polyak_from(const Mlp& source, double tau) {
    if (source.layers_.size() != layers_.size()) throw std::invalid_argument("polyak: shape mismatch");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        layers_[i].w = tau * source.layers_[i].w + (1.0 - tau) * layers_[i].w;
        layers_[i].b = tau * source.layers_[i].b + (1.0 - tau) * layers_[i].b;
    }
}

Adam::Adam(const Mlp& net, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(net.zero_gradients()), v_(net.zero_gradients()) {}

void Adam::step(Mlp& net, const Gradients& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const double step = lr_ * std::sqrt(c2) / c1;
    auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
        param.array() -= step * m.array() / (v.array().sqrt() + eps_ * std::sqrt(c2));
    };
    auto& layers = net.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        update(layers[i].w, grads[i].w, m_[i].w, v_[i].w);
        update(layers[i].b, grads[i].b, m_[i].b, v_[i].b);
    }
}

double ScalarAdam::step(double value, double grad) {
    ++t_;
    m_ = 0.9 * m_ + 0.1 * grad;
    v_ = 0.999 * v_ + 0.001 * grad * grad;
    const double mh = m_ / (1.0 - std::pow(0.9, static_cast<double>(t_)));
    const double vh = v_ / (1.0 - std::pow(0.999, static_cast<double>(t_)));
    return value - lr_ * mh / (std::sqrt(vh) + 1e-8);
}

}  // namespace knrl::nn
