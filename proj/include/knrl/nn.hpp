#pragma once

// Small fully-connected networks with hand-written backpropagation.
// Batches are column-major: one sample per column.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace knrl::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Dense {
    Matrix w;  // out x in
    Vector b;  // out
};

using Gradients = std::vector<Dense>;

/// ReLU hidden layers, linear output.
class Mlp {
public:
    struct Tape {
        std::vector<Matrix> inputs;  // input of each layer
        std::vector<Matrix> pre;     // pre-activation of each layer
    };

    Mlp() = default;
    /// widths = {in, hidden..., out}. Uniform(-1/sqrt(in), 1/sqrt(in)) init;
    /// `zero_output` zeroes the last layer.
    Mlp(const std::vector<int>& widths, std::mt19937_64& rng, bool zero_output = false);

    Matrix forward(const Matrix& x) const;
    Matrix forward(const Matrix& x, Tape& tape) const;

    /// Given dL/dy for the batch recorded in `tape`, adds parameter gradients
    /// into `grads` (when non-null) and returns dL/dx.
    Matrix backward(const Tape& tape, const Matrix& dy, Gradients* grads) const;

    Gradients zero_gradients() const;

    std::vector<Dense>& layers() noexcept { return layers_; }
    const std::vector<Dense>& layers() const noexcept { return layers_; }
    int input_size() const;
    int output_size() const;
    std::vector<int> widths() const;

    std::size_t parameter_count() const;
    /// Per layer: weights (column-major, as stored), then bias.
    void write_parameters(std::span<double> out) const;
    void read_parameters(std::span<const double> in);

    /// this = tau * source + (1 - tau) * this
    void polyak_from(const Mlp& source, double tau);

private:
    std::vector<Dense> layers_;
};

class Adam {
public:
    Adam() = default;
    Adam(const Mlp& net, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(Mlp& net, const Gradients& grads);
    double learning_rate() const noexcept { return lr_; }

private:
    double lr_{1e-3};
    double beta1_{0.9};
    double beta2_{0.999};
    double eps_{1e-8};
    std::uint64_t t_{0};
    Gradients m_;
    Gradients v_;
};

/// Adam for a single scalar parameter.
class ScalarAdam {
public:
    explicit ScalarAdam(double lr = 3e-4) : lr_(lr) {}
    double step(double value, double grad);

private:
    double lr_;
    double m_{0.0};
    double v_{0.0};
    std::uint64_t t_{0};
};

}  // namespace knrl::nn
