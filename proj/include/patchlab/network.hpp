#pragma once

#include "patchlab/features_data.hpp"
#include "patchlab/rng.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace patchlab {

/// Smoothed ReLU: 0 below zero, z^q / (q rho^(q-1)) on [0, rho], and
/// z - (1 - 1/q) rho above rho. C^1 at both knots.
struct Activation {
    int q = 3;
    double rho = 1.0;

    void validate() const;
    bool operator==(const Activation&) const = default;
};

double srelu(const Activation& act, double z);
double srelu_prime(const Activation& act, double z);

/// k x m filters of dimension d, stored (class, filter, coordinate) row-major.
struct WeightTensor {
    std::size_t k = 0;
    std::size_t m = 0;
    std::size_t d = 0;
    std::vector<double> values;

    WeightTensor() = default;
    WeightTensor(std::size_t k_, std::size_t m_, std::size_t d_)
        : k(k_), m(m_), d(d_), values(k_ * m_ * d_, 0.0) {}

    std::span<double> filter(std::size_t i, std::size_t r) { return {values.data() + (i * m + r) * d, d}; }
    std::span<const double> filter(std::size_t i, std::size_t r) const {
        return {values.data() + (i * m + r) * d, d};
    }
    bool same_shape(const WeightTensor& o) const { return k == o.k && m == o.m && d == o.d; }
    bool operator==(const WeightTensor&) const = default;
};

using Gradients = WeightTensor;

struct Network {
    WeightTensor weights;
    Activation act;

    std::size_t k() const { return weights.k; }
    std::size_t m() const { return weights.m; }
    std::size_t d() const { return weights.d; }
    bool all_finite() const;
    bool operator==(const Network&) const = default;
};

// Fixed-order dot product with four partial sums.
double dot(std::span<const double> a, std::span<const double> b);

/// Class scores F_i(X) = sum_r sum_p srelu(<w_{i,r}, x_p>).
std::vector<double> forward(const Network& net, const Patches& x);

// Score of a single class; cheaper than forward() when only F_y is needed.
double class_score(const Network& net, const Patches& x, std::size_t cls);

/// Softmax with max-subtraction.
std::vector<double> softmax_logits(std::span<const double> scores);
double log_sum_exp(std::span<const double> scores);

// Lowest index wins ties.
std::size_t argmax(std::span<const double> scores);
std::size_t predict(const Network& net, const Patches& x);

double ce_loss(const Network& net, const Patches& x, std::size_t y);
double margin_loss(const Network& net, const Patches& x, std::size_t y);

// Adds scale * dL_CE/dw for one example into `out` and returns the example's
// CE loss.
double accumulate_ce_gradient(const Network& net, const Patches& x, std::size_t y, double scale,
                              Gradients& out);

/// Mean CE gradient over a batch, summed in example order.
Gradients grad_weights_ce(const Network& net, std::span<const LabeledExample> batch);

/// Per-patch gradient of the margin loss -F_y with respect to the input.
Patches grad_input_margin(const Network& net, const Patches& x, std::size_t y);

Network init_network(std::size_t k, std::size_t m, std::size_t d, double sigma0, const Activation& act,
                     Rng& rng);

/// One filter per class, w_{i,1} = gamma * u_i (Robust) or gamma * v_i (NonRobust).
Network make_rank_one_network(const FeatureSet& fs, double gamma, FeatureKind kind, const Activation& act);

std::string network_to_json(const Network& net);
Network network_from_json(const std::string& text);

}  // namespace patchlab
