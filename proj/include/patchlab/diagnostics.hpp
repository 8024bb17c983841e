#pragma once

#include "patchlab/features_data.hpp"
#include "patchlab/network.hpp"
#include "patchlab/training.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace patchlab {

/// Exact coordinates of every filter in the feature dictionary plus the
/// component orthogonal to it.
struct WeightDecomposition {
    std::size_t k = 0;
    std::size_t m = 0;
    std::vector<double> A;  // <w_{i,r}, u_i>, k x m
    std::vector<double> B;  // <w_{i,r}, v_i>, k x m
    std::vector<double> C;  // <w_{i,r}, u_j>, k x m x k, zero where j == i
    std::vector<double> D;  // <w_{i,r}, v_j>, k x m x k, zero where j == i
    WeightTensor residual;
    std::vector<double> residual_norms;  // k x m

    double a(std::size_t i, std::size_t r) const { return A[i * m + r]; }
    double b(std::size_t i, std::size_t r) const { return B[i * m + r]; }
    double c(std::size_t i, std::size_t r, std::size_t j) const { return C[(i * m + r) * k + j]; }
    double dd(std::size_t i, std::size_t r, std::size_t j) const { return D[(i * m + r) * k + j]; }
};

WeightDecomposition decompose(const Network& net, const FeatureSet& fs);
WeightTensor reconstruct(const WeightDecomposition& dec, const FeatureSet& fs);

/// The network with every filter's off-feature component removed.
Network project_onto_features(const Network& net, const FeatureSet& fs);

struct OracleConfig {
    std::size_t k = 2;
    std::size_t m = 100;
    double eta = 0.1;
    double eta_tilde = 1e3;
    double epsilon = 1.2;
    double alpha = 2.0;
    double beta = 1.0;
    std::size_t jr_count = 1;
    std::size_t jnr_count = 15;
    Activation act;
    // Fraction of the data in each class; empty means uniform 1/k.
    std::vector<double> class_weights;

    double class_weight(std::size_t y) const {
        return class_weights.empty() ? 1.0 / static_cast<double>(k) : class_weights[y];
    }
    void validate() const;
};

/// Coefficient-space state of the noiseless dynamics. Each filter (i, r) is
/// tracked by its 2k feature coordinates: A/B on its own class and C/D on
/// the others. C and D start at zero unless seeded from a network.
struct OracleState {
    OracleConfig config;
    TrainMode mode = TrainMode::Standard;
    std::size_t t = 0;
    // (i, r, c) with c in [0, k) for u_c and [k, 2k) for v_c.
    std::vector<double> coef;

    static OracleState zeros(const OracleConfig& cfg, TrainMode mode);

    double& u(std::size_t i, std::size_t r, std::size_t j) { return coef[(i * config.m + r) * 2 * config.k + j]; }
    double& v(std::size_t i, std::size_t r, std::size_t j) {
        return coef[(i * config.m + r) * 2 * config.k + config.k + j];
    }
    double u(std::size_t i, std::size_t r, std::size_t j) const {
        return coef[(i * config.m + r) * 2 * config.k + j];
    }
    double v(std::size_t i, std::size_t r, std::size_t j) const {
        return coef[(i * config.m + r) * 2 * config.k + config.k + j];
    }
    double A(std::size_t i, std::size_t r) const { return u(i, r, i); }
    double B(std::size_t i, std::size_t r) const { return v(i, r, i); }
    double max_A(std::size_t i) const;
    double max_B(std::size_t i) const;
};

/// Seeds an oracle from a network's feature coordinates. Only exact when the
/// network has no off-feature component in adversarial mode.
OracleState oracle_state_from_network(const Network& net, const FeatureSet& fs, const OracleConfig& cfg,
                                      TrainMode mode);

std::vector<double> class_weights_of(const Dataset& data);

// Per-class logits at the oracle's clean inputs, F computed from the
// coefficients alone.
std::vector<double> oracle_logits(const OracleState& s, std::size_t y);

OracleState oracle_step_standard(const OracleState& s);

/// Perturbed feature coefficients of the one-step adversarial example of a
/// class-y input; alpha_tilde on the robust patch, beta_tilde on the
/// non-robust ones.
struct AdversarialCoefficients {
    std::vector<double> alpha_tilde;
    std::vector<double> beta_tilde;
    std::vector<bool> robust_saturated;
    std::vector<bool> nonrobust_saturated;
};

OracleState oracle_step_adversarial(const OracleState& s, AdversarialCoefficients* info = nullptr);

struct OracleRecord {
    std::size_t t = 0;
    std::vector<double> max_A;
    std::vector<double> max_B;
};

struct OracleTrajectory {
    std::vector<OracleRecord> records;
    OracleState final_state;
};

OracleTrajectory run_oracle(const OracleState& init, std::size_t T);

std::string trajectory_to_csv(const OracleTrajectory& traj);

struct TensorPowerReport {
    bool hypothesis_ok = false;   // x0 >= y0 S^{1/(q-2)} (1 + gap)
    bool converged = false;       // x reached the target within the cap
    bool x_first = false;         // x reached the target before y did
    std::size_t steps = 0;
    double x_final = 0.0;
    double y_at_cross = 0.0;
    double ratio = 0.0;  // y_T / y_0
};

/// Simulates x_{t+1} = x_t + eta C_t x_t^{q-1}, y_{t+1} = y_t + eta S C_t y_t^{q-1}
/// until x reaches a_target.
TensorPowerReport tensor_power_check(double x0, double y0, double S, const std::function<double(std::size_t)>& c_t,
                                     double eta, int q, double a_target, std::size_t max_iters = 100000000,
                                     double gap = 0.05);

struct DivergenceReport {
    std::vector<std::size_t> epochs;
    std::vector<double> diff_A;  // max over classes of |maxA_sim - maxA_oracle|
    std::vector<double> diff_B;
    double max_divergence = 0.0;
};

/// Compares per-epoch diagonal maxima of a trace against an oracle
/// trajectory over the first t_cmp epochs (all when 0).
DivergenceReport compare_trace(const TrainingTrace& sim, const OracleTrajectory& oracle, std::size_t t_cmp = 0);

std::string divergence_to_csv(const DivergenceReport& rep);

// Largest |coefficient difference| between a decomposed network and an
// oracle state, over all tracked feature coordinates.
double coefficient_divergence(const WeightDecomposition& dec, const OracleState& s);

/// First epoch at which each class's series reaches the threshold.
std::vector<std::optional<std::size_t>> first_crossing(const std::vector<CorrelationRecord>& dynamics,
                                                        FeatureKind kind, double threshold);
std::vector<std::optional<std::size_t>> first_crossing(const OracleTrajectory& traj, FeatureKind kind,
                                                        double threshold);

}  // namespace patchlab
