#pragma once

#include "patchlab/features_data.hpp"
#include "patchlab/network.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace patchlab {

/// Coordinatewise clamp to [-rho, rho] over the flattened patches.
std::vector<double> clip_inf(std::span<const double> z, double rho);
Patches clip_inf(const Patches& z, double rho);

double linf_distance(const Patches& a, const Patches& b);

// Objective maximised by the input attacks.
enum class MarginObjective {
    NegativeScore,  // -F_y
    Carlini,        // -(F_y - max_{j != y} F_j); exposed but not used by default
};

double attack_objective(const Network& net, const Patches& x, std::size_t y, MarginObjective objective);

/// X + clip(eta_tilde * grad_X L_margin, eps).
Patches one_step_attack(const Network& net, const Patches& x, std::size_t y, double eta_tilde, double eps);

/// Signed-gradient ascent on the margin objective projected onto the
/// l_inf ball around x. Returns the iterate with the largest objective.
Patches pgd_attack(const Network& net, const Patches& x, std::size_t y, double eps, std::size_t steps,
                   double step_size, MarginObjective objective = MarginObjective::NegativeScore);

struct FeatureSwap {
    Patches delta;
    std::size_t target = 0;  // y'
    double linf = 0.0;
    bool within_radius = true;
};

/// Model-free perturbation: on every non-robust patch remove beta_p v_y and
/// add eps v_{y'}, with y' drawn uniformly from the other classes.
FeatureSwap feature_swap_perturbation(const LabeledExample& ex, const FeatureSet& fs, double eps, Rng& rng);

struct AttackSpec {
    enum class Kind { None, OneStep, PGD, FeatureSwap };
    Kind kind = Kind::None;
    double epsilon = 0.0;
    double eta_tilde = 0.0;    // OneStep
    std::size_t steps = 20;    // PGD
    double step_size = 0.0;    // PGD
    MarginObjective objective = MarginObjective::NegativeScore;
    std::uint64_t swap_seed = 0;  // FeatureSwap: y' for example i comes from Rng(swap_seed).split(i)

    static AttackSpec none() { return {}; }
    static AttackSpec one_step(double eps, double eta_tilde) {
        AttackSpec s;
        s.kind = Kind::OneStep;
        s.epsilon = eps;
        s.eta_tilde = eta_tilde;
        return s;
    }
    static AttackSpec pgd(double eps, std::size_t steps, double step_size) {
        AttackSpec s;
        s.kind = Kind::PGD;
        s.epsilon = eps;
        s.steps = steps;
        s.step_size = step_size;
        return s;
    }
    static AttackSpec feature_swap(double eps, std::uint64_t seed) {
        AttackSpec s;
        s.kind = Kind::FeatureSwap;
        s.epsilon = eps;
        s.swap_seed = seed;
        return s;
    }
    void validate() const;
};

struct EvalReport {
    std::size_t n = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;
    std::vector<std::size_t> class_counts;
    std::vector<double> per_class;  // accuracy within each true class
    // FeatureSwap only: fraction predicted as the drawn y', and whether every
    // perturbation respected the radius.
    double target_rate = 0.0;
    bool radius_ok = true;
    double max_perturbation = 0.0;
};

EvalReport evaluate(const Network& net, const Dataset& data, const AttackSpec& spec);

/// Clean accuracy on representatives that keep only `keep` features.
EvalReport feature_learning_accuracy(const Network& net, const Dataset& data, const FeatureSet& fs,
                                     FeatureKind keep);

std::string eval_report_to_json(const EvalReport& rep);

}  // namespace patchlab
