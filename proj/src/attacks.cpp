#include "patchlab/attacks.hpp"

#include "patchlab/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace patchlab {

std::vector<double> clip_inf(std::span<const double> z, double rho) {
    if (rho < 0.0) throw std::invalid_argument("clip_inf: radius must be >= 0");
    std::vector<double> out(z.size());
    for (std::size_t j = 0; j < z.size(); ++j) out[j] = std::clamp(z[j], -rho, rho);
    return out;
}

Patches clip_inf(const Patches& z, double rho) {
    Patches out(z.P, z.d);
    out.values = clip_inf(std::span<const double>(z.values), rho);
    return out;
}

double linf_distance(const Patches& a, const Patches& b) {
    if (a.values.size() != b.values.size()) throw DimensionError("linf_distance: shape mismatch");
    double m = 0.0;
    for (std::size_t j = 0; j < a.values.size(); ++j) m = std::max(m, std::abs(a.values[j] - b.values[j]));
    return m;
}

namespace {

// F_cls(x) and, when grad is non-null, dF_cls/dx.
double score_with_input_grad(const Network& net, const Patches& x, std::size_t cls, Patches* grad) {
    double f = 0.0;
    for (std::size_t p = 0; p < x.P; ++p) {
        const auto xp = x.patch(p);
        for (std::size_t s = 0; s < net.m(); ++s) {
            const auto w = net.weights.filter(cls, s);
            const double z = dot(w, xp);
            f += srelu(net.act, z);
            if (grad == nullptr) continue;
            const double c = srelu_prime(net.act, z);
            if (c == 0.0) continue;
            auto gp = grad->patch(p);
            for (std::size_t j = 0; j < x.d; ++j) gp[j] += c * w[j];
        }
    }
    return f;
}

// Objective value and its input gradient.
double objective_with_grad(const Network& net, const Patches& x, std::size_t y, MarginObjective objective,
                           Patches* grad) {
    if (grad) *grad = Patches(x.P, x.d);
    if (objective == MarginObjective::NegativeScore) {
        const double f = score_with_input_grad(net, x, y, grad);
        if (grad)
            for (double& v : grad->values) v = -v;
        return -f;
    }
    const auto scores = forward(net, x);
    std::size_t rival = y == 0 ? 1 : 0;
    for (std::size_t j = 0; j < scores.size(); ++j)
        if (j != y && scores[j] > scores[rival]) rival = j;
    if (grad) {
        Patches gy(x.P, x.d), gr(x.P, x.d);
        score_with_input_grad(net, x, y, &gy);
        score_with_input_grad(net, x, rival, &gr);
        for (std::size_t j = 0; j < grad->values.size(); ++j) grad->values[j] = gr.values[j] - gy.values[j];
    }
    return scores[rival] - scores[y];
}

}  // namespace

double attack_objective(const Network& net, const Patches& x, std::size_t y, MarginObjective objective) {
    if (y >= net.k()) throw std::out_of_range("attack_objective: label out of range");
    if (objective == MarginObjective::Carlini && net.k() < 2)
        throw std::invalid_argument("attack_objective: Carlini objective needs k >= 2");
    return objective_with_grad(net, x, y, objective, nullptr);
}

Patches one_step_attack(const Network& net, const Patches& x, std::size_t y, double eta_tilde, double eps) {
    if (eps < 0.0) throw std::invalid_argument("one_step_attack: eps must be >= 0");
    Patches g = grad_input_margin(net, x, y);
    Patches out = x;
    for (std::size_t j = 0; j < x.values.size(); ++j)
        out.values[j] = x.values[j] + std::clamp(eta_tilde * g.values[j], -eps, eps);
    return out;
}

Patches pgd_attack(const Network& net, const Patches& x, std::size_t y, double eps, std::size_t steps,
                   double step_size, MarginObjective objective) {
    if (steps == 0) throw std::invalid_argument("pgd_attack: steps must be >= 1");
    if (eps < 0.0) throw std::invalid_argument("pgd_attack: eps must be >= 0");
    if (y >= net.k()) throw std::out_of_range("pgd_attack: label out of range");
    if (x.d != net.d()) throw DimensionError("pgd_attack: patch dimension mismatch");

    Patches cur = x;
    Patches best = x;
    Patches grad;
    double best_obj = -INFINITY;
    for (std::size_t t = 0; t <= steps; ++t) {
        const bool last = t == steps;
        const double obj = objective_with_grad(net, cur, y, objective, last ? nullptr : &grad);
        if (obj > best_obj) {
            best_obj = obj;
            best = cur;
        }
        if (last) break;
        for (std::size_t j = 0; j < cur.values.size(); ++j) {
            const double g = grad.values[j];
            const double sgn = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
            const double moved = cur.values[j] + step_size * sgn - x.values[j];
            cur.values[j] = x.values[j] + std::clamp(moved, -eps, eps);
        }
    }
    return best;
}

FeatureSwap feature_swap_perturbation(const LabeledExample& ex, const FeatureSet& fs, double eps, Rng& rng) {
    if (fs.k < 2) throw std::invalid_argument("feature_swap_perturbation: needs k >= 2");
    if (!ex.has_metadata()) throw MetadataError("feature_swap_perturbation: example carries no role metadata");
    if (ex.x.d != fs.d) throw DimensionError("feature_swap_perturbation: dimension mismatch");
    FeatureSwap out;
    std::size_t target = static_cast<std::size_t>(rng.below(fs.k - 1));
    if (target >= ex.label) ++target;
    out.target = target;
    out.delta = Patches(ex.x.P, ex.x.d);
    const std::size_t from = fs.coord(FeatureKind::NonRobust, ex.label);
    const std::size_t to = fs.coord(FeatureKind::NonRobust, target);
    for (std::size_t p = 0; p < ex.x.P; ++p) {
        if (ex.roles[p].kind != FeatureKind::NonRobust) continue;
        auto dp = out.delta.patch(p);
        dp[from] = -ex.roles[p].coeff;
        dp[to] = eps;
    }
    for (double v : out.delta.values) out.linf = std::max(out.linf, std::abs(v));
    out.within_radius = out.linf <= eps;
    return out;
}

void AttackSpec::validate() const {
    if (!(epsilon >= 0.0)) throw std::invalid_argument("AttackSpec: epsilon must be >= 0");
    if (kind == Kind::PGD && steps == 0) throw std::invalid_argument("AttackSpec: PGD needs steps >= 1");
}

namespace {

struct Outcome {
    std::size_t prediction = 0;
    std::size_t target = 0;
    double perturbation = 0.0;
    bool radius_ok = true;
};

EvalReport tally(const Dataset& data, const std::vector<Outcome>& outcomes, bool count_targets) {
    EvalReport rep;
    rep.n = data.size();
    rep.class_counts.assign(data.k, 0);
    std::vector<std::size_t> class_correct(data.k, 0);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const std::size_t y = data.examples[i].label;
        const auto& o = outcomes[i];
        ++rep.class_counts[y];
        if (o.prediction == y) {
            ++rep.correct;
            ++class_correct[y];
        }
        if (count_targets && o.prediction == o.target) ++hits;
        rep.radius_ok = rep.radius_ok && o.radius_ok;
        rep.max_perturbation = std::max(rep.max_perturbation, o.perturbation);
    }
    rep.accuracy = static_cast<double>(rep.correct) / static_cast<double>(rep.n);
    rep.per_class.resize(data.k);
    for (std::size_t c = 0; c < data.k; ++c)
        rep.per_class[c] = rep.class_counts[c] ? static_cast<double>(class_correct[c]) / rep.class_counts[c] : 0.0;
    if (count_targets) rep.target_rate = static_cast<double>(hits) / static_cast<double>(rep.n);
    return rep;
}

}  // namespace

EvalReport evaluate(const Network& net, const Dataset& data, const AttackSpec& spec) {
    if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
    spec.validate();
    if (data.d != net.d() || data.k != net.k()) throw DimensionError("evaluate: dataset does not match network");
    const FeatureSet fs = spec.kind == AttackSpec::Kind::FeatureSwap ? build_feature_set(data.k, data.d) : FeatureSet{};
    const Rng swap_base(spec.swap_seed);
    constexpr double slack = 1e-12;

    std::vector<Outcome> outcomes(data.size());
    parallel_for(data.size(), [&](std::size_t i) {
        const auto& ex = data.examples[i];
        Outcome& o = outcomes[i];
        switch (spec.kind) {
            case AttackSpec::Kind::None:
                o.prediction = predict(net, ex.x);
                break;
            case AttackSpec::Kind::OneStep: {
                const Patches adv = one_step_attack(net, ex.x, ex.label, spec.eta_tilde, spec.epsilon);
                o.perturbation = linf_distance(adv, ex.x);
                o.radius_ok = o.perturbation <= spec.epsilon + slack;
                o.prediction = predict(net, adv);
                break;
            }
            case AttackSpec::Kind::PGD: {
                const Patches adv =
                    pgd_attack(net, ex.x, ex.label, spec.epsilon, spec.steps, spec.step_size, spec.objective);
                o.perturbation = linf_distance(adv, ex.x);
                o.radius_ok = o.perturbation <= spec.epsilon + slack;
                o.prediction = predict(net, adv);
                break;
            }
            case AttackSpec::Kind::FeatureSwap: {
                Rng rng = swap_base.split(i);
                const FeatureSwap swap = feature_swap_perturbation(ex, fs, spec.epsilon, rng);
                Patches adv = ex.x;
                for (std::size_t j = 0; j < adv.values.size(); ++j) adv.values[j] += swap.delta.values[j];
                o.perturbation = swap.linf;
                o.radius_ok = swap.within_radius;
                o.target = swap.target;
                o.prediction = predict(net, adv);
                break;
            }
        }
    });
    return tally(data, outcomes, spec.kind == AttackSpec::Kind::FeatureSwap);
}

EvalReport feature_learning_accuracy(const Network& net, const Dataset& data, const FeatureSet& fs,
                                     FeatureKind keep) {
    Dataset rep = data;
    for (auto& ex : rep.examples) ex = make_representative(ex, fs, keep);
    return evaluate(net, rep, AttackSpec::none());
}

std::string eval_report_to_json(const EvalReport& rep) {
    nlohmann::json j;
    j["n"] = rep.n;
    j["accuracy"] = rep.accuracy;
    j["per_class"] = rep.per_class;
    j["class_counts"] = rep.class_counts;
    j["target_rate"] = rep.target_rate;
    j["radius_ok"] = rep.radius_ok;
    j["max_perturbation"] = rep.max_perturbation;
    return j.dump();
}

}  // namespace patchlab
