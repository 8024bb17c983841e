#include "patchlab/network.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace patchlab {

using nlohmann::json;

namespace {

double ipow(double z, int q) {
    double r = 1.0;
    for (int i = 0; i < q; ++i) r *= z;
    return r;
}

void check_input(const Network& net, const Patches& x) {
    if (x.d != net.d()) throw DimensionError("network: patch dimension does not match filters");
}

void check_label(const Network& net, std::size_t y) {
    if (y >= net.k()) throw std::out_of_range("network: label out of range");
}

}  // namespace

void Activation::validate() const {
    if (q < 2) throw std::invalid_argument("Activation: q must be >= 2");
    if (!(rho > 0.0) || !std::isfinite(rho)) throw std::invalid_argument("Activation: rho must be positive");
}

double srelu(const Activation& act, double z) {
    if (z <= 0.0) return 0.0;
    if (z <= act.rho) return ipow(z, act.q) / (act.q * ipow(act.rho, act.q - 1));
    return z - (1.0 - 1.0 / act.q) * act.rho;
}

double srelu_prime(const Activation& act, double z) {
    if (z <= 0.0) return 0.0;
    if (z <= act.rho) return ipow(z / act.rho, act.q - 1);
    return 1.0;
}

bool Network::all_finite() const {
    return std::all_of(weights.values.begin(), weights.values.end(), [](double v) { return std::isfinite(v); });
}

double dot(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

double class_score(const Network& net, const Patches& x, std::size_t cls) {
    check_input(net, x);
    double f = 0.0;
    for (std::size_t r = 0; r < net.m(); ++r) {
        const auto w = net.weights.filter(cls, r);
        for (std::size_t p = 0; p < x.P; ++p) f += srelu(net.act, dot(w, x.patch(p)));
    }
    return f;
}

std::vector<double> forward(const Network& net, const Patches& x) {
    check_input(net, x);
    std::vector<double> scores(net.k());
    for (std::size_t i = 0; i < net.k(); ++i) scores[i] = class_score(net, x, i);
    return scores;
}

std::vector<double> softmax_logits(std::span<const double> scores) {
    std::vector<double> out(scores.size());
    if (scores.empty()) return out;
    const double mx = *std::max_element(scores.begin(), scores.end());
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - mx);
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

double log_sum_exp(std::span<const double> scores) {
    const double mx = *std::max_element(scores.begin(), scores.end());
    double total = 0.0;
    for (double s : scores) total += std::exp(s - mx);
    return mx + std::log(total);
}

std::size_t argmax(std::span<const double> scores) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
        if (scores[i] > scores[best]) best = i;
    return best;
}

std::size_t predict(const Network& net, const Patches& x) {
    const auto f = forward(net, x);
    return argmax(f);
}

double ce_loss(const Network& net, const Patches& x, std::size_t y) {
    check_label(net, y);
    const auto f = forward(net, x);
    return log_sum_exp(f) - f[y];
}

double margin_loss(const Network& net, const Patches& x, std::size_t y) {
    check_label(net, y);
    return -class_score(net, x, y);
}

double accumulate_ce_gradient(const Network& net, const Patches& x, std::size_t y, double scale,
                              Gradients& out) {
    check_input(net, x);
    check_label(net, y);
    if (!out.same_shape(net.weights)) throw DimensionError("accumulate_ce_gradient: gradient shape mismatch");
    const std::size_t k = net.k(), m = net.m(), P = x.P, d = x.d;

    // Pre-activations for every (class, filter, patch).
    std::vector<double> z(k * m * P);
    std::vector<double> scores(k, 0.0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t r = 0; r < m; ++r) {
            const auto w = net.weights.filter(i, r);
            for (std::size_t p = 0; p < P; ++p) {
                const double zz = dot(w, x.patch(p));
                z[(i * m + r) * P + p] = zz;
                scores[i] += srelu(net.act, zz);
            }
        }
    const auto logits = softmax_logits(scores);
    const double loss = log_sum_exp(scores) - scores[y];

    for (std::size_t i = 0; i < k; ++i) {
        // dL/dF_i = logit_i - 1{y=i}
        const double dscore = (logits[i] - (i == y ? 1.0 : 0.0)) * scale;
        if (dscore == 0.0) continue;
        for (std::size_t r = 0; r < m; ++r) {
            auto g = out.filter(i, r);
            for (std::size_t p = 0; p < P; ++p) {
                const double s = srelu_prime(net.act, z[(i * m + r) * P + p]);
                if (s == 0.0) continue;
                const double c = dscore * s;
                const auto xp = x.patch(p);
                for (std::size_t j = 0; j < d; ++j) g[j] += c * xp[j];
            }
        }
    }
    return loss;
}

Gradients grad_weights_ce(const Network& net, std::span<const LabeledExample> batch) {
    if (batch.empty()) throw std::invalid_argument("grad_weights_ce: empty batch");
    Gradients g(net.k(), net.m(), net.d());
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (const auto& ex : batch) accumulate_ce_gradient(net, ex.x, ex.label, scale, g);
    return g;
}

Patches grad_input_margin(const Network& net, const Patches& x, std::size_t y) {
    check_input(net, x);
    check_label(net, y);
    Patches g(x.P, x.d);
    for (std::size_t p = 0; p < x.P; ++p) {
        auto gp = g.patch(p);
        const auto xp = x.patch(p);
        for (std::size_t s = 0; s < net.m(); ++s) {
            const auto w = net.weights.filter(y, s);
            const double c = srelu_prime(net.act, dot(w, xp));
            if (c == 0.0) continue;
            for (std::size_t j = 0; j < x.d; ++j) gp[j] -= c * w[j];
        }
    }
    return g;
}

Network init_network(std::size_t k, std::size_t m, std::size_t d, double sigma0, const Activation& act,
                     Rng& rng) {
    if (!(sigma0 > 0.0)) throw std::invalid_argument("init_network: sigma0 must be positive");
    act.validate();
    Network net{WeightTensor(k, m, d), act};
    for (double& v : net.weights.values) v = sigma0 * rng.normal();
    return net;
}

Network make_rank_one_network(const FeatureSet& fs, double gamma, FeatureKind kind, const Activation& act) {
    act.validate();
    Network net{WeightTensor(fs.k, 1, fs.d), act};
    for (std::size_t i = 0; i < fs.k; ++i) net.weights.filter(i, 0)[fs.coord(kind, i)] = gamma;
    return net;
}

std::string network_to_json(const Network& net) {
    json j;
    j["k"] = net.k();
    j["m"] = net.m();
    j["d"] = net.d();
    j["q"] = net.act.q;
    j["rho"] = net.act.rho;
    j["weights"] = net.weights.values;
    return j.dump();
}

Network network_from_json(const std::string& text) {
    const json j = json::parse(text);
    Network net;
    net.weights = WeightTensor(j.at("k").get<std::size_t>(), j.at("m").get<std::size_t>(),
                               j.at("d").get<std::size_t>());
    net.act.q = j.at("q").get<int>();
    net.act.rho = j.at("rho").get<double>();
    net.act.validate();
    auto w = j.at("weights").get<std::vector<double>>();
    if (w.size() != net.weights.values.size()) throw DimensionError("checkpoint: weight count mismatch");
    net.weights.values = std::move(w);
    return net;
}

}  // namespace patchlab
