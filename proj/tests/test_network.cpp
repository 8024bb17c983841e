#include "patchlab/network.hpp"

#include <doctest.h>

#include <cmath>

using namespace patchlab;

TEST_CASE("smoothed relu values") {
    const Activation a;
    CHECK(srelu(a, -0.5) == 0.0);
    CHECK(srelu(a, 0.5) == doctest::Approx(0.125 / 3).epsilon(1e-12));
    CHECK(srelu(a, 2.0) == doctest::Approx(4.0 / 3).epsilon(1e-12));
    CHECK(srelu(a, 1.0) == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(srelu_prime(a, 0.5) == doctest::Approx(0.25));
    CHECK(srelu_prime(a, 2.0) == 1.0);
    CHECK(srelu_prime(a, -1.0) == 0.0);
}

TEST_CASE("smoothed relu is C1 at both knots for several q, rho") {
    for (int q : {2, 3, 4, 5})
        for (double rho : {0.3, 1.0, 2.5}) {
            const Activation a{q, rho};
            const double e = 1e-9;
            CHECK(srelu(a, 0.0) == 0.0);
            CHECK(srelu(a, rho - e) == doctest::Approx(srelu(a, rho + e)).epsilon(1e-7));
            CHECK(srelu(a, rho) == doctest::Approx(rho / q));
            CHECK(srelu_prime(a, rho - e) == doctest::Approx(1.0).epsilon(1e-7));
            CHECK(srelu_prime(a, rho + e) == 1.0);
            CHECK(srelu_prime(a, e) == doctest::Approx(0.0));
        }
}

TEST_CASE("activation validation") {
    CHECK_THROWS(Activation{1, 1.0}.validate());
    CHECK_THROWS(Activation{3, 0.0}.validate());
    CHECK_NOTHROW(Activation{3, 1.0}.validate());
}

TEST_CASE("softmax is normalised and stable") {
    const std::vector<double> s{1000.0, 999.0, -1e6};
    const auto p = softmax_logits(s);
    double sum = 0;
    for (double v : p) sum += v;
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    CHECK(p[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
    CHECK(log_sum_exp(s) == doctest::Approx(1000.0 + std::log1p(std::exp(-1.0))));
}

TEST_CASE("argmax ties go to the lowest index") {
    const std::vector<double> s{1.0, 3.0, 3.0};
    CHECK(argmax(s) == 1);
    const std::vector<double> z{0.0, 0.0};
    CHECK(argmax(z) == 0);
}

TEST_CASE("forward matches a direct sum") {
    Rng rng(3);
    const Network net = init_network(2, 3, 6, 0.5, Activation{}, rng);
    Patches x(4, 6);
    for (double& v : x.values) v = rng.normal();
    const auto F = forward(net, x);
    for (std::size_t i = 0; i < 2; ++i) {
        double f = 0;
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t p = 0; p < 4; ++p) {
                double z = 0;
                for (std::size_t j = 0; j < 6; ++j) z += net.weights.filter(i, r)[j] * x.patch(p)[j];
                f += srelu(net.act, z);
            }
        CHECK(F[i] == doctest::Approx(f).epsilon(1e-13));
        CHECK(class_score(net, x, i) == F[i]);
    }
}

TEST_CASE("losses") {
    Rng rng(5);
    const Network net = init_network(3, 2, 6, 0.8, Activation{}, rng);
    Patches x(3, 6);
    for (double& v : x.values) v = rng.normal();
    const auto F = forward(net, x);
    CHECK(ce_loss(net, x, 1) == doctest::Approx(log_sum_exp(F) - F[1]));
    CHECK(margin_loss(net, x, 2) == -F[2]);
}

TEST_CASE("zero network: uniform logits, zero gradients") {
    Network net{WeightTensor(2, 4, 8), Activation{}};
    Patches x(3, 8);
    for (std::size_t j = 0; j < x.values.size(); ++j) x.values[j] = static_cast<double>(j % 5) - 2.0;
    CHECK(ce_loss(net, x, 0) == doctest::Approx(std::log(2.0)));
    LabeledExample ex{x, 1, {}, {}};
    const Gradients g = grad_weights_ce(net, std::span<const LabeledExample>(&ex, 1));
    for (double v : g.values) CHECK(v == 0.0);
    for (double v : grad_input_margin(net, x, 0).values) CHECK(v == 0.0);
}

TEST_CASE("weight gradient matches central differences") {
    Rng rng(8);
    const Network net = init_network(2, 2, 5, 0.7, Activation{3, 0.8}, rng);
    std::vector<LabeledExample> batch;
    for (int b = 0; b < 3; ++b) {
        LabeledExample ex{Patches(3, 5), static_cast<std::size_t>(b % 2), {}, {}};
        for (double& v : ex.x.values) v = rng.normal();
        batch.push_back(ex);
    }
    const Gradients g = grad_weights_ce(net, batch);
    auto loss = [&](const Network& n) {
        double s = 0;
        for (const auto& ex : batch) s += ce_loss(n, ex.x, ex.label);
        return s / 3;
    };
    const double h = 1e-5;
    for (std::size_t c = 0; c < g.values.size(); ++c) {
        Network p = net, m = net;
        p.weights.values[c] += h;
        m.weights.values[c] -= h;
        CHECK(g.values[c] == doctest::Approx((loss(p) - loss(m)) / (2 * h)).epsilon(1e-6).scale(1e-3));
    }
}

TEST_CASE("input gradient of -F_y matches central differences") {
    Rng rng(9);
    const Network net = init_network(2, 3, 4, 0.9, Activation{}, rng);
    Patches x(2, 4);
    for (double& v : x.values) v = rng.normal();
    const Patches g = grad_input_margin(net, x, 1);
    const double h = 1e-5;
    for (std::size_t c = 0; c < x.values.size(); ++c) {
        Patches p = x, m = x;
        p.values[c] += h;
        m.values[c] -= h;
        CHECK(g.values[c] ==
              doctest::Approx((margin_loss(net, p, 1) - margin_loss(net, m, 1)) / (2 * h)).epsilon(1e-6).scale(1e-3));
    }
}

TEST_CASE("accumulate_ce_gradient scales and returns the loss") {
    Rng rng(10);
    const Network net = init_network(2, 2, 4, 0.5, Activation{}, rng);
    Patches x(2, 4);
    for (double& v : x.values) v = rng.normal();
    Gradients a(2, 2, 4), b(2, 2, 4);
    const double l = accumulate_ce_gradient(net, x, 0, 1.0, a);
    accumulate_ce_gradient(net, x, 0, 2.5, b);
    CHECK(l == doctest::Approx(ce_loss(net, x, 0)));
    for (std::size_t c = 0; c < a.values.size(); ++c) CHECK(b.values[c] == doctest::Approx(2.5 * a.values[c]));
}

TEST_CASE("init is seeded gaussian with the requested scale") {
    Rng r1(4), r2(4);
    const Network a = init_network(2, 100, 100, 0.01, Activation{}, r1);
    const Network b = init_network(2, 100, 100, 0.01, Activation{}, r2);
    CHECK(a == b);
    double s2 = 0;
    for (double v : a.weights.values) s2 += v * v;
    CHECK(std::sqrt(s2 / a.weights.values.size()) == doctest::Approx(0.01).epsilon(0.02));
    Rng r3(4);
    CHECK_THROWS(init_network(2, 2, 2, 0.0, Activation{}, r3));
}

TEST_CASE("rank-one networks") {
    const FeatureSet fs = build_feature_set(2, 10);
    const Network nr = make_rank_one_network(fs, 5.0, FeatureKind::NonRobust, Activation{});
    CHECK(nr.m() == 1);
    CHECK(nr.weights.filter(0, 0)[2] == 5.0);
    CHECK(nr.weights.filter(1, 0)[3] == 5.0);
    double sum = 0;
    for (double v : nr.weights.values) sum += v;
    CHECK(sum == 10.0);
}

TEST_CASE("network json round trip is exact") {
    Rng rng(12);
    const Network a = init_network(2, 3, 7, 0.3, Activation{4, 0.7}, rng);
    const Network b = network_from_json(network_to_json(a));
    CHECK(a == b);
    CHECK_THROWS(network_from_json("{\"k\": 2}"));
}
