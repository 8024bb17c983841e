#include "patchlab/diagnostics.hpp"

#include <doctest.h>

#include <cmath>

using namespace patchlab;

namespace {

Dataset noiseless(std::size_t n, std::uint64_t seed) {
    DataConfig cfg;
    cfg.sigma_n = 0.0;
    return sample_dataset(cfg, build_feature_set(2, 100), n, seed);
}

OracleConfig six_one(const Dataset& data, std::size_t m) {
    OracleConfig oc;
    oc.m = m;
    oc.class_weights = class_weights_of(data);
    return oc;
}

}  // namespace

TEST_CASE("decompose: feature combination and off-feature filters") {
    const FeatureSet fs = build_feature_set(2, 10);
    Network net{WeightTensor(2, 2, 10), Activation{}};
    auto w = net.weights.filter(0, 0);
    w[fs.coord(FeatureKind::Robust, 0)] = 0.7;
    w[fs.coord(FeatureKind::NonRobust, 0)] = 0.2;
    auto w2 = net.weights.filter(1, 1);
    w2[7] = 3.0;
    w2[9] = 4.0;
    const WeightDecomposition dec = decompose(net, fs);
    CHECK(dec.a(0, 0) == 0.7);
    CHECK(dec.b(0, 0) == 0.2);
    CHECK(dec.c(0, 0, 1) == 0.0);
    CHECK(dec.dd(0, 0, 1) == 0.0);
    CHECK(dec.residual_norms[0] == 0.0);
    CHECK(dec.a(1, 1) == 0.0);
    CHECK(dec.b(1, 1) == 0.0);
    CHECK(dec.residual_norms[1 * 2 + 1] == doctest::Approx(5.0));
}

TEST_CASE("decompose then reconstruct is the identity") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);
        const std::size_t k = 2 + rng.below(3);
        const FeatureSet fs = build_feature_set(k, 2 * k + rng.below(10));
        const Network net = init_network(k, 1 + rng.below(5), fs.d, rng.uniform(0.01, 5.0), Activation{}, rng);
        const WeightTensor back = reconstruct(decompose(net, fs), fs);
        for (std::size_t c = 0; c < back.values.size(); ++c)
            CHECK(std::abs(back.values[c] - net.weights.values[c]) <= 1e-10);
    }
}

TEST_CASE("noiseless training leaves the off-feature component untouched") {
    const Dataset data = noiseless(40, 1);
    const FeatureSet fs = build_feature_set(2, 100);
    Rng rng(2);
    const Network init = init_network(2, 20, 100, 0.05, Activation{}, rng);
    Network net = init;
    for (int t = 0; t < 30; ++t) net = standard_step(net, data, 0.1);
    const WeightDecomposition d0 = decompose(init, fs), d1 = decompose(net, fs);
    for (std::size_t c = 0; c < d0.residual.values.size(); ++c)
        CHECK(std::abs(d1.residual.values[c] - d0.residual.values[c]) <= 1e-8);
    for (std::size_t c = 0; c < d0.residual_norms.size(); ++c)
        CHECK(std::abs(d1.residual_norms[c] - d0.residual_norms[c]) <= 1e-8);
}

TEST_CASE("non-diagonal correlations never increase on noiseless standard runs") {
    const Dataset data = noiseless(50, 3);
    const FeatureSet fs = build_feature_set(2, 100);
    Rng rng(4);
    Network net = init_network(2, 30, 100, 0.05, Activation{}, rng);
    WeightDecomposition prev = decompose(net, fs);
    for (int t = 0; t < 60; ++t) {
        net = standard_step(net, data, 0.1);
        const WeightDecomposition cur = decompose(net, fs);
        for (std::size_t c = 0; c < cur.C.size(); ++c) {
            CHECK(cur.C[c] <= prev.C[c] + 1e-9);
            CHECK(cur.D[c] <= prev.D[c] + 1e-9);
        }
        prev = cur;
    }
}

TEST_CASE("standard oracle: fixed point and uniform logits at zero") {
    OracleConfig oc;
    oc.m = 3;
    const OracleState z = OracleState::zeros(oc, TrainMode::Standard);
    CHECK(oracle_step_standard(z).coef == z.coef);
    for (double l : oracle_logits(z, 0)) CHECK(l == 0.5);
    CHECK_THROWS(oracle_step_adversarial(z));
}

TEST_CASE("standard oracle, one step, k=2 m=1 A=0.01, against the simulator") {
    const Dataset data = noiseless(64, 5);
    const FeatureSet fs = build_feature_set(2, 100);
    Network net{WeightTensor(2, 1, 100), Activation{}};
    for (std::size_t i = 0; i < 2; ++i) net.weights.filter(i, 0)[fs.coord(FeatureKind::Robust, i)] = 0.01;

    const OracleState s0 = oracle_state_from_network(net, fs, six_one(data, 1), TrainMode::Standard);
    const OracleState s1 = oracle_step_standard(s0);
    const Network n1 = standard_step(net, data, 0.1);
    const WeightDecomposition d = decompose(n1, fs);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(std::abs(d.a(i, 0) - s1.A(i, 0)) <= 1e-12);
        // hand-evaluated: (eta * pi_i) (1 - 1/2) srelu'(0.02) * 2, both logits 1/2
        const double pi = s0.config.class_weight(i);
        CHECK(s1.A(i, 0) - 0.01 == doctest::Approx(0.1 * pi * 0.5 * 0.02 * 0.02 * 2.0).epsilon(1e-9));
    }
    CHECK(coefficient_divergence(d, s1) <= 1e-12);
}

TEST_CASE("adversarial oracle: zero state and saturation bookkeeping") {
    OracleConfig oc;
    oc.m = 2;
    const OracleState z = OracleState::zeros(oc, TrainMode::Adversarial);
    AdversarialCoefficients info;
    CHECK(oracle_step_adversarial(z, &info).coef == z.coef);
    CHECK(info.alpha_tilde[0] == 2.0);
    CHECK(info.beta_tilde[0] == 1.0);

    OracleState s = z;
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t r = 0; r < 2; ++r) {
            s.u(i, r, i) = 0.05;
            s.v(i, r, i) = 0.5;
        }
    oracle_step_adversarial(s, &info);
    for (std::size_t y = 0; y < 2; ++y) {
        // eta_tilde * sum_s srelu'(B_s) B_s = 1000 * 2 * 0.25 * 0.5 >> 1.2
        CHECK(info.nonrobust_saturated[y]);
        CHECK(info.beta_tilde[y] == doctest::Approx(1.0 - 1.2));
        // the robust clause never takes more than eps/alpha of alpha
        CHECK(info.alpha_tilde[y] >= 2.0 * (1.0 - 0.6) - 1e-12);
    }
}

TEST_CASE("adversarial saturation persists while B does not decrease") {
    OracleConfig oc;
    oc.m = 5;
    OracleState s = OracleState::zeros(oc, TrainMode::Adversarial);
    Rng rng(6);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t r = 0; r < 5; ++r) {
            s.u(i, r, i) = 0.02 + 0.01 * rng.uniform();
            s.v(i, r, i) = 0.3 + 0.1 * rng.uniform();
        }
    bool saturated = false;
    for (int t = 0; t < 200; ++t) {
        AdversarialCoefficients info;
        const OracleState next = oracle_step_adversarial(s, &info);
        for (std::size_t y = 0; y < 2; ++y) {
            const bool b_up = next.max_B(y) >= s.max_B(y);
            if (saturated && b_up) CHECK(info.nonrobust_saturated[y]);
            if (info.nonrobust_saturated[y]) {
                // beta - eps < 0: the attacked non-robust patches no longer
                // activate the class-y filters, so B cannot grow from them
                CHECK(info.beta_tilde[y] < 0.0);
                for (std::size_t r = 0; r < 5; ++r) CHECK(next.B(y, r) - s.B(y, r) <= 1e-12);
            }
        }
        saturated = info.nonrobust_saturated[0] && info.nonrobust_saturated[1];
        s = next;
    }
}

TEST_CASE("oracle runs mirror the two regimes") {
    const Dataset data = noiseless(100, 7);
    const FeatureSet fs = build_feature_set(2, 100);
    Rng rng(8);
    const Network init = init_network(2, 100, 100, 0.01, Activation{}, rng);
    OracleConfig oc = six_one(data, 100);

    const OracleTrajectory none = run_oracle(oracle_state_from_network(init, fs, oc, TrainMode::Standard), 0);
    CHECK(none.records.size() == 1);
    CHECK(none.records[0].t == 0);

    const OracleTrajectory st = run_oracle(oracle_state_from_network(init, fs, oc, TrainMode::Standard), 600);
    const auto bv = first_crossing(st, FeatureKind::NonRobust, 1.0);
    const auto au = first_crossing(st, FeatureKind::Robust, 0.5);
    for (std::size_t i = 0; i < 2; ++i) {
        REQUIRE(bv[i].has_value());
        CHECK((!au[i] || *bv[i] < *au[i]));
    }

    oc.eta_tilde = 10.0;
    const OracleTrajectory adv = run_oracle(oracle_state_from_network(init, fs, oc, TrainMode::Adversarial), 1500);
    for (std::size_t i = 0; i < 2; ++i) {
        const auto& last = adv.records.back();
        CHECK(last.max_A[i] > last.max_B[i]);
        // plateau: B moves little over the last third
        CHECK(std::abs(last.max_B[i] - adv.records[1000].max_B[i]) < 0.1);
    }
    CHECK(trajectory_to_csv(adv).rfind("epoch,maxA_1,maxB_1,maxA_2,maxB_2\n", 0) == 0);
}

TEST_CASE("tensor power sequences") {
    for (double S : {1.0, 2.0, 4.0}) {
        const double y0 = 0.01, x0 = 1.1 * y0 * S;
        const TensorPowerReport r = tensor_power_check(x0, y0, S, [](std::size_t) { return 1.0; }, 1e-4, 3, 1.0);
        CHECK(r.hypothesis_ok);
        CHECK(r.converged);
        CHECK(r.x_first);
        CHECK(r.ratio <= 100.0);
    }
    const TensorPowerReport bad = tensor_power_check(0.01, 0.01, 4.0, [](std::size_t) { return 1.0; }, 1e-4, 3, 1.0);
    CHECK_FALSE(bad.hypothesis_ok);
    CHECK_FALSE(bad.x_first);
    const TensorPowerReport still =
        tensor_power_check(0.1, 0.05, 1.0, [](std::size_t) { return 1.0; }, 0.0, 3, 1.0, 1000);
    CHECK_FALSE(still.converged);
    CHECK(still.x_final == 0.1);
    CHECK(still.ratio == 1.0);
    CHECK_THROWS(tensor_power_check(0.0, 1.0, 1.0, [](std::size_t) { return 1.0; }, 1e-4, 3, 1.0));
    CHECK_THROWS(tensor_power_check(1.0, 1.0, 1.0, [](std::size_t) { return 1.0; }, 1e-4, 2, 1.0));
}

TEST_CASE("compare_trace against itself and on a mismatched grid") {
    const Dataset data = noiseless(20, 9);
    const FeatureSet fs = build_feature_set(2, 100);
    Rng rng(10);
    const Network init = project_onto_features(init_network(2, 5, 100, 0.05, Activation{}, rng), fs);
    const OracleTrajectory traj =
        run_oracle(oracle_state_from_network(init, fs, six_one(data, 5), TrainMode::Standard), 10);

    TrainingTrace self;
    self.k = 2;
    for (const auto& r : traj.records) self.dynamics.push_back({r.t, r.max_A, r.max_B});
    const DivergenceReport rep = compare_trace(self, traj);
    CHECK(rep.max_divergence == 0.0);
    CHECK(rep.epochs.size() == 11);
    CHECK(divergence_to_csv(rep).rfind("epoch,diff_maxA,diff_maxB\n", 0) == 0);

    TrainingTrace shifted = self;
    shifted.dynamics.back().epoch = 42;
    CHECK_THROWS(compare_trace(shifted, traj));
}

TEST_CASE("projection removes exactly the residual") {
    const FeatureSet fs = build_feature_set(2, 30);
    Rng rng(11);
    const Network net = init_network(2, 4, 30, 0.5, Activation{}, rng);
    const Network p = project_onto_features(net, fs);
    const WeightDecomposition a = decompose(net, fs), b = decompose(p, fs);
    CHECK(a.A == b.A);
    CHECK(a.B == b.B);
    CHECK(a.C == b.C);
    CHECK(a.D == b.D);
    for (double v : b.residual_norms) CHECK(v == 0.0);
}
