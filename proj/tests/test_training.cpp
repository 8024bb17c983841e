#include "patchlab/training.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>

using namespace patchlab;

namespace {

struct Small {
    FeatureSet fs = build_feature_set(2, 20);
    DataConfig cfg;
    Dataset train, test;
    Network net;
    Small() {
        cfg.d = 20;
        cfg.jnr_count = 5;
        train = sample_dataset(cfg, fs, 12, 1);
        test = sample_dataset(cfg, fs, 20, 2);
        Rng rng(3);
        net = init_network(2, 4, 20, 0.05, Activation{}, rng);
    }
};

}  // namespace

TEST_CASE("standard step: fixed points and descent") {
    Small s;
    Network zero{WeightTensor(2, 4, 20), Activation{}};
    CHECK(standard_step(zero, s.train, 0.1) == zero);
    CHECK(standard_step(s.net, s.train, 0.0) == s.net);

    DataConfig cfg;
    const FeatureSet fs = build_feature_set(2, 100);
    const Dataset data = sample_dataset(cfg, fs, 100, 4);
    Rng rng(5);
    const Network net = init_network(2, 100, 100, 0.01, Activation{}, rng);
    const double before = dataset_ce(net, data);
    CHECK(dataset_ce(standard_step(net, data, 0.1), data) < before);
}

TEST_CASE("standard step equals w - eta * mean gradient") {
    Small s;
    const Gradients g = grad_weights_ce(s.net, s.train.examples);
    const Network next = standard_step(s.net, s.train, 0.3);
    for (std::size_t c = 0; c < g.values.size(); ++c)
        CHECK(next.weights.values[c] == doctest::Approx(s.net.weights.values[c] - 0.3 * g.values[c]).epsilon(1e-12));
}

TEST_CASE("adversarial step") {
    Small s;
    TrainConfig tc;
    tc.mode = TrainMode::Adversarial;

    Network zero{WeightTensor(2, 4, 20), Activation{}};
    const AdversarialStep z = adversarial_step(zero, s.train, tc);
    for (std::size_t i = 0; i < s.train.size(); ++i) CHECK(z.attacked[i] == s.train.examples[i].x);
    CHECK(z.net == standard_step(zero, s.train, tc.eta));

    const AdversarialStep a = adversarial_step(s.net, s.train, tc);
    REQUIRE(a.attacked.size() == s.train.size());
    for (std::size_t i = 0; i < s.train.size(); ++i) {
        CHECK(linf_distance(a.attacked[i], s.train.examples[i].x) <= tc.epsilon + 1e-12);
        CHECK(a.attacked[i] == one_step_attack(s.net, s.train.examples[i].x, s.train.examples[i].label,
                                               tc.eta_tilde, tc.epsilon));
    }
}

TEST_CASE("adversarial step against the non-robust rank-one net cancels v_y") {
    const FeatureSet fs = build_feature_set(2, 100);
    DataConfig cfg;
    const Dataset data = sample_dataset(cfg, fs, 10, 6);
    const Network net = make_rank_one_network(fs, 100.0, FeatureKind::NonRobust, Activation{});
    TrainConfig tc;
    tc.mode = TrainMode::Adversarial;
    const AdversarialStep a = adversarial_step(net, data, tc);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& ex = data.examples[i];
        const std::size_t c = fs.coord(FeatureKind::NonRobust, ex.label);
        for (std::size_t p = 0; p < ex.x.P; ++p)
            if (ex.roles[p].kind == FeatureKind::NonRobust)
                CHECK(a.attacked[i].patch(p)[c] == doctest::Approx(ex.x.patch(p)[c] - 1.2));
    }
}

TEST_CASE("train logs a well-formed, deterministic trace") {
    Small s;
    TrainConfig tc;
    tc.epochs = 12;
    tc.eval_every = 5;
    const TrainResult a = train(s.net, s.train, s.test, tc, s.fs);
    const TrainResult b = train(s.net, s.train, s.test, tc, s.fs);
    CHECK(a.net == b.net);
    CHECK(trace_to_csv(a.trace) == trace_to_csv(b.trace));
    CHECK(dynamics_to_csv(a.trace) == dynamics_to_csv(b.trace));

    std::vector<std::size_t> epochs;
    for (const auto& r : a.trace.records) {
        epochs.push_back(r.epoch);
        for (double acc : {r.std_acc, r.rob_acc, r.fl_acc_robust, r.fl_acc_nonrobust}) {
            CHECK(acc >= 0.0);
            CHECK(acc <= 1.0);
        }
    }
    CHECK(epochs == std::vector<std::size_t>{0, 5, 10, 12});
    CHECK(a.trace.dynamics.size() == 13);
    CHECK(a.trace.step_loss.size() == 12);
    CHECK(a.trace.pgd_steps == 20);
    CHECK(a.trace.pgd_step_size == doctest::Approx(0.3));
}

TEST_CASE("traces do not depend on the worker count") {
    Small s;
    TrainConfig tc;
    tc.epochs = 4;
    tc.eval_every = 2;
    tc.mode = TrainMode::Adversarial;
    ::setenv("PATCHLAB_THREADS", "1", 1);
    const TrainResult one = train(s.net, s.train, s.test, tc, s.fs);
    ::setenv("PATCHLAB_THREADS", "3", 1);
    const TrainResult three = train(s.net, s.train, s.test, tc, s.fs);
    ::unsetenv("PATCHLAB_THREADS");
    CHECK(one.net == three.net);
    CHECK(trace_to_csv(one.trace) == trace_to_csv(three.trace));
}

TEST_CASE("mini-batch option runs several updates per epoch") {
    Small s;
    TrainConfig full, mini;
    full.epochs = mini.epochs = 1;
    full.eval_every = mini.eval_every = 0;
    mini.batch_size = 4;
    const TrainResult a = train(s.net, s.train, s.test, full, s.fs);
    const TrainResult b = train(s.net, s.train, s.test, mini, s.fs);
    CHECK_FALSE(a.net == b.net);
}

TEST_CASE("divergence guard and config validation") {
    Small s;
    TrainConfig tc;
    tc.epochs = 2;
    tc.divergence_loss = 1e-3;
    CHECK_THROWS_AS(train(s.net, s.train, s.test, tc, s.fs), DivergenceError);

    TrainConfig bad;
    bad.eta = 0.0;
    CHECK_THROWS(bad.validate());
    bad = TrainConfig{};
    bad.mode = TrainMode::Adversarial;
    bad.epsilon = 0.0;
    CHECK_THROWS(bad.validate());
    bad = TrainConfig{};
    bad.attack_eval.steps = 0;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("trace csv round trip and column contract") {
    Small s;
    TrainConfig tc;
    tc.epochs = 3;
    tc.eval_every = 1;
    const TrainResult r = train(s.net, s.train, s.test, tc, s.fs);
    const std::string csv = trace_to_csv(r.trace);
    CHECK(csv.rfind("epoch,train_ce,std_acc,rob_acc,corr_u_1,corr_v_1,corr_u_2,corr_v_2,fl_acc_R,fl_acc_NR\n", 0) == 0);
    const TrainingTrace back = trace_from_csv(csv);
    CHECK(trace_to_csv(back) == csv);
    CHECK_THROWS(trace_from_csv(""));
    CHECK_THROWS(trace_from_csv("epoch,train_ce,std_acc,rob_acc,corr_u_1,corr_v_1,corr_u_2,corr_v_2,fl_acc_R\n"));
    CHECK(trace_to_json(r.trace).find("\"records\"") != std::string::npos);
}
