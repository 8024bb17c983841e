#include "patchlab/features_data.hpp"

#include <doctest.h>

#include <cmath>

using namespace patchlab;

TEST_CASE("feature set is the first 2k coordinate axes") {
    const FeatureSet fs = build_feature_set(2, 100);
    CHECK(fs.robust.size() == 2);
    CHECK(fs.nonrobust.size() == 2);
    for (std::size_t j = 0; j < 2; ++j) {
        CHECK(fs.coord(FeatureKind::Robust, j) == j);
        CHECK(fs.coord(FeatureKind::NonRobust, j) == 2 + j);
        CHECK(fs.robust[j][j] == 1.0);
        CHECK(fs.nonrobust[j][2 + j] == 1.0);
    }
    // orthonormal, one nonzero coordinate each
    std::vector<std::vector<double>> all = fs.robust;
    all.insert(all.end(), fs.nonrobust.begin(), fs.nonrobust.end());
    for (std::size_t a = 0; a < all.size(); ++a) {
        int nz = 0;
        for (double v : all[a]) nz += v != 0.0;
        CHECK(nz == 1);
        for (std::size_t b = 0; b < all.size(); ++b) {
            double s = 0;
            for (std::size_t c = 0; c < 100; ++c) s += all[a][c] * all[b][c];
            CHECK(s == (a == b ? 1.0 : 0.0));
        }
    }
}

TEST_CASE("feature set rejects d < 2k") {
    CHECK_THROWS_AS(build_feature_set(3, 5), DimensionError);
    CHECK_NOTHROW(build_feature_set(3, 6));
}

TEST_CASE("patches are coefficient * feature + stored noise, exactly") {
    DataConfig cfg;
    const FeatureSet fs = build_feature_set(cfg.k, cfg.d);
    const Dataset data = sample_dataset(cfg, fs, 50, 7);
    for (const auto& ex : data.examples) {
        REQUIRE(ex.has_metadata());
        CHECK(ex.label < cfg.k);
        std::size_t nr = 0, r = 0;
        for (std::size_t p = 0; p < ex.x.P; ++p) {
            const auto& role = ex.roles[p];
            (role.kind == FeatureKind::Robust ? r : nr)++;
            CHECK(role.coeff == (role.kind == FeatureKind::Robust ? 2.0 : 1.0));
            const std::size_t c = fs.coord(role.kind, ex.label);
            for (std::size_t j = 0; j < cfg.d; ++j) {
                const double signal = j == c ? role.coeff : 0.0;
                CHECK(ex.x.patch(p)[j] == signal + ex.noise.patch(p)[j]);
            }
        }
        CHECK(r == 1);
        CHECK(nr == 15);
    }
}

TEST_CASE("sigma_n = 0 gives noise-free patches") {
    DataConfig cfg;
    cfg.sigma_n = 0.0;
    const FeatureSet fs = build_feature_set(2, 100);
    const Dataset data = sample_dataset(cfg, fs, 10, 3);
    for (const auto& ex : data.examples)
        for (double v : ex.noise.values) CHECK(v == 0.0);
}

TEST_CASE("datasets are bit-reproducible from the seed") {
    DataConfig cfg;
    cfg.alpha = CoefficientDist::uniform(1.5, 2.5);
    const FeatureSet fs = build_feature_set(2, 100);
    const Dataset a = sample_dataset(cfg, fs, 30, 11);
    const Dataset b = sample_dataset(cfg, fs, 30, 11);
    const Dataset c = sample_dataset(cfg, fs, 30, 12);
    CHECK(a.examples == b.examples);
    CHECK_FALSE(a.examples == c.examples);
    // a prefix does not depend on n
    const Dataset p = sample_dataset(cfg, fs, 5, 11);
    for (std::size_t i = 0; i < 5; ++i) CHECK(p.examples[i] == a.examples[i]);
}

TEST_CASE("noise has the configured variance") {
    DataConfig cfg;
    const FeatureSet fs = build_feature_set(2, 100);
    const Dataset data = sample_dataset(cfg, fs, 200, 5);
    double s = 0, s2 = 0, n = 0;
    for (const auto& ex : data.examples)
        for (double v : ex.noise.values) {
            s += v;
            s2 += v * v;
            n += 1;
        }
    const double mean = s / n, var = s2 / n - mean * mean;
    CHECK(std::abs(mean) < 3 * 0.1 / std::sqrt(n) + 1e-4);
    CHECK(var == doctest::Approx(0.01).epsilon(0.02));
}

TEST_CASE("labels are roughly balanced") {
    DataConfig cfg;
    const FeatureSet fs = build_feature_set(2, 100);
    const Dataset data = sample_dataset(cfg, fs, 4000, 9);
    std::size_t c0 = 0;
    for (const auto& ex : data.examples) c0 += ex.label == 0;
    CHECK(std::abs(static_cast<double>(c0) / 4000 - 0.5) < 0.03);
}

TEST_CASE("random partition puts the robust patch anywhere") {
    DataConfig cfg;
    cfg.random_partition = true;
    const FeatureSet fs = build_feature_set(2, 100);
    const Dataset data = sample_dataset(cfg, fs, 400, 2);
    std::vector<int> seen(cfg.P(), 0);
    for (const auto& ex : data.examples) {
        std::size_t r = 0;
        for (std::size_t p = 0; p < ex.x.P; ++p)
            if (ex.roles[p].kind == FeatureKind::Robust) {
                ++r;
                seen[p] = 1;
            }
        CHECK(r == 1);
    }
    int positions = 0;
    for (int s : seen) positions += s;
    CHECK(positions > 10);
}

TEST_CASE("representatives keep one feature type and all noise") {
    DataConfig cfg;
    const FeatureSet fs = build_feature_set(2, 100);
    const Dataset data = sample_dataset(cfg, fs, 5, 4);
    for (const auto& ex : data.examples) {
        for (FeatureKind keep : {FeatureKind::Robust, FeatureKind::NonRobust}) {
            const LabeledExample r = make_representative(ex, fs, keep);
            CHECK(r.noise == ex.noise);
            for (std::size_t p = 0; p < ex.x.P; ++p) {
                const bool kept = ex.roles[p].kind == keep;
                const std::size_t c = fs.coord(ex.roles[p].kind, ex.label);
                CHECK(r.x.patch(p)[c] == (kept ? ex.x.patch(p)[c] : ex.noise.patch(p)[c]));
                CHECK(r.roles[p].coeff == (kept ? ex.roles[p].coeff : 0.0));
            }
            // idempotent
            CHECK(make_representative(r, fs, keep) == r);
        }
    }
}

TEST_CASE("representative needs metadata") {
    const FeatureSet fs = build_feature_set(2, 100);
    LabeledExample ex;
    ex.x = Patches(16, 100);
    CHECK_THROWS_AS(make_representative(ex, fs, FeatureKind::Robust), MetadataError);
}

TEST_CASE("assumption check, constant coefficients") {
    DataConfig cfg;
    const AssumptionReport r = check_assumptions(cfg);
    CHECK(r.exact);
    CHECK(r.ratio_strength == doctest::Approx(2.0));
    // 1 * 2^3 vs 15 * 1^3
    CHECK(r.ratio_density == doctest::Approx(8.0 / 15.0));
    CHECK(r.pass());

    DataConfig weak = cfg;
    weak.alpha = CoefficientDist::constant(0.5);
    CHECK_FALSE(check_assumptions(weak).robust_stronger);
    DataConfig sparse = cfg;
    sparse.jnr_count = 1;
    CHECK_FALSE(check_assumptions(sparse).nonrobust_denser);
}

TEST_CASE("assumption check, Monte-Carlo agrees with the closed form for uniform draws") {
    DataConfig cfg;
    cfg.alpha = CoefficientDist::uniform(1.5, 2.5);
    cfg.beta = CoefficientDist::uniform(0.5, 1.0);
    const AssumptionReport r = check_assumptions(cfg, 20000, 1);
    CHECK_FALSE(r.exact);
    // E[alpha^3] for U(1.5, 2.5) = (2.5^4 - 1.5^4) / (4 * 1)
    const double ea3 = (std::pow(2.5, 4) - std::pow(1.5, 4)) / 4.0;
    const double eb3 = (std::pow(1.0, 4) - std::pow(0.5, 4)) / (4.0 * 0.5);
    CHECK(r.ratio_density == doctest::Approx(ea3 / (15 * eb3)).epsilon(0.03));
}

TEST_CASE("config validation") {
    DataConfig c;
    c.sigma_n = -1;
    CHECK_THROWS(c.validate());
    c = DataConfig{};
    c.alpha = CoefficientDist::constant(0.0);
    CHECK_THROWS(c.validate());
    c = DataConfig{};
    c.jr_count = c.jnr_count = 0;
    CHECK_THROWS(c.validate());
}

TEST_CASE("dataset json round trip is exact") {
    DataConfig cfg;
    cfg.beta = CoefficientDist::uniform(0.5, 1.0);
    const FeatureSet fs = build_feature_set(2, 100);
    const Dataset a = sample_dataset(cfg, fs, 8, 21);
    const Dataset b = dataset_from_json(dataset_to_json(a));
    CHECK(b.seed == a.seed);
    CHECK(b.examples == a.examples);
}
