#include "patchlab/features_data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace patchlab {

using nlohmann::json;

const char* to_string(FeatureKind kind) { return kind == FeatureKind::Robust ? "robust" : "nonrobust"; }

FeatureSet build_feature_set(std::size_t k, std::size_t d) {
    if (k == 0) throw DimensionError("build_feature_set: k must be positive");
    if (d < 2 * k)
        throw DimensionError("build_feature_set: need d >= 2k (k=" + std::to_string(k) +
                             ", d=" + std::to_string(d) + ")");
    FeatureSet fs;
    fs.k = k;
    fs.d = d;
    fs.robust.assign(k, std::vector<double>(d, 0.0));
    fs.nonrobust.assign(k, std::vector<double>(d, 0.0));
    for (std::size_t j = 0; j < k; ++j) {
        fs.robust[j][j] = 1.0;
        fs.nonrobust[j][k + j] = 1.0;
    }
    return fs;
}

namespace {

void validate_dist(const CoefficientDist& dist, const char* name) {
    if (!(dist.lo > 0.0) || !std::isfinite(dist.hi) || dist.hi < dist.lo)
        throw std::invalid_argument(std::string("DataConfig: ") + name +
                                    " must be a positive constant or interval 0 < lo <= hi");
}

}  // namespace

void DataConfig::validate() const {
    if (k == 0) throw std::invalid_argument("DataConfig: k must be positive");
    if (d < 2 * k) throw DimensionError("DataConfig: d must be at least 2k");
    if (jr_count + jnr_count == 0) throw std::invalid_argument("DataConfig: P must be positive");
    validate_dist(alpha, "alpha");
    validate_dist(beta, "beta");
    if (!(sigma_n >= 0.0) || !std::isfinite(sigma_n))
        throw std::invalid_argument("DataConfig: sigma_n must be >= 0");
    if (!(tau >= 0.0)) throw std::invalid_argument("DataConfig: tau must be >= 0");
}

LabeledExample sample_example(const DataConfig& cfg, const FeatureSet& fs, Rng& rng) {
    if (fs.k != cfg.k || fs.d != cfg.d)
        throw DimensionError("sample_example: feature set does not match config");
    const std::size_t P = cfg.P();
    const std::size_t d = cfg.d;

    LabeledExample ex;
    ex.label = static_cast<std::size_t>(rng.below(cfg.k));
    ex.x = Patches(P, d);
    ex.noise = Patches(P, d);
    ex.roles.resize(P);

    std::vector<FeatureKind> kinds(P, FeatureKind::NonRobust);
    std::fill_n(kinds.begin(), cfg.jr_count, FeatureKind::Robust);
    if (cfg.random_partition) {
        for (std::size_t i = P; i > 1; --i) std::swap(kinds[i - 1], kinds[rng.below(i)]);
    }

    for (std::size_t p = 0; p < P; ++p) {
        const FeatureKind kind = kinds[p];
        const double coeff = kind == FeatureKind::Robust ? cfg.alpha.sample(rng) : cfg.beta.sample(rng);
        ex.roles[p] = {kind, coeff};
        auto noise = ex.noise.patch(p);
        if (cfg.sigma_n > 0.0)
            for (double& v : noise) v = cfg.sigma_n * rng.normal();
        const auto& feature = fs.feature(kind, ex.label);
        auto patch = ex.x.patch(p);
        for (std::size_t c = 0; c < d; ++c) patch[c] = coeff * feature[c] + noise[c];
    }
    return ex;
}

Dataset sample_dataset(const DataConfig& cfg, const FeatureSet& fs, std::size_t n, std::uint64_t seed) {
    cfg.validate();
    Dataset data;
    data.k = cfg.k;
    data.d = cfg.d;
    data.P = cfg.P();
    data.seed = seed;
    data.examples.reserve(n);
    const Rng base(seed);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = base.split(i);
        data.examples.push_back(sample_example(cfg, fs, rng));
    }
    return data;
}

LabeledExample make_representative(const LabeledExample& ex, const FeatureSet& fs, FeatureKind keep) {
    if (!ex.has_metadata()) throw MetadataError("make_representative: example carries no role metadata");
    if (ex.x.d != fs.d) throw DimensionError("make_representative: patch dimension mismatch");
    LabeledExample out = ex;
    for (std::size_t p = 0; p < ex.x.P; ++p) {
        if (ex.roles[p].kind == keep) continue;
        out.roles[p].coeff = 0.0;
        auto dst = out.x.patch(p);
        auto src = ex.noise.patch(p);
        std::copy(src.begin(), src.end(), dst.begin());
    }
    return out;
}

AssumptionReport check_assumptions(const DataConfig& cfg, std::size_t mc_samples, std::uint64_t seed) {
    cfg.validate();
    AssumptionReport rep;
    const double jr = static_cast<double>(cfg.jr_count);
    const double jnr = static_cast<double>(cfg.jnr_count);

    if (cfg.alpha.is_constant() && cfg.beta.is_constant()) {
        rep.exact = true;
        rep.ratio_strength = cfg.alpha.lo / cfg.beta.lo;
        rep.ratio_density = (jr * std::pow(cfg.alpha.lo, cfg.tau)) / (jnr * std::pow(cfg.beta.lo, cfg.tau));
    } else {
        Rng rng(seed);
        double sum_min_alpha = 0.0, sum_max_beta = 0.0, sum_alpha_tau = 0.0, sum_beta_tau = 0.0;
        const std::size_t n = std::max<std::size_t>(mc_samples, 1);
        for (std::size_t s = 0; s < n; ++s) {
            double min_alpha = INFINITY, max_beta = 0.0;
            for (std::size_t p = 0; p < cfg.jr_count; ++p) {
                const double a = cfg.alpha.sample(rng);
                min_alpha = std::min(min_alpha, a);
                sum_alpha_tau += std::pow(a, cfg.tau);
            }
            for (std::size_t p = 0; p < cfg.jnr_count; ++p) {
                const double b = cfg.beta.sample(rng);
                max_beta = std::max(max_beta, b);
                sum_beta_tau += std::pow(b, cfg.tau);
            }
            sum_min_alpha += cfg.jr_count ? min_alpha : 0.0;
            sum_max_beta += max_beta;
        }
        rep.ratio_strength = sum_max_beta > 0.0 ? sum_min_alpha / sum_max_beta : INFINITY;
        rep.ratio_density = sum_beta_tau > 0.0 ? sum_alpha_tau / sum_beta_tau : INFINITY;
    }
    if (cfg.jr_count == 0) rep.ratio_strength = 0.0;
    if (cfg.jnr_count == 0) rep.ratio_strength = INFINITY;
    rep.robust_stronger = rep.ratio_strength > 1.0;
    rep.nonrobust_denser = rep.ratio_density < 1.0;
    return rep;
}

namespace {

json patches_to_json(const Patches& x) {
    json rows = json::array();
    for (std::size_t p = 0; p < x.P; ++p) {
        auto row = x.patch(p);
        rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return rows;
}

Patches patches_from_json(const json& rows, std::size_t d) {
    Patches x(rows.size(), d);
    for (std::size_t p = 0; p < rows.size(); ++p) {
        const auto row = rows[p].get<std::vector<double>>();
        if (row.size() != d) throw DimensionError("dataset json: patch has wrong dimension");
        std::copy(row.begin(), row.end(), x.patch(p).begin());
    }
    return x;
}

}  // namespace

std::string dataset_to_json(const Dataset& data) {
    json j;
    j["k"] = data.k;
    j["d"] = data.d;
    j["P"] = data.P;
    j["seed"] = data.seed;
    json examples = json::array();
    for (const auto& ex : data.examples) {
        json e;
        e["label"] = ex.label;
        json roles = json::array();
        for (const auto& r : ex.roles)
            roles.push_back({{"kind", r.kind == FeatureKind::Robust ? "R" : "NR"}, {"coeff", r.coeff}});
        e["roles"] = roles;
        e["patches"] = patches_to_json(ex.x);
        if (ex.has_metadata()) e["noise"] = patches_to_json(ex.noise);
        examples.push_back(std::move(e));
    }
    j["examples"] = std::move(examples);
    return j.dump();
}

Dataset dataset_from_json(const std::string& text) {
    const json j = json::parse(text);
    Dataset data;
    data.k = j.at("k").get<std::size_t>();
    data.d = j.at("d").get<std::size_t>();
    data.P = j.at("P").get<std::size_t>();
    data.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& e : j.at("examples")) {
        LabeledExample ex;
        ex.label = e.at("label").get<std::size_t>();
        if (ex.label >= data.k) throw std::invalid_argument("dataset json: label out of range");
        ex.x = patches_from_json(e.at("patches"), data.d);
        if (ex.x.P != data.P) throw DimensionError("dataset json: wrong patch count");
        for (const auto& r : e.value("roles", json::array())) {
            const auto kind = r.at("kind").get<std::string>();
            ex.roles.push_back({kind == "R" ? FeatureKind::Robust : FeatureKind::NonRobust,
                                r.at("coeff").get<double>()});
        }
        if (e.contains("noise")) ex.noise = patches_from_json(e.at("noise"), data.d);
        data.examples.push_back(std::move(ex));
    }
    return data;
}

}  // namespace patchlab
