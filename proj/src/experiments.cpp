#include "patchlab/experiments.hpp"

#include "patchlab/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace patchlab {

using nlohmann::json;
namespace fs_ = std::filesystem;

void write_text(const fs_::path& path, const std::string& text) {
    if (path.has_parent_path()) fs_::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os << text;
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text(const fs_::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------- config

namespace {

// Finds the line of `"key"` inside the object that starts after `"section"`.
// Good enough for hand-written configs; returns 0 when not found.
std::size_t line_of(const std::string& text, const std::string& section, const std::string& key) {
    std::size_t from = 0;
    if (!section.empty()) {
        from = text.find("\"" + section + "\"");
        if (from == std::string::npos) return 0;
    }
    const std::size_t pos = text.find("\"" + key + "\"", from);
    if (pos == std::string::npos) return 0;
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n'));
}

std::size_t line_at_byte(const std::string& text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

class Reader {
public:
    Reader(const std::string& text, const json& obj, std::string section)
        : text_(text), obj_(obj), section_(std::move(section)) {
        if (!obj_.is_object()) fail(section_.empty() ? "top level" : section_, "expected an object");
    }

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        const std::string name = section_.empty() ? key : section_ + "." + key;
        throw ConfigError(name + ": " + msg, line_of(text_, section_, key));
    }

    bool has(const std::string& key) const { return obj_.contains(key); }

    double number(const std::string& key, double def) {
        seen_.insert(key);
        if (!has(key)) return def;
        const json& v = obj_.at(key);
        if (!v.is_number()) fail(key, "expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) fail(key, "must be finite");
        return x;
    }

    std::size_t count(const std::string& key, std::size_t def) {
        seen_.insert(key);
        if (!has(key)) return def;
        const json& v = obj_.at(key);
        if (!v.is_number_integer() || v.get<long long>() < 0) fail(key, "expected a non-negative integer");
        return v.get<std::size_t>();
    }

    bool flag(const std::string& key, bool def) {
        seen_.insert(key);
        if (!has(key)) return def;
        if (!obj_.at(key).is_boolean()) fail(key, "expected true or false");
        return obj_.at(key).get<bool>();
    }

    std::string string(const std::string& key, const std::string& def) {
        seen_.insert(key);
        if (!has(key)) return def;
        if (!obj_.at(key).is_string()) fail(key, "expected a string");
        return obj_.at(key).get<std::string>();
    }

    // A number, or {"uniform": [lo, hi]}.
    CoefficientDist dist(const std::string& key, CoefficientDist def) {
        seen_.insert(key);
        if (!has(key)) return def;
        const json& v = obj_.at(key);
        CoefficientDist out;
        if (v.is_number()) {
            out = CoefficientDist::constant(v.get<double>());
        } else if (v.is_object() && v.size() == 1 && v.contains("uniform") && v["uniform"].is_array() &&
                   v["uniform"].size() == 2 && v["uniform"][0].is_number() && v["uniform"][1].is_number()) {
            out = CoefficientDist::uniform(v["uniform"][0].get<double>(), v["uniform"][1].get<double>());
        } else {
            fail(key, "expected a number or {\"uniform\": [lo, hi]}");
        }
        if (!(out.lo > 0.0) || !std::isfinite(out.hi) || out.hi < out.lo)
            fail(key, "coefficients must be positive with lo <= hi");
        return out;
    }

    const json& sub(const std::string& key) {
        seen_.insert(key);
        static const json empty = json::object();
        return has(key) ? obj_.at(key) : empty;
    }

    void no_unknown_keys() const {
        for (const auto& [k, _] : obj_.items())
            if (!seen_.count(k)) fail(k, "unknown key");
    }

private:
    const std::string& text_;
    const json& obj_;
    std::string section_;
    std::set<std::string> seen_;
};

json dist_json(const CoefficientDist& d) {
    if (d.is_constant()) return d.lo;
    return json{{"uniform", {d.lo, d.hi}}};
}

}  // namespace

void ExperimentConfig::validate() const {
    data.validate();
    network.act.validate();
    train.validate();
    if (network.m == 0) throw ConfigError("network.m must be positive");
    if (!(network.sigma0 > 0.0)) throw ConfigError("network.sigma0 must be positive");
    if (n_train == 0) throw ConfigError("train.n_train must be positive");
    if (test_n == 0) throw ConfigError("test_n must be positive");
    if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
    if (!(props_gamma > 0.0)) throw ConfigError("props_gamma must be positive");
}

ExperimentConfig default_config() { return ExperimentConfig{}; }

ExperimentConfig config_from_json(const std::string& text) {
    json root;
    try {
        root = json::parse(text, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("malformed config: ") + e.what(), line_at_byte(text, e.byte));
    }

    ExperimentConfig cfg;
    Reader top(text, root, "");

    {
        Reader r(text, top.sub("data"), "data");
        DataConfig& d = cfg.data;
        d.k = r.count("k", d.k);
        if (d.k == 0) r.fail("k", "must be positive");
        d.d = r.count("d", d.d);
        if (d.d < 2 * d.k) r.fail("d", "must be at least 2k");
        d.jr_count = r.count("jr_count", d.jr_count);
        d.jnr_count = r.count("jnr_count", d.jnr_count);
        if (d.jr_count + d.jnr_count == 0) r.fail("jnr_count", "jr_count + jnr_count must be positive");
        d.alpha = r.dist("alpha", d.alpha);
        d.beta = r.dist("beta", d.beta);
        d.sigma_n = r.number("sigma_n", d.sigma_n);
        if (d.sigma_n < 0.0) r.fail("sigma_n", "must be >= 0");
        d.tau = r.number("tau", d.tau);
        if (d.tau < 0.0) r.fail("tau", "must be >= 0");
        d.random_partition = r.flag("random_partition", d.random_partition);
        r.no_unknown_keys();
    }
    {
        Reader r(text, top.sub("network"), "network");
        NetworkConfig& n = cfg.network;
        n.m = r.count("m", n.m);
        if (n.m == 0) r.fail("m", "must be positive");
        n.sigma0 = r.number("sigma0", n.sigma0);
        if (!(n.sigma0 > 0.0)) r.fail("sigma0", "must be positive");
        n.act.q = static_cast<int>(r.count("q", static_cast<std::size_t>(n.act.q)));
        if (n.act.q < 2) r.fail("q", "must be >= 2");
        n.act.rho = r.number("rho", n.act.rho);
        if (!(n.act.rho > 0.0)) r.fail("rho", "must be positive");
        r.no_unknown_keys();
    }
    {
        Reader r(text, top.sub("train"), "train");
        TrainConfig& t = cfg.train;
        t.eta = r.number("eta", t.eta);
        if (!(t.eta > 0.0)) r.fail("eta", "must be positive");
        t.eta_tilde = r.number("eta_tilde", t.eta_tilde);
        if (!(t.eta_tilde > 0.0)) r.fail("eta_tilde", "must be positive");
        t.epsilon = r.number("epsilon", t.epsilon);
        if (t.epsilon < 0.0) r.fail("epsilon", "must be >= 0");
        t.epochs = r.count("epochs", t.epochs);
        t.eval_every = r.count("eval_every", t.eval_every);
        t.attack_eval.steps = r.count("pgd_steps", t.attack_eval.steps);
        if (t.attack_eval.steps == 0) r.fail("pgd_steps", "must be >= 1");
        t.attack_eval.step_fraction = r.number("pgd_step_fraction", t.attack_eval.step_fraction);
        if (!(t.attack_eval.step_fraction > 0.0)) r.fail("pgd_step_fraction", "must be positive");
        t.batch_size = r.count("batch_size", t.batch_size);
        t.divergence_loss = r.number("divergence_loss", t.divergence_loss);
        cfg.n_train = r.count("n_train", cfg.n_train);
        if (cfg.n_train == 0) r.fail("n_train", "must be positive");
        r.no_unknown_keys();
    }

    cfg.test_n = top.count("test_n", cfg.test_n);
    if (cfg.test_n == 0) top.fail("test_n", "must be positive");
    cfg.output_dir = top.string("output_dir", cfg.output_dir);
    cfg.props_gamma = top.number("props_gamma", cfg.props_gamma);
    if (!(cfg.props_gamma > 0.0)) top.fail("props_gamma", "must be positive");
    if (top.has("seeds")) {
        const json& s = top.sub("seeds");
        if (!s.is_array() || s.empty()) top.fail("seeds", "expected a non-empty list of integers");
        cfg.seeds.clear();
        for (const auto& v : s) {
            if (!v.is_number_unsigned()) top.fail("seeds", "seeds must be non-negative integers");
            cfg.seeds.push_back(v.get<std::uint64_t>());
        }
    }
    top.no_unknown_keys();

    try {
        cfg.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

ExperimentConfig load_config(const fs_::path& path) {
    std::string text;
    try {
        text = read_text(path);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    try {
        return config_from_json(text);
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string config_to_json(const ExperimentConfig& cfg) {
    const auto& d = cfg.data;
    const auto& t = cfg.train;
    json j;
    j["data"] = {{"k", d.k},
                 {"d", d.d},
                 {"jr_count", d.jr_count},
                 {"jnr_count", d.jnr_count},
                 {"alpha", dist_json(d.alpha)},
                 {"beta", dist_json(d.beta)},
                 {"sigma_n", d.sigma_n},
                 {"tau", d.tau},
                 {"random_partition", d.random_partition}};
    j["network"] = {{"m", cfg.network.m},
                    {"sigma0", cfg.network.sigma0},
                    {"q", cfg.network.act.q},
                    {"rho", cfg.network.act.rho}};
    j["train"] = {{"eta", t.eta},
                  {"eta_tilde", t.eta_tilde},
                  {"epsilon", t.epsilon},
                  {"epochs", t.epochs},
                  {"eval_every", t.eval_every},
                  {"pgd_steps", t.attack_eval.steps},
                  {"pgd_step_fraction", t.attack_eval.step_fraction},
                  {"batch_size", t.batch_size},
                  {"divergence_loss", t.divergence_loss},
                  {"n_train", cfg.n_train}};
    j["test_n"] = cfg.test_n;
    j["seeds"] = cfg.seeds;
    j["output_dir"] = cfg.output_dir;
    j["props_gamma"] = cfg.props_gamma;
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------- runs

SeedStreams seed_streams(std::uint64_t seed) {
    const Rng base(seed);
    return {base.split(0).key(), base.split(1).key(), base.split(2), base.split(3).key()};
}

SeedInputs make_seed_inputs(const ExperimentConfig& cfg, std::uint64_t seed) {
    SeedStreams st = seed_streams(seed);
    SeedInputs in;
    in.fs = build_feature_set(cfg.data.k, cfg.data.d);
    in.train = sample_dataset(cfg.data, in.fs, cfg.n_train, st.train_data);
    in.test = sample_dataset(cfg.data, in.fs, cfg.test_n, st.test_data);
    in.init = init_network(cfg.data.k, cfg.network.m, cfg.data.d, cfg.network.sigma0, cfg.network.act, st.init);
    return in;
}

SeedResult run_seed(const ExperimentConfig& cfg, TrainMode mode, std::uint64_t seed, const SeedProgress& progress) {
    cfg.validate();
    SeedInputs in = make_seed_inputs(cfg, seed);
    TrainConfig tc = cfg.train;
    tc.mode = mode;
    tc.swap_seed = seed_streams(seed).swap;

    SeedResult res;
    res.seed = seed;
    ProgressFn cb;
    if (progress) cb = [&](const TraceRecord& r) { progress(seed, r); };
    res.run = train(in.init, in.train, in.test, tc, in.fs, cb);

    const Network& net = res.run.net;
    const double step = tc.attack_eval.step_fraction * tc.epsilon;
    res.clean = evaluate(net, in.test, AttackSpec::none());
    res.pgd = evaluate(net, in.test, AttackSpec::pgd(tc.epsilon, tc.attack_eval.steps, step));
    res.swap = evaluate(net, in.test, AttackSpec::feature_swap(tc.epsilon, tc.swap_seed));
    res.fl_robust = feature_learning_accuracy(net, in.test, in.fs, FeatureKind::Robust);
    res.fl_nonrobust = feature_learning_accuracy(net, in.test, in.fs, FeatureKind::NonRobust);

    const double rho = cfg.network.act.rho;
    res.cross_v = first_crossing(res.run.trace.dynamics, FeatureKind::NonRobust, rho / cfg.data.beta.mean());
    res.cross_u = first_crossing(res.run.trace.dynamics, FeatureKind::Robust, rho / cfg.data.alpha.mean());
    for (const auto& r : res.run.trace.records)
        if (r.rob_acc > 0.5) {
            res.robust_half = r.epoch;
            break;
        }
    return res;
}

namespace {

json opt_json(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }

json crossings_json(const std::vector<std::optional<std::size_t>>& c) {
    json a = json::array();
    for (const auto& v : c) a.push_back(opt_json(v));
    return a;
}

json stats_json(const std::vector<double>& xs) {
    if (xs.empty()) return json(nullptr);
    double sum = 0.0;
    for (double x : xs) sum += x;
    return json{{"mean", sum / static_cast<double>(xs.size())},
                {"min", *std::min_element(xs.begin(), xs.end())},
                {"max", *std::max_element(xs.begin(), xs.end())},
                {"n", xs.size()}};
}

json eval_json(const EvalReport& r) { return json::parse(eval_report_to_json(r)); }

}  // namespace

ExperimentSummary run_experiment(const ExperimentConfig& cfg, TrainMode mode, const fs_::path& out_dir,
                                 const SeedProgress& progress) {
    cfg.validate();
    fs_::create_directories(out_dir);
    write_text(out_dir / "config.json", config_to_json(cfg));

    ExperimentSummary summary;
    summary.mode = mode;
    for (std::uint64_t seed : cfg.seeds) {
        SeedResult r = run_seed(cfg, mode, seed, progress);
        const std::string tag = "seed" + std::to_string(seed);
        write_text(out_dir / ("trace_" + tag + ".csv"), trace_to_csv(r.run.trace));
        write_text(out_dir / ("trace_" + tag + ".json"), trace_to_json(r.run.trace));
        write_text(out_dir / ("dynamics_" + tag + ".csv"), dynamics_to_csv(r.run.trace));
        write_text(out_dir / ("net_" + tag + ".json"), network_to_json(r.run.net));
        json ev = {{"seed", seed},
                   {"clean", eval_json(r.clean)},
                   {"pgd", eval_json(r.pgd)},
                   {"feature_swap", eval_json(r.swap)},
                   {"fl_robust", eval_json(r.fl_robust)},
                   {"fl_nonrobust", eval_json(r.fl_nonrobust)}};
        write_text(out_dir / ("eval_" + tag + ".json"), ev.dump(2) + "\n");
        summary.seeds.push_back(std::move(r));
    }

    // Aggregates come from the same numbers written to the per-seed files.
    std::vector<double> std_acc, rob_acc, fl_r, fl_nr, swap_acc, swap_target, half;
    std::vector<std::vector<double>> cv(cfg.data.k), cu(cfg.data.k);
    json per_seed = json::array();
    for (const auto& r : summary.seeds) {
        const TraceRecord& last = r.run.trace.records.back();
        std_acc.push_back(last.std_acc);
        rob_acc.push_back(last.rob_acc);
        fl_r.push_back(last.fl_acc_robust);
        fl_nr.push_back(last.fl_acc_nonrobust);
        swap_acc.push_back(r.swap.accuracy);
        swap_target.push_back(r.swap.target_rate);
        if (r.robust_half) half.push_back(static_cast<double>(*r.robust_half));
        for (std::size_t i = 0; i < cfg.data.k; ++i) {
            if (r.cross_v[i]) cv[i].push_back(static_cast<double>(*r.cross_v[i]));
            if (r.cross_u[i]) cu[i].push_back(static_cast<double>(*r.cross_u[i]));
        }
        per_seed.push_back({{"seed", r.seed},
                            {"final_epoch", last.epoch},
                            {"std_acc", last.std_acc},
                            {"rob_acc", last.rob_acc},
                            {"fl_acc_R", last.fl_acc_robust},
                            {"fl_acc_NR", last.fl_acc_nonrobust},
                            {"swap_acc", r.swap.accuracy},
                            {"swap_target_rate", r.swap.target_rate},
                            {"cross_v", crossings_json(r.cross_v)},
                            {"cross_u", crossings_json(r.cross_u)},
                            {"robust_acc_above_half_epoch", opt_json(r.robust_half)}});
    }
    json cross_v = json::array(), cross_u = json::array();
    for (std::size_t i = 0; i < cfg.data.k; ++i) {
        cross_v.push_back(stats_json(cv[i]));
        cross_u.push_back(stats_json(cu[i]));
    }
    json j = {{"mode", to_string(mode)},
              {"seeds", per_seed},
              {"std_acc", stats_json(std_acc)},
              {"rob_acc", stats_json(rob_acc)},
              {"fl_acc_R", stats_json(fl_r)},
              {"fl_acc_NR", stats_json(fl_nr)},
              {"swap_acc", stats_json(swap_acc)},
              {"swap_target_rate", stats_json(swap_target)},
              {"cross_v", cross_v},
              {"cross_u", cross_u},
              {"robust_acc_above_half_epoch", stats_json(half)},
              {"pgd", {{"steps", cfg.train.attack_eval.steps},
                       {"step_size", cfg.train.attack_eval.step_fraction * cfg.train.epsilon},
                       {"random_start", false}}}};
    summary.json = j.dump(2) + "\n";
    write_text(out_dir / "summary.json", summary.json);
    return summary;
}

// ---------------------------------------------------------------- props

PropsReport run_props_check(double gamma, const ExperimentConfig& cfg, std::uint64_t seed) {
    if (!(gamma > 0.0)) throw std::invalid_argument("props-check: gamma must be positive");
    cfg.validate();
    const FeatureSet fs = build_feature_set(cfg.data.k, cfg.data.d);
    const SeedStreams st = seed_streams(seed);
    const Dataset data = sample_dataset(cfg.data, fs, cfg.test_n, st.test_data);
    const double eps = cfg.train.epsilon;
    const AttackSpec pgd =
        AttackSpec::pgd(eps, cfg.train.attack_eval.steps, cfg.train.attack_eval.step_fraction * eps);

    auto measure = [&](FeatureKind kind) {
        RankOneReport r;
        r.kind = kind;
        const Network net = make_rank_one_network(fs, gamma, kind, cfg.network.act);
        r.ce = dataset_ce(net, data);
        r.clean_acc = evaluate(net, data, AttackSpec::none()).accuracy;
        r.pgd_acc = evaluate(net, data, pgd).accuracy;
        r.swap_acc = evaluate(net, data, AttackSpec::feature_swap(eps, st.swap)).accuracy;
        return r;
    };

    PropsReport rep;
    rep.gamma = gamma;
    rep.nonrobust = measure(FeatureKind::NonRobust);
    rep.robust = measure(FeatureKind::Robust);
    auto to_j = [](const RankOneReport& r) {
        return json{{"ce", r.ce}, {"clean_acc", r.clean_acc}, {"pgd_acc", r.pgd_acc}, {"swap_acc", r.swap_acc}};
    };
    rep.json = json{{"gamma", gamma}, {"seed", seed}, {"n", data.size()},
                    {"nonrobust", to_j(rep.nonrobust)}, {"robust", to_j(rep.robust)}}
                   .dump(2) +
               "\n";
    return rep;
}

// ---------------------------------------------------------------- gradcheck

namespace {

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
    return std::sqrt(diff) / scale;
}

}  // namespace

GradcheckReport run_gradcheck(std::size_t trials, std::uint64_t seed, double h) {
    if (trials == 0) throw std::invalid_argument("gradcheck: trials must be >= 1");
    if (!(h > 0.0)) throw std::invalid_argument("gradcheck: step must be positive");

    std::vector<double> err_w(trials), err_x(trials);
    const Rng base(seed);
    parallel_for(trials, [&](std::size_t t) {
        Rng rng = base.split(t);
        DataConfig dc;
        dc.k = 2 + rng.below(2);
        dc.d = 2 * dc.k + rng.below(5);
        dc.jr_count = 1 + rng.below(2);
        dc.jnr_count = 1 + rng.below(3);
        dc.alpha = CoefficientDist::uniform(1.0, 2.0);
        dc.beta = CoefficientDist::uniform(0.5, 1.0);
        dc.sigma_n = 0.3;
        const FeatureSet fs = build_feature_set(dc.k, dc.d);
        const Dataset data = sample_dataset(dc, fs, 1 + rng.below(4), rng());
        Activation act;
        act.q = 3 + static_cast<int>(rng.below(2));
        act.rho = rng.uniform(0.5, 1.5);
        Rng init = rng.split(1);
        Network net = init_network(dc.k, 1 + rng.below(3), dc.d, 0.6, act, init);

        // weights
        const Gradients g = grad_weights_ce(net, data.examples);
        auto mean_ce = [&](const Network& n) {
            double s = 0.0;
            for (const auto& ex : data.examples) s += ce_loss(n, ex.x, ex.label);
            return s / static_cast<double>(data.size());
        };
        std::vector<double> fd(g.values.size());
        for (std::size_t c = 0; c < fd.size(); ++c) {
            Network p = net, m = net;
            p.weights.values[c] += h;
            m.weights.values[c] -= h;
            fd[c] = (mean_ce(p) - mean_ce(m)) / (2.0 * h);
        }
        err_w[t] = rel_err(g.values, fd);

        // input
        const auto& ex = data.examples.front();
        const Patches gx = grad_input_margin(net, ex.x, ex.label);
        std::vector<double> fdx(gx.values.size());
        for (std::size_t c = 0; c < fdx.size(); ++c) {
            Patches p = ex.x, m = ex.x;
            p.values[c] += h;
            m.values[c] -= h;
            fdx[c] = (margin_loss(net, p, ex.label) - margin_loss(net, m, ex.label)) / (2.0 * h);
        }
        err_x[t] = rel_err(gx.values, fdx);
    });

    GradcheckReport rep;
    rep.trials = trials;
    rep.step = h;
    rep.max_rel_err_weights = *std::max_element(err_w.begin(), err_w.end());
    rep.max_rel_err_input = *std::max_element(err_x.begin(), err_x.end());
    rep.json = json{{"trials", trials},
                    {"seed", seed},
                    {"h", h},
                    {"max_rel_err_weights", rep.max_rel_err_weights},
                    {"max_rel_err_input", rep.max_rel_err_input}}
                   .dump(2) +
               "\n";
    return rep;
}

// ---------------------------------------------------------------- oracle

OracleConfig oracle_config_for(const ExperimentConfig& cfg, const Dataset& data) {
    OracleConfig oc;
    oc.k = cfg.data.k;
    oc.m = cfg.network.m;
    oc.eta = cfg.train.eta;
    oc.eta_tilde = cfg.train.eta_tilde;
    oc.epsilon = cfg.train.epsilon;
    oc.alpha = cfg.data.alpha.mean();
    oc.beta = cfg.data.beta.mean();
    oc.jr_count = cfg.data.jr_count;
    oc.jnr_count = cfg.data.jnr_count;
    oc.act = cfg.network.act;
    oc.class_weights = class_weights_of(data);
    return oc;
}

LockstepReport run_lockstep(const ExperimentConfig& cfg, TrainMode mode, std::size_t epochs, std::uint64_t seed) {
    ExperimentConfig c = cfg;
    c.data.sigma_n = 0.0;
    c.data.alpha = CoefficientDist::constant(cfg.data.alpha.mean());
    c.data.beta = CoefficientDist::constant(cfg.data.beta.mean());
    c.validate();
    SeedInputs in = make_seed_inputs(c, seed);
    // Without an off-feature component the one-step attack stays in the
    // feature span, which is what makes the adversarial oracle exact.
    Network net = project_onto_features(in.init, in.fs);

    TrainConfig tc = c.train;
    tc.mode = mode;
    OracleState s = oracle_state_from_network(net, in.fs, oracle_config_for(c, in.train), mode);

    LockstepReport rep;
    rep.mode = mode;
    rep.epochs = epochs;
    TrainingTrace sim;
    sim.k = c.data.k;
    sim.mode = mode;
    OracleTrajectory traj;
    auto record = [&](std::size_t epoch) {
        sim.dynamics.push_back(diagonal_correlations(net, in.fs, epoch));
        OracleRecord o;
        o.t = s.t;
        for (std::size_t i = 0; i < c.data.k; ++i) {
            o.max_A.push_back(s.max_A(i));
            o.max_B.push_back(s.max_B(i));
        }
        traj.records.push_back(o);
        rep.coefficient_max = std::max(rep.coefficient_max, coefficient_divergence(decompose(net, in.fs), s));
    };
    record(0);
    for (std::size_t e = 1; e <= epochs; ++e) {
        if (mode == TrainMode::Standard) {
            net = standard_step(net, in.train, tc.eta);
            s = oracle_step_standard(s);
        } else {
            net = adversarial_step(net, in.train, tc).net;
            s = oracle_step_adversarial(s);
        }
        record(e);
    }
    traj.final_state = s;
    rep.divergence = compare_trace(sim, traj);
    return rep;
}

OracleCompareReport run_oracle_compare(const ExperimentConfig& cfg, const fs_::path& out_dir,
                                       std::size_t lockstep_epochs, const std::vector<TrainMode>& noisy_modes) {
    cfg.validate();
    OracleCompareReport rep;
    json j;
    json lock = json::array();
    for (TrainMode mode : {TrainMode::Standard, TrainMode::Adversarial}) {
        LockstepReport l = run_lockstep(cfg, mode, lockstep_epochs, cfg.seeds.front());
        if (!out_dir.empty())
            write_text(out_dir / (std::string("lockstep_") + to_string(mode) + ".csv"), divergence_to_csv(l.divergence));
        lock.push_back({{"mode", to_string(mode)},
                        {"epochs", l.epochs},
                        {"max_divergence", l.divergence.max_divergence},
                        {"max_coefficient_divergence", l.coefficient_max}});
        rep.lockstep.push_back(std::move(l));
    }
    j["lockstep"] = lock;

    const double rho = cfg.network.act.rho;
    const double tu = rho / cfg.data.alpha.mean(), tv = rho / cfg.data.beta.mean();
    json noisy = json::array();
    for (TrainMode mode : noisy_modes) {
        for (std::uint64_t seed : cfg.seeds) {
            SeedInputs in = make_seed_inputs(cfg, seed);
            TrainConfig tc = cfg.train;
            tc.mode = mode;
            tc.eval_every = 0;

            // Same loop as train() minus the metric passes.
            TrainingTrace sim;
            sim.k = cfg.data.k;
            sim.mode = mode;
            Network net = in.init;
            sim.dynamics.push_back(diagonal_correlations(net, in.fs, 0));
            for (std::size_t e = 1; e <= tc.epochs; ++e) {
                net = mode == TrainMode::Standard ? standard_step(net, in.train, tc.eta)
                                                  : adversarial_step(net, in.train, tc).net;
                if (!net.all_finite()) throw DivergenceError("oracle-compare: nonfinite weights");
                sim.dynamics.push_back(diagonal_correlations(net, in.fs, e));
            }
            const OracleState s0 = oracle_state_from_network(in.init, in.fs, oracle_config_for(cfg, in.train), mode);
            const OracleTrajectory traj = run_oracle(s0, tc.epochs);

            NoisyVerdict v;
            v.seed = seed;
            v.mode = mode;
            v.divergence = compare_trace(sim, traj);
            auto v_first = [&](const auto& cv, const auto& cu) {
                for (std::size_t i = 0; i < cv.size(); ++i)
                    if (!cv[i] || (cu[i] && *cu[i] <= *cv[i])) return false;
                return true;
            };
            v.sim_v_first = v_first(first_crossing(sim.dynamics, FeatureKind::NonRobust, tv),
                                    first_crossing(sim.dynamics, FeatureKind::Robust, tu));
            v.oracle_v_first = v_first(first_crossing(traj, FeatureKind::NonRobust, tv),
                                       first_crossing(traj, FeatureKind::Robust, tu));
            const auto& last = sim.dynamics.back();
            const auto& olast = traj.records.back();
            v.sim_u_above_v = v.oracle_u_above_v = true;
            for (std::size_t i = 0; i < cfg.data.k; ++i) {
                v.sim_u_above_v = v.sim_u_above_v && last.corr_u[i] > last.corr_v[i];
                v.oracle_u_above_v = v.oracle_u_above_v && olast.max_A[i] > olast.max_B[i];
            }
            if (!out_dir.empty()) {
                const std::string tag = std::string(to_string(mode)) + "_seed" + std::to_string(seed);
                write_text(out_dir / ("divergence_" + tag + ".csv"), divergence_to_csv(v.divergence));
                write_text(out_dir / ("oracle_" + tag + ".csv"), trajectory_to_csv(traj));
            }
            noisy.push_back({{"mode", to_string(mode)},
                             {"seed", seed},
                             {"max_divergence", v.divergence.max_divergence},
                             {"sim_v_crosses_first", v.sim_v_first},
                             {"oracle_v_crosses_first", v.oracle_v_first},
                             {"sim_final_u_above_v", v.sim_u_above_v},
                             {"oracle_final_u_above_v", v.oracle_u_above_v}});
            rep.noisy.push_back(std::move(v));
        }
    }
    j["noisy"] = noisy;
    rep.json = j.dump(2) + "\n";
    if (!out_dir.empty()) write_text(out_dir / "oracle_compare.json", rep.json);
    return rep;
}

}  // namespace patchlab
