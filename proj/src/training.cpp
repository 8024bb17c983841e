#include "patchlab/training.hpp"

#include "patchlab/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace patchlab {

namespace {

// Per-example work is grouped into fixed-size chunks that are reduced in
// order; the chunk size, not the worker count, fixes the summation order.
constexpr std::size_t kChunk = 4;

struct BatchGradient {
    Gradients grad;
    double loss = 0.0;
};

// Mean CE gradient over examples [begin, end), evaluated at inputs(i).
template <typename InputFn>
BatchGradient batch_gradient(const Network& net, const Dataset& data, std::size_t begin, std::size_t end,
                             InputFn&& inputs) {
    const std::size_t n = end - begin;
    const double scale = 1.0 / static_cast<double>(n);
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    std::vector<Gradients> partial(chunks, Gradients(net.k(), net.m(), net.d()));
    std::vector<double> partial_loss(chunks, 0.0);
    parallel_for(chunks, [&](std::size_t c) {
        const std::size_t lo = begin + c * kChunk, hi = std::min(end, lo + kChunk);
        for (std::size_t i = lo; i < hi; ++i)
            partial_loss[c] += accumulate_ce_gradient(net, inputs(i), data.examples[i].label, scale, partial[c]);
    });
    BatchGradient out{std::move(partial[0]), partial_loss[0]};
    for (std::size_t c = 1; c < chunks; ++c) {
        for (std::size_t j = 0; j < out.grad.values.size(); ++j) out.grad.values[j] += partial[c].values[j];
        out.loss += partial_loss[c];
    }
    out.loss *= scale;
    return out;
}

void apply_update(Network& net, const Gradients& g, double eta) {
    for (std::size_t j = 0; j < g.values.size(); ++j) net.weights.values[j] -= eta * g.values[j];
}

void check_shapes(const Network& net, const Dataset& data) {
    if (data.d != net.d() || data.k != net.k()) throw DimensionError("training: dataset does not match network");
    if (data.empty()) throw std::invalid_argument("training: empty dataset");
}

void guard(const Network& net, double loss, double limit, std::size_t epoch) {
    if (!std::isfinite(loss) || loss > limit)
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ": loss " +
                              std::to_string(loss));
    if (!net.all_finite())
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ": nonfinite weight");
}

std::vector<std::pair<std::size_t, std::size_t>> batches(std::size_t n, std::size_t batch_size) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    const std::size_t b = batch_size == 0 ? n : batch_size;
    for (std::size_t lo = 0; lo < n; lo += b) out.emplace_back(lo, std::min(n, lo + b));
    return out;
}

struct StepOutcome {
    Network net;
    double loss = 0.0;
};

StepOutcome standard_range(const Network& net, const Dataset& data, std::size_t begin, std::size_t end,
                           double eta) {
    auto bg = batch_gradient(net, data, begin, end, [&](std::size_t i) -> const Patches& {
        return data.examples[i].x;
    });
    StepOutcome out{net, bg.loss};
    apply_update(out.net, bg.grad, eta);
    return out;
}

StepOutcome adversarial_range(const Network& net, const Dataset& data, std::size_t begin, std::size_t end,
                              const TrainConfig& cfg, std::vector<Patches>* attacked) {
    std::vector<Patches> adv(end - begin);
    parallel_for(adv.size(), [&](std::size_t j) {
        const auto& ex = data.examples[begin + j];
        adv[j] = one_step_attack(net, ex.x, ex.label, cfg.eta_tilde, cfg.epsilon);
    });
    auto bg = batch_gradient(net, data, begin, end, [&](std::size_t i) -> const Patches& {
        return adv[i - begin];
    });
    StepOutcome out{net, bg.loss};
    apply_update(out.net, bg.grad, cfg.eta);
    if (attacked)
        for (auto& a : adv) attacked->push_back(std::move(a));
    return out;
}

}  // namespace

const char* to_string(TrainMode mode) { return mode == TrainMode::Standard ? "std" : "adv"; }

void TrainConfig::validate() const {
    if (!(eta > 0.0)) throw std::invalid_argument("TrainConfig: eta must be positive");
    if (mode == TrainMode::Adversarial) {
        if (!(eta_tilde > 0.0)) throw std::invalid_argument("TrainConfig: eta_tilde must be positive");
        if (!(epsilon > 0.0)) throw std::invalid_argument("TrainConfig: epsilon must be positive");
    }
    if (!(epsilon >= 0.0)) throw std::invalid_argument("TrainConfig: epsilon must be >= 0");
    if (attack_eval.steps == 0) throw std::invalid_argument("TrainConfig: PGD steps must be >= 1");
}

CorrelationRecord diagonal_correlations(const Network& net, const FeatureSet& fs, std::size_t epoch) {
    CorrelationRecord rec;
    rec.epoch = epoch;
    rec.corr_u.assign(net.k(), -std::numeric_limits<double>::infinity());
    rec.corr_v.assign(net.k(), -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < net.k(); ++i)
        for (std::size_t r = 0; r < net.m(); ++r) {
            const auto w = net.weights.filter(i, r);
            // Features are unit vectors, so the normalised correlation is a
            // single coordinate.
            rec.corr_u[i] = std::max(rec.corr_u[i], w[fs.coord(FeatureKind::Robust, i)]);
            rec.corr_v[i] = std::max(rec.corr_v[i], w[fs.coord(FeatureKind::NonRobust, i)]);
        }
    return rec;
}

double dataset_ce(const Network& net, const Dataset& data) {
    check_shapes(net, data);
    std::vector<double> losses(data.size());
    parallel_for(data.size(), [&](std::size_t i) {
        losses[i] = ce_loss(net, data.examples[i].x, data.examples[i].label);
    });
    double total = 0.0;
    for (double l : losses) total += l;
    return total / static_cast<double>(data.size());
}

Network standard_step(const Network& net, const Dataset& data, double eta) {
    check_shapes(net, data);
    auto out = standard_range(net, data, 0, data.size(), eta);
    if (!out.net.all_finite()) throw DivergenceError("standard_step: nonfinite weights after update");
    return std::move(out.net);
}

AdversarialStep adversarial_step(const Network& net, const Dataset& data, const TrainConfig& cfg) {
    check_shapes(net, data);
    AdversarialStep result;
    auto out = adversarial_range(net, data, 0, data.size(), cfg, &result.attacked);
    if (!out.net.all_finite() || !std::isfinite(out.loss))
        throw DivergenceError("adversarial_step: nonfinite values after update");
    result.net = std::move(out.net);
    result.loss = out.loss;
    return result;
}

TrainResult train(const Network& net0, const Dataset& data, const Dataset& test, const TrainConfig& cfg,
                  const FeatureSet& fs, const ProgressFn& progress) {
    cfg.validate();
    check_shapes(net0, data);
    check_shapes(net0, test);

    TrainResult res{net0, {}};
    TrainingTrace& trace = res.trace;
    trace.k = net0.k();
    trace.mode = cfg.mode;
    trace.pgd_steps = cfg.attack_eval.steps;
    trace.pgd_step_size = cfg.attack_eval.step_fraction * cfg.epsilon;

    const AttackSpec pgd = AttackSpec::pgd(cfg.epsilon, trace.pgd_steps, trace.pgd_step_size);
    auto log_metrics = [&](std::size_t epoch) {
        const CorrelationRecord corr = diagonal_correlations(res.net, fs, epoch);
        TraceRecord rec;
        rec.epoch = epoch;
        rec.train_ce = dataset_ce(res.net, data);
        rec.std_acc = evaluate(res.net, test, AttackSpec::none()).accuracy;
        const EvalReport robust = evaluate(res.net, test, pgd);
        if (!robust.radius_ok) throw std::logic_error("PGD evaluation left the epsilon ball");
        rec.rob_acc = robust.accuracy;
        rec.corr_u = corr.corr_u;
        rec.corr_v = corr.corr_v;
        rec.fl_acc_robust = feature_learning_accuracy(res.net, test, fs, FeatureKind::Robust).accuracy;
        rec.fl_acc_nonrobust = feature_learning_accuracy(res.net, test, fs, FeatureKind::NonRobust).accuracy;
        trace.records.push_back(rec);
        if (progress) progress(rec);
    };

    trace.dynamics.push_back(diagonal_correlations(res.net, fs, 0));
    log_metrics(0);

    const auto ranges = batches(data.size(), cfg.batch_size);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (const auto& [lo, hi] : ranges) {
            StepOutcome step = cfg.mode == TrainMode::Standard
                                   ? standard_range(res.net, data, lo, hi, cfg.eta)
                                   : adversarial_range(res.net, data, lo, hi, cfg, nullptr);
            epoch_loss += step.loss * static_cast<double>(hi - lo);
            res.net = std::move(step.net);
        }
        epoch_loss /= static_cast<double>(data.size());
        trace.step_loss.push_back(epoch_loss);
        guard(res.net, epoch_loss, cfg.divergence_loss, epoch);
        trace.dynamics.push_back(diagonal_correlations(res.net, fs, epoch));
        const bool due = cfg.eval_every != 0 && epoch % cfg.eval_every == 0;
        if (due || epoch == cfg.epochs) log_metrics(epoch);
    }
    return res;
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    return out;
}

}  // namespace

std::string trace_csv_header(std::size_t k) {
    std::string h = "epoch,train_ce,std_acc,rob_acc";
    for (std::size_t i = 1; i <= k; ++i) h += ",corr_u_" + std::to_string(i) + ",corr_v_" + std::to_string(i);
    h += ",fl_acc_R,fl_acc_NR";
    return h;
}

std::string trace_to_csv(const TrainingTrace& trace) {
    std::string out = trace_csv_header(trace.k) + "\n";
    for (const auto& r : trace.records) {
        out += std::to_string(r.epoch) + "," + fmt(r.train_ce) + "," + fmt(r.std_acc) + "," + fmt(r.rob_acc);
        for (std::size_t i = 0; i < trace.k; ++i) out += "," + fmt(r.corr_u[i]) + "," + fmt(r.corr_v[i]);
        out += "," + fmt(r.fl_acc_robust) + "," + fmt(r.fl_acc_nonrobust) + "\n";
    }
    return out;
}

TrainingTrace trace_from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument("trace csv: empty input");
    const auto header = split(line, ',');
    if (header.size() < 6 || (header.size() - 6) % 2 != 0 || header[0] != "epoch")
        throw std::invalid_argument("trace csv: unexpected header");
    TrainingTrace trace;
    trace.k = (header.size() - 6) / 2;
    if (line != trace_csv_header(trace.k)) throw std::invalid_argument("trace csv: missing columns");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != header.size()) throw std::invalid_argument("trace csv: ragged row");
        TraceRecord r;
        r.epoch = std::stoul(cells[0]);
        r.train_ce = std::stod(cells[1]);
        r.std_acc = std::stod(cells[2]);
        r.rob_acc = std::stod(cells[3]);
        for (std::size_t i = 0; i < trace.k; ++i) {
            r.corr_u.push_back(std::stod(cells[4 + 2 * i]));
            r.corr_v.push_back(std::stod(cells[5 + 2 * i]));
        }
        r.fl_acc_robust = std::stod(cells[4 + 2 * trace.k]);
        r.fl_acc_nonrobust = std::stod(cells[5 + 2 * trace.k]);
        trace.records.push_back(std::move(r));
    }
    return trace;
}

std::string dynamics_to_csv(const TrainingTrace& trace) {
    std::string out = "epoch";
    for (std::size_t i = 1; i <= trace.k; ++i) out += ",corr_u_" + std::to_string(i) + ",corr_v_" + std::to_string(i);
    out += "\n";
    for (const auto& r : trace.dynamics) {
        out += std::to_string(r.epoch);
        for (std::size_t i = 0; i < trace.k; ++i) out += "," + fmt(r.corr_u[i]) + "," + fmt(r.corr_v[i]);
        out += "\n";
    }
    return out;
}

std::string trace_to_json(const TrainingTrace& trace) {
    nlohmann::json j;
    j["k"] = trace.k;
    j["mode"] = to_string(trace.mode);
    j["pgd"] = {{"steps", trace.pgd_steps}, {"step_size", trace.pgd_step_size}, {"random_start", false}};
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : trace.records)
        recs.push_back({{"epoch", r.epoch},
                        {"train_ce", r.train_ce},
                        {"std_acc", r.std_acc},
                        {"rob_acc", r.rob_acc},
                        {"corr_u", r.corr_u},
                        {"corr_v", r.corr_v},
                        {"fl_acc_R", r.fl_acc_robust},
                        {"fl_acc_NR", r.fl_acc_nonrobust}});
    j["records"] = std::move(recs);
    return j.dump(1);
}

}  // namespace patchlab
