#include "patchlab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace patchlab {

namespace {

void check_fs(const Network& net, const FeatureSet& fs) {
    if (fs.k != net.k() || fs.d != net.d()) throw DimensionError("diagnostics: feature set does not match network");
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace

WeightDecomposition decompose(const Network& net, const FeatureSet& fs) {
    check_fs(net, fs);
    const std::size_t k = net.k(), m = net.m(), d = net.d();
    WeightDecomposition dec;
    dec.k = k;
    dec.m = m;
    dec.A.assign(k * m, 0.0);
    dec.B.assign(k * m, 0.0);
    dec.C.assign(k * m * k, 0.0);
    dec.D.assign(k * m * k, 0.0);
    dec.residual = WeightTensor(k, m, d);
    dec.residual_norms.assign(k * m, 0.0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t r = 0; r < m; ++r) {
            const auto w = net.weights.filter(i, r);
            auto res = dec.residual.filter(i, r);
            std::copy(w.begin(), w.end(), res.begin());
            for (std::size_t j = 0; j < k; ++j) {
                const double cu = dot(w, fs.robust[j]);
                const double cv = dot(w, fs.nonrobust[j]);
                if (j == i) {
                    dec.A[i * m + r] = cu;
                    dec.B[i * m + r] = cv;
                } else {
                    dec.C[(i * m + r) * k + j] = cu;
                    dec.D[(i * m + r) * k + j] = cv;
                }
                for (std::size_t c = 0; c < d; ++c) res[c] -= cu * fs.robust[j][c] + cv * fs.nonrobust[j][c];
            }
            dec.residual_norms[i * m + r] = std::sqrt(dot(res, res));
        }
    return dec;
}

WeightTensor reconstruct(const WeightDecomposition& dec, const FeatureSet& fs) {
    WeightTensor w = dec.residual;
    for (std::size_t i = 0; i < dec.k; ++i)
        for (std::size_t r = 0; r < dec.m; ++r) {
            auto f = w.filter(i, r);
            for (std::size_t j = 0; j < dec.k; ++j) {
                const double cu = j == i ? dec.a(i, r) : dec.c(i, r, j);
                const double cv = j == i ? dec.b(i, r) : dec.dd(i, r, j);
                for (std::size_t c = 0; c < w.d; ++c) f[c] += cu * fs.robust[j][c] + cv * fs.nonrobust[j][c];
            }
        }
    return w;
}

Network project_onto_features(const Network& net, const FeatureSet& fs) {
    const auto dec = decompose(net, fs);
    Network out = net;
    for (std::size_t j = 0; j < out.weights.values.size(); ++j) out.weights.values[j] -= dec.residual.values[j];
    return out;
}

void OracleConfig::validate() const {
    if (k == 0 || m == 0) throw std::invalid_argument("OracleConfig: k and m must be positive");
    if (!(alpha > 0.0) || !(beta > 0.0)) throw std::invalid_argument("OracleConfig: coefficients must be positive");
    if (!class_weights.empty() && class_weights.size() != k)
        throw std::invalid_argument("OracleConfig: class_weights must have k entries");
    act.validate();
}

OracleState OracleState::zeros(const OracleConfig& cfg, TrainMode mode) {
    cfg.validate();
    OracleState s;
    s.config = cfg;
    s.mode = mode;
    s.coef.assign(cfg.k * cfg.m * 2 * cfg.k, 0.0);
    return s;
}

double OracleState::max_A(std::size_t i) const {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < config.m; ++r) mx = std::max(mx, A(i, r));
    return mx;
}

double OracleState::max_B(std::size_t i) const {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < config.m; ++r) mx = std::max(mx, B(i, r));
    return mx;
}

OracleState oracle_state_from_network(const Network& net, const FeatureSet& fs, const OracleConfig& cfg,
                                      TrainMode mode) {
    check_fs(net, fs);
    if (cfg.k != net.k() || cfg.m != net.m()) throw DimensionError("oracle_state_from_network: shape mismatch");
    OracleState s = OracleState::zeros(cfg, mode);
    for (std::size_t i = 0; i < cfg.k; ++i)
        for (std::size_t r = 0; r < cfg.m; ++r)
            for (std::size_t j = 0; j < cfg.k; ++j) {
                s.u(i, r, j) = dot(net.weights.filter(i, r), fs.robust[j]);
                s.v(i, r, j) = dot(net.weights.filter(i, r), fs.nonrobust[j]);
            }
    return s;
}

std::vector<double> class_weights_of(const Dataset& data) {
    std::vector<double> w(data.k, 0.0);
    for (const auto& ex : data.examples) w[ex.label] += 1.0;
    for (double& v : w) v /= static_cast<double>(data.size());
    return w;
}

std::vector<double> oracle_logits(const OracleState& s, std::size_t y) {
    const auto& cfg = s.config;
    std::vector<double> F(cfg.k, 0.0);
    for (std::size_t i = 0; i < cfg.k; ++i)
        for (std::size_t r = 0; r < cfg.m; ++r)
            F[i] += cfg.jr_count * srelu(cfg.act, cfg.alpha * s.u(i, r, y)) +
                    cfg.jnr_count * srelu(cfg.act, cfg.beta * s.v(i, r, y));
    return softmax_logits(F);
}

// Clean inputs only touch the class-y coordinates, so each filter's update
// reduces to the two diagonal-style recursions on (u_y, v_y).
OracleState oracle_step_standard(const OracleState& s) {
    if (s.mode != TrainMode::Standard) throw std::invalid_argument("oracle_step_standard: state is not standard");
    const auto& cfg = s.config;
    OracleState next = s;
    for (std::size_t y = 0; y < cfg.k; ++y) {
        const auto logits = oracle_logits(s, y);
        const double pi = cfg.class_weight(y);
        for (std::size_t i = 0; i < cfg.k; ++i) {
            const double dloss = (i == y ? 1.0 : 0.0) - logits[i];
            for (std::size_t r = 0; r < cfg.m; ++r) {
                const double a = s.u(i, r, y), b = s.v(i, r, y);
                next.u(i, r, y) += cfg.eta * pi * dloss * cfg.jr_count * srelu_prime(cfg.act, cfg.alpha * a) * cfg.alpha;
                next.v(i, r, y) += cfg.eta * pi * dloss * cfg.jnr_count * srelu_prime(cfg.act, cfg.beta * b) * cfg.beta;
            }
        }
    }
    ++next.t;
    for (double c : next.coef)
        if (!std::isfinite(c)) throw DivergenceError("oracle_step_standard: nonfinite coefficient");
    return next;
}

OracleState oracle_step_adversarial(const OracleState& s, AdversarialCoefficients* info) {
    if (s.mode != TrainMode::Adversarial)
        throw std::invalid_argument("oracle_step_adversarial: state is not adversarial");
    const auto& cfg = s.config;
    const std::size_t k = cfg.k, m = cfg.m, nc = 2 * k;
    OracleState next = s;
    if (info) {
        info->alpha_tilde.assign(k, 0.0);
        info->beta_tilde.assign(k, 0.0);
        info->robust_saturated.assign(k, false);
        info->nonrobust_saturated.assign(k, false);
    }
    auto coef = [&](std::size_t i, std::size_t r, std::size_t c) { return s.coef[(i * m + r) * nc + c]; };

    for (std::size_t y = 0; y < k; ++y) {
        // Adversarial patch coordinates in the feature basis, robust patch
        // (base alpha u_y) and non-robust patch (base beta v_y).
        std::vector<double> xr(nc, 0.0), xn(nc, 0.0);
        xr[y] = cfg.alpha;
        xn[k + y] = cfg.beta;
        std::vector<double> gr(nc, 0.0), gn(nc, 0.0);
        for (std::size_t sidx = 0; sidx < m; ++sidx) {
            const double dr = srelu_prime(cfg.act, cfg.alpha * coef(y, sidx, y));
            const double dn = srelu_prime(cfg.act, cfg.beta * coef(y, sidx, k + y));
            for (std::size_t c = 0; c < nc; ++c) {
                gr[c] += dr * coef(y, sidx, c);
                gn[c] += dn * coef(y, sidx, c);
            }
        }
        for (std::size_t c = 0; c < nc; ++c) {
            // The input gradient of -F_y is -sum_s srelu'(.) w_{y,s}; the
            // clip acts on each coordinate.
            xr[c] += std::clamp(-cfg.eta_tilde * gr[c], -cfg.epsilon, cfg.epsilon);
            xn[c] += std::clamp(-cfg.eta_tilde * gn[c], -cfg.epsilon, cfg.epsilon);
        }
        if (info) {
            info->alpha_tilde[y] = xr[y];
            info->beta_tilde[y] = xn[k + y];
            info->robust_saturated[y] = cfg.eta_tilde * gr[y] >= cfg.epsilon;
            info->nonrobust_saturated[y] = cfg.eta_tilde * gn[k + y] >= cfg.epsilon;
        }

        std::vector<double> zr(k * m), zn(k * m), F(k, 0.0);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t r = 0; r < m; ++r) {
                double a = 0.0, b = 0.0;
                for (std::size_t c = 0; c < nc; ++c) {
                    a += coef(i, r, c) * xr[c];
                    b += coef(i, r, c) * xn[c];
                }
                zr[i * m + r] = a;
                zn[i * m + r] = b;
                F[i] += cfg.jr_count * srelu(cfg.act, a) + cfg.jnr_count * srelu(cfg.act, b);
            }
        const auto logits = softmax_logits(F);
        const double pi = cfg.class_weight(y);
        for (std::size_t i = 0; i < k; ++i) {
            const double dloss = (i == y ? 1.0 : 0.0) - logits[i];
            for (std::size_t r = 0; r < m; ++r) {
                const double sr = cfg.jr_count * srelu_prime(cfg.act, zr[i * m + r]);
                const double sn = cfg.jnr_count * srelu_prime(cfg.act, zn[i * m + r]);
                for (std::size_t c = 0; c < nc; ++c)
                    next.coef[(i * m + r) * nc + c] += cfg.eta * pi * dloss * (sr * xr[c] + sn * xn[c]);
            }
        }
    }
    ++next.t;
    for (double c : next.coef)
        if (!std::isfinite(c)) throw DivergenceError("oracle_step_adversarial: nonfinite coefficient");
    return next;
}

namespace {

OracleRecord record_of(const OracleState& s) {
    OracleRecord rec;
    rec.t = s.t;
    for (std::size_t i = 0; i < s.config.k; ++i) {
        rec.max_A.push_back(s.max_A(i));
        rec.max_B.push_back(s.max_B(i));
    }
    return rec;
}

}  // namespace

OracleTrajectory run_oracle(const OracleState& init, std::size_t T) {
    OracleTrajectory traj;
    traj.final_state = init;
    traj.records.push_back(record_of(init));
    for (std::size_t t = 0; t < T; ++t) {
        traj.final_state = traj.final_state.mode == TrainMode::Standard ? oracle_step_standard(traj.final_state)
                                                                        : oracle_step_adversarial(traj.final_state);
        traj.records.push_back(record_of(traj.final_state));
    }
    return traj;
}

std::string trajectory_to_csv(const OracleTrajectory& traj) {
    const std::size_t k = traj.final_state.config.k;
    std::string out = "epoch";
    for (std::size_t i = 1; i <= k; ++i) out += ",maxA_" + std::to_string(i) + ",maxB_" + std::to_string(i);
    out += "\n";
    for (const auto& r : traj.records) {
        out += std::to_string(r.t);
        for (std::size_t i = 0; i < k; ++i) out += "," + fmt(r.max_A[i]) + "," + fmt(r.max_B[i]);
        out += "\n";
    }
    return out;
}

TensorPowerReport tensor_power_check(double x0, double y0, double S, const std::function<double(std::size_t)>& c_t,
                                     double eta, int q, double a_target, std::size_t max_iters, double gap) {
    if (!(x0 > 0.0) || !(y0 > 0.0)) throw std::invalid_argument("tensor_power_check: x0 and y0 must be positive");
    if (q < 3) throw std::invalid_argument("tensor_power_check: q must be >= 3");
    TensorPowerReport rep;
    rep.hypothesis_ok = x0 >= y0 * std::pow(S, 1.0 / (q - 2)) * (1.0 + gap);
    double x = x0, y = y0;
    bool y_crossed = false;
    std::size_t t = 0;
    for (; t < max_iters && x < a_target; ++t) {
        const double c = c_t(t);
        const double xn = x + eta * c * std::pow(x, q - 1);
        const double yn = y + eta * S * c * std::pow(y, q - 1);
        x = xn;
        y = std::isfinite(yn) ? yn : std::numeric_limits<double>::infinity();
        if (y >= a_target) y_crossed = true;
    }
    rep.steps = t;
    rep.x_final = x;
    rep.converged = x >= a_target;
    // A tie in the same step counts against x.
    rep.x_first = rep.converged && !y_crossed;
    rep.y_at_cross = y;
    rep.ratio = y / y0;
    return rep;
}

DivergenceReport compare_trace(const TrainingTrace& sim, const OracleTrajectory& oracle, std::size_t t_cmp) {
    DivergenceReport rep;
    const std::size_t k = oracle.final_state.config.k;
    if (sim.k != k) throw std::invalid_argument("compare_trace: class count mismatch");
    for (const auto& rec : sim.dynamics) {
        if (t_cmp != 0 && rec.epoch > t_cmp) break;
        if (rec.epoch >= oracle.records.size() || oracle.records[rec.epoch].t != rec.epoch)
            throw std::invalid_argument("compare_trace: epoch grid mismatch at epoch " + std::to_string(rec.epoch));
        const auto& o = oracle.records[rec.epoch];
        double da = 0.0, db = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            da = std::max(da, std::abs(rec.corr_u[i] - o.max_A[i]));
            db = std::max(db, std::abs(rec.corr_v[i] - o.max_B[i]));
        }
        rep.epochs.push_back(rec.epoch);
        rep.diff_A.push_back(da);
        rep.diff_B.push_back(db);
        rep.max_divergence = std::max({rep.max_divergence, da, db});
    }
    if (rep.epochs.empty()) throw std::invalid_argument("compare_trace: no overlapping epochs");
    return rep;
}

std::string divergence_to_csv(const DivergenceReport& rep) {
    std::string out = "epoch,diff_maxA,diff_maxB\n";
    for (std::size_t j = 0; j < rep.epochs.size(); ++j)
        out += std::to_string(rep.epochs[j]) + "," + fmt(rep.diff_A[j]) + "," + fmt(rep.diff_B[j]) + "\n";
    return out;
}

double coefficient_divergence(const WeightDecomposition& dec, const OracleState& s) {
    if (dec.k != s.config.k || dec.m != s.config.m) throw DimensionError("coefficient_divergence: shape mismatch");
    double mx = 0.0;
    for (std::size_t i = 0; i < dec.k; ++i)
        for (std::size_t r = 0; r < dec.m; ++r)
            for (std::size_t j = 0; j < dec.k; ++j) {
                const double cu = j == i ? dec.a(i, r) : dec.c(i, r, j);
                const double cv = j == i ? dec.b(i, r) : dec.dd(i, r, j);
                mx = std::max({mx, std::abs(cu - s.u(i, r, j)), std::abs(cv - s.v(i, r, j))});
            }
    return mx;
}

std::vector<std::optional<std::size_t>> first_crossing(const std::vector<CorrelationRecord>& dynamics,
                                                        FeatureKind kind, double threshold) {
    if (dynamics.empty()) return {};
    std::vector<std::optional<std::size_t>> out(dynamics.front().corr_u.size());
    for (const auto& rec : dynamics) {
        const auto& series = kind == FeatureKind::Robust ? rec.corr_u : rec.corr_v;
        for (std::size_t i = 0; i < out.size(); ++i)
            if (!out[i] && series[i] >= threshold) out[i] = rec.epoch;
    }
    return out;
}

std::vector<std::optional<std::size_t>> first_crossing(const OracleTrajectory& traj, FeatureKind kind,
                                                        double threshold) {
    std::vector<std::optional<std::size_t>> out(traj.final_state.config.k);
    for (const auto& rec : traj.records) {
        const auto& series = kind == FeatureKind::Robust ? rec.max_A : rec.max_B;
        for (std::size_t i = 0; i < out.size(); ++i)
            if (!out[i] && series[i] >= threshold) out[i] = rec.t;
    }
    return out;
}

}  // namespace patchlab
