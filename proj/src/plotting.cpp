#include "patchlab/plotting.hpp"

#include "patchlab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <regex>
#include <sstream>
#include <stdexcept>

namespace patchlab {

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

void require_rows(const TrainingTrace& trace, const char* what) {
    if (trace.records.empty()) throw std::invalid_argument(std::string(what) + ": trace has no rows");
    for (const auto& r : trace.records)
        if (r.corr_u.size() != trace.k || r.corr_v.size() != trace.k)
            throw std::invalid_argument(std::string(what) + ": missing correlation columns");
}

}  // namespace

std::string correlation_csv(const TrainingTrace& trace) {
    require_rows(trace, "correlation_csv");
    std::string out = "epoch";
    for (std::size_t i = 1; i <= trace.k; ++i) out += ",corr_u_" + std::to_string(i) + ",corr_v_" + std::to_string(i);
    out += "\n";
    for (const auto& r : trace.records) {
        out += std::to_string(r.epoch);
        for (std::size_t i = 0; i < trace.k; ++i) out += "," + fmt(r.corr_u[i]) + "," + fmt(r.corr_v[i]);
        out += "\n";
    }
    return out;
}

std::string learning_curve_csv(const TrainingTrace& trace) {
    require_rows(trace, "learning_curve_csv");
    std::string out = "epoch,train_ce,std_acc,rob_acc\n";
    for (const auto& r : trace.records)
        out += std::to_string(r.epoch) + "," + fmt(r.train_ce) + "," + fmt(r.std_acc) + "," + fmt(r.rob_acc) + "\n";
    return out;
}

TrainingTrace mean_trace(const std::vector<LabeledTrace>& traces) {
    if (traces.empty()) throw std::invalid_argument("mean_trace: no traces");
    TrainingTrace out = traces.front().trace;
    require_rows(out, "mean_trace");
    out.dynamics.clear();
    out.step_loss.clear();
    const double n = static_cast<double>(traces.size());
    for (std::size_t t = 1; t < traces.size(); ++t) {
        const auto& tr = traces[t].trace;
        if (tr.k != out.k || tr.records.size() != out.records.size())
            throw std::invalid_argument("mean_trace: traces do not share an epoch grid");
        for (std::size_t j = 0; j < tr.records.size(); ++j) {
            const auto& a = tr.records[j];
            auto& m = out.records[j];
            if (a.epoch != m.epoch) throw std::invalid_argument("mean_trace: epoch mismatch");
            m.train_ce += a.train_ce;
            m.std_acc += a.std_acc;
            m.rob_acc += a.rob_acc;
            m.fl_acc_robust += a.fl_acc_robust;
            m.fl_acc_nonrobust += a.fl_acc_nonrobust;
            for (std::size_t i = 0; i < out.k; ++i) {
                m.corr_u[i] += a.corr_u[i];
                m.corr_v[i] += a.corr_v[i];
            }
        }
    }
    for (auto& m : out.records) {
        m.train_ce /= n;
        m.std_acc /= n;
        m.rob_acc /= n;
        m.fl_acc_robust /= n;
        m.fl_acc_nonrobust /= n;
        for (std::size_t i = 0; i < out.k; ++i) {
            m.corr_u[i] /= n;
            m.corr_v[i] /= n;
        }
    }
    return out;
}

std::string render_svg(const std::string& title, const std::string& y_label, const std::vector<Series>& series) {
    constexpr double W = 640, H = 400, L = 60, R = 150, T = 36, B = 44;
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    bool first = true;
    for (const auto& s : series)
        for (std::size_t j = 0; j < s.x.size(); ++j) {
            if (!std::isfinite(s.y[j])) continue;
            if (first) {
                x0 = x1 = s.x[j];
                y0 = y1 = s.y[j];
                first = false;
            }
            x0 = std::min(x0, s.x[j]);
            x1 = std::max(x1, s.x[j]);
            y0 = std::min(y0, s.y[j]);
            y1 = std::max(y1, s.y[j]);
        }
    y0 = std::min(y0, 0.0);
    if (x1 <= x0) x1 = x0 + 1;
    if (y1 <= y0) y1 = y0 + 1;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double xv = x0 + (x1 - x0) * t / 4.0, yv = y0 + (y1 - y0) * t / 4.0;
        os << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << std::setprecision(0)
           << xv << "</text>\n";
        os << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << std::setprecision(2)
           << yv << "</text>\n";
    }
    os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 8 << "\" text-anchor=\"middle\">epoch</text>\n";
    os << "<text x=\"14\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
       << (T + H - B) / 2 << ")\">" << y_label << "</text>\n";
    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* c = colors[si % 6];
        os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t j = 0; j < s.x.size(); ++j)
            if (std::isfinite(s.y[j])) os << px(s.x[j]) << "," << py(s.y[j]) << " ";
        os << "\"/>\n";
        const double ly = T + 14 + 18.0 * static_cast<double>(si);
        os << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly
           << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << W - R + 36 << "\" y=\"" << ly + 4 << "\">" << s.name << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

namespace {

std::vector<double> epochs_of(const TrainingTrace& t) {
    std::vector<double> x;
    for (const auto& r : t.records) x.push_back(static_cast<double>(r.epoch));
    return x;
}

std::vector<Series> correlation_series(const TrainingTrace& t) {
    std::vector<Series> out;
    const auto x = epochs_of(t);
    for (std::size_t i = 0; i < t.k; ++i) {
        Series u{"u_" + std::to_string(i + 1), x, {}}, v{"v_" + std::to_string(i + 1), x, {}};
        for (const auto& r : t.records) {
            u.y.push_back(r.corr_u[i]);
            v.y.push_back(r.corr_v[i]);
        }
        out.push_back(std::move(u));
        out.push_back(std::move(v));
    }
    return out;
}

std::vector<Series> curve_series(const TrainingTrace& t) {
    const auto x = epochs_of(t);
    Series ce{"train CE", x, {}}, sa{"std acc", x, {}}, ra{"robust acc", x, {}};
    for (const auto& r : t.records) {
        ce.y.push_back(r.train_ce);
        sa.y.push_back(r.std_acc);
        ra.y.push_back(r.rob_acc);
    }
    return {ce, sa, ra};
}

}  // namespace

std::vector<std::filesystem::path> emit_plot_data(const std::vector<LabeledTrace>& std_traces,
                                                  const std::vector<LabeledTrace>& adv_traces,
                                                  const std::filesystem::path& out_dir, bool svg) {
    if (std_traces.empty() && adv_traces.empty()) throw std::invalid_argument("emit_plot_data: no traces");
    std::vector<std::filesystem::path> written;
    auto put = [&](const std::string& name, const std::string& text) {
        write_text(out_dir / name, text);
        written.push_back(out_dir / name);
    };
    for (const auto& [mode, traces] : {std::pair{"std", &std_traces}, std::pair{"adv", &adv_traces}}) {
        if (traces->empty()) continue;
        const std::string m = mode;
        for (const auto& lt : *traces) {
            put("fig4_" + m + "_correlations_" + lt.label + ".csv", correlation_csv(lt.trace));
            put("fig4_" + m + "_curves_" + lt.label + ".csv", learning_curve_csv(lt.trace));
        }
        const TrainingTrace mean = mean_trace(*traces);
        put("fig4_" + m + "_correlations_mean.csv", correlation_csv(mean));
        put("fig4_" + m + "_curves_mean.csv", learning_curve_csv(mean));
        if (svg) {
            const std::string which = m == "std" ? "standard" : "adversarial";
            put("fig4_" + m + "_correlations.svg",
                render_svg(which + " training: weight-feature correlations", "max_r <w, f>", correlation_series(mean)));
            put("fig4_" + m + "_curves.svg", render_svg(which + " training: learning curves", "", curve_series(mean)));
        }
    }
    return written;
}

std::vector<LabeledTrace> load_run_traces(const std::filesystem::path& run_dir) {
    if (!std::filesystem::is_directory(run_dir))
        throw std::invalid_argument("not a run directory: " + run_dir.string());
    static const std::regex pat("trace_seed([0-9]+)\\.csv");
    std::vector<std::pair<unsigned long long, LabeledTrace>> found;
    for (const auto& entry : std::filesystem::directory_iterator(run_dir)) {
        std::smatch mt;
        const std::string name = entry.path().filename().string();
        if (!std::regex_match(name, mt, pat)) continue;
        TrainingTrace t = trace_from_csv(read_text(entry.path()));
        if (t.records.empty()) throw std::invalid_argument(name + ": trace has no rows");
        found.push_back({std::stoull(mt[1]), {"seed" + mt[1].str(), std::move(t)}});
    }
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<LabeledTrace> out;
    for (auto& f : found) out.push_back(std::move(f.second));
    return out;
}

}  // namespace patchlab
