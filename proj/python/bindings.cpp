#include "patchlab/experiments.hpp"
#include "patchlab/plotting.hpp"

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace patchlab;

namespace {

ExperimentConfig cfg_from(const std::string& json) { return json.empty() ? default_config() : config_from_json(json); }

TrainMode mode_from(const std::string& m) {
    if (m == "std") return TrainMode::Standard;
    if (m == "adv") return TrainMode::Adversarial;
    throw py::value_error("mode must be 'std' or 'adv'");
}

FeatureKind kind_from(const std::string& k) {
    if (k == "robust") return FeatureKind::Robust;
    if (k == "nonrobust") return FeatureKind::NonRobust;
    throw py::value_error("kind must be 'robust' or 'nonrobust'");
}

Patches patches_from(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw py::value_error("need at least one patch");
    Patches p(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != p.d) throw py::value_error("ragged patches");
        std::copy(rows[i].begin(), rows[i].end(), p.patch(i).begin());
    }
    return p;
}

std::vector<std::vector<double>> patches_to(const Patches& p) {
    std::vector<std::vector<double>> out(p.P);
    for (std::size_t i = 0; i < p.P; ++i) out[i].assign(p.patch(i).begin(), p.patch(i).end());
    return out;
}

}  // namespace

PYBIND11_MODULE(_patchlab, m) {
    m.doc() = "robust vs non-robust feature learning on patch data";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

    py::class_<Activation>(m, "Activation")
        .def(py::init([](int q, double rho) {
                 Activation a{q, rho};
                 a.validate();
                 return a;
             }),
             py::arg("q") = 3, py::arg("rho") = 1.0)
        .def_readonly("q", &Activation::q)
        .def_readonly("rho", &Activation::rho);

    m.def("srelu", [](double z, const Activation& a) { return srelu(a, z); }, py::arg("z"),
          py::arg("act") = Activation{});
    m.def("srelu_prime", [](double z, const Activation& a) { return srelu_prime(a, z); }, py::arg("z"),
          py::arg("act") = Activation{});

    py::class_<Network>(m, "Network")
        .def_property_readonly("k", &Network::k)
        .def_property_readonly("m", &Network::m)
        .def_property_readonly("d", &Network::d)
        .def_property_readonly("act", [](const Network& n) { return n.act; })
        .def("weights", [](const Network& n) { return n.weights.values; }, "flattened (class, filter, coord)")
        .def("forward", [](const Network& n, const std::vector<std::vector<double>>& x) {
            return forward(n, patches_from(x));
        })
        .def("predict", [](const Network& n, const std::vector<std::vector<double>>& x) {
            return predict(n, patches_from(x));
        })
        .def("ce_loss", [](const Network& n, const std::vector<std::vector<double>>& x, std::size_t y) {
            return ce_loss(n, patches_from(x), y);
        })
        .def("to_json", &network_to_json)
        .def_static("from_json", &network_from_json)
        .def("__eq__", [](const Network& a, const Network& b) { return a == b; });

    m.def(
        "init_network",
        [](std::size_t k, std::size_t mm, std::size_t d, double sigma0, std::uint64_t seed, const Activation& act) {
            Rng rng(seed);
            return init_network(k, mm, d, sigma0, act, rng);
        },
        py::arg("k"), py::arg("m"), py::arg("d"), py::arg("sigma0"), py::arg("seed"), py::arg("act") = Activation{});
    m.def(
        "rank_one_network",
        [](std::size_t k, std::size_t d, double gamma, const std::string& kind, const Activation& act) {
            return make_rank_one_network(build_feature_set(k, d), gamma, kind_from(kind), act);
        },
        py::arg("k"), py::arg("d"), py::arg("gamma"), py::arg("kind"), py::arg("act") = Activation{});

    m.def(
        "sample_dataset",
        [](std::size_t n, std::uint64_t seed, const std::string& config_json) {
            const ExperimentConfig c = cfg_from(config_json);
            const Dataset data = sample_dataset(c.data, build_feature_set(c.data.k, c.data.d), n, seed);
            py::list out;
            for (const auto& ex : data.examples) out.append(py::make_tuple(patches_to(ex.x), ex.label));
            return out;
        },
        py::arg("n"), py::arg("seed"), py::arg("config_json") = "",
        "list of (patches, label); patches is a P x d nested list");

    m.def(
        "pgd_attack",
        [](const Network& net, const std::vector<std::vector<double>>& x, std::size_t y, double eps,
           double step, std::size_t steps) { return patches_to(pgd_attack(net, patches_from(x), y, eps, steps, step)); },
        py::arg("net"), py::arg("x"), py::arg("y"), py::arg("eps"), py::arg("step_size"), py::arg("steps") = 20);
    m.def(
        "one_step_attack",
        [](const Network& net, const std::vector<std::vector<double>>& x, std::size_t y, double eta_tilde,
           double eps) { return patches_to(one_step_attack(net, patches_from(x), y, eta_tilde, eps)); },
        py::arg("net"), py::arg("x"), py::arg("y"), py::arg("eta_tilde"), py::arg("eps"));

    m.def("default_config_json", [] { return config_to_json(default_config()); });
    m.def("validate_config_json", [](const std::string& j) { return config_to_json(config_from_json(j)); });

    m.def(
        "run_seed",
        [](const std::string& config_json, const std::string& mode, std::uint64_t seed) {
            const ExperimentConfig c = cfg_from(config_json);
            SeedResult r;
            {
                py::gil_scoped_release release;
                r = run_seed(c, mode_from(mode), seed);
            }
            py::dict d;
            d["trace_csv"] = trace_to_csv(r.run.trace);
            d["dynamics_csv"] = dynamics_to_csv(r.run.trace);
            d["network"] = r.run.net;
            d["clean_acc"] = r.clean.accuracy;
            d["pgd_acc"] = r.pgd.accuracy;
            d["swap_acc"] = r.swap.accuracy;
            d["swap_target_rate"] = r.swap.target_rate;
            d["fl_acc_robust"] = r.fl_robust.accuracy;
            d["fl_acc_nonrobust"] = r.fl_nonrobust.accuracy;
            return d;
        },
        py::arg("config_json") = "", py::arg("mode") = "std", py::arg("seed") = 1);

    m.def(
        "run_experiment",
        [](const std::string& out_dir, const std::string& mode, const std::string& config_json) {
            const ExperimentConfig c = cfg_from(config_json);
            py::gil_scoped_release release;
            return run_experiment(c, mode_from(mode), out_dir).json;
        },
        py::arg("out_dir"), py::arg("mode") = "std", py::arg("config_json") = "", "returns the summary JSON");

    m.def(
        "props_check",
        [](double gamma, const std::string& config_json, std::uint64_t seed) {
            return run_props_check(gamma, cfg_from(config_json), seed).json;
        },
        py::arg("gamma") = 100.0, py::arg("config_json") = "", py::arg("seed") = 1);
    m.def(
        "gradcheck", [](std::size_t trials, std::uint64_t seed) { return run_gradcheck(trials, seed).json; },
        py::arg("trials") = 100, py::arg("seed") = 1);
    m.def(
        "lockstep",
        [](const std::string& mode, std::size_t epochs, const std::string& config_json) {
            const LockstepReport r = run_lockstep(cfg_from(config_json), mode_from(mode), epochs);
            return py::make_tuple(r.divergence.max_divergence, r.coefficient_max);
        },
        py::arg("mode") = "std", py::arg("epochs") = 100, py::arg("config_json") = "",
        "(max diagonal divergence, max coefficient divergence)");
    m.def(
        "tensor_power_check",
        [](double x0, double y0, double S, double eta, int q, double target) {
            const TensorPowerReport r =
                tensor_power_check(x0, y0, S, [](std::size_t) { return 1.0; }, eta, q, target);
            py::dict d;
            d["hypothesis_ok"] = r.hypothesis_ok;
            d["converged"] = r.converged;
            d["x_first"] = r.x_first;
            d["steps"] = r.steps;
            d["ratio"] = r.ratio;
            return d;
        },
        py::arg("x0"), py::arg("y0"), py::arg("S"), py::arg("eta") = 1e-4, py::arg("q") = 3, py::arg("target") = 1.0);
    m.def(
        "emit_plot_data",
        [](const std::string& out_dir, const std::string& std_dir, const std::string& adv_dir) {
            std::vector<LabeledTrace> s, a;
            if (!std_dir.empty()) s = load_run_traces(std_dir);
            if (!adv_dir.empty()) a = load_run_traces(adv_dir);
            std::vector<std::string> out;
            for (const auto& p : emit_plot_data(s, a, out_dir)) out.push_back(p.string());
            return out;
        },
        py::arg("out_dir"), py::arg("std_dir") = "", py::arg("adv_dir") = "");
}
