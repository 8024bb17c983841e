#include "patchlab/experiments.hpp"
#include "patchlab/plotting.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

using namespace patchlab;

namespace {

struct Common {
    std::string config;
    std::vector<std::uint64_t> seeds;
    std::string out;
    std::size_t epochs = 0;
    bool epochs_set = false;
    bool quiet = false;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "experiment config (JSON, comments allowed)")->check(CLI::ExistingFile);
    app->add_option("--seed", c.seeds, "seed; repeat for several")->take_all();
    app->add_option("--out", c.out, "output directory");
    app->add_option("--epochs", c.epochs, "override train.epochs");
    app->add_flag("--quiet", c.quiet, "no progress output");
}

ExperimentConfig resolve(const Common& c) {
    ExperimentConfig cfg = c.config.empty() ? default_config() : load_config(c.config);
    if (!c.seeds.empty()) cfg.seeds = c.seeds;
    if (c.epochs_set) cfg.train.epochs = c.epochs;
    if (!c.out.empty()) cfg.output_dir = c.out;
    cfg.validate();
    return cfg;
}

TrainMode parse_mode(const std::string& s) { return s == "adv" ? TrainMode::Adversarial : TrainMode::Standard; }

int train_cmd(const Common& c, TrainMode mode) {
    const ExperimentConfig cfg = resolve(c);
    SeedProgress progress;
    if (!c.quiet)
        progress = [](std::uint64_t seed, const TraceRecord& r) {
            std::fprintf(stderr, "seed %llu epoch %5zu  ce %.4g  std %.3f  rob %.3f  u %.3f  v %.3f\n",
                         static_cast<unsigned long long>(seed), r.epoch, r.train_ce, r.std_acc, r.rob_acc,
                         r.corr_u.empty() ? 0.0 : r.corr_u[0], r.corr_v.empty() ? 0.0 : r.corr_v[0]);
        };
    const ExperimentSummary s = run_experiment(cfg, mode, cfg.output_dir, progress);
    bool ok = true;
    for (const auto& r : s.seeds) ok = ok && r.pgd.radius_ok && r.run.net.all_finite();
    std::cout << s.json;
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"patchlab: robust vs non-robust feature learning on patch data"};
    app.require_subcommand(1);

    Common c_std, c_adv, c_props, c_grad, c_oracle;
    auto* std_cmd = app.add_subcommand("train-std", "standard training over the configured seeds");
    add_common(std_cmd, c_std);
    auto* adv_cmd = app.add_subcommand("train-adv", "adversarial training over the configured seeds");
    add_common(adv_cmd, c_adv);

    auto* props = app.add_subcommand("props-check", "measure the two rank-one global minima");
    add_common(props, c_props);
    double gamma = 0.0;
    props->add_option("--gamma", gamma, "filter scale (default: config props_gamma)");

    auto* grad = app.add_subcommand("gradcheck", "analytic vs finite-difference gradients");
    add_common(grad, c_grad);
    std::size_t trials = 100;
    double tol = 1e-6;
    grad->add_option("--trials", trials, "random instances")->check(CLI::PositiveNumber);
    grad->add_option("--tol", tol, "max relative error");

    auto* oracle = app.add_subcommand("oracle-compare", "simulator vs coefficient oracle");
    add_common(oracle, c_oracle);
    std::size_t lock_epochs = 100;
    oracle->add_option("--lockstep-epochs", lock_epochs, "epochs for the noiseless comparison");

    auto* plot = app.add_subcommand("plot", "plot data from finished runs");
    std::string plot_std, plot_adv, plot_out = "plots", plot_mode;
    bool no_svg = false;
    plot->add_option("--std", plot_std, "run directory of a train-std run");
    plot->add_option("--adv", plot_adv, "run directory of a train-adv run");
    plot->add_option("--out", plot_out, "output directory");
    plot->add_option("--mode", plot_mode, "only this mode's panels")->check(CLI::IsMember({"std", "adv"}));
    plot->add_flag("--no-svg", no_svg, "CSV only");

    std::string mode;
    oracle->add_option("--mode", mode, "restrict the noisy comparison to one mode")
        ->check(CLI::IsMember({"std", "adv"}));

    CLI11_PARSE(app, argc, argv);

    c_std.epochs_set = std_cmd->count("--epochs") > 0;
    c_adv.epochs_set = adv_cmd->count("--epochs") > 0;
    c_oracle.epochs_set = oracle->count("--epochs") > 0;

    try {
        if (*std_cmd) return train_cmd(c_std, TrainMode::Standard);
        if (*adv_cmd) return train_cmd(c_adv, TrainMode::Adversarial);
        if (*props) {
            const ExperimentConfig cfg = resolve(c_props);
            const PropsReport rep = run_props_check(gamma > 0 ? gamma : cfg.props_gamma, cfg, cfg.seeds.front());
            if (!c_props.out.empty()) write_text(std::filesystem::path(c_props.out) / "props.json", rep.json);
            std::cout << rep.json;
            return 0;
        }
        if (*grad) {
            const std::uint64_t seed = c_grad.seeds.empty() ? 1 : c_grad.seeds.front();
            const GradcheckReport rep = run_gradcheck(trials, seed);
            if (!c_grad.out.empty()) write_text(std::filesystem::path(c_grad.out) / "gradcheck.json", rep.json);
            std::cout << rep.json;
            return rep.max_rel_err_weights <= tol && rep.max_rel_err_input <= tol ? 0 : 1;
        }
        if (*oracle) {
            ExperimentConfig cfg = resolve(c_oracle);
            const OracleCompareReport rep = run_oracle_compare(
                cfg, cfg.output_dir, lock_epochs,
                mode.empty() ? std::vector<TrainMode>{TrainMode::Standard, TrainMode::Adversarial}
                             : std::vector<TrainMode>{parse_mode(mode)});
            std::cout << rep.json;
            bool ok = true;
            for (const auto& l : rep.lockstep) ok = ok && l.divergence.max_divergence <= 1e-6;
            return ok ? 0 : 1;
        }
        if (*plot) {
            if (plot_std.empty() && plot_adv.empty()) throw std::invalid_argument("plot: give --std and/or --adv");
            std::vector<LabeledTrace> s, a;
            if (!plot_std.empty() && plot_mode != "adv") s = load_run_traces(plot_std);
            if (!plot_adv.empty() && plot_mode != "std") a = load_run_traces(plot_adv);
            for (const auto& p : emit_plot_data(s, a, plot_out, !no_svg)) std::cout << p.string() << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
