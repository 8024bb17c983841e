#pragma once

#include "patchlab/attacks.hpp"
#include "patchlab/diagnostics.hpp"
#include "patchlab/features_data.hpp"
#include "patchlab/network.hpp"
#include "patchlab/training.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace patchlab {

// Config problems, with the 1-based line of the offending key when known.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(const std::string& msg, std::size_t line = 0)
        : std::invalid_argument(line ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

struct NetworkConfig {
    std::size_t m = 100;
    double sigma0 = 0.01;
    Activation act;
};

/// Everything needed to reproduce a run. Defaults are the synthetic
/// experiment's constants.
struct ExperimentConfig {
    DataConfig data;
    NetworkConfig network;
    TrainConfig train;
    std::size_t n_train = 100;
    std::size_t test_n = 1000;
    std::vector<std::uint64_t> seeds{1};
    std::string output_dir = "runs";
    double props_gamma = 100.0;

    void validate() const;
};

ExperimentConfig default_config();
// JSON with // and /* */ comments allowed; unknown keys are rejected.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& cfg);

// Per-seed streams: training data, test data, initialisation, swap draws.
struct SeedStreams {
    std::uint64_t train_data;
    std::uint64_t test_data;
    Rng init;
    std::uint64_t swap;
};
SeedStreams seed_streams(std::uint64_t seed);

struct SeedInputs {
    FeatureSet fs;
    Dataset train;
    Dataset test;
    Network init;
};
SeedInputs make_seed_inputs(const ExperimentConfig& cfg, std::uint64_t seed);

struct SeedResult {
    std::uint64_t seed = 0;
    TrainResult run;
    EvalReport clean;
    EvalReport pgd;
    EvalReport swap;
    EvalReport fl_robust;
    EvalReport fl_nonrobust;
    // First epoch each class's diagonal correlation reaches rho/beta (v) and
    // rho/alpha (u).
    std::vector<std::optional<std::size_t>> cross_v;
    std::vector<std::optional<std::size_t>> cross_u;
    // First logged epoch with robust accuracy above 0.5.
    std::optional<std::size_t> robust_half;
};

using SeedProgress = std::function<void(std::uint64_t seed, const TraceRecord&)>;

SeedResult run_seed(const ExperimentConfig& cfg, TrainMode mode, std::uint64_t seed,
                    const SeedProgress& progress = {});

struct ExperimentSummary {
    TrainMode mode = TrainMode::Standard;
    std::vector<SeedResult> seeds;
    std::string json;
};

/// Runs every seed and writes, under out_dir:
///   config.json, summary.json and per seed
///   trace_seed<N>.csv/.json, dynamics_seed<N>.csv, net_seed<N>.json, eval_seed<N>.json
ExperimentSummary run_experiment(const ExperimentConfig& cfg, TrainMode mode, const std::filesystem::path& out_dir,
                                 const SeedProgress& progress = {});

struct RankOneReport {
    FeatureKind kind = FeatureKind::Robust;
    double ce = 0.0;
    double clean_acc = 0.0;
    double pgd_acc = 0.0;
    double swap_acc = 0.0;
};

struct PropsReport {
    double gamma = 0.0;
    RankOneReport nonrobust;
    RankOneReport robust;
    std::string json;
};

/// Builds both rank-one global minima and measures them on fresh data.
PropsReport run_props_check(double gamma, const ExperimentConfig& cfg, std::uint64_t seed = 1);

struct GradcheckReport {
    std::size_t trials = 0;
    double max_rel_err_weights = 0.0;
    double max_rel_err_input = 0.0;
    double step = 1e-5;
    std::string json;
};

/// Analytic vs central-difference gradients on random small instances.
GradcheckReport run_gradcheck(std::size_t trials, std::uint64_t seed, double h = 1e-5);

struct LockstepReport {
    TrainMode mode = TrainMode::Standard;
    std::size_t epochs = 0;
    DivergenceReport divergence;
    double coefficient_max = 0.0;  // over every tracked coordinate, every epoch
};

/// Noiseless data, feature-projected init: simulator vs oracle, step by step.
LockstepReport run_lockstep(const ExperimentConfig& cfg, TrainMode mode, std::size_t epochs,
                            std::uint64_t seed = 1);

struct NoisyVerdict {
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::Standard;
    bool sim_v_first = false;     // std: every class's v crosses before its u
    bool oracle_v_first = false;
    bool sim_u_above_v = false;   // adv: final max u > max v for every class
    bool oracle_u_above_v = false;
    DivergenceReport divergence;
};

struct OracleCompareReport {
    std::vector<LockstepReport> lockstep;
    std::vector<NoisyVerdict> noisy;
    std::string json;
};

OracleCompareReport run_oracle_compare(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                       std::size_t lockstep_epochs = 100,
                                       const std::vector<TrainMode>& noisy_modes = {TrainMode::Standard,
                                                                                    TrainMode::Adversarial});

OracleConfig oracle_config_for(const ExperimentConfig& cfg, const Dataset& data);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace patchlab
