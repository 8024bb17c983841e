#pragma once

#include "patchlab/attacks.hpp"
#include "patchlab/features_data.hpp"
#include "patchlab/network.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace patchlab {

class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class TrainMode { Standard, Adversarial };

const char* to_string(TrainMode mode);

struct PgdSettings {
    std::size_t steps = 20;
    double step_fraction = 0.25;  // step size as a fraction of epsilon
};

struct TrainConfig {
    double eta = 0.1;
    double eta_tilde = 1e3;
    double epsilon = 1.2;
    std::size_t epochs = 1000;
    TrainMode mode = TrainMode::Standard;
    // Stride between full metric evaluations; 0 logs only epoch 0 and the
    // final epoch. Correlations are recorded every epoch regardless.
    std::size_t eval_every = 10;
    PgdSettings attack_eval;
    // Mini-batch size; 0 means full batch.
    std::size_t batch_size = 0;
    std::uint64_t swap_seed = 0;
    // Abort when the epoch's training loss exceeds this.
    double divergence_loss = 1e3;

    void validate() const;
};

/// Per-epoch diagonal correlations max_r <w_{i,r}, u_i> and max_r <w_{i,r}, v_i>.
struct CorrelationRecord {
    std::size_t epoch = 0;
    std::vector<double> corr_u;
    std::vector<double> corr_v;
};

struct TraceRecord {
    std::size_t epoch = 0;
    double train_ce = 0.0;
    double std_acc = 0.0;
    double rob_acc = 0.0;
    std::vector<double> corr_u;
    std::vector<double> corr_v;
    double fl_acc_robust = 0.0;
    double fl_acc_nonrobust = 0.0;
};

struct TrainingTrace {
    std::size_t k = 0;
    TrainMode mode = TrainMode::Standard;
    std::size_t pgd_steps = 0;
    double pgd_step_size = 0.0;
    std::vector<TraceRecord> records;
    std::vector<CorrelationRecord> dynamics;
    // Training objective (CE at the clean or attacked batch) before each step.
    std::vector<double> step_loss;
};

CorrelationRecord diagonal_correlations(const Network& net, const FeatureSet& fs, std::size_t epoch);

/// Mean CE over a dataset, clean inputs.
double dataset_ce(const Network& net, const Dataset& data);

/// One full-batch GD step on the clean CE loss.
Network standard_step(const Network& net, const Dataset& data, double eta);

struct AdversarialStep {
    Network net;
    std::vector<Patches> attacked;
    double loss = 0.0;  // CE at the attacked batch before the update
};

/// Regenerate one-step adversarial examples from the current network, then
/// take one GD step on the CE loss at them.
AdversarialStep adversarial_step(const Network& net, const Dataset& data, const TrainConfig& cfg);

struct TrainResult {
    Network net;
    TrainingTrace trace;
};

using ProgressFn = std::function<void(const TraceRecord&)>;

TrainResult train(const Network& net0, const Dataset& data, const Dataset& test, const TrainConfig& cfg,
                  const FeatureSet& fs, const ProgressFn& progress = {});

// CSV columns: epoch, train_ce, std_acc, rob_acc, corr_u_i..., corr_v_i...,
// fl_acc_R, fl_acc_NR.
std::string trace_csv_header(std::size_t k);
std::string trace_to_csv(const TrainingTrace& trace);
TrainingTrace trace_from_csv(const std::string& text);
std::string dynamics_to_csv(const TrainingTrace& trace);
std::string trace_to_json(const TrainingTrace& trace);

}  // namespace patchlab
