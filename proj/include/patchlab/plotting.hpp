#pragma once

#include "patchlab/training.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace patchlab {

struct LabeledTrace {
    std::string label;  // e.g. "seed1"
    TrainingTrace trace;
};

// Correlation panel: epoch, corr_u_1, corr_v_1, ... from the logged rows.
std::string correlation_csv(const TrainingTrace& trace);
// Learning-curve panel: epoch, train_ce, std_acc, rob_acc.
std::string learning_curve_csv(const TrainingTrace& trace);

// Pointwise mean over traces that share the same epoch grid.
TrainingTrace mean_trace(const std::vector<LabeledTrace>& traces);

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

/// Minimal polyline chart.
std::string render_svg(const std::string& title, const std::string& y_label, const std::vector<Series>& series);

/// Writes the four panels (std/adv correlations, std/adv learning curves)
/// per seed plus a mean file each, and SVG renderings of the means.
/// Either list may be empty, but not both. Returns the files written.
std::vector<std::filesystem::path> emit_plot_data(const std::vector<LabeledTrace>& std_traces,
                                                  const std::vector<LabeledTrace>& adv_traces,
                                                  const std::filesystem::path& out_dir, bool svg = true);

// Loads every trace_seed*.csv in a run directory, sorted by seed.
std::vector<LabeledTrace> load_run_traces(const std::filesystem::path& run_dir);

}  // namespace patchlab
