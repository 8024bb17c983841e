#pragma once

#include "patchlab/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace patchlab {

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class MetadataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class FeatureKind { Robust, NonRobust };

const char* to_string(FeatureKind kind);

/// The 2k orthonormal, coordinate-aligned feature directions.
///
/// Robust feature u_j sits on coordinate j and non-robust feature v_j on
/// coordinate k + j. Dense copies are kept for callers that want plain
/// vectors; the coordinate accessors are what the hot paths use.
struct FeatureSet {
    std::size_t k = 0;
    std::size_t d = 0;
    std::vector<std::vector<double>> robust;
    std::vector<std::vector<double>> nonrobust;

    std::size_t coord(FeatureKind kind, std::size_t j) const {
        return kind == FeatureKind::Robust ? j : k + j;
    }
    const std::vector<double>& feature(FeatureKind kind, std::size_t j) const {
        return kind == FeatureKind::Robust ? robust[j] : nonrobust[j];
    }
};

FeatureSet build_feature_set(std::size_t k, std::size_t d);

/// Distribution of a per-patch feature coefficient: a constant or a uniform
/// interval with positive lower end.
struct CoefficientDist {
    enum class Kind { Constant, Uniform };
    Kind kind = Kind::Constant;
    double lo = 1.0;
    double hi = 1.0;

    static CoefficientDist constant(double v) { return {Kind::Constant, v, v}; }
    static CoefficientDist uniform(double lo, double hi) { return {Kind::Uniform, lo, hi}; }

    double sample(Rng& rng) const { return kind == Kind::Constant ? lo : rng.uniform(lo, hi); }
    double mean() const { return 0.5 * (lo + hi); }
    bool is_constant() const { return kind == Kind::Constant; }
};

struct DataConfig {
    std::size_t k = 2;
    std::size_t d = 100;
    std::size_t jr_count = 1;
    std::size_t jnr_count = 15;
    CoefficientDist alpha = CoefficientDist::constant(2.0);
    CoefficientDist beta = CoefficientDist::constant(1.0);
    double sigma_n = 0.1;
    double tau = 3.0;
    // Draw the robust patch positions uniformly instead of taking the first
    // jr_count patches.
    bool random_partition = false;

    std::size_t P() const { return jr_count + jnr_count; }
    // Throws std::invalid_argument naming the offending field.
    void validate() const;
};

/// P patches of dimension d stored row-major.
struct Patches {
    std::size_t P = 0;
    std::size_t d = 0;
    std::vector<double> values;

    Patches() = default;
    Patches(std::size_t P_, std::size_t d_) : P(P_), d(d_), values(P_ * d_, 0.0) {}

    std::span<double> patch(std::size_t p) { return {values.data() + p * d, d}; }
    std::span<const double> patch(std::size_t p) const { return {values.data() + p * d, d}; }

    bool operator==(const Patches&) const = default;
};

struct PatchRole {
    FeatureKind kind = FeatureKind::Robust;
    double coeff = 0.0;

    bool operator==(const PatchRole&) const = default;
};

struct LabeledExample {
    Patches x;
    std::size_t label = 0;
    // Generation metadata. Empty when the example came from elsewhere.
    std::vector<PatchRole> roles;
    Patches noise;

    bool has_metadata() const { return roles.size() == x.P && noise.P == x.P && noise.d == x.d; }
    bool operator==(const LabeledExample&) const = default;
};

struct Dataset {
    std::size_t k = 0;
    std::size_t d = 0;
    std::size_t P = 0;
    std::uint64_t seed = 0;
    std::vector<LabeledExample> examples;

    std::size_t size() const { return examples.size(); }
    bool empty() const { return examples.empty(); }
};

LabeledExample sample_example(const DataConfig& cfg, const FeatureSet& fs, Rng& rng);

// Example i is drawn from Rng(seed).split(i), so the dataset does not depend
// on generation order.
Dataset sample_dataset(const DataConfig& cfg, const FeatureSet& fs, std::size_t n, std::uint64_t seed);

/// Zero the signal of every patch whose role is not `keep`, leaving its noise.
LabeledExample make_representative(const LabeledExample& ex, const FeatureSet& fs, FeatureKind keep);

struct AssumptionReport {
    double ratio_strength = 0.0;  // E[min alpha] / E[max beta]
    double ratio_density = 0.0;   // E[sum alpha^tau] / E[sum beta^tau]
    bool robust_stronger = false;
    bool nonrobust_denser = false;
    bool exact = false;  // false when estimated by Monte-Carlo

    bool pass() const { return robust_stronger && nonrobust_denser; }
};

AssumptionReport check_assumptions(const DataConfig& cfg, std::size_t mc_samples = 10000,
                                   std::uint64_t seed = 0);

std::string dataset_to_json(const Dataset& data);
Dataset dataset_from_json(const std::string& text);

}  // namespace patchlab
