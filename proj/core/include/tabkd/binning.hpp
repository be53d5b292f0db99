#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "tabkd/data.hpp"
#include "tabkd/tensor.hpp"

namespace tabkd {

/// Per-family temperatures: bin softness annealed linearly from `start` to
/// `end` over phase 1, fixed at `phase2` afterwards; `distill` sharpens or
/// flattens teacher labels during distillation.
struct TemperatureSchedule {
    double start = 1.0;
    double end = 0.05;
    double phase2 = 0.2;
    double distill = 1.0;
    std::size_t phase1_steps = 200;

    /// Linear interpolation; step 0 gives `start`, step phase1_steps gives `end`.
    double at(std::size_t step) const;
};

/// Frozen or in-progress discretization of every feature into K intervals.
///
/// Boundaries are stored as an F×(K-1) row-major table; each row is strictly
/// increasing and lies strictly inside the feature's box interval.
class BinSpec {
public:
    BinSpec() = default;
    BinSpec(FeatureBox box, std::size_t bins, std::vector<double> boundaries, double temperature, bool frozen);

    std::size_t features() const { return box_.features(); }
    std::size_t bins() const { return bins_; }
    double temperature() const { return temperature_; }
    bool frozen() const { return frozen_; }
    const FeatureBox& box() const { return box_; }

    std::span<const double> boundaries(std::size_t feature) const;
    const std::vector<double>& boundary_table() const { return boundaries_; }
    Tensor boundary_tensor() const;

    /// K soft memberships of value x on one feature at the spec's temperature.
    std::vector<double> soft_membership(double x, std::size_t feature) const;
    std::vector<double> soft_membership(double x, std::size_t feature, double temperature) const;

    /// Half-open interval index per feature: [b_{k-1}, b_k) -> k. Requires a frozen spec.
    std::vector<std::size_t> hard_assign(std::span<const double> row) const;
    std::size_t hard_assign(double x, std::size_t feature) const;

    void save(const std::filesystem::path& path) const;
    static BinSpec load(const std::filesystem::path& path);

private:
    FeatureBox box_;
    std::size_t bins_ = 0;
    std::vector<double> boundaries_;
    double temperature_ = 1.0;
    bool frozen_ = false;
};

/// K-1 equally spaced boundaries per feature, frozen.
BinSpec static_uniform_bins(const FeatureBox& box, std::size_t bins, double temperature = 1.0);

/// Soft memberships for a batch. X is N×F, boundaries F×(K-1); the result is
/// N×(F·K) with feature f occupying columns [f·K, (f+1)·K). Each K-block is a
/// softmax of cumulative cut-point logits (k·x - Σ_{j<k} b_j) / temperature.
Tensor soft_membership(const Tensor& X, const Tensor& boundaries, double temperature);

/// Maps unconstrained F×K gap logits to F×(K-1) boundaries:
/// b_k = lo + width · Σ_{j<=k} softmax(raw)_j. Strictly increasing inside the box.
Tensor gap_boundaries(const Tensor& raw, const FeatureBox& box);

struct BinLossWeights {
    double intra = 1.0;
    double inter = 1.0;
    double eps = 1e-6;
};

struct BinLossParts {
    Tensor loss;
    double var_intra = 0.0;
    double var_inter = 0.0;
};

/// Intra/inter variance objective on teacher positive-class probabilities:
/// intra · Var_intra + inter / (Var_inter + eps). Bins with mass <= eps are
/// left out of both variances.
BinLossParts bin_loss(const Tensor& memberships, std::span<const double> teacher_p1, std::size_t features,
                      std::size_t bins, const BinLossWeights& weights = {});

/// Trainable boundaries parameterized by gap logits; uniform at construction.
class BinLearner {
public:
    BinLearner(FeatureBox box, std::size_t bins);

    Tensor raw() const { return raw_; }
    /// Differentiable boundaries from the current parameters.
    Tensor boundaries() const;
    std::size_t features() const { return box_.features(); }
    std::size_t bins() const { return bins_; }
    const FeatureBox& box() const { return box_; }
    bool frozen() const { return frozen_; }

    /// Throws StateError once frozen.
    void check_mutable() const;
    BinSpec snapshot(double temperature) const;
    BinSpec freeze(double temperature);

private:
    FeatureBox box_;
    std::size_t bins_;
    Tensor raw_;
    bool frozen_ = false;
};

/// True when every boundary row is strictly increasing inside its box.
bool boundaries_valid(const FeatureBox& box, std::size_t bins, std::span<const double> table);

}  // namespace tabkd
