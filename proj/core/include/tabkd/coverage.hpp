#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "tabkd/binning.hpp"
#include "tabkd/tensor.hpp"

namespace tabkd {

inline std::size_t pair_count(std::size_t features) { return features < 2 ? 0 : features * (features - 1) / 2; }

/// Unordered feature pairs (i < j) in lexicographic order; index p of this list
/// is the pair index used throughout the coverage module.
std::vector<std::pair<std::size_t, std::size_t>> feature_pairs(std::size_t features);

/// Soft joint bin distribution of every feature pair: a (pairs × K²) table
/// whose rows each sum to one.
struct PairJoint {
    std::size_t features = 0;
    std::size_t bins = 0;
    std::vector<double> cells;

    std::span<const double> pair(std::size_t p) const { return {cells.data() + p * bins * bins, bins * bins}; }
    double at(std::size_t p, std::size_t k1, std::size_t k2) const { return cells[(p * bins + k1) * bins + k2]; }
};

/// Differentiable joint: memberships N×(F·K) -> (pairs)×(K·K), averaging the
/// outer products of each pair's membership vectors over the batch.
Tensor pair_joint(const Tensor& memberships, std::size_t features, std::size_t bins);
PairJoint soft_pair_joint(const Tensor& memberships, std::size_t features, std::size_t bins);

/// Negative mean pair entropy (natural log, cells clamped at 1e-12). Lies in
/// [-2 ln K, 0]; the minimum is reached exactly when every pair is uniform.
Tensor diversity_loss(const Tensor& joint);
double diversity_loss(const PairJoint& joint);

/// Cumulative set of visited (pair, k1, k2) cells under a frozen bin spec.
class CoverageTracker {
public:
    struct Checkpoint {
        std::size_t step;
        double coverage;
    };

    CoverageTracker(std::size_t features, std::size_t bins);

    /// Hard-assigns every row and marks its cell in every pair; appends a
    /// history entry. The spec must be frozen.
    void record_batch(const BinSpec& spec, const Matrix& X, std::size_t step);

    std::size_t total_cells() const { return visited_.size(); }
    std::size_t visited_cells() const { return count_; }
    double coverage_fraction() const;
    bool visited(std::size_t pair, std::size_t k1, std::size_t k2) const;
    const std::vector<Checkpoint>& history() const { return history_; }
    std::size_t features() const { return features_; }
    std::size_t bins() const { return bins_; }

private:
    std::size_t features_;
    std::size_t bins_;
    std::vector<std::uint8_t> visited_;
    std::size_t count_ = 0;
    std::vector<Checkpoint> history_;
};

}  // namespace tabkd
