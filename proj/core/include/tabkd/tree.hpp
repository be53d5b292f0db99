#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "tabkd/tensor.hpp"

namespace tabkd {

/// Flat CART node. Internal nodes send rows with x[feature] <= threshold left.
struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::vector<double> value;  // leaf payload: class distribution or regression value
};

struct DecisionTree {
    std::vector<TreeNode> nodes;

    const std::vector<double>& leaf_value(std::span<const double> row) const;
    std::size_t depth() const;
    std::size_t leaf_count() const;
};

struct ClassifierTreeConfig {
    std::size_t max_depth = 10;
    std::size_t min_samples_split = 5;
    std::size_t max_features = 0;  // 0 = all features
};

/// Gini CART over the rows listed in `sample` (duplicates allowed, as produced
/// by bootstrap). Leaves hold the class distribution [p0, p1].
DecisionTree grow_classifier_tree(const Matrix& X, const std::vector<int>& y, std::span<const std::size_t> sample,
                                  const ClassifierTreeConfig& config, std::mt19937_64& rng);

struct RegressionTreeConfig {
    std::size_t max_depth = 6;
    std::size_t min_samples_split = 2;
    double l2 = 1.0;                // leaf weight regularization
    double min_child_hessian = 1.0;
};

/// Second-order regression tree on per-row gradient/hessian pairs of a convex
/// loss. Leaves hold the single Newton weight -G / (H + l2).
DecisionTree grow_newton_tree(const Matrix& X, std::span<const double> gradient, std::span<const double> hessian,
                              const RegressionTreeConfig& config);

}  // namespace tabkd
