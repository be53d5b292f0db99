#include "tabkd/tree.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <optional>

#include "tabkd/error.hpp"

namespace tabkd {

const std::vector<double>& DecisionTree::leaf_value(std::span<const double> row) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0) {
        const TreeNode& n = nodes[i];
        i = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes[i].value;
}

std::size_t DecisionTree::depth() const {
    std::function<std::size_t(std::size_t)> walk = [&](std::size_t i) -> std::size_t {
        if (nodes[i].feature < 0) return 0;
        return 1 + std::max(walk(static_cast<std::size_t>(nodes[i].left)), walk(static_cast<std::size_t>(nodes[i].right)));
    };
    return nodes.empty() ? 0 : walk(0);
}

std::size_t DecisionTree::leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.feature < 0; }));
}

namespace {

struct Split {
    std::size_t feature = 0;
    double threshold = 0.0;
    double score = 0.0;  // larger is better
};

double midpoint(double a, double b) {
    const double m = a + (b - a) * 0.5;
    return m < b ? m : a;
}

// Scans one feature for the best threshold. `Acc` accumulates per-row
// statistics from the left; `score(left, right)` rates a partition and returns
// nullopt when the partition is not admissible.
template <typename Stats, typename AddRow, typename Score>
std::optional<Split> scan_feature(const Matrix& X, std::vector<std::size_t>& idx, std::size_t f, const Stats& total,
                                  AddRow add_row, Score score) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return X(a, f) < X(b, f); });
    std::optional<Split> best;
    Stats left{};
    for (std::size_t i = 0; i + 1 < idx.size(); ++i) {
        add_row(left, idx[i]);
        const double v = X(idx[i], f);
        const double next = X(idx[i + 1], f);
        if (!(v < next)) continue;
        Stats right = total;
        right -= left;
        if (auto s = score(left, right)) {
            if (!best || *s > best->score) best = Split{f, midpoint(v, next), *s};
        }
    }
    return best;
}

struct ClassStats {
    double n = 0, pos = 0;
    ClassStats& operator-=(const ClassStats& o) {
        n -= o.n;
        pos -= o.pos;
        return *this;
    }
    // n · gini
    double weighted_gini() const {
        if (n <= 0) return 0.0;
        const double p = pos / n;
        return n * 2.0 * p * (1.0 - p);
    }
};

struct GradStats {
    double g = 0, h = 0, n = 0;
    GradStats& operator-=(const GradStats& o) {
        g -= o.g;
        h -= o.h;
        n -= o.n;
        return *this;
    }
};

}  // namespace

DecisionTree grow_classifier_tree(const Matrix& X, const std::vector<int>& y, std::span<const std::size_t> sample,
                                  const ClassifierTreeConfig& config, std::mt19937_64& rng) {
    if (sample.empty()) throw DataError("grow_classifier_tree: empty training sample");
    const std::size_t F = X.cols;
    const std::size_t max_features = config.max_features == 0 ? F : std::min(config.max_features, F);
    DecisionTree tree;

    std::function<int(std::vector<std::size_t>, std::size_t)> build = [&](std::vector<std::size_t> idx,
                                                                          std::size_t depth) -> int {
        ClassStats total;
        for (std::size_t i : idx) {
            total.n += 1;
            total.pos += y[i];
        }
        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({});
        const double p1 = total.pos / total.n;
        auto make_leaf = [&]() {
            tree.nodes[static_cast<std::size_t>(id)].value = {1.0 - p1, p1};
            return id;
        };
        if (depth >= config.max_depth || idx.size() < config.min_samples_split || total.pos == 0 ||
            total.pos == total.n) {
            return make_leaf();
        }

        std::vector<std::size_t> features(F);
        std::iota(features.begin(), features.end(), 0);
        std::shuffle(features.begin(), features.end(), rng);
        const double parent = total.weighted_gini();
        std::optional<Split> best;
        for (std::size_t k = 0; k < F; ++k) {
            if (k >= max_features && best) break;
            auto s = scan_feature(
                X, idx, features[k], total,
                [&](ClassStats& acc, std::size_t row) {
                    acc.n += 1;
                    acc.pos += y[row];
                },
                [&](const ClassStats& l, const ClassStats& r) -> std::optional<double> {
                    const double gain = parent - l.weighted_gini() - r.weighted_gini();
                    if (gain <= 1e-12) return std::nullopt;
                    return gain;
                });
            if (s && (!best || s->score > best->score)) best = s;
        }
        if (!best) return make_leaf();

        std::vector<std::size_t> left, right;
        for (std::size_t i : idx) (X(i, best->feature) <= best->threshold ? left : right).push_back(i);
        idx.clear();
        idx.shrink_to_fit();
        const int l = build(std::move(left), depth + 1);
        const int r = build(std::move(right), depth + 1);
        TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
        node.feature = static_cast<int>(best->feature);
        node.threshold = best->threshold;
        node.left = l;
        node.right = r;
        return id;
    };
    build(std::vector<std::size_t>(sample.begin(), sample.end()), 0);
    return tree;
}

DecisionTree grow_newton_tree(const Matrix& X, std::span<const double> gradient, std::span<const double> hessian,
                              const RegressionTreeConfig& config) {
    if (X.rows == 0) throw DataError("grow_newton_tree: empty training set");
    DecisionTree tree;
    const double l2 = config.l2;

    std::function<int(std::vector<std::size_t>, std::size_t)> build = [&](std::vector<std::size_t> idx,
                                                                          std::size_t depth) -> int {
        GradStats total;
        for (std::size_t i : idx) {
            total.g += gradient[i];
            total.h += hessian[i];
            total.n += 1;
        }
        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({});
        auto make_leaf = [&]() {
            tree.nodes[static_cast<std::size_t>(id)].value = {-total.g / (total.h + l2)};
            return id;
        };
        if (depth >= config.max_depth || idx.size() < config.min_samples_split) return make_leaf();

        const double parent = total.g * total.g / (total.h + l2);
        std::optional<Split> best;
        for (std::size_t f = 0; f < X.cols; ++f) {
            auto s = scan_feature(
                X, idx, f, total,
                [&](GradStats& acc, std::size_t row) {
                    acc.g += gradient[row];
                    acc.h += hessian[row];
                    acc.n += 1;
                },
                [&](const GradStats& l, const GradStats& r) -> std::optional<double> {
                    if (l.h < config.min_child_hessian || r.h < config.min_child_hessian) return std::nullopt;
                    const double gain = l.g * l.g / (l.h + l2) + r.g * r.g / (r.h + l2) - parent;
                    if (gain <= 1e-12) return std::nullopt;
                    return gain;
                });
            if (s && (!best || s->score > best->score)) best = s;
        }
        if (!best) return make_leaf();

        std::vector<std::size_t> left, right;
        for (std::size_t i : idx) (X(i, best->feature) <= best->threshold ? left : right).push_back(i);
        idx.clear();
        idx.shrink_to_fit();
        const int l = build(std::move(left), depth + 1);
        const int r = build(std::move(right), depth + 1);
        TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
        node.feature = static_cast<int>(best->feature);
        node.threshold = best->threshold;
        node.left = l;
        node.right = r;
        return id;
    };
    std::vector<std::size_t> all(X.rows);
    std::iota(all.begin(), all.end(), 0);
    build(std::move(all), 0);
    return tree;
}

}  // namespace tabkd
