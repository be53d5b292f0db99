#pragma once

// Shared oracles for the unit and acceptance tests. Nothing here calls into
// the code paths it is used to check: gradients are compared against central
// differences, coverage against a set-based recount.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <tuple>
#include <vector>

#include "tabkd/binning.hpp"
#include "tabkd/data.hpp"
#include "tabkd/teachers.hpp"
#include "tabkd/tensor.hpp"

namespace tabkd::testing {

inline std::filesystem::path source_dir() { return TABKD_SOURCE_DIR; }

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = u(rng);
    return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

/// Values bounded away from zero, for ops with a kink there.
inline Tensor away_from_zero(Shape shape, std::mt19937_64& rng, double margin = 0.05) {
    std::uniform_real_distribution<double> u(margin, 1.0);
    std::bernoulli_distribution sign(0.5);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = sign(rng) ? u(rng) : -u(rng);
    return Tensor::from(std::move(shape), std::move(v), true);
}

/// Fixed random projection so a tensor-valued op reduces to a scalar whose
/// gradient exercises every output entry with a distinct weight.
inline Tensor project(const Tensor& out, std::mt19937_64& rng) {
    Tensor w = random_tensor(out.shape(), rng, -1.0, 1.0, false);
    return sum(mul(out, w));
}

struct GradCheck {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
};

/// Compares tape gradients of `f` with respect to `leaves` against central
/// differences. Relative error per leaf is ||a - n|| / max(||a||, ||n||, floor).
inline GradCheck check_gradients(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                                 std::vector<Tensor> leaves, double h = 1e-6, double floor = 1e-8) {
    for (auto& l : leaves) l.zero_grad();
    {
        Tape tape;
        Tensor loss = f(leaves);
        tape.backward(loss);
    }
    GradCheck out;
    for (auto& leaf : leaves) {
        const std::vector<double> analytic = leaf.grad();
        std::vector<double> numeric(analytic.size());
        auto v = leaf.mutable_values();
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double saved = v[i];
            double fp, fm;
            {
                NoGrad ng;
                v[i] = saved + h;
                fp = f(leaves).item();
                v[i] = saved - h;
                fm = f(leaves).item();
            }
            v[i] = saved;
            numeric[i] = (fp - fm) / (2.0 * h);
        }
        double diff = 0.0, na = 0.0, nn = 0.0;
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
            na += analytic[i] * analytic[i];
            nn += numeric[i] * numeric[i];
            out.max_abs_error = std::max(out.max_abs_error, std::abs(analytic[i] - numeric[i]));
        }
        const double rel = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), floor});
        out.max_rel_error = std::max(out.max_rel_error, rel);
    }
    return out;
}

/// Set of (pair, k1, k2) cells reached by hard bin indices, enumerated directly.
inline std::size_t brute_force_cells(const std::vector<std::vector<std::size_t>>& bins_per_row, std::size_t features) {
    std::set<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>> cells;
    for (const auto& r : bins_per_row) {
        for (std::size_t i = 0; i < features; ++i) {
            for (std::size_t j = i + 1; j < features; ++j) cells.emplace(i, j, r[i], r[j]);
        }
    }
    return cells.size();
}

/// Interval index of x among sorted cut points, half-open on the right, by linear scan.
inline std::size_t interval_of(double x, const std::vector<double>& cuts) {
    std::size_t k = 0;
    while (k < cuts.size() && x >= cuts[k]) ++k;
    return k;
}

/// Uniform points in the box labelled by the rule teacher; the first
/// `train` rows form the training split, the rest the held-out split.
inline Dataset synthetic_dataset(const RuleTeacher& teacher, std::size_t train, std::size_t test, double radius,
                                 std::uint64_t seed) {
    Dataset ds;
    ds.name = "synthetic";
    const std::size_t F = teacher.features();
    std::mt19937_64 rng(seed);
    ds.X = FeatureBox::uniform(F, radius).sample_uniform(train + test, rng);
    for (std::size_t i = 0; i < ds.X.rows; ++i) ds.y.push_back(teacher.hard_label(ds.X.row(i)));
    for (std::size_t f = 0; f < F; ++f) {
        ds.feature_names.push_back("x" + std::to_string(f));
        ds.kinds.push_back(ColumnKind::kNumeric);
        ds.scaler.mean.push_back(0.0);
        ds.scaler.stddev.push_back(1.0);
        ds.constant_feature.push_back(false);
    }
    ds.categories.resize(F);
    for (std::size_t i = 0; i < train + test; ++i) (i < train ? ds.train_idx : ds.test_idx).push_back(i);
    return ds;
}

inline Dataset breast_cancer() {
    const auto schema = DatasetSchema::load(source_dir() / "data" / "schemas" / "breast_cancer.json");
    const RawTable raw = load_csv(source_dir() / "data" / "breast_cancer.csv", schema);
    return encode_and_scale(raw, schema.positive, 0, "breast_cancer");
}

}  // namespace tabkd::testing
