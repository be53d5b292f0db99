#include "tabkd/coverage.hpp"

#include <cmath>

#include "tabkd/error.hpp"

namespace tabkd {

std::vector<std::pair<std::size_t, std::size_t>> feature_pairs(std::size_t features) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    out.reserve(pair_count(features));
    for (std::size_t i = 0; i < features; ++i)
        for (std::size_t j = i + 1; j < features; ++j) out.emplace_back(i, j);
    return out;
}

Tensor pair_joint(const Tensor& memberships, std::size_t features, std::size_t bins) {
    const std::size_t N = memberships.rows();
    if (N == 0) throw ShapeError("pair_joint: empty batch");
    if (memberships.cols() != features * bins) {
        throw ShapeError("pair_joint: memberships " + shape_string(memberships.shape()) + " do not match " +
                         std::to_string(features) + " features x " + std::to_string(bins) + " bins");
    }
    const auto pairs = feature_pairs(features);
    const std::size_t K = bins;
    const std::size_t KK = K * K;
    const std::size_t FK = features * K;
    const double inv_n = 1.0 / static_cast<double>(N);
    auto m = memberships.values();

    std::vector<double> out(pairs.size() * KK, 0.0);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto [i, j] = pairs[p];
        double* cell = out.data() + p * KK;
        for (std::size_t n = 0; n < N; ++n) {
            const double* mi = m.data() + n * FK + i * K;
            const double* mj = m.data() + n * FK + j * K;
            for (std::size_t a = 0; a < K; ++a) {
                const double w = mi[a] * inv_n;
                for (std::size_t b = 0; b < K; ++b) cell[a * K + b] += w * mj[b];
            }
        }
    }
    Tensor result = Tensor::from({pairs.size(), KK}, std::move(out));
    if (!should_record({&memberships})) return result;
    result.set_requires_grad(true);
    Tape::active()->record({memberships}, result, [memberships, result, pairs, N, K, KK, FK, inv_n]() mutable {
        if (!result.has_grad()) return;
        auto g = result.grad_buffer();
        auto m = memberships.values();
        auto gm = memberships.grad_buffer();
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            const auto [i, j] = pairs[p];
            const double* gp = g.data() + p * KK;
            for (std::size_t n = 0; n < N; ++n) {
                const double* mi = m.data() + n * FK + i * K;
                const double* mj = m.data() + n * FK + j * K;
                double* gi = gm.data() + n * FK + i * K;
                double* gj = gm.data() + n * FK + j * K;
                for (std::size_t a = 0; a < K; ++a) {
                    double si = 0.0;
                    for (std::size_t b = 0; b < K; ++b) {
                        si += gp[a * K + b] * mj[b];
                        gj[b] += gp[a * K + b] * mi[a] * inv_n;
                    }
                    gi[a] += si * inv_n;
                }
            }
        }
    });
    return result;
}

PairJoint soft_pair_joint(const Tensor& memberships, std::size_t features, std::size_t bins) {
    NoGrad guard;
    Tensor t = pair_joint(memberships, features, bins);
    return PairJoint{features, bins, std::vector<double>(t.values().begin(), t.values().end())};
}

Tensor diversity_loss(const Tensor& joint) {
    if (joint.rows() == 0) return Tensor::scalar(0.0);
    return neg(mean(row_entropy(joint, kLogEps)));
}

double diversity_loss(const PairJoint& joint) {
    const std::size_t pairs = pair_count(joint.features);
    if (pairs == 0) return 0.0;
    double total = 0.0;
    for (std::size_t p = 0; p < pairs; ++p) {
        for (double v : joint.pair(p)) total -= v * std::log(std::max(v, kLogEps));
    }
    return -total / static_cast<double>(pairs);
}

// ---------------------------------------------------------------------------
// CoverageTracker

CoverageTracker::CoverageTracker(std::size_t features, std::size_t bins)
    : features_(features), bins_(bins), visited_(pair_count(features) * bins * bins, 0) {
    if (features < 2) throw StateError("CoverageTracker: pairwise coverage needs at least two features");
    if (bins < 2) throw StateError("CoverageTracker: need K >= 2");
}

void CoverageTracker::record_batch(const BinSpec& spec, const Matrix& X, std::size_t step) {
    if (!spec.frozen()) throw StateError("record_batch: bin spec is not frozen");
    if (spec.features() != features_ || spec.bins() != bins_) throw ShapeError("record_batch: bin spec shape differs from tracker");
    if (X.rows > 0 && X.cols != features_) throw ShapeError("record_batch: batch width differs from tracker");
    const std::size_t KK = bins_ * bins_;
    std::vector<std::size_t> idx(features_);
    for (std::size_t n = 0; n < X.rows; ++n) {
        auto row = X.row(n);
        for (std::size_t f = 0; f < features_; ++f) idx[f] = spec.hard_assign(row[f], f);
        std::size_t p = 0;
        for (std::size_t i = 0; i < features_; ++i) {
            for (std::size_t j = i + 1; j < features_; ++j, ++p) {
                std::uint8_t& cell = visited_[p * KK + idx[i] * bins_ + idx[j]];
                if (!cell) {
                    cell = 1;
                    ++count_;
                }
            }
        }
    }
    history_.push_back({step, coverage_fraction()});
}

double CoverageTracker::coverage_fraction() const {
    return static_cast<double>(count_) / static_cast<double>(visited_.size());
}

bool CoverageTracker::visited(std::size_t pair, std::size_t k1, std::size_t k2) const {
    return visited_[(pair * bins_ + k1) * bins_ + k2] != 0;
}

}  // namespace tabkd
