#include "tabkd/binning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json_util.hpp"

namespace tabkd {

using detail::json;

double TemperatureSchedule::at(std::size_t step) const {
    if (phase1_steps == 0) return end;
    const double e = static_cast<double>(std::min(step, phase1_steps));
    return start - (start - end) * e / static_cast<double>(phase1_steps);
}

// ---------------------------------------------------------------------------
// BinSpec

bool boundaries_valid(const FeatureBox& box, std::size_t bins, std::span<const double> table) {
    const std::size_t cuts = bins - 1;
    if (table.size() != box.features() * cuts) return false;
    for (std::size_t f = 0; f < box.features(); ++f) {
        double prev = box.lo[f];
        for (std::size_t k = 0; k < cuts; ++k) {
            const double b = table[f * cuts + k];
            if (!(b > prev) || !std::isfinite(b)) return false;
            prev = b;
        }
        if (!(prev < box.hi[f])) return false;
    }
    return true;
}

BinSpec::BinSpec(FeatureBox box, std::size_t bins, std::vector<double> boundaries, double temperature, bool frozen)
    : box_(std::move(box)), bins_(bins), boundaries_(std::move(boundaries)), temperature_(temperature),
      frozen_(frozen) {
    if (bins_ < 2) throw StateError("BinSpec: need at least 2 bins");
    if (!(temperature_ > 0.0)) throw StateError("BinSpec: temperature must be positive");
    if (!boundaries_valid(box_, bins_, boundaries_)) {
        throw StateError("BinSpec: boundaries must be strictly increasing inside the feature box");
    }
}

std::span<const double> BinSpec::boundaries(std::size_t feature) const {
    return {boundaries_.data() + feature * (bins_ - 1), bins_ - 1};
}

Tensor BinSpec::boundary_tensor() const { return Tensor::from({features(), bins_ - 1}, boundaries_); }

std::vector<double> BinSpec::soft_membership(double x, std::size_t feature) const {
    return soft_membership(x, feature, temperature_);
}

std::vector<double> BinSpec::soft_membership(double x, std::size_t feature, double temperature) const {
    if (!(temperature > 0.0)) throw StateError("soft_membership: temperature must be positive");
    auto b = boundaries(feature);
    std::vector<double> logits(bins_);
    double cum = 0.0;
    for (std::size_t k = 0; k < bins_; ++k) {
        logits[k] = (static_cast<double>(k) * x - cum) / temperature;
        if (k + 1 < bins_) cum += b[k];
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double& l : logits) {
        l = std::exp(l - mx);
        z += l;
    }
    for (double& l : logits) l /= z;
    return logits;
}

std::size_t BinSpec::hard_assign(double x, std::size_t feature) const {
    if (!frozen_) throw StateError("hard_assign: bin spec is not frozen");
    auto b = boundaries(feature);
    return static_cast<std::size_t>(std::upper_bound(b.begin(), b.end(), x) - b.begin());
}

std::vector<std::size_t> BinSpec::hard_assign(std::span<const double> row) const {
    if (!frozen_) throw StateError("hard_assign: bin spec is not frozen");
    if (row.size() != features()) throw ShapeError("hard_assign: row width does not match bin spec");
    std::vector<std::size_t> out(row.size());
    for (std::size_t f = 0; f < row.size(); ++f) out[f] = hard_assign(row[f], f);
    return out;
}

void BinSpec::save(const std::filesystem::path& path) const {
    std::vector<std::vector<double>> table;
    for (std::size_t f = 0; f < features(); ++f) {
        auto b = boundaries(f);
        table.emplace_back(b.begin(), b.end());
    }
    detail::write_json(path, json{{"format", "tabkd-binspec"},
                                  {"version", 1},
                                  {"features", features()},
                                  {"bins", bins_},
                                  {"temperature", temperature_},
                                  {"frozen", frozen_},
                                  {"box_lo", box_.lo},
                                  {"box_hi", box_.hi},
                                  {"boundaries", table}});
}

BinSpec BinSpec::load(const std::filesystem::path& path) {
    const json j = detail::read_json(path);
    try {
        if (j.value("format", "") != "tabkd-binspec") throw DataError(path.string() + " is not a bin spec file");
        FeatureBox box{j.at("box_lo").get<std::vector<double>>(), j.at("box_hi").get<std::vector<double>>()};
        std::vector<double> flat;
        for (const auto& row : j.at("boundaries"))
            for (double v : row.get<std::vector<double>>()) flat.push_back(v);
        return BinSpec(std::move(box), j.at("bins").get<std::size_t>(), std::move(flat),
                       j.at("temperature").get<double>(), j.at("frozen").get<bool>());
    } catch (const json::exception& e) {
        throw DataError("bin spec " + path.string() + ": " + e.what());
    } catch (const StateError& e) {
        throw DataError("bin spec " + path.string() + ": " + e.what());
    }
}

BinSpec static_uniform_bins(const FeatureBox& box, std::size_t bins, double temperature) {
    if (bins < 2) throw StateError("static_uniform_bins: need K >= 2");
    std::vector<double> table;
    for (std::size_t f = 0; f < box.features(); ++f) {
        const double step = box.width(f) / static_cast<double>(bins);
        for (std::size_t k = 1; k < bins; ++k) table.push_back(box.lo[f] + step * static_cast<double>(k));
    }
    return BinSpec(box, bins, std::move(table), temperature, true);
}

// ---------------------------------------------------------------------------
// Differentiable operations

Tensor soft_membership(const Tensor& X, const Tensor& boundaries, double temperature) {
    if (!(temperature > 0.0)) throw StateError("soft_membership: temperature must be positive");
    const std::size_t N = X.rows();
    const std::size_t F = X.cols();
    if (boundaries.rows() != F) {
        throw ShapeError("soft_membership: inputs " + shape_string(X.shape()) + " and boundaries " +
                         shape_string(boundaries.shape()) + " disagree on feature count");
    }
    const std::size_t cuts = boundaries.cols();
    const std::size_t K = cuts + 1;
    auto xv = X.values();
    auto bv = boundaries.values();

    // cumulative cut sums C[f][k] = Σ_{j<k} b[f][j]
    std::vector<double> cum(F * K, 0.0);
    for (std::size_t f = 0; f < F; ++f)
        for (std::size_t k = 1; k < K; ++k) cum[f * K + k] = cum[f * K + k - 1] + bv[f * cuts + k - 1];

    std::vector<double> out(N * F * K);
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t f = 0; f < F; ++f) {
            const double x = xv[n * F + f];
            double* m = out.data() + (n * F + f) * K;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < K; ++k) {
                m[k] = (static_cast<double>(k) * x - cum[f * K + k]) / temperature;
                mx = std::max(mx, m[k]);
            }
            double z = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                m[k] = std::exp(m[k] - mx);
                z += m[k];
            }
            for (std::size_t k = 0; k < K; ++k) m[k] /= z;
        }
    }
    Tensor result = Tensor::from({N, F * K}, std::move(out));
    if (!should_record({&X, &boundaries})) return result;
    result.set_requires_grad(true);
    Tape::active()->record({X, boundaries}, result, [X, boundaries, result, N, F, K, cuts, temperature]() mutable {
        if (!result.has_grad()) return;
        auto g = result.grad_buffer();
        auto m = result.values();
        std::span<double> gx = X.requires_grad() ? X.grad_buffer() : std::span<double>{};
        std::span<double> gb = boundaries.requires_grad() ? boundaries.grad_buffer() : std::span<double>{};
        std::vector<double> dlogit(K);
        for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t f = 0; f < F; ++f) {
                const std::size_t base = (n * F + f) * K;
                double dot = 0.0;
                for (std::size_t k = 0; k < K; ++k) dot += g[base + k] * m[base + k];
                for (std::size_t k = 0; k < K; ++k) dlogit[k] = m[base + k] * (g[base + k] - dot) / temperature;
                if (!gx.empty()) {
                    double s = 0.0;
                    for (std::size_t k = 1; k < K; ++k) s += dlogit[k] * static_cast<double>(k);
                    gx[n * F + f] += s;
                }
                if (!gb.empty()) {
                    // logit k subtracts b_j for every j < k
                    double tail = 0.0;
                    for (std::size_t j = cuts; j-- > 0;) {
                        tail += dlogit[j + 1];
                        gb[f * cuts + j] -= tail;
                    }
                }
            }
        }
    });
    return result;
}

Tensor gap_boundaries(const Tensor& raw, const FeatureBox& box) {
    const std::size_t F = raw.rows();
    const std::size_t K = raw.cols();
    if (F != box.features() || K < 2) {
        throw ShapeError("gap_boundaries: raw " + shape_string(raw.shape()) + " does not fit a box of " +
                         std::to_string(box.features()) + " features");
    }
    Tensor gaps = softmax_rows(raw);
    auto gv = gaps.values();
    const std::size_t cuts = K - 1;
    std::vector<double> out(F * cuts);
    for (std::size_t f = 0; f < F; ++f) {
        double acc = 0.0;
        for (std::size_t k = 0; k < cuts; ++k) {
            acc += gv[f * K + k];
            out[f * cuts + k] = box.lo[f] + box.width(f) * acc;
        }
    }
    Tensor result = Tensor::from({F, cuts}, std::move(out));
    if (!should_record({&gaps})) return result;
    result.set_requires_grad(true);
    const std::vector<double> widths = [&] {
        std::vector<double> w(F);
        for (std::size_t f = 0; f < F; ++f) w[f] = box.width(f);
        return w;
    }();
    Tape::active()->record({gaps}, result, [gaps, result, F, K, cuts, widths]() mutable {
        if (!result.has_grad()) return;
        auto g = result.grad_buffer();
        auto gg = gaps.grad_buffer();
        for (std::size_t f = 0; f < F; ++f) {
            double tail = 0.0;
            for (std::size_t j = cuts; j-- > 0;) {
                tail += g[f * cuts + j];
                gg[f * K + j] += widths[f] * tail;
            }
        }
    });
    return result;
}

BinLossParts bin_loss(const Tensor& memberships, std::span<const double> teacher_p1, std::size_t features,
                      std::size_t bins, const BinLossWeights& weights) {
    const std::size_t N = memberships.rows();
    const std::size_t FK = features * bins;
    if (N == 0) throw ShapeError("bin_loss: empty batch");
    if (memberships.cols() != FK || teacher_p1.size() != N) {
        throw ShapeError("bin_loss: memberships " + shape_string(memberships.shape()) + " vs " +
                         std::to_string(teacher_p1.size()) + " predictions for " + std::to_string(features) + "x" +
                         std::to_string(bins) + " bins");
    }
    const double eps = weights.eps;
    Tensor p = Tensor::from({N, 1}, std::vector<double>(teacher_p1.begin(), teacher_p1.end()));

    Tensor mass = sum_cols(memberships);
    std::vector<double> mask(FK, 0.0);
    std::size_t occupied = 0;
    for (std::size_t i = 0; i < FK; ++i) {
        if (mass.values()[i] > eps) {
            mask[i] = 1.0;
            ++occupied;
        }
    }
    Tensor mask_t = Tensor::from({1, FK}, mask);
    Tensor safe_mass = clamp_min(mass, eps);

    Tensor mu = div(sum_cols(mul(memberships, p)), safe_mass);                       // 1×FK
    Tensor spread = div(sum_cols(mul(memberships, square(sub(p, mu)))), safe_mass);  // 1×FK
    Tensor var_intra = occupied > 0 ? scale(sum(mul(spread, mask_t)), 1.0 / static_cast<double>(occupied))
                                    : Tensor::scalar(0.0);

    // variance of occupied bin means, per feature
    std::vector<double> inv_count(features, 0.0);
    for (std::size_t f = 0; f < features; ++f) {
        double c = 0.0;
        for (std::size_t k = 0; k < bins; ++k) c += mask[f * bins + k];
        inv_count[f] = c > 0 ? 1.0 / c : 0.0;
    }
    Tensor inv_c = Tensor::from({features, 1}, inv_count);
    Tensor mask_fk = Tensor::from({features, bins}, mask);
    Tensor mu_fk = reshape(mu, {features, bins});
    Tensor centre = mul(sum_rows(mul(mu_fk, mask_fk)), inv_c);
    Tensor per_feature = mul(sum_rows(mul(square(sub(mu_fk, centre)), mask_fk)), inv_c);
    Tensor var_inter = mean(per_feature);

    Tensor loss = add(scale(var_intra, weights.intra),
                      div(Tensor::scalar(weights.inter), add_scalar(var_inter, eps)));
    return {loss, var_intra.item(), var_inter.item()};
}

// ---------------------------------------------------------------------------
// BinLearner

BinLearner::BinLearner(FeatureBox box, std::size_t bins) : box_(std::move(box)), bins_(bins) {
    if (bins_ < 2) throw StateError("BinLearner: need K >= 2");
    raw_ = Tensor::zeros({box_.features(), bins_}, true);
}

Tensor BinLearner::boundaries() const { return gap_boundaries(raw_, box_); }

void BinLearner::check_mutable() const {
    if (frozen_) throw StateError("bin boundaries are frozen");
}

BinSpec BinLearner::snapshot(double temperature) const {
    NoGrad guard;
    Tensor b = boundaries();
    return BinSpec(box_, bins_, std::vector<double>(b.values().begin(), b.values().end()), temperature, frozen_);
}

BinSpec BinLearner::freeze(double temperature) {
    frozen_ = true;
    raw_.set_requires_grad(false);
    return snapshot(temperature);
}

}  // namespace tabkd
