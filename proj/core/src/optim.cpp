#include "tabkd/optim.hpp"

#include <cmath>
#include <numbers>

namespace tabkd {

double CosineSchedule::at(std::size_t step) const {
    if (horizon == 0) return base;
    const double t = static_cast<double>(std::min(step, horizon)) / static_cast<double>(horizon);
    return floor + (base - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

Adam::Adam(CosineSchedule schedule, AdamOptions options) : schedule_(schedule), options_(options) {}

void Adam::add_param(std::string name, Tensor param) {
    m_.emplace_back(param.numel(), 0.0);
    v_.emplace_back(param.numel(), 0.0);
    names_.push_back(std::move(name));
    params_.push_back(std::move(param));
}

void Adam::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (!params_[i].has_grad()) continue;
        for (double g : params_[i].grad_buffer()) {
            if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient in parameter '" + names_[i] + "'");
        }
    }
    const double lr = schedule_.at(step_);
    const double t = static_cast<double>(step_ + 1);
    const double c1 = 1.0 - std::pow(options_.beta1, t);
    const double c2 = 1.0 - std::pow(options_.beta2, t);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        if (!p.has_grad()) continue;
        auto g = p.grad_buffer();
        auto w = p.mutable_values();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = options_.beta1 * m[j] + (1.0 - options_.beta1) * g[j];
            v[j] = options_.beta2 * v[j] + (1.0 - options_.beta2) * g[j] * g[j];
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            w[j] -= lr * mhat / (std::sqrt(vhat) + options_.eps);
        }
    }
    ++step_;
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

}  // namespace tabkd
