#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tabkd/tensor.hpp"

namespace tabkd {

/// Cosine-annealed learning rate from `base` at step 0 down to `floor` at `horizon`.
struct CosineSchedule {
    double base = 1e-3;
    std::size_t horizon = 1;
    double floor = 0.0;

    double at(std::size_t step) const;
};

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction over a fixed parameter set.
class Adam {
public:
    Adam(CosineSchedule schedule, AdamOptions options = {});

    void add_param(std::string name, Tensor param);
    const std::vector<Tensor>& params() const { return params_; }

    /// Applies one update from the accumulated gradients, then advances the
    /// schedule. Parameters without a gradient are left untouched.
    void step();
    void zero_grad();

    double current_lr() const { return schedule_.at(step_); }
    std::size_t steps_taken() const { return step_; }
    const CosineSchedule& schedule() const { return schedule_; }
    const std::vector<double>& first_moment(std::size_t i) const { return m_[i]; }
    const std::vector<double>& second_moment(std::size_t i) const { return v_[i]; }

private:
    CosineSchedule schedule_;
    AdamOptions options_;
    std::vector<std::string> names_;
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::size_t step_ = 0;
};

}  // namespace tabkd
