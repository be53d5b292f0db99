#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "tabkd/tensor.hpp"

namespace tabkd {

/// Fully connected layer y = x W + b with W of shape in×out.
struct Linear {
    Tensor weight;
    Tensor bias;

    Linear() = default;
    Linear(std::size_t in, std::size_t out, std::mt19937_64& rng);

    std::size_t in_features() const { return weight.rows(); }
    std::size_t out_features() const { return weight.cols(); }
    Tensor forward(const Tensor& x) const;
};

/// Multilayer perceptron with ReLU hidden activations and a linear head.
///
/// Dropout, when configured, is applied after every hidden activation in
/// training mode only.
class Mlp {
public:
    Mlp() = default;
    Mlp(const std::vector<std::size_t>& sizes, std::mt19937_64& rng, double dropout = 0.0);
    Mlp(std::vector<Linear> layers, double dropout);

    /// Raw outputs of the last layer.
    Tensor forward(const Tensor& x, bool training = false, std::mt19937_64* rng = nullptr) const;

    std::vector<Tensor> parameters() const;
    void set_requires_grad(bool flag);
    Mlp clone() const;

    const std::vector<Linear>& layers() const { return layers_; }
    std::vector<Linear>& layers() { return layers_; }
    double dropout() const { return dropout_; }
    std::size_t input_size() const { return layers_.front().in_features(); }
    std::size_t output_size() const { return layers_.back().out_features(); }

private:
    std::vector<Linear> layers_;
    double dropout_ = 0.0;
};

/// Temporarily turns off gradient tracking on a set of parameters so a
/// forward pass through them does not accumulate into their gradients.
class FrozenParams {
public:
    explicit FrozenParams(std::vector<Tensor> params);
    ~FrozenParams();
    FrozenParams(const FrozenParams&) = delete;
    FrozenParams& operator=(const FrozenParams&) = delete;

private:
    std::vector<Tensor> params_;
    std::vector<bool> saved_;
};

}  // namespace tabkd
