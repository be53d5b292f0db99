#include "tabkd/nn.hpp"

#include <cmath>

namespace tabkd {

Linear::Linear(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> init(-bound, bound);
    std::vector<double> w(in * out);
    std::vector<double> b(out);
    for (double& x : w) x = init(rng);
    for (double& x : b) x = init(rng);
    weight = Tensor::from({in, out}, std::move(w), true);
    bias = Tensor::from({1, out}, std::move(b), true);
}

Tensor Linear::forward(const Tensor& x) const { return add(matmul(x, weight), bias); }

Mlp::Mlp(const std::vector<std::size_t>& sizes, std::mt19937_64& rng, double dropout) : dropout_(dropout) {
    if (sizes.size() < 2) throw ShapeError("Mlp: need at least input and output sizes");
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) layers_.emplace_back(sizes[i], sizes[i + 1], rng);
}

Mlp::Mlp(std::vector<Linear> layers, double dropout) : layers_(std::move(layers)), dropout_(dropout) {
    if (layers_.empty()) throw ShapeError("Mlp: no layers");
}

Tensor Mlp::forward(const Tensor& x, bool training, std::mt19937_64* rng) const {
    if (x.cols() != input_size()) {
        throw ShapeError("Mlp::forward: expected " + std::to_string(input_size()) + " input columns, got " +
                         shape_string(x.shape()));
    }
    Tensor h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i].forward(h);
        if (i + 1 < layers_.size()) {
            h = relu(h);
            if (training && dropout_ > 0.0 && rng != nullptr) h = tabkd::dropout(h, 1.0 - dropout_, *rng, true);
        }
    }
    return h;
}

std::vector<Tensor> Mlp::parameters() const {
    std::vector<Tensor> out;
    for (const auto& l : layers_) {
        out.push_back(l.weight);
        out.push_back(l.bias);
    }
    return out;
}

void Mlp::set_requires_grad(bool flag) {
    for (auto& l : layers_) {
        l.weight.set_requires_grad(flag);
        l.bias.set_requires_grad(flag);
    }
}

Mlp Mlp::clone() const {
    std::vector<Linear> copy;
    for (const auto& l : layers_) {
        Linear c;
        c.weight = l.weight.detach().set_requires_grad(l.weight.requires_grad());
        c.bias = l.bias.detach().set_requires_grad(l.bias.requires_grad());
        copy.push_back(std::move(c));
    }
    return Mlp(std::move(copy), dropout_);
}

FrozenParams::FrozenParams(std::vector<Tensor> params) : params_(std::move(params)) {
    for (auto& p : params_) {
        saved_.push_back(p.requires_grad());
        p.set_requires_grad(false);
    }
}

FrozenParams::~FrozenParams() {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].set_requires_grad(saved_[i]);
}

}  // namespace tabkd
