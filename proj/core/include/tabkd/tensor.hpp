#pragma once

// Dense float64 tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a shared handle: copies alias the same buffer, exactly like a
// parameter reference in the larger frameworks. Operations record themselves
// on the thread's active Tape whenever at least one input requires a
// gradient; with no active tape (or under NoGrad) they compute values only.

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tabkd/error.hpp"

namespace tabkd {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Plain row-major matrix used for data batches and teacher outputs.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    bool empty() const { return rows == 0; }
    void append_row(std::span<const double> values);
    Matrix select_rows(std::span<const std::size_t> indices) const;
};

class Tensor {
public:
    struct Node {
        Shape shape;
        std::vector<double> value;
        std::vector<double> grad;  // empty until a gradient is accumulated
        bool requires_grad = false;
    };

    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor from_matrix(const Matrix& m, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t numel() const { return node_->value.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> values() const { return node_->value; }
    std::span<double> mutable_values() { return node_->value; }
    double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool flag);

    bool has_grad() const { return !node_->grad.empty(); }
    /// Gradient buffer; zeros when nothing has been accumulated.
    std::vector<double> grad() const;
    std::span<double> grad_buffer() const;  // allocates on first use
    void zero_grad() { node_->grad.clear(); }

    /// Fresh tensor with copied values and no gradient tracking.
    Tensor detach() const;
    Matrix to_matrix() const;

    Node* node() const { return node_.get(); }
    bool same_as(const Tensor& other) const { return node_ == other.node_; }

private:
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    std::shared_ptr<Node> node_;
};

/// Records differentiable operations for one backward pass.
///
/// Constructing a Tape makes it the active tape of the calling thread until it
/// is destroyed; tapes nest like a stack. backward() visits the recorded
/// operations in exact reverse order. Calling backward() twice on the same tape
/// adds the second pass's gradients onto the leaves (intermediate gradients are
/// reset at the start of each pass).
class Tape {
public:
    using BackwardFn = std::function<void()>;

    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    void record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward);
    void backward(const Tensor& loss);
    std::size_t size() const { return entries_.size(); }
    void clear() { entries_.clear(); }

    /// Observer called with the index of each entry as backward() visits it.
    void set_visit_hook(std::function<void(std::size_t)> hook) { visit_hook_ = std::move(hook); }

private:
    struct Entry {
        std::vector<Tensor> inputs;
        Tensor output;
        BackwardFn backward;
    };
    std::vector<Entry> entries_;
    Tape* previous_ = nullptr;
    std::function<void(std::size_t)> visit_hook_;
};

/// Suspends recording on the current thread for its lifetime.
class NoGrad {
public:
    NoGrad();
    ~NoGrad();
    NoGrad(const NoGrad&) = delete;
    NoGrad& operator=(const NoGrad&) = delete;

private:
    Tape* saved_;
};

/// True when an op over `inputs` must be recorded.
bool should_record(std::initializer_list<const Tensor*> inputs);
bool should_record(std::span<const Tensor> inputs);

// Differentiable operations. 2-D ops treat rank-1 tensors of length n as 1×n.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);  // broadcasts size-1 dims
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor neg(const Tensor& a);
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor clamp_min(const Tensor& a, double eps);
/// Row-wise softmax of a / temperature.
Tensor softmax_rows(const Tensor& a, double temperature = 1.0);
Tensor sum_rows(const Tensor& a);   // N×M -> N×1
Tensor sum_cols(const Tensor& a);   // N×M -> 1×M
Tensor mean_rows(const Tensor& a);  // N×M -> N×1
Tensor mean_cols(const Tensor& a);  // N×M -> 1×M
Tensor sum(const Tensor& a);        // -> scalar
Tensor mean(const Tensor& a);       // -> scalar
Tensor reshape(const Tensor& a, Shape shape);
/// Inverted dropout: surviving entries are scaled by 1/keep_prob. Identity when
/// `training` is false.
Tensor dropout(const Tensor& a, double keep_prob, std::mt19937_64& rng, bool training);

/// Column-wise standardization over the rows of a batch (batch norm without
/// the affine part), using the biased variance.
Tensor standardize_cols(const Tensor& a, double eps = 1e-5);

/// Row-wise Shannon entropy (natural log) of probability rows, clamped at eps.
Tensor row_entropy(const Tensor& probs, double eps = 1e-12);

inline constexpr double kLogEps = 1e-12;

}  // namespace tabkd
