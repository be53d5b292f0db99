#include "tabkd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace tabkd {

namespace {

thread_local Tape* g_active_tape = nullptr;

struct Dims {
    std::size_t rows;
    std::size_t cols;
};

Dims dims2(const Shape& s, const char* op) {
    switch (s.size()) {
        case 0: return {1, 1};
        case 1: return {1, s[0]};
        case 2: return {s[0], s[1]};
        default:
            throw ShapeError(std::string(op) + ": expected rank <= 2, got " + shape_string(s));
    }
}

Tensor make_result(Shape shape, std::vector<double> values) {
    return Tensor::from(std::move(shape), std::move(values));
}

// Records `out` when any input is tracked; `fn` computes input gradients from
// the output gradient.
template <typename Fn>
void maybe_record(std::initializer_list<const Tensor*> inputs, Tensor& out, Fn&& fn) {
    if (!should_record(inputs)) return;
    out.set_requires_grad(true);
    std::vector<Tensor> ins;
    for (const Tensor* t : inputs) ins.push_back(*t);
    Tape::active()->record(std::move(ins), out, std::forward<Fn>(fn));
}

void accumulate(const Tensor& t, std::size_t i, double g) {
    if (!t.requires_grad()) return;
    t.grad_buffer()[i] += g;
}

// Elementwise unary op whose derivative depends on input x and output y.
template <typename F, typename D>
Tensor unary(const Tensor& a, F f, D dfdx) {
    std::vector<double> out(a.numel());
    auto in = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
    Tensor result = make_result(a.shape(), std::move(out));
    maybe_record({&a}, result, [a, result, dfdx]() mutable {
        if (!a.requires_grad() || !result.has_grad()) return;
        auto g = result.grad_buffer();
        auto x = a.values();
        auto y = result.values();
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx(x[i], y[i]);
    });
    return result;
}

enum class BinaryKind { kAdd, kSub, kMul, kDiv };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind, const char* op) {
    const Dims da = dims2(a.shape(), op);
    const Dims db = dims2(b.shape(), op);
    auto compatible = [](std::size_t x, std::size_t y) { return x == y || x == 1 || y == 1; };
    if (!compatible(da.rows, db.rows) || !compatible(da.cols, db.cols)) {
        throw ShapeError(std::string(op) + ": cannot broadcast " + shape_string(a.shape()) +
                         " with " + shape_string(b.shape()));
    }
    const std::size_t rows = std::max(da.rows, db.rows);
    const std::size_t cols = std::max(da.cols, db.cols);
    Shape shape = a.shape() == b.shape() ? a.shape() : Shape{rows, cols};

    auto av = a.values();
    auto bv = b.values();
    auto ia = [da](std::size_t r, std::size_t c) {
        return (da.rows == 1 ? 0 : r) * da.cols + (da.cols == 1 ? 0 : c);
    };
    auto ib = [db](std::size_t r, std::size_t c) {
        return (db.rows == 1 ? 0 : r) * db.cols + (db.cols == 1 ? 0 : c);
    };

    std::vector<double> out(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const double x = av[ia(r, c)];
            const double y = bv[ib(r, c)];
            double v = 0.0;
            switch (kind) {
                case BinaryKind::kAdd: v = x + y; break;
                case BinaryKind::kSub: v = x - y; break;
                case BinaryKind::kMul: v = x * y; break;
                case BinaryKind::kDiv: v = x / y; break;
            }
            out[r * cols + c] = v;
        }
    }
    Tensor result = make_result(std::move(shape), std::move(out));
    maybe_record({&a, &b}, result, [a, b, result, kind, ia, ib, rows, cols]() mutable {
        if (!result.has_grad()) return;
        auto g = result.grad_buffer();
        auto av = a.values();
        auto bv = b.values();
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                const double go = g[r * cols + c];
                const std::size_t i = ia(r, c);
                const std::size_t j = ib(r, c);
                switch (kind) {
                    case BinaryKind::kAdd:
                        accumulate(a, i, go);
                        accumulate(b, j, go);
                        break;
                    case BinaryKind::kSub:
                        accumulate(a, i, go);
                        accumulate(b, j, -go);
                        break;
                    case BinaryKind::kMul:
                        accumulate(a, i, go * bv[j]);
                        accumulate(b, j, go * av[i]);
                        break;
                    case BinaryKind::kDiv:
                        accumulate(a, i, go / bv[j]);
                        accumulate(b, j, -go * av[i] / (bv[j] * bv[j]));
                        break;
                }
            }
        }
    });
    return result;
}

}  // namespace

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void Matrix::append_row(std::span<const double> values) {
    if (rows == 0 && cols == 0) cols = values.size();
    if (values.size() != cols) {
        throw ShapeError("Matrix::append_row: row of width " + std::to_string(values.size()) +
                         " into matrix of width " + std::to_string(cols));
    }
    data.insert(data.end(), values.begin(), values.end());
    ++rows;
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
    Matrix out(indices.size(), cols);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        auto src = row(indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("Tensor::from: shape " + shape_string(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

Tensor Tensor::from_matrix(const Matrix& m, bool requires_grad) {
    return from({m.rows, m.cols}, m.data, requires_grad);
}

std::size_t Tensor::rows() const { return dims2(shape(), "rows").rows; }
std::size_t Tensor::cols() const { return dims2(shape(), "cols").cols; }

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_string(shape()) + " is not a scalar");
    return node_->value[0];
}

Tensor& Tensor::set_requires_grad(bool flag) {
    node_->requires_grad = flag;
    return *this;
}

std::vector<double> Tensor::grad() const {
    if (node_->grad.empty()) return std::vector<double>(numel(), 0.0);
    return node_->grad;
}

std::span<double> Tensor::grad_buffer() const {
    if (node_->grad.empty()) node_->grad.assign(numel(), 0.0);
    return node_->grad;
}

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

Matrix Tensor::to_matrix() const {
    Matrix m;
    m.rows = rows();
    m.cols = cols();
    m.data = node_->value;
    return m;
}

// ---------------------------------------------------------------------------
// Tape

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward) {
    entries_.push_back({std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ShapeError("backward: loss must be a scalar, got " +
                         (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
    }
    if (entries_.empty()) throw StateError("backward: tape is empty");
    for (auto& e : entries_) e.output.zero_grad();
    Tensor seed = loss;
    seed.grad_buffer()[0] = 1.0;
    for (std::size_t i = entries_.size(); i-- > 0;) {
        if (visit_hook_) visit_hook_(i);
        if (entries_[i].output.has_grad()) entries_[i].backward();
    }
}

NoGrad::NoGrad() : saved_(g_active_tape) { g_active_tape = nullptr; }
NoGrad::~NoGrad() { g_active_tape = saved_; }

bool should_record(std::initializer_list<const Tensor*> inputs) {
    if (g_active_tape == nullptr) return false;
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

bool should_record(std::span<const Tensor> inputs) {
    if (g_active_tape == nullptr) return false;
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
}

// ---------------------------------------------------------------------------
// Operations

Tensor matmul(const Tensor& a, const Tensor& b) {
    const Dims da = dims2(a.shape(), "matmul");
    const Dims db = dims2(b.shape(), "matmul");
    if (da.cols != db.rows) {
        throw ShapeError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
    }
    const std::size_t n = da.rows, k = da.cols, m = db.cols;
    std::vector<double> out(n * m, 0.0);
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < n; ++i) {
        double* orow = out.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double x = av[i * k + p];
            if (x == 0.0) continue;
            const double* brow = bv.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) orow[j] += x * brow[j];
        }
    }
    Tensor result = make_result({n, m}, std::move(out));
    maybe_record({&a, &b}, result, [a, b, result, n, k, m]() mutable {
        if (!result.has_grad()) return;
        auto g = result.grad_buffer();
        auto av = a.values();
        auto bv = b.values();
        if (a.requires_grad()) {
            auto ga = a.grad_buffer();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < m; ++j) s += g[i * m + j] * bv[p * m + j];
                    ga[i * k + p] += s;
                }
        }
        if (b.requires_grad()) {
            auto gb = b.grad_buffer();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double x = av[i * k + p];
                    if (x == 0.0) continue;
                    for (std::size_t j = 0; j < m; ++j) gb[p * m + j] += x * g[i * m + j];
                }
        }
    });
    return result;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kAdd, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kSub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kMul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kDiv, "div"); }

Tensor scale(const Tensor& a, double factor) {
    return unary(a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
    return unary(a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor square(const Tensor& a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor relu(const Tensor& a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(
        a,
        [](double x) {
            if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor sqrt(const Tensor& a) {
    return unary(a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Tensor log(const Tensor& a) {
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor clamp_min(const Tensor& a, double eps) {
    return unary(a, [eps](double x) { return x < eps ? eps : x; },
                 [eps](double x, double) { return x < eps ? 0.0 : 1.0; });
}

Tensor softmax_rows(const Tensor& a, double temperature) {
    if (!(temperature > 0.0)) throw ShapeError("softmax_rows: temperature must be positive");
    const Dims d = dims2(a.shape(), "softmax_rows");
    auto av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t r = 0; r < d.rows; ++r) {
        const double* x = av.data() + r * d.cols;
        double* y = out.data() + r * d.cols;
        double mx = *std::max_element(x, x + d.cols);
        double z = 0.0;
        for (std::size_t c = 0; c < d.cols; ++c) {
            y[c] = std::exp((x[c] - mx) / temperature);
            z += y[c];
        }
        for (std::size_t c = 0; c < d.cols; ++c) y[c] /= z;
    }
    Tensor result = make_result(a.shape(), std::move(out));
    maybe_record({&a}, result, [a, result, d, temperature]() mutable {
        if (!result.has_grad()) return;
        auto g = result.grad_buffer();
        auto y = result.values();
        auto ga = a.grad_buffer();
        for (std::size_t r = 0; r < d.rows; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < d.cols; ++c) dot += g[r * d.cols + c] * y[r * d.cols + c];
            for (std::size_t c = 0; c < d.cols; ++c) {
                const std::size_t i = r * d.cols + c;
                ga[i] += y[i] * (g[i] - dot) / temperature;
            }
        }
    });
    return result;
}

Tensor sum_rows(const Tensor& a) {
    const Dims d = dims2(a.shape(), "sum_rows");
    auto av = a.values();
    std::vector<double> out(d.rows, 0.0);
    for (std::size_t r = 0; r < d.rows; ++r)
        for (std::size_t c = 0; c < d.cols; ++c) out[r] += av[r * d.cols + c];
    Tensor result = make_result({d.rows, 1}, std::move(out));
    maybe_record({&a}, result, [a, result, d]() mutable {
        if (!result.has_grad()) return;
        auto g = result.grad_buffer();
        auto ga = a.grad_buffer();
        for (std::size_t r = 0; r < d.rows; ++r)
            for (std::size_t c = 0; c < d.cols; ++c) ga[r * d.cols + c] += g[r];
    });
    return result;
}

Tensor sum_cols(const Tensor& a) {
    const Dims d = dims2(a.shape(), "sum_cols");
    auto av = a.values();
    std::vector<double> out(d.cols, 0.0);
    for (std::size_t r = 0; r < d.rows; ++r)
        for (std::size_t c = 0; c < d.cols; ++c) out[c] += av[r * d.cols + c];
    Tensor result = make_result({1, d.cols}, std::move(out));
    maybe_record({&a}, result, [a, result, d]() mutable {
        if (!result.has_grad()) return;
        auto g = result.grad_buffer();
        auto ga = a.grad_buffer();
        for (std::size_t r = 0; r < d.rows; ++r)
            for (std::size_t c = 0; c < d.cols; ++c) ga[r * d.cols + c] += g[c];
    });
    return result;
}

Tensor mean_rows(const Tensor& a) {
    return scale(sum_rows(a), 1.0 / static_cast<double>(dims2(a.shape(), "mean_rows").cols));
}

Tensor mean_cols(const Tensor& a) {
    return scale(sum_cols(a), 1.0 / static_cast<double>(dims2(a.shape(), "mean_cols").rows));
}

Tensor sum(const Tensor& a) {
    auto av = a.values();
    const double total = std::accumulate(av.begin(), av.end(), 0.0);
    Tensor result = Tensor::scalar(total);
    maybe_record({&a}, result, [a, result]() mutable {
        if (!result.has_grad()) return;
        const double g = result.grad_buffer()[0];
        for (double& x : a.grad_buffer()) x += g;
    });
    return result;
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw ShapeError("mean: empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
    }
    std::vector<double> values(a.values().begin(), a.values().end());
    Tensor result = make_result(std::move(shape), std::move(values));
    maybe_record({&a}, result, [a, result]() mutable {
        if (!result.has_grad()) return;
        auto g = result.grad_buffer();
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
    return result;
}

Tensor dropout(const Tensor& a, double keep_prob, std::mt19937_64& rng, bool training) {
    if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw ShapeError("dropout: keep probability must be in (0, 1]");
    if (!training || keep_prob == 1.0) return a;
    std::bernoulli_distribution keep(keep_prob);
    std::vector<double> mask(a.numel());
    for (double& m : mask) m = keep(rng) ? 1.0 / keep_prob : 0.0;
    return mul(a, Tensor::from(a.shape(), std::move(mask)));
}

Tensor standardize_cols(const Tensor& a, double eps) {
    const double n = static_cast<double>(a.rows());
    Tensor centred = sub(a, mean_cols(a));
    Tensor var = scale(sum_cols(square(centred)), 1.0 / n);
    return div(centred, sqrt(add_scalar(var, eps)));
}

Tensor row_entropy(const Tensor& probs, double eps) {
    return neg(sum_rows(mul(probs, log(clamp_min(probs, eps)))));
}

}  // namespace tabkd
