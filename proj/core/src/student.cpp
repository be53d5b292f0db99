#include "tabkd/student.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json_util.hpp"

namespace tabkd {

using detail::json;

StudentNet::StudentNet(std::size_t features, std::mt19937_64& rng, std::size_t hidden)
    : net_({features, hidden, 2}, rng) {}

StudentNet::StudentNet(Mlp net) : net_(std::move(net)) {
    if (net_.output_size() != 2) throw ShapeError("StudentNet: network must have two outputs");
}

Tensor StudentNet::probs(const Tensor& X) const { return softmax_rows(net_.forward(X)); }

Matrix StudentNet::predict(const Matrix& X) const {
    NoGrad guard;
    return probs(Tensor::from_matrix(X)).to_matrix();
}

std::vector<int> StudentNet::predict_labels(const Matrix& X) const {
    const Matrix p = predict(X);
    std::vector<int> out(p.rows);
    for (std::size_t i = 0; i < p.rows; ++i) out[i] = p(i, 1) > p(i, 0) ? 1 : 0;
    return out;
}

void StudentNet::save(const std::filesystem::path& path) const {
    detail::write_json(path, json{{"format", "tabkd-model"},
                                  {"version", 1},
                                  {"family", "student"},
                                  {"features", features()},
                                  {"network", detail::mlp_to_json(net_)}});
}

StudentNet StudentNet::load(const std::filesystem::path& path) {
    const json j = detail::read_json(path);
    try {
        if (j.value("format", "") != "tabkd-model" || j.value("family", "") != "student") {
            throw DataError(path.string() + " is not a student model file");
        }
        Mlp net = detail::mlp_from_json(j.at("network"));
        net.set_requires_grad(true);
        return StudentNet(std::move(net));
    } catch (const json::exception& e) {
        throw DataError("student file " + path.string() + ": " + e.what());
    }
}

Matrix temper(const Matrix& probs, double temperature) {
    if (!(temperature > 0.0)) throw StateError("temper: temperature must be positive");
    Matrix out = probs;
    if (temperature == 1.0) return out;
    const double power = 1.0 / temperature;
    for (std::size_t i = 0; i < out.rows; ++i) {
        auto row = out.row(i);
        // work in log space so tiny probabilities do not underflow
        double mx = -std::numeric_limits<double>::infinity();
        for (double& v : row) {
            v = power * std::log(std::max(v, kLogEps));
            mx = std::max(mx, v);
        }
        double z = 0.0;
        for (double& v : row) {
            v = std::exp(v - mx);
            z += v;
        }
        for (double& v : row) v /= z;
    }
    return out;
}

Tensor distill_loss(const Tensor& student_probs, const Matrix& teacher_probs, double temperature,
                    KlDirection direction) {
    if (student_probs.rows() != teacher_probs.rows || student_probs.cols() != teacher_probs.cols) {
        throw ShapeError("distill_loss: student " + shape_string(student_probs.shape()) + " vs teacher [" +
                         std::to_string(teacher_probs.rows) + ", " + std::to_string(teacher_probs.cols) + "]");
    }
    const Matrix target = temper(teacher_probs, temperature);
    Matrix log_target = target;
    for (double& v : log_target.data) v = std::log(std::max(v, kLogEps));
    Tensor t = Tensor::from_matrix(target);
    Tensor log_t = Tensor::from_matrix(log_target);
    Tensor log_s = log(clamp_min(student_probs, kLogEps));
    if (direction == KlDirection::kStudentToTeacher) {
        return mean(sum_rows(mul(student_probs, sub(log_s, log_t))));
    }
    return mean(sum_rows(mul(t, sub(log_t, log_s))));
}

// ---------------------------------------------------------------------------
// ReplayBuffer

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw StateError("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::insert(const Matrix& X, const Matrix& teacher_probs) {
    if (X.rows != teacher_probs.rows) throw ShapeError("ReplayBuffer::insert: row counts differ");
    for (std::size_t i = 0; i < X.rows; ++i) {
        if (queries_.size() == capacity_) {
            queries_.pop_front();
            labels_.pop_front();
        }
        queries_.emplace_back(X.row(i).begin(), X.row(i).end());
        labels_.emplace_back(teacher_probs.row(i).begin(), teacher_probs.row(i).end());
    }
}

std::pair<Matrix, Matrix> ReplayBuffer::sample(std::size_t n, std::mt19937_64& rng) const {
    if (queries_.empty()) throw StateError("replay buffer is empty");
    std::uniform_int_distribution<std::size_t> pick(0, queries_.size() - 1);
    Matrix X(0, queries_.front().size());
    Matrix P(0, labels_.front().size());
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = pick(rng);
        X.append_row(queries_[j]);
        P.append_row(labels_[j]);
    }
    return {std::move(X), std::move(P)};
}

std::pair<std::size_t, std::size_t> split_batch(std::size_t batch, double adversarial_fraction) {
    const auto adv = static_cast<std::size_t>(std::llround(adversarial_fraction * static_cast<double>(batch)));
    return {std::min(adv, batch), batch - std::min(adv, batch)};
}

StudentStepResult student_step(StudentNet& student, const Matrix& X_adv, const Matrix& teacher_adv,
                               std::size_t replay_rows, const ReplayBuffer& buffer, double temperature,
                               Adam& optimizer, std::mt19937_64& rng, KlDirection direction) {
    if (replay_rows > 0 && buffer.empty()) {
        throw StateError("student_step: replay buffer is empty (warmup must run before adversarial training)");
    }
    Matrix X = X_adv;
    Matrix P = teacher_adv;
    if (replay_rows > 0) {
        auto [Xr, Pr] = buffer.sample(replay_rows, rng);
        for (std::size_t i = 0; i < Xr.rows; ++i) {
            X.append_row(Xr.row(i));
            P.append_row(Pr.row(i));
        }
    }
    Tape tape;
    Tensor loss = distill_loss(student.probs(Tensor::from_matrix(X)), P, temperature, direction);
    if (!std::isfinite(loss.item())) throw NumericError("student loss is not finite");
    optimizer.zero_grad();
    tape.backward(loss);
    optimizer.step();
    return {loss.item(), X_adv.rows, replay_rows};
}

WarmupResult warmup(StudentNet& student, const TeacherOracle& teacher, const FeatureBox& box, std::size_t steps,
                    std::size_t batch, ReplayBuffer& buffer, Adam& optimizer, std::mt19937_64& rng,
                    double temperature, KlDirection direction, const BatchSink& sink) {
    if (!buffer.empty()) throw StateError("warmup: replay buffer must start empty");
    WarmupResult result;
    for (std::size_t s = 0; s < steps; ++s) {
        const Matrix X = box.sample_uniform(batch, rng);
        const Matrix P = teacher.predict(X);
        buffer.insert(X, P);
        if (sink) sink(s, X, P);
        Tape tape;
        Tensor loss = distill_loss(student.probs(Tensor::from_matrix(X)), P, temperature, direction);
        if (!std::isfinite(loss.item())) throw NumericError("warmup loss is not finite");
        optimizer.zero_grad();
        tape.backward(loss);
        optimizer.step();
        result.losses.push_back(loss.item());
    }
    return result;
}

}  // namespace tabkd
