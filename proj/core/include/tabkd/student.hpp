#pragma once

#include <cstddef>
#include <deque>
#include <filesystem>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "tabkd/data.hpp"
#include "tabkd/nn.hpp"
#include "tabkd/optim.hpp"
#include "tabkd/teachers.hpp"

namespace tabkd {

/// Compact F→hidden→2 ReLU network with a softmax head.
class StudentNet {
public:
    StudentNet() = default;
    StudentNet(std::size_t features, std::mt19937_64& rng, std::size_t hidden = 32);
    explicit StudentNet(Mlp net);

    Tensor probs(const Tensor& X) const;
    Matrix predict(const Matrix& X) const;
    std::vector<int> predict_labels(const Matrix& X) const;

    std::vector<Tensor> parameters() const { return net_.parameters(); }
    const Mlp& net() const { return net_; }
    std::size_t features() const { return net_.input_size(); }

    void save(const std::filesystem::path& path) const;
    static StudentNet load(const std::filesystem::path& path);

private:
    Mlp net_;
};

/// Which way the distillation divergence runs. The default is
/// KL(student ‖ teacher).
enum class KlDirection { kStudentToTeacher, kTeacherToStudent };

/// p^(1/T) / Z per row.
Matrix temper(const Matrix& probs, double temperature);

/// Mean over rows of KL between student probabilities and the tempered
/// teacher labels, with logs taken on values clamped at 1e-12.
Tensor distill_loss(const Tensor& student_probs, const Matrix& teacher_probs, double temperature,
                    KlDirection direction = KlDirection::kStudentToTeacher);

/// Ring buffer of (query, raw teacher probabilities) pairs.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void insert(const Matrix& X, const Matrix& teacher_probs);
    /// Uniform draw (with replacement) of n stored pairs.
    std::pair<Matrix, Matrix> sample(std::size_t n, std::mt19937_64& rng) const;

    std::size_t size() const { return queries_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return queries_.empty(); }

private:
    std::size_t capacity_;
    std::deque<std::vector<double>> queries_;
    std::deque<std::vector<double>> labels_;
};

/// Adversarial/replay row counts for a minibatch: (round(fraction·B), rest).
std::pair<std::size_t, std::size_t> split_batch(std::size_t batch, double adversarial_fraction = 0.9);

struct StudentStepResult {
    double loss = 0.0;
    std::size_t adversarial_rows = 0;
    std::size_t replay_rows = 0;
};

/// One optimizer step on adversarial rows (already labelled by the teacher)
/// topped up with `replay_rows` buffer samples.
StudentStepResult student_step(StudentNet& student, const Matrix& X_adv, const Matrix& teacher_adv,
                               std::size_t replay_rows, const ReplayBuffer& buffer, double temperature,
                               Adam& optimizer, std::mt19937_64& rng,
                               KlDirection direction = KlDirection::kStudentToTeacher);

struct WarmupResult {
    std::vector<double> losses;
};

/// Observer for every teacher-labelled batch: (step, queries, teacher probabilities).
using BatchSink = std::function<void(std::size_t, const Matrix&, const Matrix&)>;

/// Uniform queries from the box, teacher-labelled, used both to fit the
/// student and to fill the replay buffer.
WarmupResult warmup(StudentNet& student, const TeacherOracle& teacher, const FeatureBox& box, std::size_t steps,
                    std::size_t batch, ReplayBuffer& buffer, Adam& optimizer, std::mt19937_64& rng,
                    double temperature = 1.0, KlDirection direction = KlDirection::kStudentToTeacher,
                    const BatchSink& sink = {});

}  // namespace tabkd
