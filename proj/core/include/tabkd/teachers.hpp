#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "tabkd/data.hpp"
#include "tabkd/nn.hpp"
#include "tabkd/tree.hpp"

namespace tabkd {

enum class TeacherFamily { kMlp, kRandomForest, kGbdt, kRule };

std::string to_string(TeacherFamily family);
/// Accepts mlp|nn, rf|random_forest, gbdt|xgboost, rule.
TeacherFamily parse_family(const std::string& name);

/// Bounds applied to every teacher probability before it leaves the oracle.
inline constexpr double kTeacherProbFloor = 1e-6;

/// Frozen black-box classifier. Every prediction goes through predict(),
/// which validates input, clamps probabilities to [1e-6, 1 - 1e-6] and counts
/// one query per row.
class TeacherOracle {
public:
    virtual ~TeacherOracle() = default;

    virtual TeacherFamily family() const = 0;
    virtual std::size_t features() const = 0;
    /// Only differentiable teachers may be asked for input gradients.
    virtual bool differentiable() const { return false; }

    /// N×F rows -> N×2 probabilities (p0, p1).
    Matrix predict(const Matrix& X) const;
    std::vector<int> predict_labels(const Matrix& X) const;

    /// Differentiable forward pass for teachers that support it; counts queries
    /// like predict(). Throws StateError otherwise.
    virtual Tensor forward_graph(const Tensor& X) const;

    std::uint64_t queries() const { return queries_.load(std::memory_order_relaxed); }

    virtual void save(const std::filesystem::path& path) const = 0;

protected:
    virtual Matrix predict_raw(const Matrix& X) const = 0;
    void count_queries(std::size_t n) const { queries_.fetch_add(n, std::memory_order_relaxed); }
    void validate(const Matrix& X) const;

private:
    mutable std::atomic<std::uint64_t> queries_{0};
};

class MlpTeacher final : public TeacherOracle {
public:
    explicit MlpTeacher(Mlp net) : net_(std::move(net)) {}

    TeacherFamily family() const override { return TeacherFamily::kMlp; }
    std::size_t features() const override { return net_.input_size(); }
    bool differentiable() const override { return true; }
    Tensor forward_graph(const Tensor& X) const override;
    void save(const std::filesystem::path& path) const override;
    const Mlp& net() const { return net_; }

protected:
    Matrix predict_raw(const Matrix& X) const override;

private:
    Mlp net_;
};

class TreeEnsembleTeacher final : public TeacherOracle {
public:
    enum class Mode { kAverage, kAdditiveLogit };

    TreeEnsembleTeacher(TeacherFamily family, std::size_t features, std::vector<DecisionTree> trees,
                        double learning_rate = 1.0, double base_score = 0.0);

    TeacherFamily family() const override { return family_; }
    std::size_t features() const override { return features_; }
    Mode mode() const { return family_ == TeacherFamily::kGbdt ? Mode::kAdditiveLogit : Mode::kAverage; }
    const std::vector<DecisionTree>& trees() const { return trees_; }
    double learning_rate() const { return learning_rate_; }
    double base_score() const { return base_score_; }
    void save(const std::filesystem::path& path) const override;

    /// Positive-class probability from the first `stages` trees, without
    /// clamping or counting. Used for training diagnostics.
    double raw_positive(std::span<const double> row, std::size_t stages) const;

protected:
    Matrix predict_raw(const Matrix& X) const override;

private:
    TeacherFamily family_;
    std::size_t features_;
    std::vector<DecisionTree> trees_;
    double learning_rate_;
    double base_score_;
};

/// Synthetic teacher: positive probability 0.5 - 0.5·(-1)^k·Π tanh(sharpness·(x_f - t_f))
/// over k (feature, threshold) terms, i.e. a smoothed parity (XOR) of threshold rules.
class RuleTeacher final : public TeacherOracle {
public:
    struct Term {
        std::size_t feature;
        double threshold;
    };

    RuleTeacher(std::size_t features, std::vector<Term> terms, double sharpness = 25.0);

    TeacherFamily family() const override { return TeacherFamily::kRule; }
    std::size_t features() const override { return features_; }
    const std::vector<Term>& terms() const { return terms_; }
    int hard_label(std::span<const double> row) const;
    void save(const std::filesystem::path& path) const override;

protected:
    Matrix predict_raw(const Matrix& X) const override;

private:
    std::size_t features_;
    std::vector<Term> terms_;
    double sharpness_;
};

std::unique_ptr<TeacherOracle> load_teacher(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Training

struct MlpTeacherConfig {
    std::vector<std::size_t> hidden{128, 64};
    double dropout = 0.2;
    std::size_t epochs = 200;
    std::size_t batch = 128;
    double learning_rate = 1e-3;
    std::size_t patience = 20;  // epochs without training-loss improvement
    double min_delta = 1e-4;
};

struct ForestConfig {
    std::size_t trees = 100;
    std::size_t max_depth = 10;
    std::size_t min_samples_split = 5;
};

struct BoostConfig {
    std::size_t estimators = 100;
    std::size_t max_depth = 6;
    double learning_rate = 0.1;
    double l2 = 1.0;
    double min_child_hessian = 1.0;
};

struct TeacherReport {
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    std::size_t epochs_run = 0;
    std::vector<double> loss_curve;  // per epoch (mlp) or per stage (gbdt)
};

std::unique_ptr<MlpTeacher> train_mlp_teacher(const Matrix& X, const std::vector<int>& y, const MlpTeacherConfig& cfg,
                                              std::uint64_t seed, TeacherReport* report = nullptr);
std::unique_ptr<TreeEnsembleTeacher> train_random_forest(const Matrix& X, const std::vector<int>& y,
                                                         const ForestConfig& cfg, std::uint64_t seed);
std::unique_ptr<TreeEnsembleTeacher> train_gbdt(const Matrix& X, const std::vector<int>& y, const BoostConfig& cfg,
                                                TeacherReport* report = nullptr);

/// Trains the requested family on the dataset's training split and fills the
/// report's train/test accuracies.
std::unique_ptr<TeacherOracle> train_teacher(const Dataset& ds, TeacherFamily family, std::uint64_t seed,
                                             TeacherReport* report = nullptr);

}  // namespace tabkd
