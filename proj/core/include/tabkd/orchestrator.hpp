#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tabkd/binning.hpp"
#include "tabkd/data.hpp"
#include "tabkd/generator.hpp"
#include "tabkd/metrics.hpp"
#include "tabkd/student.hpp"
#include "tabkd/teachers.hpp"

namespace tabkd {

enum class BinningMode { kDynamic, kStatic };
/// kScale shrinks every phase proportionally so the whole run fits the
/// budget; kCap runs the configured schedule and stops once the budget is hit.
enum class BudgetMode { kScale, kCap };
enum class Method { kTabKD, kRandom, kEntropyGuided };

std::string to_string(BinningMode mode);
std::string to_string(Method method);
Method parse_method(const std::string& name);

/// Per-family temperature row (τ_start, τ_end, τ_phase2, T_distill).
TemperatureSchedule default_temperatures(TeacherFamily family, std::size_t phase1_steps = 200);

struct RunConfig {
    std::string dataset = "dataset";
    std::filesystem::path data_dir;
    std::filesystem::path teacher_path;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};

    std::size_t batch = 128;
    std::size_t warmup_steps = 30;
    std::size_t phase1_steps = 200;
    std::size_t phase2_steps = 400;
    std::size_t bins = 8;

    double lambda_cov = 10.0;
    double lambda_hard = 2.0;
    double lambda_intra = 1.0;
    double lambda_inter = 1.0;
    double lambda_div = 1.0;
    double lambda_boundary = 1.0;

    // Unset values come from the teacher family's row.
    std::optional<double> tau_start;
    std::optional<double> tau_end;
    std::optional<double> tau_phase2;
    std::optional<double> t_distill;

    BinningMode binning = BinningMode::kDynamic;
    std::optional<std::uint64_t> query_budget;
    BudgetMode budget_mode = BudgetMode::kScale;

    double learning_rate = 1e-3;
    double boundary_lr = 0.05;
    double box_radius = 3.0;
    double adversarial_fraction = 0.9;
    std::size_t replay_capacity = 0;  // 0: warmup_steps · batch
    std::size_t checkpoint_every = 20;
    std::size_t generator_steps_per_iter = 1;
    std::size_t student_steps_per_iter = 1;
    bool fresh_phase2_generator = true;
    KlDirection kl_direction = KlDirection::kStudentToTeacher;
    std::size_t student_hidden = 32;
    GeneratorConfig generator;
    bool log_samples = true;
    std::filesystem::path output_dir = "runs";

    /// Throws StateError naming the offending field.
    void validate() const;
    TemperatureSchedule temperatures(TeacherFamily family) const;
};

std::string to_json_text(const RunConfig& config);
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Applies "key=value"; the value is read as JSON when it parses, else as a string.
void apply_override(RunConfig& config, const std::string& assignment);

/// Step counts actually executed after budget scaling.
struct StepPlan {
    std::size_t warmup = 0;
    std::size_t phase1 = 0;
    std::size_t phase2 = 0;
    std::size_t batch = 0;
    std::size_t generator_steps_per_iter = 1;

    /// Teacher queries of a run that completes this plan.
    std::uint64_t queries() const;
};

StepPlan plan_steps(const RunConfig& config);

struct Checkpoint {
    std::size_t step = 0;
    std::uint64_t queries = 0;
    double coverage = 0.0;
    double agreement = 0.0;
    double accuracy = 0.0;
    double f1 = 0.0;
    std::optional<double> auc;
    double student_loss = 0.0;
    double diversity = 0.0;
    double hardness = 0.0;
};

struct RunRecord {
    Method method = Method::kTabKD;
    BinningMode binning = BinningMode::kDynamic;
    std::string dataset;
    TeacherFamily teacher = TeacherFamily::kMlp;
    std::uint64_t seed = 0;
    StepPlan plan;
    std::vector<Checkpoint> checkpoints;
    EvalReport final_metrics;
    std::uint64_t teacher_queries = 0;
    bool partial = false;
    std::size_t boundary_steps = 0;
    std::vector<double> warmup_losses;
    BinSpec spec;
    StudentNet student;
};

/// gzip CSV of every teacher-labelled batch: step, phase, feature values, p1.
class SampleLog {
public:
    SampleLog(const std::filesystem::path& path, std::size_t features);
    ~SampleLog();
    SampleLog(const SampleLog&) = delete;
    SampleLog& operator=(const SampleLog&) = delete;

    void append(std::size_t step, const std::string& phase, const Matrix& X, const Matrix& teacher_probs);
    void close();

private:
    void* file_ = nullptr;
    std::size_t features_;
};

struct SampleRow {
    std::size_t step = 0;
    std::string phase;
    std::vector<double> x;
    double p1 = 0.0;
};

std::vector<SampleRow> read_sample_log(const std::filesystem::path& path);

/// Warmup, boundary learning (or uniform bins), then alternating generator
/// and student steps with coverage tracking and periodic evaluation on the
/// held-out split.
RunRecord run_distillation(const RunConfig& config, const Dataset& data, const TeacherOracle& teacher,
                           std::uint64_t seed, SampleLog* log = nullptr);

/// Query-matched baselines sharing the TabKD student, loss and record schema.
RunRecord run_baseline(const RunConfig& config, const Dataset& data, const TeacherOracle& teacher,
                       std::uint64_t seed, Method strategy, SampleLog* log = nullptr);

RunRecord run_method(const RunConfig& config, const Dataset& data, const TeacherOracle& teacher, std::uint64_t seed,
                     Method method, SampleLog* log = nullptr);

/// Git-style blob hash ("blob <size>\0" + content), lowercase hex.
std::string git_blob_sha1(const std::filesystem::path& path);

/// Writes metrics.csv, final.csv, binspec.json, student.json and run_meta.json.
void write_run(const std::filesystem::path& dir, const RunRecord& record, const RunConfig& config);

/// Runs every configured seed into <out>/seed_<s>/ and writes summary.csv.
std::vector<RunRecord> run_seeds(const RunConfig& config, const Dataset& data, const TeacherOracle& teacher,
                                 Method method, const std::filesystem::path& out);

struct AblationRow {
    std::string dataset;
    TeacherFamily teacher = TeacherFamily::kMlp;
    MeanStd dynamic_accuracy;
    MeanStd static_accuracy;
    MeanStd dynamic_agreement;
    MeanStd static_agreement;
};

/// Dynamic and static binning on identical seeds; writes <out>/dynamic,
/// <out>/static and <out>/ablation.csv.
AblationRow run_ablation(const RunConfig& config, const Dataset& data, const TeacherOracle& teacher,
                         const std::filesystem::path& out);

inline constexpr const char* kMetricsHeader =
    "step,queries,coverage,agreement,accuracy,f1,auc,student_loss,diversity,hardness";
inline constexpr const char* kFinalHeader =
    "dataset,teacher,method,binning,seed,accuracy,f1,auc,agreement,coverage,queries,partial";
inline constexpr const char* kAblationHeader =
    "dataset,teacher,dynamic_accuracy,static_accuracy,dynamic_agreement,static_agreement";

}  // namespace tabkd
