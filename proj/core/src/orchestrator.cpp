#include "tabkd/orchestrator.hpp"

#include <openssl/evp.h>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "json_util.hpp"
#include "tabkd/bin_learning.hpp"
#include "tabkd/coverage.hpp"

namespace tabkd {

using detail::json;

std::string to_string(BinningMode mode) { return mode == BinningMode::kDynamic ? "dynamic" : "static"; }

std::string to_string(Method method) {
    switch (method) {
        case Method::kTabKD: return "tabkd";
        case Method::kRandom: return "random";
        case Method::kEntropyGuided: return "entropy_guided";
    }
    return "unknown";
}

Method parse_method(const std::string& name) {
    if (name == "tabkd") return Method::kTabKD;
    if (name == "random") return Method::kRandom;
    if (name == "entropy_guided" || name == "entropy") return Method::kEntropyGuided;
    throw StateError("unknown method '" + name + "' (expected tabkd, random or entropy_guided)");
}

TemperatureSchedule default_temperatures(TeacherFamily family, std::size_t phase1_steps) {
    switch (family) {
        case TeacherFamily::kRandomForest: return {1.2, 0.08, 0.25, 1.5, phase1_steps};
        case TeacherFamily::kGbdt: return {1.5, 0.10, 0.4, 2.0, phase1_steps};
        case TeacherFamily::kMlp:
        case TeacherFamily::kRule: break;
    }
    return {1.0, 0.05, 0.2, 1.0, phase1_steps};
}

// ---------------------------------------------------------------------------
// RunConfig

void RunConfig::validate() const {
    auto need = [](bool ok, const std::string& what) {
        if (!ok) throw StateError("config: " + what);
    };
    need(batch > 0, "batch must be positive");
    need(warmup_steps > 0 && phase1_steps > 0 && phase2_steps > 0, "step counts must be positive");
    need(bins >= 2, "bins must be at least 2");
    need(!seeds.empty(), "seeds must not be empty");
    need(lambda_cov >= 0 && lambda_hard >= 0 && lambda_intra >= 0 && lambda_inter >= 0 && lambda_div >= 0 &&
             lambda_boundary >= 0,
         "loss weights must be nonnegative");
    for (const auto& t : {tau_start, tau_end, tau_phase2, t_distill}) need(!t || *t > 0.0, "temperatures must be positive");
    need(!query_budget || *query_budget >= static_cast<std::uint64_t>(warmup_steps) * batch,
         "query_budget must cover the warmup queries (" + std::to_string(warmup_steps * batch) + ")");
    need(learning_rate >= 0 && boundary_lr >= 0, "learning rates must be nonnegative");
    need(box_radius > 0, "box_radius must be positive");
    need(adversarial_fraction > 0 && adversarial_fraction <= 1, "adversarial_fraction must lie in (0, 1]");
    need(checkpoint_every > 0, "checkpoint_every must be positive");
    need(generator_steps_per_iter > 0 && student_steps_per_iter > 0, "inner step counts must be positive");
    need(student_hidden > 0 && generator.noise_dim > 0, "network sizes must be positive");
}

TemperatureSchedule RunConfig::temperatures(TeacherFamily family) const {
    TemperatureSchedule s = default_temperatures(family, phase1_steps);
    if (tau_start) s.start = *tau_start;
    if (tau_end) s.end = *tau_end;
    if (tau_phase2) s.phase2 = *tau_phase2;
    if (t_distill) s.distill = *t_distill;
    return s;
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json config_to_json(const RunConfig& c) {
    return json{
        {"dataset", c.dataset},
        {"data_dir", c.data_dir.string()},
        {"teacher_path", c.teacher_path.string()},
        {"seeds", c.seeds},
        {"batch", c.batch},
        {"warmup_steps", c.warmup_steps},
        {"phase1_steps", c.phase1_steps},
        {"phase2_steps", c.phase2_steps},
        {"bins", c.bins},
        {"lambda_cov", c.lambda_cov},
        {"lambda_hard", c.lambda_hard},
        {"lambda_intra", c.lambda_intra},
        {"lambda_inter", c.lambda_inter},
        {"lambda_div", c.lambda_div},
        {"lambda_boundary", c.lambda_boundary},
        {"tau_start", optional_json(c.tau_start)},
        {"tau_end", optional_json(c.tau_end)},
        {"tau_phase2", optional_json(c.tau_phase2)},
        {"t_distill", optional_json(c.t_distill)},
        {"binning", to_string(c.binning)},
        {"query_budget", c.query_budget ? json(*c.query_budget) : json(nullptr)},
        {"budget_mode", c.budget_mode == BudgetMode::kScale ? "scale" : "cap"},
        {"learning_rate", c.learning_rate},
        {"boundary_lr", c.boundary_lr},
        {"box_radius", c.box_radius},
        {"adversarial_fraction", c.adversarial_fraction},
        {"replay_capacity", c.replay_capacity},
        {"checkpoint_every", c.checkpoint_every},
        {"generator_steps_per_iter", c.generator_steps_per_iter},
        {"student_steps_per_iter", c.student_steps_per_iter},
        {"fresh_phase2_generator", c.fresh_phase2_generator},
        {"kl_direction",
         c.kl_direction == KlDirection::kStudentToTeacher ? "student_teacher" : "teacher_student"},
        {"student_hidden", c.student_hidden},
        {"noise_dim", c.generator.noise_dim},
        {"generator_hidden", c.generator.hidden},
        {"generator_batch_norm", c.generator.batch_norm},
        {"log_samples", c.log_samples},
        {"output_dir", c.output_dir.string()},
    };
}

std::optional<double> optional_from(const json& j, const char* key) {
    const json& v = j.at(key);
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
}

RunConfig config_from_json(const json& in) {
    const json defaults = config_to_json(RunConfig{});
    for (const auto& [key, value] : in.items()) {
        if (!defaults.contains(key)) throw StateError("config: unknown key '" + key + "'");
    }
    json j = defaults;
    j.update(in);
    RunConfig c;
    try {
        c.dataset = j.at("dataset").get<std::string>();
        c.data_dir = j.at("data_dir").get<std::string>();
        c.teacher_path = j.at("teacher_path").get<std::string>();
        c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        c.batch = j.at("batch").get<std::size_t>();
        c.warmup_steps = j.at("warmup_steps").get<std::size_t>();
        c.phase1_steps = j.at("phase1_steps").get<std::size_t>();
        c.phase2_steps = j.at("phase2_steps").get<std::size_t>();
        c.bins = j.at("bins").get<std::size_t>();
        c.lambda_cov = j.at("lambda_cov").get<double>();
        c.lambda_hard = j.at("lambda_hard").get<double>();
        c.lambda_intra = j.at("lambda_intra").get<double>();
        c.lambda_inter = j.at("lambda_inter").get<double>();
        c.lambda_div = j.at("lambda_div").get<double>();
        c.lambda_boundary = j.at("lambda_boundary").get<double>();
        c.tau_start = optional_from(j, "tau_start");
        c.tau_end = optional_from(j, "tau_end");
        c.tau_phase2 = optional_from(j, "tau_phase2");
        c.t_distill = optional_from(j, "t_distill");
        const auto binning = j.at("binning").get<std::string>();
        if (binning != "dynamic" && binning != "static") throw StateError("config: binning must be dynamic or static");
        c.binning = binning == "dynamic" ? BinningMode::kDynamic : BinningMode::kStatic;
        if (!j.at("query_budget").is_null()) c.query_budget = j.at("query_budget").get<std::uint64_t>();
        const auto budget_mode = j.at("budget_mode").get<std::string>();
        if (budget_mode != "scale" && budget_mode != "cap") throw StateError("config: budget_mode must be scale or cap");
        c.budget_mode = budget_mode == "scale" ? BudgetMode::kScale : BudgetMode::kCap;
        c.learning_rate = j.at("learning_rate").get<double>();
        c.boundary_lr = j.at("boundary_lr").get<double>();
        c.box_radius = j.at("box_radius").get<double>();
        c.adversarial_fraction = j.at("adversarial_fraction").get<double>();
        c.replay_capacity = j.at("replay_capacity").get<std::size_t>();
        c.checkpoint_every = j.at("checkpoint_every").get<std::size_t>();
        c.generator_steps_per_iter = j.at("generator_steps_per_iter").get<std::size_t>();
        c.student_steps_per_iter = j.at("student_steps_per_iter").get<std::size_t>();
        c.fresh_phase2_generator = j.at("fresh_phase2_generator").get<bool>();
        const auto kl = j.at("kl_direction").get<std::string>();
        if (kl != "student_teacher" && kl != "teacher_student") {
            throw StateError("config: kl_direction must be student_teacher or teacher_student");
        }
        c.kl_direction = kl == "student_teacher" ? KlDirection::kStudentToTeacher : KlDirection::kTeacherToStudent;
        c.student_hidden = j.at("student_hidden").get<std::size_t>();
        c.generator.noise_dim = j.at("noise_dim").get<std::size_t>();
        c.generator.hidden = j.at("generator_hidden").get<std::vector<std::size_t>>();
        c.generator.batch_norm = j.at("generator_batch_norm").get<bool>();
        c.log_samples = j.at("log_samples").get<bool>();
        c.output_dir = j.at("output_dir").get<std::string>();
    } catch (const json::exception& e) {
        throw StateError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

}  // namespace

std::string to_json_text(const RunConfig& config) { return config_to_json(config).dump(1); }

RunConfig parse_run_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw DataError("config must be a JSON object");
    return config_from_json(j);
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

void apply_override(RunConfig& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw StateError("override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json j = config_to_json(config);
    if (!j.contains(key)) throw StateError("config: unknown key '" + key + "'");
    json value;
    try {
        value = json::parse(text);
    } catch (const json::exception&) {
        value = text;
    }
    j[key] = value;
    config = config_from_json(j);
}

std::uint64_t StepPlan::queries() const {
    return static_cast<std::uint64_t>(warmup + phase1 + phase2 * generator_steps_per_iter) * batch;
}

StepPlan plan_steps(const RunConfig& config) {
    StepPlan plan{config.warmup_steps, config.phase1_steps, config.phase2_steps, config.batch,
                  config.generator_steps_per_iter};
    if (config.query_budget && config.budget_mode == BudgetMode::kScale) {
        const std::size_t total = static_cast<std::size_t>(*config.query_budget / config.batch);
        const std::size_t rest = total > plan.warmup ? total - plan.warmup : 0;
        const std::size_t full = plan.phase1 + plan.phase2 * plan.generator_steps_per_iter;
        if (rest < full) {
            plan.phase1 = static_cast<std::size_t>(
                std::llround(static_cast<double>(rest) * static_cast<double>(plan.phase1) / static_cast<double>(full)));
            plan.phase2 = (rest - plan.phase1) / plan.generator_steps_per_iter;
        }
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Sample log

SampleLog::SampleLog(const std::filesystem::path& path, std::size_t features) : features_(features) {
    file_ = gzopen(path.string().c_str(), "wb");
    if (!file_) throw DataError("cannot open sample log " + path.string());
    std::string header = "step,phase";
    for (std::size_t f = 0; f < features_; ++f) header += ",x" + std::to_string(f);
    header += ",p1\n";
    gzwrite(static_cast<gzFile>(file_), header.data(), static_cast<unsigned>(header.size()));
}

SampleLog::~SampleLog() { close(); }

void SampleLog::close() {
    if (file_) {
        gzclose(static_cast<gzFile>(file_));
        file_ = nullptr;
    }
}

void SampleLog::append(std::size_t step, const std::string& phase, const Matrix& X, const Matrix& teacher_probs) {
    if (!file_) throw StateError("sample log is closed");
    if (X.cols != features_) throw ShapeError("sample log: batch width differs from log");
    std::string out;
    for (std::size_t i = 0; i < X.rows; ++i) {
        out += std::to_string(step);
        out += ',';
        out += phase;
        for (double v : X.row(i)) {
            out += ',';
            out += format_number(v);
        }
        out += ',';
        out += format_number(teacher_probs(i, 1));
        out += '\n';
    }
    if (gzwrite(static_cast<gzFile>(file_), out.data(), static_cast<unsigned>(out.size())) == 0 && !out.empty()) {
        throw DataError("failed to write sample log");
    }
}

std::vector<SampleRow> read_sample_log(const std::filesystem::path& path) {
    gzFile f = gzopen(path.string().c_str(), "rb");
    if (!f) throw DataError("cannot open sample log " + path.string());
    std::vector<SampleRow> rows;
    std::string line;
    char buf[8192];
    bool header = true;
    auto flush = [&]() {
        if (line.empty()) return;
        if (header) {
            header = false;
            line.clear();
            return;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() < 3) throw DataError("sample log row has too few cells");
        SampleRow r;
        r.step = std::stoull(cells[0]);
        r.phase = cells[1];
        for (std::size_t i = 2; i + 1 < cells.size(); ++i) r.x.push_back(std::stod(cells[i]));
        r.p1 = std::stod(cells.back());
        rows.push_back(std::move(r));
        line.clear();
    };
    while (gzgets(f, buf, sizeof buf)) {
        line += buf;
        if (!line.empty() && line.back() == '\n') {
            line.pop_back();
            flush();
        }
    }
    flush();
    gzclose(f);
    return rows;
}

// ---------------------------------------------------------------------------
// Runs

namespace {

struct HeldOut {
    Matrix X;
    std::vector<int> y;
    std::vector<int> teacher;
};

/// Teacher labels on the test split are taken before the run's query
/// accounting starts; they are evaluation, not extraction.
HeldOut held_out(const Dataset& data, const TeacherOracle& teacher) {
    HeldOut h{data.test_X(), data.test_y(), {}};
    if (h.X.rows == 0) throw DataError("dataset has an empty test split");
    h.teacher = teacher.predict_labels(h.X);
    return h;
}

void evaluate_into(const StudentNet& student, const HeldOut& h, Checkpoint& c) {
    const Matrix p = student.predict(h.X);
    std::vector<int> labels(p.rows);
    std::vector<double> scores(p.rows);
    for (std::size_t i = 0; i < p.rows; ++i) {
        labels[i] = p(i, 1) > p(i, 0) ? 1 : 0;
        scores[i] = p(i, 1);
    }
    c.accuracy = accuracy(labels, h.y);
    c.f1 = f1_score(labels, h.y);
    c.auc = auc(scores, h.y);
    c.agreement = agreement(labels, h.teacher);
}

EvalReport report_from(const Checkpoint& c) { return EvalReport{c.accuracy, c.f1, c.auc, c.agreement, c.coverage}; }

void add_params(Adam& opt, const std::string& prefix, const std::vector<Tensor>& params) {
    for (std::size_t i = 0; i < params.size(); ++i) opt.add_param(prefix + std::to_string(i), params[i]);
}

Matrix head_rows(const Matrix& m, std::size_t n) {
    Matrix out(n, m.cols);
    std::copy(m.data.begin(), m.data.begin() + static_cast<std::ptrdiff_t>(n * m.cols), out.data.begin());
    return out;
}

void check_inputs(const RunConfig& config, const Dataset& data, const TeacherOracle& teacher) {
    config.validate();
    if (teacher.features() != data.features()) {
        throw DataError("teacher expects " + std::to_string(teacher.features()) + " features but dataset has " +
                        std::to_string(data.features()));
    }
    if (data.features() < 2) throw DataError("pairwise coverage needs at least two features");
}

}  // namespace

RunRecord run_distillation(const RunConfig& config, const Dataset& data, const TeacherOracle& teacher,
                           std::uint64_t seed, SampleLog* log) {
    check_inputs(config, data, teacher);
    const StepPlan plan = plan_steps(config);
    const TeacherFamily family = teacher.family();
    TemperatureSchedule schedule = config.temperatures(family);
    schedule.phase1_steps = plan.phase1;
    const std::size_t F = data.features();
    const std::size_t K = config.bins;
    const std::size_t B = config.batch;

    std::mt19937_64 rng(seed);
    const HeldOut test = held_out(data, teacher);
    const std::uint64_t q0 = teacher.queries();
    std::optional<std::uint64_t> limit;
    if (config.query_budget) limit = q0 + *config.query_budget;
    const FeatureBox box = FeatureBox::uniform(F, config.box_radius);

    RunRecord rec;
    rec.method = Method::kTabKD;
    rec.binning = config.binning;
    rec.dataset = config.dataset;
    rec.teacher = family;
    rec.seed = seed;
    rec.plan = plan;

    StudentNet student(F, rng, config.student_hidden);
    ReplayBuffer buffer(config.replay_capacity ? config.replay_capacity : config.warmup_steps * B);
    {
        Adam opt(CosineSchedule{config.learning_rate, plan.warmup, 0.0});
        add_params(opt, "student.", student.parameters());
        BatchSink sink;
        if (log) sink = [log](std::size_t s, const Matrix& X, const Matrix& P) { log->append(s, "warmup", X, P); };
        rec.warmup_losses =
            warmup(student, teacher, box, plan.warmup, B, buffer, opt, rng, schedule.distill, config.kl_direction, sink)
                .losses;
    }

    std::optional<GeneratorNet> phase1_generator;
    if (config.binning == BinningMode::kDynamic) {
        phase1_generator.emplace(box, rng, config.generator);
        BinLearner learner(box, K);
        LearnBinsConfig lb;
        lb.steps = plan.phase1;
        lb.batch = B;
        lb.schedule = schedule;
        lb.weights = BinLossWeights{config.lambda_intra, config.lambda_inter, 1e-6};
        lb.generator = GenPhase1Config{config.lambda_div, config.lambda_boundary};
        lb.generator_lr = config.learning_rate;
        lb.boundary_lr = config.boundary_lr;
        lb.query_limit = limit;
        BatchSink sink;
        if (log) sink = [log](std::size_t s, const Matrix& X, const Matrix& P) { log->append(s, "phase1", X, P); };
        LearnBinsResult bins = learn_bins(learner, *phase1_generator, student, teacher, lb, rng, sink);
        rec.spec = bins.spec;
        rec.boundary_steps = bins.boundary_steps;
        rec.partial = bins.partial;
    } else {
        rec.spec = static_uniform_bins(box, K, schedule.phase2);
    }

    CoverageTracker tracker(F, K);
    Checkpoint current;
    if (!rec.partial) {
        std::optional<GeneratorNet> fresh;
        if (config.fresh_phase2_generator || !phase1_generator) fresh.emplace(box, rng, config.generator);
        GeneratorNet& generator = fresh ? *fresh : *phase1_generator;
        const std::size_t gpi = config.generator_steps_per_iter;
        const std::size_t spi = config.student_steps_per_iter;
        Adam gen_opt(CosineSchedule{config.learning_rate, plan.phase2 * gpi, 0.0});
        add_params(gen_opt, "generator.", generator.parameters());
        Adam student_opt(CosineSchedule{config.learning_rate, plan.phase2 * spi, 0.0});
        add_params(student_opt, "student.", student.parameters());
        const auto [n_adv, n_replay] = split_batch(B, config.adversarial_fraction);
        const Tensor boundaries = rec.spec.boundary_tensor();
        const GenPhase2Config weights{config.lambda_cov, config.lambda_hard};

        Matrix last_X, last_P;
        for (std::size_t it = 1; it <= plan.phase2 && !rec.partial; ++it) {
            for (std::size_t g = 0; g < gpi; ++g) {
                if (limit && teacher.queries() + B > *limit) {
                    rec.partial = true;
                    break;
                }
                FrozenParams frozen(student.parameters());
                Tape tape;
                Tensor X = generator.sample(B, rng);
                last_X = X.to_matrix();
                last_P = teacher.predict(last_X);
                Tensor M = soft_membership(X, boundaries, rec.spec.temperature());
                Phase2Terms terms = phase2_loss(X, M, F, K, student, last_P, weights);
                generator_step(tape, terms, gen_opt);
                tracker.record_batch(rec.spec, last_X, it);
                if (log) log->append(it, "phase2", last_X, last_P);
                current.diversity = terms.diversity;
                current.hardness = terms.hardness;
            }
            if (rec.partial) break;
            const Matrix X_adv = head_rows(last_X, n_adv);
            const Matrix P_adv = head_rows(last_P, n_adv);
            for (std::size_t s = 0; s < spi; ++s) {
                current.student_loss = student_step(student, X_adv, P_adv, n_replay, buffer, schedule.distill,
                                                    student_opt, rng, config.kl_direction)
                                           .loss;
            }
            current.step = it;
            if (it % config.checkpoint_every == 0 || it == plan.phase2) {
                current.queries = teacher.queries() - q0;
                current.coverage = tracker.coverage_fraction();
                evaluate_into(student, test, current);
                rec.checkpoints.push_back(current);
            }
        }
    }

    Checkpoint final_point = current;
    final_point.queries = teacher.queries() - q0;
    final_point.coverage = tracker.coverage_fraction();
    evaluate_into(student, test, final_point);
    if (rec.partial && current.step > 0 && (rec.checkpoints.empty() || rec.checkpoints.back().step != current.step)) {
        rec.checkpoints.push_back(final_point);
    }
    rec.final_metrics = report_from(final_point);
    rec.teacher_queries = teacher.queries() - q0;
    rec.student = std::move(student);
    return rec;
}

RunRecord run_baseline(const RunConfig& config, const Dataset& data, const TeacherOracle& teacher,
                       std::uint64_t seed, Method strategy, SampleLog* log) {
    if (strategy == Method::kTabKD) throw StateError("run_baseline: tabkd is not a baseline strategy");
    check_inputs(config, data, teacher);
    const StepPlan plan = plan_steps(config);
    const TeacherFamily family = teacher.family();
    const TemperatureSchedule schedule = config.temperatures(family);
    const std::size_t F = data.features();
    const std::size_t B = config.batch;
    const std::uint64_t budget = config.query_budget.value_or(9600);

    std::mt19937_64 rng(seed);
    const HeldOut test = held_out(data, teacher);
    const std::uint64_t q0 = teacher.queries();
    const FeatureBox box = FeatureBox::uniform(F, config.box_radius);

    RunRecord rec;
    rec.method = strategy;
    rec.binning = BinningMode::kStatic;
    rec.dataset = config.dataset;
    rec.teacher = family;
    rec.seed = seed;
    rec.plan = plan;
    rec.spec = static_uniform_bins(box, config.bins, schedule.phase2);

    StudentNet student(F, rng, config.student_hidden);
    Matrix pool_X(0, F), pool_P(0, 2);
    std::uint64_t spent = 0;
    std::size_t round = 0;
    while (spent < budget) {
        if (strategy == Method::kRandom) {
            const auto n = static_cast<std::size_t>(std::min<std::uint64_t>(B, budget - spent));
            const Matrix X = box.sample_uniform(n, rng);
            const Matrix P = teacher.predict(X);
            if (log) log->append(round, "pool", X, P);
            for (std::size_t i = 0; i < n; ++i) {
                pool_X.append_row(X.row(i));
                pool_P.append_row(P.row(i));
            }
            spent += n;
        } else {
            // two uniform proposals per kept row; keep the most uncertain half
            const auto n = static_cast<std::size_t>(std::min<std::uint64_t>(2 * B, budget - spent));
            const Matrix X = box.sample_uniform(n, rng);
            const Matrix P = teacher.predict(X);
            std::vector<double> h(n);
            for (std::size_t i = 0; i < n; ++i) {
                for (double p : P.row(i)) h[i] -= p * std::log(std::max(p, kLogEps));
            }
            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return h[a] > h[b]; });
            order.resize((n + 1) / 2);
            std::sort(order.begin(), order.end());
            const Matrix Xk = X.select_rows(order);
            const Matrix Pk = P.select_rows(order);
            if (log) log->append(round, "pool", Xk, Pk);
            for (std::size_t i = 0; i < Xk.rows; ++i) {
                pool_X.append_row(Xk.row(i));
                pool_P.append_row(Pk.row(i));
            }
            spent += n;
        }
        ++round;
    }

    CoverageTracker tracker(F, config.bins);
    tracker.record_batch(rec.spec, pool_X, 0);

    const std::size_t steps = plan.warmup + plan.phase2 * config.student_steps_per_iter;
    Adam opt(CosineSchedule{config.learning_rate, steps, 0.0});
    add_params(opt, "student.", student.parameters());
    std::uniform_int_distribution<std::size_t> pick(0, pool_X.rows - 1);
    Checkpoint current;
    current.coverage = tracker.coverage_fraction();
    for (std::size_t step = 1; step <= steps; ++step) {
        std::vector<std::size_t> idx(B);
        for (auto& i : idx) i = pick(rng);
        const Matrix X = pool_X.select_rows(idx);
        const Matrix P = pool_P.select_rows(idx);
        Tape tape;
        Tensor loss = distill_loss(student.probs(Tensor::from_matrix(X)), P, schedule.distill, config.kl_direction);
        if (!std::isfinite(loss.item())) throw NumericError("baseline student loss is not finite");
        opt.zero_grad();
        tape.backward(loss);
        opt.step();
        current.step = step;
        current.student_loss = loss.item();
        if (step % config.checkpoint_every == 0 || step == steps) {
            current.queries = teacher.queries() - q0;
            evaluate_into(student, test, current);
            rec.checkpoints.push_back(current);
        }
    }
    current.queries = teacher.queries() - q0;
    evaluate_into(student, test, current);
    rec.final_metrics = report_from(current);
    rec.teacher_queries = teacher.queries() - q0;
    rec.student = std::move(student);
    return rec;
}

RunRecord run_method(const RunConfig& config, const Dataset& data, const TeacherOracle& teacher, std::uint64_t seed,
                     Method method, SampleLog* log) {
    if (method == Method::kTabKD) return run_distillation(config, data, teacher, seed, log);
    return run_baseline(config, data, teacher, seed, method, log);
}

// ---------------------------------------------------------------------------
// Persistence

std::string git_blob_sha1(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string body = ss.str();
    const std::string head = "blob " + std::to_string(body.size()) + '\0';

    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
    EVP_DigestUpdate(ctx, head.data(), head.size());
    EVP_DigestUpdate(ctx, body.data(), body.size());
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);

    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return hex.str();
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

json input_hashes(const RunConfig& config) {
    json h = json::object();
    for (const char* name : {"X.csv", "y.csv", "meta.json"}) {
        const auto p = config.data_dir / name;
        if (!config.data_dir.empty() && std::filesystem::exists(p)) h[std::string("data/") + name] = git_blob_sha1(p);
    }
    if (!config.teacher_path.empty() && std::filesystem::exists(config.teacher_path)) {
        h["teacher"] = git_blob_sha1(config.teacher_path);
    }
    return h;
}

std::string final_row(const RunRecord& r) {
    const EvalReport& m = r.final_metrics;
    std::ostringstream os;
    os << r.dataset << ',' << to_string(r.teacher) << ',' << to_string(r.method) << ',' << to_string(r.binning) << ','
       << r.seed << ',' << format_number(m.accuracy) << ',' << format_number(m.f1) << ',' << format_number(m.auc) << ','
       << format_number(m.agreement) << ',' << format_number(m.coverage) << ',' << r.teacher_queries << ','
       << (r.partial ? 1 : 0);
    return os.str();
}

}  // namespace

void write_run(const std::filesystem::path& dir, const RunRecord& record, const RunConfig& config) {
    std::filesystem::create_directories(dir);
    {
        auto out = open_out(dir / "metrics.csv");
        out << kMetricsHeader << '\n';
        for (const auto& c : record.checkpoints) {
            out << c.step << ',' << c.queries << ',' << format_number(c.coverage) << ',' << format_number(c.agreement)
                << ',' << format_number(c.accuracy) << ',' << format_number(c.f1) << ',' << format_number(c.auc) << ','
                << format_number(c.student_loss) << ',' << format_number(c.diversity) << ','
                << format_number(c.hardness) << '\n';
        }
    }
    {
        auto out = open_out(dir / "final.csv");
        out << kFinalHeader << '\n' << final_row(record) << '\n';
    }
    record.spec.save(dir / "binspec.json");
    record.student.save(dir / "student.json");
    json meta{
        {"config", json::parse(to_json_text(config))},
        {"seed", record.seed},
        {"method", to_string(record.method)},
        {"binning", to_string(record.binning)},
        {"teacher_family", to_string(record.teacher)},
        {"plan",
         {{"warmup", record.plan.warmup},
          {"phase1", record.plan.phase1},
          {"phase2", record.plan.phase2},
          {"planned_queries", record.plan.queries()}}},
        {"teacher_queries", record.teacher_queries},
        {"partial", record.partial},
        {"boundary_steps", record.boundary_steps},
        {"inputs", input_hashes(config)},
    };
    detail::write_json(dir / "run_meta.json", meta);
}

std::vector<RunRecord> run_seeds(const RunConfig& config, const Dataset& data, const TeacherOracle& teacher,
                                 Method method, const std::filesystem::path& out) {
    std::vector<RunRecord> runs;
    for (std::uint64_t seed : config.seeds) {
        const auto dir = out / ("seed_" + std::to_string(seed));
        std::filesystem::create_directories(dir);
        std::unique_ptr<SampleLog> log;
        if (config.log_samples) log = std::make_unique<SampleLog>(dir / "samples.csv.gz", data.features());
        RunRecord rec = run_method(config, data, teacher, seed, method, log.get());
        if (log) log->close();
        write_run(dir, rec, config);
        runs.push_back(std::move(rec));
    }

    auto summary = open_out(out / "summary.csv");
    summary << "dataset,teacher,method,binning,metric,mean,std,n\n";
    auto emit = [&](const std::string& name, auto getter) {
        std::vector<double> v;
        for (const auto& r : runs) {
            const std::optional<double> x = getter(r);
            if (x) v.push_back(*x);
        }
        const MeanStd ms = mean_std(v);
        summary << config.dataset << ',' << to_string(teacher.family()) << ',' << to_string(method) << ','
                << to_string(runs.front().binning) << ',' << name << ',' << format_number(ms.mean) << ','
                << format_number(ms.std) << ',' << ms.n << '\n';
    };
    emit("accuracy", [](const RunRecord& r) { return std::optional<double>(r.final_metrics.accuracy); });
    emit("f1", [](const RunRecord& r) { return std::optional<double>(r.final_metrics.f1); });
    emit("auc", [](const RunRecord& r) { return r.final_metrics.auc; });
    emit("agreement", [](const RunRecord& r) { return std::optional<double>(r.final_metrics.agreement); });
    emit("coverage", [](const RunRecord& r) { return std::optional<double>(r.final_metrics.coverage); });
    emit("queries", [](const RunRecord& r) { return std::optional<double>(static_cast<double>(r.teacher_queries)); });
    return runs;
}

AblationRow run_ablation(const RunConfig& config, const Dataset& data, const TeacherOracle& teacher,
                         const std::filesystem::path& out) {
    RunConfig dyn = config;
    dyn.binning = BinningMode::kDynamic;
    RunConfig stat = config;
    stat.binning = BinningMode::kStatic;
    const auto d = run_seeds(dyn, data, teacher, Method::kTabKD, out / "dynamic");
    const auto s = run_seeds(stat, data, teacher, Method::kTabKD, out / "static");

    auto collect = [](const std::vector<RunRecord>& runs, bool agree) {
        std::vector<double> v;
        for (const auto& r : runs) v.push_back(agree ? r.final_metrics.agreement : r.final_metrics.accuracy);
        return mean_std(v);
    };
    AblationRow row{config.dataset, teacher.family(), collect(d, false), collect(s, false), collect(d, true),
                    collect(s, true)};
    auto csv = open_out(out / "ablation.csv");
    csv << kAblationHeader << '\n'
        << row.dataset << ',' << to_string(row.teacher) << ',' << format_number(row.dynamic_accuracy.mean) << ','
        << format_number(row.static_accuracy.mean) << ',' << format_number(row.dynamic_agreement.mean) << ','
        << format_number(row.static_agreement.mean) << '\n';
    return row;
}

}  // namespace tabkd
