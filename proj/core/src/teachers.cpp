#include "tabkd/teachers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "json_util.hpp"
#include "tabkd/optim.hpp"

namespace tabkd {

using detail::json;

namespace {

constexpr int kFormatVersion = 1;

double stable_sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

json tree_to_json(const DecisionTree& tree) {
    json nodes = json::array();
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        const TreeNode& n = tree.nodes[i];
        nodes.push_back(json::array({i, n.feature, n.threshold, n.left, n.right, n.value}));
    }
    return json{{"nodes", nodes}};
}

DecisionTree tree_from_json(const json& j, std::size_t features) {
    DecisionTree tree;
    const auto& nodes = j.at("nodes");
    tree.nodes.resize(nodes.size());
    for (const auto& row : nodes) {
        const auto id = row.at(0).get<std::size_t>();
        if (id >= tree.nodes.size()) throw DataError("tree node id out of range");
        TreeNode& n = tree.nodes[id];
        n.feature = row.at(1).get<int>();
        n.threshold = row.at(2).get<double>();
        n.left = row.at(3).get<int>();
        n.right = row.at(4).get<int>();
        n.value = row.at(5).get<std::vector<double>>();
        const auto count = static_cast<int>(nodes.size());
        if (n.feature >= 0) {
            if (static_cast<std::size_t>(n.feature) >= features || n.left <= 0 || n.right <= 0 || n.left >= count ||
                n.right >= count || !std::isfinite(n.threshold)) {
                throw DataError("malformed internal tree node " + std::to_string(id));
            }
        } else if (n.value.empty()) {
            throw DataError("tree leaf " + std::to_string(id) + " has no value");
        }
    }
    return tree;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    std::vector<double> onehot(labels.size() * 2, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) onehot[i * 2 + static_cast<std::size_t>(labels[i])] = 1.0;
    Tensor target = Tensor::from({labels.size(), 2}, std::move(onehot));
    Tensor logp = log(clamp_min(softmax_rows(logits), kLogEps));
    return neg(mean(sum_rows(mul(target, logp))));
}

double accuracy_of(const TeacherOracle& t, const Matrix& X, const std::vector<int>& y) {
    if (X.rows == 0) return 0.0;
    const auto pred = t.predict_labels(X);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < y.size(); ++i) ok += pred[i] == y[i];
    return static_cast<double>(ok) / static_cast<double>(y.size());
}

}  // namespace

std::string to_string(TeacherFamily family) {
    switch (family) {
        case TeacherFamily::kMlp: return "mlp";
        case TeacherFamily::kRandomForest: return "rf";
        case TeacherFamily::kGbdt: return "gbdt";
        case TeacherFamily::kRule: return "rule";
    }
    return "unknown";
}

TeacherFamily parse_family(const std::string& name) {
    if (name == "mlp" || name == "nn") return TeacherFamily::kMlp;
    if (name == "rf" || name == "random_forest") return TeacherFamily::kRandomForest;
    if (name == "gbdt" || name == "xgboost") return TeacherFamily::kGbdt;
    if (name == "rule") return TeacherFamily::kRule;
    throw DataError("unknown teacher family '" + name + "' (expected mlp, rf, gbdt or rule)");
}

// ---------------------------------------------------------------------------
// TeacherOracle

void TeacherOracle::validate(const Matrix& X) const {
    if (X.rows > 0 && X.cols != features()) {
        throw ShapeError("teacher expects " + std::to_string(features()) + " features, got " + std::to_string(X.cols));
    }
    for (double v : X.data)
        if (!std::isfinite(v)) throw NumericError("teacher query contains a non-finite value");
}

Matrix TeacherOracle::predict(const Matrix& X) const {
    validate(X);
    if (X.rows == 0) return Matrix(0, 2);
    Matrix out = predict_raw(X);
    for (std::size_t i = 0; i < out.rows; ++i) {
        const double p1 = std::clamp(out(i, 1), kTeacherProbFloor, 1.0 - kTeacherProbFloor);
        out(i, 1) = p1;
        out(i, 0) = 1.0 - p1;
    }
    count_queries(X.rows);
    return out;
}

std::vector<int> TeacherOracle::predict_labels(const Matrix& X) const {
    const Matrix p = predict(X);
    std::vector<int> labels(p.rows);
    for (std::size_t i = 0; i < p.rows; ++i) labels[i] = p(i, 1) > p(i, 0) ? 1 : 0;
    return labels;
}

Tensor TeacherOracle::forward_graph(const Tensor&) const {
    throw StateError("teacher family '" + to_string(family()) + "' is not differentiable");
}

// ---------------------------------------------------------------------------
// MlpTeacher

Matrix MlpTeacher::predict_raw(const Matrix& X) const {
    NoGrad guard;
    return softmax_rows(net_.forward(Tensor::from_matrix(X))).to_matrix();
}

Tensor MlpTeacher::forward_graph(const Tensor& X) const {
    if (X.cols() != features()) {
        throw ShapeError("teacher expects " + std::to_string(features()) + " features, got " + shape_string(X.shape()));
    }
    for (double v : X.values())
        if (!std::isfinite(v)) throw NumericError("teacher query contains a non-finite value");
    count_queries(X.rows());
    return softmax_rows(net_.forward(X));
}

void MlpTeacher::save(const std::filesystem::path& path) const {
    detail::write_json(path, json{{"format", "tabkd-model"},
                                  {"version", kFormatVersion},
                                  {"family", to_string(family())},
                                  {"features", features()},
                                  {"network", detail::mlp_to_json(net_)}});
}

// ---------------------------------------------------------------------------
// TreeEnsembleTeacher

TreeEnsembleTeacher::TreeEnsembleTeacher(TeacherFamily family, std::size_t features, std::vector<DecisionTree> trees,
                                         double learning_rate, double base_score)
    : family_(family), features_(features), trees_(std::move(trees)), learning_rate_(learning_rate),
      base_score_(base_score) {
    if (family_ != TeacherFamily::kRandomForest && family_ != TeacherFamily::kGbdt) {
        throw StateError("TreeEnsembleTeacher: family must be rf or gbdt");
    }
    if (family_ == TeacherFamily::kRandomForest && trees_.empty()) throw StateError("random forest without trees");
}

double TreeEnsembleTeacher::raw_positive(std::span<const double> row, std::size_t stages) const {
    stages = std::min(stages, trees_.size());
    if (mode() == Mode::kAverage) {
        double p = 0.0;
        for (std::size_t t = 0; t < stages; ++t) p += trees_[t].leaf_value(row)[1];
        return p / static_cast<double>(stages);
    }
    double z = base_score_;
    for (std::size_t t = 0; t < stages; ++t) z += learning_rate_ * trees_[t].leaf_value(row)[0];
    return stable_sigmoid(z);
}

Matrix TreeEnsembleTeacher::predict_raw(const Matrix& X) const {
    Matrix out(X.rows, 2);
    for (std::size_t i = 0; i < X.rows; ++i) {
        const double p1 = raw_positive(X.row(i), trees_.size());
        out(i, 0) = 1.0 - p1;
        out(i, 1) = p1;
    }
    return out;
}

void TreeEnsembleTeacher::save(const std::filesystem::path& path) const {
    json trees = json::array();
    for (const auto& t : trees_) trees.push_back(tree_to_json(t));
    detail::write_json(path, json{{"format", "tabkd-model"},
                                  {"version", kFormatVersion},
                                  {"family", to_string(family_)},
                                  {"features", features_},
                                  {"node_columns", {"node_id", "feature", "threshold", "left", "right", "value"}},
                                  {"learning_rate", learning_rate_},
                                  {"base_score", base_score_},
                                  {"trees", trees}});
}

// ---------------------------------------------------------------------------
// RuleTeacher

RuleTeacher::RuleTeacher(std::size_t features, std::vector<Term> terms, double sharpness)
    : features_(features), terms_(std::move(terms)), sharpness_(sharpness) {
    if (terms_.empty()) throw StateError("RuleTeacher: no terms");
    for (const auto& t : terms_)
        if (t.feature >= features_) throw StateError("RuleTeacher: term feature out of range");
}

Matrix RuleTeacher::predict_raw(const Matrix& X) const {
    Matrix out(X.rows, 2);
    const double sign = terms_.size() % 2 == 0 ? 1.0 : -1.0;
    for (std::size_t i = 0; i < X.rows; ++i) {
        double prod = 1.0;
        for (const auto& t : terms_) prod *= std::tanh(sharpness_ * (X(i, t.feature) - t.threshold));
        const double p1 = 0.5 - 0.5 * sign * prod;
        out(i, 0) = 1.0 - p1;
        out(i, 1) = p1;
    }
    return out;
}

int RuleTeacher::hard_label(std::span<const double> row) const {
    int above = 0;
    for (const auto& t : terms_) above += row[t.feature] > t.threshold ? 1 : 0;
    return above % 2;
}

void RuleTeacher::save(const std::filesystem::path& path) const {
    json terms = json::array();
    for (const auto& t : terms_) terms.push_back({{"feature", t.feature}, {"threshold", t.threshold}});
    detail::write_json(path, json{{"format", "tabkd-model"},
                                  {"version", kFormatVersion},
                                  {"family", "rule"},
                                  {"features", features_},
                                  {"sharpness", sharpness_},
                                  {"terms", terms}});
}

std::unique_ptr<TeacherOracle> load_teacher(const std::filesystem::path& path) {
    const json j = detail::read_json(path);
    try {
        if (j.value("format", "") != "tabkd-model") throw DataError(path.string() + " is not a tabkd model file");
        if (j.value("version", 0) != kFormatVersion) throw DataError(path.string() + ": unsupported format version");
        const std::string family_name = j.at("family").get<std::string>();
        if (family_name == "student") throw DataError(path.string() + " holds a student, not a teacher");
        const TeacherFamily family = parse_family(family_name);
        const auto features = j.at("features").get<std::size_t>();
        switch (family) {
            case TeacherFamily::kMlp: {
                Mlp net = detail::mlp_from_json(j.at("network"));
                if (net.input_size() != features || net.output_size() != 2) throw DataError("mlp teacher shape mismatch");
                return std::make_unique<MlpTeacher>(std::move(net));
            }
            case TeacherFamily::kRandomForest:
            case TeacherFamily::kGbdt: {
                std::vector<DecisionTree> trees;
                for (const auto& t : j.at("trees")) trees.push_back(tree_from_json(t, features));
                return std::make_unique<TreeEnsembleTeacher>(family, features, std::move(trees),
                                                             j.at("learning_rate").get<double>(),
                                                             j.at("base_score").get<double>());
            }
            case TeacherFamily::kRule: {
                std::vector<RuleTeacher::Term> terms;
                for (const auto& t : j.at("terms"))
                    terms.push_back({t.at("feature").get<std::size_t>(), t.at("threshold").get<double>()});
                return std::make_unique<RuleTeacher>(features, std::move(terms), j.at("sharpness").get<double>());
            }
        }
    } catch (const json::exception& e) {
        throw DataError("model file " + path.string() + ": " + e.what());
    }
    throw DataError("model file " + path.string() + ": unknown family");
}

// ---------------------------------------------------------------------------
// Training

std::unique_ptr<MlpTeacher> train_mlp_teacher(const Matrix& X, const std::vector<int>& y, const MlpTeacherConfig& cfg,
                                              std::uint64_t seed, TeacherReport* report) {
    if (X.rows == 0) throw DataError("train_mlp_teacher: empty training split");
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> sizes{X.cols};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(2);
    Mlp net(sizes, rng, cfg.dropout);

    const std::size_t batches = (X.rows + cfg.batch - 1) / cfg.batch;
    Adam opt(CosineSchedule{cfg.learning_rate, cfg.epochs * batches, 0.0});
    const auto params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) opt.add_param("teacher.p" + std::to_string(i), params[i]);

    std::vector<std::size_t> order(X.rows);
    std::iota(order.begin(), order.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    std::size_t stale = 0;
    std::size_t epoch = 0;
    std::vector<double> curve;
    for (; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (std::size_t b = 0; b < batches; ++b) {
            const std::size_t begin = b * cfg.batch;
            const std::size_t end = std::min(begin + cfg.batch, X.rows);
            std::span<const std::size_t> idx(order.data() + begin, end - begin);
            Matrix xb = X.select_rows(idx);
            std::vector<int> yb;
            for (std::size_t i : idx) yb.push_back(y[i]);

            Tape tape;
            Tensor loss = cross_entropy(net.forward(Tensor::from_matrix(xb), true, &rng), yb);
            if (!std::isfinite(loss.item())) throw NumericError("teacher training diverged (non-finite loss)");
            opt.zero_grad();
            tape.backward(loss);
            opt.step();
            total += loss.item() * static_cast<double>(idx.size());
        }
        const double epoch_loss = total / static_cast<double>(X.rows);
        curve.push_back(epoch_loss);
        if (epoch_loss < best - cfg.min_delta) {
            best = epoch_loss;
            stale = 0;
        } else if (++stale >= cfg.patience) {
            ++epoch;
            break;
        }
    }
    net.set_requires_grad(false);
    if (report) {
        report->epochs_run = epoch;
        report->loss_curve = std::move(curve);
    }
    return std::make_unique<MlpTeacher>(std::move(net));
}

std::unique_ptr<TreeEnsembleTeacher> train_random_forest(const Matrix& X, const std::vector<int>& y,
                                                         const ForestConfig& cfg, std::uint64_t seed) {
    if (X.rows == 0) throw DataError("train_random_forest: empty training split");
    std::mt19937_64 rng(seed);
    ClassifierTreeConfig tree_cfg{cfg.max_depth, cfg.min_samples_split,
                                  static_cast<std::size_t>(std::max(1.0, std::floor(std::sqrt(static_cast<double>(X.cols)))))};
    std::vector<DecisionTree> trees;
    std::uniform_int_distribution<std::size_t> pick(0, X.rows - 1);
    for (std::size_t t = 0; t < cfg.trees; ++t) {
        std::vector<std::size_t> sample(X.rows);
        for (auto& s : sample) s = pick(rng);
        trees.push_back(grow_classifier_tree(X, y, sample, tree_cfg, rng));
    }
    return std::make_unique<TreeEnsembleTeacher>(TeacherFamily::kRandomForest, X.cols, std::move(trees));
}

std::unique_ptr<TreeEnsembleTeacher> train_gbdt(const Matrix& X, const std::vector<int>& y, const BoostConfig& cfg,
                                                TeacherReport* report) {
    if (X.rows == 0) throw DataError("train_gbdt: empty training split");
    const std::size_t n = X.rows;
    const double prior = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    const double p = std::clamp(prior, 1e-12, 1.0 - 1e-12);
    const double base = std::log(p / (1.0 - p));

    std::vector<double> margin(n, base), grad(n), hess(n);
    std::vector<DecisionTree> trees;
    std::vector<double> curve;
    auto logloss = [&]() {
        double l = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double q = std::clamp(stable_sigmoid(margin[i]), 1e-15, 1.0 - 1e-15);
            l -= y[i] ? std::log(q) : std::log(1.0 - q);
        }
        return l / static_cast<double>(n);
    };
    curve.push_back(logloss());
    RegressionTreeConfig tree_cfg{cfg.max_depth, 2, cfg.l2, cfg.min_child_hessian};
    for (std::size_t stage = 0; stage < cfg.estimators; ++stage) {
        for (std::size_t i = 0; i < n; ++i) {
            const double q = stable_sigmoid(margin[i]);
            grad[i] = q - static_cast<double>(y[i]);
            hess[i] = q * (1.0 - q);
        }
        DecisionTree tree = grow_newton_tree(X, grad, hess, tree_cfg);
        for (std::size_t i = 0; i < n; ++i) margin[i] += cfg.learning_rate * tree.leaf_value(X.row(i))[0];
        trees.push_back(std::move(tree));
        curve.push_back(logloss());
    }
    if (report) {
        report->epochs_run = cfg.estimators;
        report->loss_curve = std::move(curve);
    }
    return std::make_unique<TreeEnsembleTeacher>(TeacherFamily::kGbdt, X.cols, std::move(trees), cfg.learning_rate,
                                                 base);
}

std::unique_ptr<TeacherOracle> train_teacher(const Dataset& ds, TeacherFamily family, std::uint64_t seed,
                                             TeacherReport* report) {
    const Matrix Xtr = ds.train_X();
    const std::vector<int> ytr = ds.train_y();
    TeacherReport local;
    std::unique_ptr<TeacherOracle> teacher;
    switch (family) {
        case TeacherFamily::kMlp: teacher = train_mlp_teacher(Xtr, ytr, {}, seed, &local); break;
        case TeacherFamily::kRandomForest: teacher = train_random_forest(Xtr, ytr, {}, seed); break;
        case TeacherFamily::kGbdt: teacher = train_gbdt(Xtr, ytr, {}, &local); break;
        case TeacherFamily::kRule: throw StateError("rule teachers are constructed, not trained");
    }
    local.train_accuracy = accuracy_of(*teacher, Xtr, ytr);
    local.test_accuracy = accuracy_of(*teacher, ds.test_X(), ds.test_y());
    if (report) *report = std::move(local);
    return teacher;
}

}  // namespace tabkd
