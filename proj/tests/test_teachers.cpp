#include <filesystem>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "tabkd/metrics.hpp"
#include "tabkd/teachers.hpp"
#include "tabkd/tree.hpp"

using namespace tabkd;

namespace {

/// Two Gaussian blobs four units apart on both axes.
void blobs(std::size_t n, std::uint64_t seed, Matrix& X, std::vector<int>& y) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 0.5);
    X = Matrix(n, 2);
    y.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const int c = static_cast<int>(i % 2);
        X(i, 0) = (c ? 2.0 : -2.0) + g(rng);
        X(i, 1) = (c ? 2.0 : -2.0) + g(rng);
        y[i] = c;
    }
}

double test_accuracy(const TeacherOracle& t, const Matrix& X, const std::vector<int>& y) {
    return accuracy(t.predict_labels(X), y);
}

Matrix probes(std::size_t n, std::size_t f, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return FeatureBox::uniform(f, 3.0).sample_uniform(n, rng);
}

}  // namespace

TEST_CASE("mlp teacher separates blobs") {
    Matrix X, Xt;
    std::vector<int> y, yt;
    blobs(400, 1, X, y);
    blobs(200, 2, Xt, yt);
    MlpTeacherConfig cfg;
    cfg.epochs = 50;
    auto t = train_mlp_teacher(X, y, cfg, 0);
    CHECK(test_accuracy(*t, Xt, yt) >= 0.95);
}

TEST_CASE("depth-one tree reproduces a threshold rule") {
    Matrix X(200, 1);
    std::vector<int> y(200);
    std::mt19937_64 rng(0);
    std::uniform_real_distribution<double> u(-3, 3);
    for (std::size_t i = 0; i < 200; ++i) {
        X(i, 0) = u(rng);
        y[i] = X(i, 0) > 0.4 ? 1 : 0;
    }
    std::vector<std::size_t> all(200);
    std::iota(all.begin(), all.end(), 0);
    ClassifierTreeConfig cfg;
    cfg.max_depth = 1;
    const DecisionTree tree = grow_classifier_tree(X, y, all, cfg, rng);
    CHECK(tree.depth() == 1);
    for (std::size_t i = 0; i < 200; ++i) {
        const auto& v = tree.leaf_value(X.row(i));
        CHECK((v[1] > v[0] ? 1 : 0) == y[i]);
    }
}

TEST_CASE("random forest and gbdt fit blobs") {
    Matrix X, Xt;
    std::vector<int> y, yt;
    blobs(300, 3, X, y);
    blobs(200, 4, Xt, yt);
    ForestConfig fc;
    fc.trees = 20;
    CHECK(test_accuracy(*train_random_forest(X, y, fc, 0), Xt, yt) >= 0.95);
    BoostConfig bc;
    bc.estimators = 20;
    CHECK(test_accuracy(*train_gbdt(X, y, bc), Xt, yt) >= 0.95);
}

TEST_CASE("gbdt with zero estimators predicts the training prior") {
    Matrix X, Xt;
    std::vector<int> y;
    blobs(100, 5, X, y);
    y[0] = 1;
    y[2] = 1;  // 52 positives of 100
    BoostConfig bc;
    bc.estimators = 0;
    auto t = train_gbdt(X, y, bc);
    const Matrix p = t->predict(probes(20, 2, 1));
    for (std::size_t i = 0; i < p.rows; ++i) CHECK(p(i, 1) == doctest::Approx(0.52));
}

TEST_CASE("gbdt training loss decreases monotonically") {
    Matrix X;
    std::vector<int> y;
    blobs(200, 6, X, y);
    BoostConfig bc;
    bc.estimators = 15;
    TeacherReport rep;
    train_gbdt(X, y, bc, &rep);
    REQUIRE(rep.loss_curve.size() >= 2);
    for (std::size_t i = 1; i < rep.loss_curve.size(); ++i) CHECK(rep.loss_curve[i] <= rep.loss_curve[i - 1] + 1e-12);
}

TEST_CASE("oracle counts queries, clamps and rejects NaN") {
    RuleTeacher t(2, {{0, 0.4}, {1, -0.7}});
    CHECK(t.predict(Matrix(0, 2)).rows == 0);
    CHECK(t.queries() == 0);
    const Matrix X = probes(128, 2, 0);
    const Matrix a = t.predict(X);
    const Matrix b = t.predict(X);
    CHECK(t.queries() == 256);
    CHECK(a.data == b.data);
    for (double v : a.data) {
        CHECK(v >= kTeacherProbFloor);
        CHECK(v <= 1.0 - kTeacherProbFloor);
    }
    Matrix bad(1, 2);
    bad(0, 1) = std::nan("");
    CHECK_THROWS(t.predict(bad));
}

TEST_CASE("rule teacher labels the xor of two thresholds") {
    RuleTeacher t(2, {{0, 0.4}, {1, -0.7}});
    const double rows[4][2] = {{1.0, 0.0}, {0.0, 0.0}, {1.0, -1.0}, {0.0, -1.0}};
    const int expect[4] = {0, 1, 1, 0};
    for (int i = 0; i < 4; ++i) CHECK(t.hard_label(rows[i]) == expect[i]);
}

TEST_CASE("teacher serialization round trip") {
    Matrix X;
    std::vector<int> y;
    blobs(200, 7, X, y);
    const auto dir = std::filesystem::temp_directory_path() / "tabkd_teacher_rt";
    std::filesystem::create_directories(dir);
    const Matrix P = probes(1000, 2, 9);

    MlpTeacherConfig mc;
    mc.epochs = 5;
    auto mlp = train_mlp_teacher(X, y, mc, 0);
    mlp->save(dir / "mlp.json");
    const Matrix a = mlp->predict(P), b = load_teacher(dir / "mlp.json")->predict(P);
    for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(std::abs(a.data[i] - b.data[i]) <= 1e-12);

    ForestConfig fc;
    fc.trees = 5;
    auto rf = train_random_forest(X, y, fc, 0);
    rf->save(dir / "rf.json");
    CHECK(rf->predict(P).data == load_teacher(dir / "rf.json")->predict(P).data);

    BoostConfig bc;
    bc.estimators = 5;
    auto gb = train_gbdt(X, y, bc);
    gb->save(dir / "gb.json");
    CHECK(gb->predict(P).data == load_teacher(dir / "gb.json")->predict(P).data);

    RuleTeacher rule(2, {{0, 0.4}, {1, -0.7}});
    rule.save(dir / "rule.json");
    CHECK(rule.predict(P).data == load_teacher(dir / "rule.json")->predict(P).data);
    std::filesystem::remove_all(dir);
}

TEST_CASE("only the mlp teacher is differentiable") {
    Matrix X;
    std::vector<int> y;
    blobs(50, 8, X, y);
    MlpTeacherConfig mc;
    mc.epochs = 1;
    CHECK(train_mlp_teacher(X, y, mc, 0)->differentiable());
    ForestConfig fc;
    fc.trees = 2;
    auto rf = train_random_forest(X, y, fc, 0);
    CHECK_FALSE(rf->differentiable());
    CHECK_THROWS_AS(rf->forward_graph(Tensor::from_matrix(X)), StateError);
}

TEST_CASE("breast cancer mlp teacher reaches 0.93") {
    const Dataset ds = tabkd::testing::breast_cancer();
    TeacherReport rep;
    train_teacher(ds, TeacherFamily::kMlp, 0, &rep);
    CHECK(rep.test_accuracy >= 0.93);
}
