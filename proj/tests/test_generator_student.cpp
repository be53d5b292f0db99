#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "tabkd/coverage.hpp"
#include "tabkd/generator.hpp"
#include "tabkd/student.hpp"

using namespace tabkd;
using tabkd::testing::check_gradients;
using tabkd::testing::random_tensor;

namespace {

/// Network whose weights are all zero; the head bias is `head_bias`.
Mlp zero_mlp(const std::vector<std::size_t>& sizes, std::vector<double> head_bias = {}) {
    std::vector<Linear> layers;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
        Linear l;
        l.weight = Tensor::zeros({sizes[i], sizes[i + 1]}, true);
        l.bias = Tensor::zeros({1, sizes[i + 1]}, true);
        layers.push_back(l);
    }
    if (!head_bias.empty()) {
        auto b = layers.back().bias.mutable_values();
        std::copy(head_bias.begin(), head_bias.end(), b.begin());
    }
    return Mlp(std::move(layers), 0.0);
}

std::vector<double> values_of(const std::vector<Tensor>& ps) {
    std::vector<double> out;
    for (const auto& p : ps) out.insert(out.end(), p.values().begin(), p.values().end());
    return out;
}

}  // namespace

TEST_CASE("zero-weight generator emits its bias image") {
    const FeatureBox box = FeatureBox::uniform(3, 3.0);
    GeneratorNet g(box, zero_mlp({4, 5, 3}, {0.5, -0.2, 0.0}));
    std::mt19937_64 rng(0);
    const Matrix X = g.sample(6, rng).to_matrix();
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(X(i, 0) == doctest::Approx(3.0 * std::tanh(0.5)));
        CHECK(X(i, 1) == doctest::Approx(3.0 * std::tanh(-0.2)));
        CHECK(X(i, 2) == doctest::Approx(0.0));
    }
}

TEST_CASE("batch-normed generator spreads each feature over the batch") {
    const FeatureBox box = FeatureBox::uniform(2, 3.0);
    GeneratorNet g(box, zero_mlp({4, 5, 2}, {0.5, -0.2}), true);
    std::mt19937_64 rng(0);
    // Zero weights make every pre-activation equal, so normalization maps them to beta.
    const Matrix X = g.sample(8, rng).to_matrix();
    for (std::size_t i = 0; i < 8; ++i) CHECK(X(i, 0) == doctest::Approx(0.0));

    std::mt19937_64 r2(1);
    GeneratorNet h(box, r2);
    REQUIRE(h.batch_norm());
    CHECK(h.parameters().size() == h.net().parameters().size() + 2);
    const Matrix Y = h.sample(256, r2).to_matrix();
    for (std::size_t f = 0; f < 2; ++f) {
        double lo = 3.0, hi = -3.0;
        for (std::size_t i = 0; i < Y.rows; ++i) {
            lo = std::min(lo, Y(i, f));
            hi = std::max(hi, Y(i, f));
        }
        CHECK(hi - lo > 2.0);
    }
}

TEST_CASE("generator samples are seeded and inside the box") {
    const FeatureBox box = FeatureBox::uniform(4, 3.0);
    std::mt19937_64 r1(9), r2(9);
    GeneratorNet a(box, r1), b(box, r2);
    const Matrix xa = a.sample(64, r1).to_matrix();
    const Matrix xb = b.sample(64, r2).to_matrix();
    CHECK(xa.data == xb.data);
    for (std::size_t i = 0; i < xa.rows; ++i) CHECK(box.contains(xa.row(i)));
    CHECK_THROWS(a.noise(0, r1));
}

TEST_CASE("phase one loss extremes") {
    const FeatureBox box = FeatureBox::uniform(2, 3.0);
    StudentNet uniform_student(zero_mlp({2, 4, 2}));
    MlpTeacher half(zero_mlp({2, 3, 2}));
    const Tensor X = Tensor::from_matrix(Matrix(5, 2, 0.3));
    const Phase1Terms t = phase1_loss(X, uniform_student, half, {});
    CHECK(t.class_div == doctest::Approx(-std::log(2.0)));
    CHECK(t.entropy == doctest::Approx(-std::log(2.0)));
    CHECK_FALSE(t.proxy);

    RuleTeacher sure(2, {{0, -100.0}});  // p1 clamps to 1 - 1e-6 everywhere
    const Phase1Terms s = phase1_loss(X, uniform_student, sure, {});
    CHECK(s.proxy);
    const double h = -(1e-6 * std::log(1e-6) + (1 - 1e-6) * std::log(1 - 1e-6));
    CHECK(s.teacher_entropy == doctest::Approx(-h));
    CHECK(std::abs(s.teacher_entropy) < 2e-5);

    CHECK_THROWS(phase1_loss(Tensor::zeros({0, 2}), uniform_student, half, {}));
}

TEST_CASE("phase two hardness") {
    const FeatureBox box = FeatureBox::uniform(2, 3.0);
    std::mt19937_64 rng(1);
    StudentNet student(2, rng);
    const Tensor X = random_tensor({8, 2}, rng, -3, 3, false);
    const Tensor M = soft_membership(X, static_uniform_bins(box, 2).boundary_tensor(), 0.2);
    const Matrix same = student.predict(X.to_matrix());
    CHECK(phase2_loss(X, M, 2, 2, student, same, {}).hardness == doctest::Approx(0.0).epsilon(1e-12));

    StudentNet half(zero_mlp({2, 3, 2}));
    Matrix t(1, 2);
    t(0, 0) = 1.0;
    const Tensor x1 = Tensor::from({1, 2}, {0.0, 0.0});
    const Tensor m1 = soft_membership(x1, static_uniform_bins(box, 2).boundary_tensor(), 0.2);
    CHECK(phase2_loss(x1, m1, 2, 2, half, t, {}).hardness == doctest::Approx(-std::log(2.0)));
}

TEST_CASE("generator step with zero weights leaves parameters unchanged") {
    const FeatureBox box = FeatureBox::uniform(3, 3.0);
    std::mt19937_64 rng(2);
    GeneratorNet gen(box, rng);
    StudentNet student(3, rng);
    RuleTeacher teacher(3, {{0, 0.4}});
    Adam opt(CosineSchedule{1e-3, 10, 0.0});
    const auto params = gen.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) opt.add_param("g" + std::to_string(i), params[i]);
    const auto before = values_of(params);
    {
        FrozenParams frozen(student.parameters());
        Tape tape;
        Tensor X = gen.sample(16, rng);
        const Matrix P = teacher.predict(X.to_matrix());
        Tensor M = soft_membership(X, static_uniform_bins(box, 4).boundary_tensor(), 0.2);
        generator_step(tape, phase2_loss(X, M, 3, 4, student, P, {0.0, 0.0}), opt);
    }
    CHECK(values_of(params) == before);
}

TEST_CASE("generator step reports non-finite components") {
    Tensor p = Tensor::scalar(1.0, true);
    Adam opt(CosineSchedule{1e-3, 10, 0.0});
    opt.add_param("p", p);
    Tape tape;
    Phase2Terms bad;
    bad.total = mul(p, Tensor::scalar(std::nan("")));
    bad.diversity = std::nan("");
    bad.hardness = -0.5;
    try {
        generator_step(tape, bad, opt);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("diversity") != std::string::npos);
        CHECK(msg.find("hardness") != std::string::npos);
    }
}

TEST_CASE("phase losses pass finite differences in the queries") {
    const FeatureBox box = FeatureBox::uniform(3, 3.0);
    std::mt19937_64 rng(3);
    StudentNet student(3, rng);
    Mlp tnet({3, 8, 2}, rng);
    MlpTeacher teacher(tnet);
    RuleTeacher rule(3, {{0, 0.2}, {2, -0.5}}, 2.0);
    const Tensor b = static_uniform_bins(box, 3).boundary_tensor();
    for (int inst = 0; inst < 20; ++inst) {
        CAPTURE(inst);
        Tensor X = random_tensor({6, 3}, rng, -2.5, 2.5);
        const auto r1 = check_gradients(
            [&](const std::vector<Tensor>& l) { return phase1_loss(l[0], student, teacher, {1.0, 1.0}).total; }, {X});
        CHECK(r1.max_rel_error < 1e-3);
        const auto r2 = check_gradients(
            [&](const std::vector<Tensor>& l) { return phase1_loss(l[0], student, rule, {1.0, 1.0}).total; }, {X});
        CHECK(r2.max_rel_error < 1e-3);
        const Matrix P = rule.predict(X.to_matrix());
        const auto r3 = check_gradients(
            [&](const std::vector<Tensor>& l) {
                return phase2_loss(l[0], soft_membership(l[0], b, 0.4), 3, 3, student, P, {10.0, 2.0}).total;
            },
            {X});
        CHECK(r3.max_rel_error < 1e-3);
    }
}

TEST_CASE("distill loss values") {
    const Tensor s = Tensor::from({1, 2}, {0.9, 0.1});
    Matrix t(1, 2, 0.5);
    CHECK(distill_loss(s, t, 1.0).item() == doctest::Approx(0.9 * std::log(1.8) + 0.1 * std::log(0.2)));
    CHECK(distill_loss(s, t, 1.0).item() == doctest::Approx(0.3681).epsilon(1e-4));

    std::mt19937_64 rng(4);
    for (int i = 0; i < 20; ++i) {
        const Tensor p = softmax_rows(random_tensor({5, 2}, rng, -4, 4, false));
        CHECK(std::abs(distill_loss(p, p.to_matrix(), 1.0).item()) < 1e-10);
    }
    // Large T flattens the teacher toward uniform.
    Matrix sharp(1, 2);
    sharp(0, 0) = 0.99;
    sharp(0, 1) = 0.01;
    const Tensor s2 = Tensor::from({1, 2}, {0.7, 0.3});
    const double to_uniform = 0.7 * std::log(1.4) + 0.3 * std::log(0.6);
    CHECK(distill_loss(s2, sharp, 1e6).item() == doctest::Approx(to_uniform).epsilon(1e-5));
}

TEST_CASE("tempering preserves argmax") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Matrix p(100, 2);
    for (std::size_t i = 0; i < 100; ++i) {
        p(i, 1) = u(rng);
        p(i, 0) = 1.0 - p(i, 1);
    }
    for (double T : {0.1, 0.5, 1.0, 2.0, 10.0}) {
        const Matrix q = temper(p, T);
        for (std::size_t i = 0; i < 100; ++i) CHECK((q(i, 1) > q(i, 0)) == (p(i, 1) > p(i, 0)));
    }
}

TEST_CASE("distill loss gradients in both directions") {
    std::mt19937_64 rng(6);
    for (int inst = 0; inst < 20; ++inst) {
        CAPTURE(inst);
        Tensor z = random_tensor({4, 2}, rng, -3, 3);
        Matrix t(4, 2);
        std::uniform_real_distribution<double> u(0.01, 0.99);
        for (std::size_t i = 0; i < 4; ++i) {
            t(i, 1) = u(rng);
            t(i, 0) = 1.0 - t(i, 1);
        }
        const double T = 0.5 + 0.1 * inst;
        for (auto dir : {KlDirection::kStudentToTeacher, KlDirection::kTeacherToStudent}) {
            const auto r = check_gradients(
                [&](const std::vector<Tensor>& l) { return distill_loss(softmax_rows(l[0]), t, T, dir); }, {z});
            CHECK(r.max_rel_error < 1e-3);
        }
    }
}

TEST_CASE("batch split") {
    CHECK(split_batch(128) == std::pair<std::size_t, std::size_t>{115, 13});
    CHECK(split_batch(10) == std::pair<std::size_t, std::size_t>{9, 1});
}

TEST_CASE("replay buffer evicts oldest and samples stored rows") {
    ReplayBuffer buf(5);
    Matrix X(7, 1), P(7, 2);
    for (std::size_t i = 0; i < 7; ++i) {
        X(i, 0) = static_cast<double>(i);
        P(i, 1) = 0.1 * static_cast<double>(i);
        P(i, 0) = 1.0 - P(i, 1);
    }
    buf.insert(X, P);
    CHECK(buf.size() == 5);
    std::mt19937_64 rng(0);
    const auto [xs, ps] = buf.sample(50, rng);
    for (std::size_t i = 0; i < 50; ++i) {
        CHECK(xs(i, 0) >= 2.0);
        CHECK(ps(i, 1) == doctest::Approx(0.1 * xs(i, 0)));
    }
}

TEST_CASE("warmup fills the buffer and counts queries") {
    const FeatureBox box = FeatureBox::uniform(2, 3.0);
    RuleTeacher teacher(2, {{0, 0.4}, {1, -0.7}});
    int improved = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        std::mt19937_64 rng(seed);
        StudentNet student(2, rng);
        ReplayBuffer buf(30 * 128);
        Adam opt(CosineSchedule{1e-3, 30, 0.0});
        const auto ps = student.parameters();
        for (std::size_t i = 0; i < ps.size(); ++i) opt.add_param("s" + std::to_string(i), ps[i]);
        const std::uint64_t q0 = teacher.queries();
        const WarmupResult w = warmup(student, teacher, box, 30, 128, buf, opt, rng);
        CHECK(buf.size() == 3840);
        CHECK(teacher.queries() - q0 == 3840);
        for (double l : w.losses) CHECK(l >= 0.0);
        if (w.losses.back() < w.losses.front()) ++improved;
        CHECK_THROWS_AS(warmup(student, teacher, box, 1, 8, buf, opt, rng), StateError);
    }
    CHECK(improved >= 4);
}

TEST_CASE("student step mixes replay rows and leaves other parameters alone") {
    const FeatureBox box = FeatureBox::uniform(2, 3.0);
    std::mt19937_64 rng(7);
    StudentNet student(2, rng);
    GeneratorNet gen(box, rng);
    RuleTeacher teacher(2, {{0, 0.4}});
    ReplayBuffer empty(10);
    Adam opt(CosineSchedule{1e-3, 10, 0.0});
    const auto ps = student.parameters();
    for (std::size_t i = 0; i < ps.size(); ++i) opt.add_param("s" + std::to_string(i), ps[i]);
    const Matrix X = box.sample_uniform(115, rng);
    const Matrix P = teacher.predict(X);
    CHECK_THROWS_AS(student_step(student, X, P, 13, empty, 1.0, opt, rng), StateError);

    ReplayBuffer buf(100);
    buf.insert(box.sample_uniform(100, rng), teacher.predict(box.sample_uniform(100, rng)));
    const auto gen_before = values_of(gen.parameters());
    const auto s_before = values_of(student.parameters());
    const auto r = student_step(student, X, P, 13, buf, 1.0, opt, rng);
    CHECK(r.adversarial_rows == 115);
    CHECK(r.replay_rows == 13);
    CHECK(r.loss >= 0.0);
    CHECK(values_of(gen.parameters()) == gen_before);
    CHECK(values_of(student.parameters()) != s_before);

    Adam frozen(CosineSchedule{0.0, 10, 0.0});
    for (std::size_t i = 0; i < ps.size(); ++i) frozen.add_param("s" + std::to_string(i), ps[i]);
    const auto mid = values_of(student.parameters());
    student_step(student, X, P, 13, buf, 1.0, frozen, rng);
    CHECK(values_of(student.parameters()) == mid);
}

TEST_CASE("student save and load") {
    std::mt19937_64 rng(8);
    StudentNet s(4, rng);
    const auto path = std::filesystem::temp_directory_path() / "tabkd_student.json";
    s.save(path);
    const StudentNet b = StudentNet::load(path);
    const Matrix X = FeatureBox::uniform(4, 3.0).sample_uniform(100, rng);
    const Matrix p1 = s.predict(X), p2 = b.predict(X);
    for (std::size_t i = 0; i < p1.data.size(); ++i) CHECK(std::abs(p1.data[i] - p2.data[i]) <= 1e-12);
    std::filesystem::remove(path);
}
