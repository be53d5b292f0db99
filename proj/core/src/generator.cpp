#include "tabkd/generator.hpp"

#include <cmath>
#include <sstream>

#include "tabkd/coverage.hpp"

namespace tabkd {

namespace {

std::vector<std::size_t> layer_sizes(std::size_t features, const GeneratorConfig& config) {
    std::vector<std::size_t> sizes{config.noise_dim};
    sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
    sizes.push_back(features);
    return sizes;
}

void check_box(const FeatureBox& box) {
    if (box.features() == 0) throw StateError("generator: empty feature box");
    for (std::size_t f = 0; f < box.features(); ++f) {
        if (!(box.lo[f] < box.hi[f])) throw StateError("generator: feature box interval " + std::to_string(f) + " is empty");
    }
}

double mean_value(const Tensor& t) {
    double s = 0.0;
    for (double v : t.values()) s += v;
    return s / static_cast<double>(t.numel());
}

void step_or_throw(Tape& tape, const Tensor& total, Adam& optimizer, const std::string& breakdown) {
    if (!std::isfinite(total.item())) throw NumericError("generator loss is not finite (" + breakdown + ")");
    optimizer.zero_grad();
    tape.backward(total);
    optimizer.step();
}

}  // namespace

GeneratorNet::GeneratorNet(FeatureBox box, std::mt19937_64& rng, const GeneratorConfig& config)
    : GeneratorNet(box, Mlp(layer_sizes(box.features(), config), rng), config.batch_norm) {}

GeneratorNet::GeneratorNet(FeatureBox box, Mlp net, bool batch_norm) : box_(std::move(box)), net_(std::move(net)) {
    check_box(box_);
    if (net_.output_size() != box_.features()) throw ShapeError("generator: network output does not match box width");
    std::vector<double> c(features()), h(features());
    for (std::size_t f = 0; f < features(); ++f) {
        c[f] = 0.5 * (box_.lo[f] + box_.hi[f]);
        h[f] = 0.5 * (box_.hi[f] - box_.lo[f]);
    }
    center_ = Tensor::from({1, features()}, std::move(c));
    half_ = Tensor::from({1, features()}, std::move(h));
    net_.set_requires_grad(true);
    if (batch_norm) {
        gamma_ = Tensor::full({1, features()}, 1.0, true);
        beta_ = Tensor::zeros({1, features()}, true);
    }
}

std::vector<Tensor> GeneratorNet::parameters() const {
    std::vector<Tensor> out = net_.parameters();
    if (batch_norm()) {
        out.push_back(gamma_);
        out.push_back(beta_);
    }
    return out;
}

Tensor GeneratorNet::forward(const Tensor& z) const {
    Tensor h = net_.forward(z);
    if (batch_norm()) h = add(mul(standardize_cols(h), gamma_), beta_);
    return add(center_, mul(half_, tanh(h)));
}

Matrix GeneratorNet::noise(std::size_t n, std::mt19937_64& rng) const {
    if (n == 0) throw StateError("generator: sample size must be positive");
    Matrix z(n, noise_dim());
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : z.data) v = normal(rng);
    return z;
}

Tensor GeneratorNet::sample(std::size_t n, std::mt19937_64& rng) const {
    return forward(Tensor::from_matrix(noise(n, rng)));
}

Phase1Terms phase1_loss(const Tensor& X_gen, const StudentNet& student, const TeacherOracle& teacher,
                        const GenPhase1Config& config) {
    if (X_gen.rows() == 0) throw ShapeError("phase1_loss: empty batch");
    if (config.class_div < 0.0 || config.boundary < 0.0) throw StateError("phase1_loss: weights must be nonnegative");
    Phase1Terms out;
    Tensor s = student.probs(X_gen);
    Tensor class_div = neg(row_entropy(mean_cols(s), kLogEps));
    out.class_div = class_div.item();

    Tensor entropy;
    if (teacher.differentiable()) {
        Tensor t = teacher.forward_graph(X_gen);
        out.teacher_probs = t.to_matrix();
        entropy = neg(mean(row_entropy(t, kLogEps)));
        out.teacher_entropy = entropy.item();
    } else {
        out.teacher_probs = teacher.predict(X_gen.to_matrix());
        {
            NoGrad guard;
            out.teacher_entropy = -mean_value(row_entropy(Tensor::from_matrix(out.teacher_probs), kLogEps));
        }
        entropy = neg(mean(row_entropy(s, kLogEps)));
        out.proxy = true;
    }
    out.entropy = entropy.item();
    out.total = add(scale(class_div, config.class_div), scale(entropy, config.boundary));
    return out;
}

Phase2Terms phase2_loss(const Tensor& X_gen, const Tensor& memberships, std::size_t features, std::size_t bins,
                        const StudentNet& student, const Matrix& teacher_probs, const GenPhase2Config& config) {
    if (X_gen.rows() == 0) throw ShapeError("phase2_loss: empty batch");
    if (config.coverage < 0.0 || config.hardness < 0.0) throw StateError("phase2_loss: weights must be nonnegative");
    if (teacher_probs.rows != X_gen.rows() || teacher_probs.cols != 2) {
        throw ShapeError("phase2_loss: teacher labels do not match the batch");
    }
    Phase2Terms out;
    Tensor diversity = diversity_loss(pair_joint(memberships, features, bins));

    Matrix log_t = teacher_probs;
    for (double& v : log_t.data) v = std::log(std::max(v, kLogEps));
    Tensor t = Tensor::from_matrix(teacher_probs);
    Tensor log_s = log(clamp_min(student.probs(X_gen), kLogEps));
    Tensor kl = sum_rows(mul(t, sub(Tensor::from_matrix(log_t), log_s)));
    Tensor hardness = neg(mean(kl));

    out.diversity = diversity.item();
    out.hardness = hardness.item();
    out.total = add(scale(diversity, config.coverage), scale(hardness, config.hardness));
    return out;
}

void generator_step(Tape& tape, const Phase1Terms& loss, Adam& optimizer) {
    std::ostringstream os;
    os << "class_div=" << loss.class_div << ", entropy=" << loss.entropy;
    step_or_throw(tape, loss.total, optimizer, os.str());
}

void generator_step(Tape& tape, const Phase2Terms& loss, Adam& optimizer) {
    std::ostringstream os;
    os << "diversity=" << loss.diversity << ", hardness=" << loss.hardness;
    step_or_throw(tape, loss.total, optimizer, os.str());
}

}  // namespace tabkd
