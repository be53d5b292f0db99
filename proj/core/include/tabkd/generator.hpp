#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "tabkd/data.hpp"
#include "tabkd/nn.hpp"
#include "tabkd/optim.hpp"
#include "tabkd/student.hpp"
#include "tabkd/teachers.hpp"

namespace tabkd {

struct GeneratorConfig {
    std::size_t noise_dim = 64;
    std::vector<std::size_t> hidden{128, 128};
    /// Standardize the last layer's outputs over the batch, then apply a
    /// learned per-feature scale and shift before squashing.
    bool batch_norm = true;
};

/// Maps Gaussian noise to queries inside the feature box:
/// x = center + half_width ⊙ tanh(h), with h = mlp(z) or, with batch norm,
/// h = gamma ⊙ standardize(mlp(z)) + beta.
class GeneratorNet {
public:
    GeneratorNet(FeatureBox box, std::mt19937_64& rng, const GeneratorConfig& config = {});
    GeneratorNet(FeatureBox box, Mlp net, bool batch_norm = false);

    Tensor forward(const Tensor& z) const;
    Matrix noise(std::size_t n, std::mt19937_64& rng) const;
    /// forward(noise(n)); recorded on the active tape when parameters need gradients.
    Tensor sample(std::size_t n, std::mt19937_64& rng) const;

    std::vector<Tensor> parameters() const;
    bool batch_norm() const { return gamma_.defined(); }
    Mlp& net() { return net_; }
    const Mlp& net() const { return net_; }
    const FeatureBox& box() const { return box_; }
    std::size_t noise_dim() const { return net_.input_size(); }
    std::size_t features() const { return box_.features(); }

private:
    FeatureBox box_;
    Mlp net_;
    Tensor center_;
    Tensor half_;
    Tensor gamma_;
    Tensor beta_;
};

struct GenPhase1Config {
    double class_div = 1.0;
    double boundary = 1.0;
};

struct GenPhase2Config {
    double coverage = 10.0;
    double hardness = 2.0;
};

struct Phase1Terms {
    Tensor total;
    double class_div = 0.0;
    /// Value of the entropy term that carries the gradient.
    double entropy = 0.0;
    /// -mean H(teacher); equal to `entropy` unless the student proxy was used.
    double teacher_entropy = 0.0;
    bool proxy = false;
    /// Raw teacher probabilities at the batch (the batch's only teacher query).
    Matrix teacher_probs;
};

/// class_div · (-H(mean student distribution)) + boundary · (-mean H(teacher)).
///
/// Differentiable teachers contribute their input gradient directly. For
/// the others the teacher is queried once as a constant and the student's
/// per-sample entropy stands in for the gradient-carrying term.
Phase1Terms phase1_loss(const Tensor& X_gen, const StudentNet& student, const TeacherOracle& teacher,
                        const GenPhase1Config& config);

struct Phase2Terms {
    Tensor total;
    double diversity = 0.0;
    double hardness = 0.0;
};

/// coverage · diversity_loss(pair_joint(memberships)) + hardness · (-mean KL(T ‖ S)).
/// teacher_probs are constants; gradients reach X only through the student and
/// the memberships.
Phase2Terms phase2_loss(const Tensor& X_gen, const Tensor& memberships, std::size_t features, std::size_t bins,
                        const StudentNet& student, const Matrix& teacher_probs, const GenPhase2Config& config);

/// Backpropagates the loss on `tape` and applies one update to the parameters
/// held by `optimizer`. A non-finite loss raises NumericError listing the
/// component values.
void generator_step(Tape& tape, const Phase1Terms& loss, Adam& optimizer);
void generator_step(Tape& tape, const Phase2Terms& loss, Adam& optimizer);

}  // namespace tabkd
