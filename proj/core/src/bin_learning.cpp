#include "tabkd/bin_learning.hpp"

#include <cmath>

namespace tabkd {

LearnBinsResult learn_bins(BinLearner& learner, GeneratorNet& generator, const StudentNet& student,
                           const TeacherOracle& teacher, const LearnBinsConfig& config, std::mt19937_64& rng,
                           const BatchSink& sink) {
    learner.check_mutable();
    if (config.batch == 0) throw StateError("learn_bins: batch must be positive");
    if (generator.features() != learner.features()) throw ShapeError("learn_bins: generator and bins disagree on F");

    const std::size_t F = learner.features();
    const std::size_t K = learner.bins();
    Adam gen_opt(CosineSchedule{config.generator_lr, config.steps, 0.0});
    for (std::size_t i = 0; i < generator.parameters().size(); ++i) {
        gen_opt.add_param("generator." + std::to_string(i), generator.parameters()[i]);
    }
    Adam bin_opt(CosineSchedule{config.boundary_lr, config.steps, 0.0});
    bin_opt.add_param("boundaries", learner.raw());

    LearnBinsResult result;
    for (std::size_t step = 0; step < config.steps; ++step) {
        if (config.query_limit && teacher.queries() + config.batch > *config.query_limit) {
            result.partial = true;
            break;
        }
        const double tau = config.schedule.at(step);
        LearnBinsTrace row;
        row.step = step;
        row.temperature = tau;

        Matrix X;
        Matrix P;
        {
            FrozenParams frozen(student.parameters());
            Tape tape;
            Tensor Xg = generator.sample(config.batch, rng);
            Phase1Terms terms = phase1_loss(Xg, student, teacher, config.generator);
            generator_step(tape, terms, gen_opt);
            X = Xg.to_matrix();
            P = std::move(terms.teacher_probs);
            row.class_div = terms.class_div;
            row.entropy = terms.entropy;
            row.teacher_entropy = terms.teacher_entropy;
        }
        if (sink) sink(step, X, P);

        std::vector<double> p1(P.rows);
        for (std::size_t i = 0; i < P.rows; ++i) p1[i] = P(i, 1);
        {
            Tape tape;
            Tensor M = soft_membership(Tensor::from_matrix(X), learner.boundaries(), tau);
            BinLossParts parts = bin_loss(M, p1, F, K, config.weights);
            if (!std::isfinite(parts.loss.item())) {
                throw NumericError("bin loss is not finite (var_intra=" + std::to_string(parts.var_intra) +
                                   ", var_inter=" + std::to_string(parts.var_inter) + ")");
            }
            bin_opt.zero_grad();
            tape.backward(parts.loss);
            bin_opt.step();
            row.bin_loss = parts.loss.item();
            row.var_intra = parts.var_intra;
            row.var_inter = parts.var_inter;
        }
        ++result.boundary_steps;
        // The parameterization guarantees ordering; snapshot re-validates it.
        (void)learner.snapshot(tau);
        result.trace.push_back(row);
    }
    result.spec = learner.freeze(config.schedule.phase2);
    return result;
}

}  // namespace tabkd
