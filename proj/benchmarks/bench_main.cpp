#include <benchmark/benchmark.h>

#include <random>

#include "tabkd/binning.hpp"
#include "tabkd/coverage.hpp"
#include "tabkd/generator.hpp"
#include "tabkd/nn.hpp"

using namespace tabkd;

namespace {

Tensor uniform_batch(std::size_t n, std::size_t f, std::mt19937_64& rng) {
    return Tensor::from_matrix(FeatureBox::uniform(f, 3.0).sample_uniform(n, rng));
}

}  // namespace

// Forward and backward through the student-sized network on one batch.
static void BM_MlpStep(benchmark::State& state) {
    const auto F = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(0);
    Mlp net({F, 64, 32, 2}, rng);
    const Tensor X = uniform_batch(128, F, rng);
    for (auto _ : state) {
        Tape tape;
        Tensor loss = mean(square(net.forward(X)));
        tape.backward(loss);
        benchmark::DoNotOptimize(loss.item());
    }
}
BENCHMARK(BM_MlpStep)->Arg(8)->Arg(30)->Arg(100);

static void BM_BinLoss(benchmark::State& state) {
    const auto F = static_cast<std::size_t>(state.range(0));
    const std::size_t K = 8;
    std::mt19937_64 rng(1);
    const FeatureBox box = FeatureBox::uniform(F, 3.0);
    Tensor raw = Tensor::zeros({F, K}, true);
    const Tensor X = uniform_batch(128, F, rng);
    std::vector<double> p1(128);
    std::uniform_real_distribution<double> u(0, 1);
    for (auto& v : p1) v = u(rng);
    for (auto _ : state) {
        Tape tape;
        Tensor M = soft_membership(X, gap_boundaries(raw, box), 0.5);
        BinLossParts parts = bin_loss(M, p1, F, K);
        tape.backward(parts.loss);
        benchmark::DoNotOptimize(parts.loss.item());
    }
}
BENCHMARK(BM_BinLoss)->Arg(8)->Arg(30);

// Pair-joint diversity grows with F^2 K^2.
static void BM_Diversity(benchmark::State& state) {
    const auto F = static_cast<std::size_t>(state.range(0));
    const std::size_t K = 8;
    std::mt19937_64 rng(2);
    const Tensor b = static_uniform_bins(FeatureBox::uniform(F, 3.0), K).boundary_tensor();
    Tensor X = Tensor::from_matrix(FeatureBox::uniform(F, 3.0).sample_uniform(128, rng));
    X.set_requires_grad(true);
    for (auto _ : state) {
        Tape tape;
        Tensor d = diversity_loss(pair_joint(soft_membership(X, b, 0.2), F, K));
        tape.backward(d);
        benchmark::DoNotOptimize(d.item());
    }
}
BENCHMARK(BM_Diversity)->Arg(8)->Arg(30);

static void BM_CoverageRecord(benchmark::State& state) {
    const auto F = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(3);
    const FeatureBox box = FeatureBox::uniform(F, 3.0);
    const BinSpec spec = static_uniform_bins(box, 8);
    const Matrix X = box.sample_uniform(128, rng);
    CoverageTracker tracker(F, 8);
    for (auto _ : state) {
        tracker.record_batch(spec, X, 0);
        benchmark::DoNotOptimize(tracker.visited_cells());
    }
}
BENCHMARK(BM_CoverageRecord)->Arg(8)->Arg(30)->Arg(100);

static void BM_GeneratorSample(benchmark::State& state) {
    std::mt19937_64 rng(4);
    GeneratorNet g(FeatureBox::uniform(30, 3.0), rng);
    for (auto _ : state) {
        Tape tape;
        Tensor X = g.sample(128, rng);
        benchmark::DoNotOptimize(X.at(0, 0));
    }
}
BENCHMARK(BM_GeneratorSample);
BENCHMARK_MAIN();
