#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "tabkd/binning.hpp"
#include "tabkd/generator.hpp"
#include "tabkd/student.hpp"
#include "tabkd/teachers.hpp"

namespace tabkd {

struct LearnBinsConfig {
    std::size_t steps = 200;
    std::size_t batch = 128;
    TemperatureSchedule schedule;
    BinLossWeights weights;
    GenPhase1Config generator;
    double generator_lr = 1e-3;
    /// Boundaries live on gap logits whose useful range is O(1); Adam at the
    /// network rate barely moves them within a few hundred steps.
    double boundary_lr = 0.05;
    /// Stop before the teacher counter would exceed this value.
    std::optional<std::uint64_t> query_limit;
};

struct LearnBinsTrace {
    std::size_t step = 0;
    double temperature = 0.0;
    double bin_loss = 0.0;
    double var_intra = 0.0;
    double var_inter = 0.0;
    double class_div = 0.0;
    double entropy = 0.0;
    double teacher_entropy = 0.0;
};

struct LearnBinsResult {
    BinSpec spec;
    std::vector<LearnBinsTrace> trace;
    std::size_t boundary_steps = 0;
    bool partial = false;
};

/// Boundary stabilization. Every step draws one batch from the generator,
/// queries the teacher once, updates the generator on the phase-1 objective
/// and then the boundaries on the bin loss, with the temperature annealed
/// per the schedule. Returns the spec frozen at schedule.phase2.
LearnBinsResult learn_bins(BinLearner& learner, GeneratorNet& generator, const StudentNet& student,
                           const TeacherOracle& teacher, const LearnBinsConfig& config, std::mt19937_64& rng,
                           const BatchSink& sink = {});

}  // namespace tabkd
