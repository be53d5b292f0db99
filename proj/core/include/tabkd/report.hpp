#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tabkd/orchestrator.hpp"

namespace tabkd {

/// One persisted run directory, read back from final.csv and metrics.csv.
struct RunSummary {
    std::filesystem::path dir;
    std::string dataset;
    std::string teacher;
    std::string method;
    std::string binning;
    std::uint64_t seed = 0;
    EvalReport final_metrics;
    std::uint64_t queries = 0;
    bool partial = false;
    std::vector<Checkpoint> checkpoints;
};

RunSummary read_run(const std::filesystem::path& dir);

/// Every directory below the roots that holds a final.csv, in path order.
std::vector<RunSummary> collect_runs(const std::vector<std::filesystem::path>& roots);

/// dataset,method,teacher,metric,mean,std,n over seeds.
void write_table2(const std::filesystem::path& path, const std::vector<RunSummary>& runs);

/// dataset,teacher,method,seed,step,coverage,agreement for every checkpoint.
void write_fig2(const std::filesystem::path& path, const std::vector<RunSummary>& runs);

struct CorrelationRow {
    std::string dataset;
    std::string teacher;
    std::string method;
    std::uint64_t seed = 0;
    std::size_t points = 0;
    std::optional<double> correlation;
};

std::vector<CorrelationRow> correlate(const std::vector<RunSummary>& runs);
void write_correlations(const std::filesystem::path& path, const std::vector<CorrelationRow>& rows);

}  // namespace tabkd
