#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tabkd {

/// Fraction of positions where preds equals labels. Throws on empty or
/// mismatched input.
double accuracy(std::span<const int> preds, std::span<const int> labels);

/// F1 of the positive class (label 1); 0/0 in precision or recall counts as 0.
double f1_score(std::span<const int> preds, std::span<const int> labels);

/// Rank-statistic AUC, P(score_pos > score_neg) with ties counted one half.
/// Empty when only one class is present.
std::optional<double> auc(std::span<const double> scores, std::span<const int> labels);

/// Fraction of positions where the two label vectors coincide.
double agreement(std::span<const int> student, std::span<const int> teacher);

/// Pearson correlation; empty when either series has zero variance or fewer
/// than two points.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

/// Minimum number of aligned checkpoints for a coverage/agreement correlation.
inline constexpr std::size_t kMinCorrelationPoints = 5;

/// Pearson correlation between checkpoint coverage and agreement. Empty when
/// fewer than kMinCorrelationPoints are given or a series is constant.
std::optional<double> coverage_agreement_correlation(std::span<const double> coverage,
                                                     std::span<const double> agreement);

struct EvalReport {
    double accuracy = 0.0;
    double f1 = 0.0;
    std::optional<double> auc;
    double agreement = 0.0;
    double coverage = 0.0;
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // population standard deviation
    std::size_t n = 0;
};

MeanStd mean_std(std::span<const double> values);

/// Shortest round-trip decimal text for a double; "NA" for an empty optional.
std::string format_number(double value);
std::string format_number(const std::optional<double>& value);

}  // namespace tabkd
