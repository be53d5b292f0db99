#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tabkd/tensor.hpp"

namespace tabkd {

enum class ColumnKind { kNumeric, kCategorical };

/// Describes how to read one dataset's CSV file.
struct DatasetSchema {
    std::string name;
    std::string target;
    std::string positive;                  // target value mapped to label 1
    std::vector<std::string> categorical;  // every other kept column is numeric
    std::vector<std::string> drop;
    std::vector<std::string> missing_tokens{"", "?", "NA"};
    /// Column names for headerless raw downloads; `fetch` writes them as the header.
    std::vector<std::string> raw_columns;
    std::string url;
    std::optional<std::uint64_t> content_length;

    static DatasetSchema load(const std::filesystem::path& path);
    static DatasetSchema parse(const std::string& text);
    bool is_categorical(const std::string& column) const;
    bool is_missing(const std::string& cell) const;
};

struct RawTable {
    std::vector<std::string> columns;  // feature columns, in file order
    std::vector<ColumnKind> kinds;
    std::vector<std::vector<std::string>> rows;  // one cell per feature column
    std::vector<std::string> target;             // one per row
    std::string target_column;
    std::size_t dropped_missing_target = 0;
};

/// Reads a headered CSV according to `schema`. Rows with a missing target are
/// dropped; missing feature cells are kept and resolved by encode_and_scale.
RawTable load_csv(const std::filesystem::path& path, const DatasetSchema& schema);
RawTable parse_csv(std::istream& in, const DatasetSchema& schema);

struct Scaler {
    std::vector<double> mean;
    std::vector<double> stddev;

    void apply(std::span<double> row) const;
    void invert(std::span<double> row) const;
};

struct Dataset {
    std::string name;
    Matrix X;            // standardized, N×F
    std::vector<int> y;  // 0/1
    std::vector<std::string> feature_names;
    std::vector<ColumnKind> kinds;
    std::vector<std::vector<std::string>> categories;  // sorted codebook per categorical feature
    Scaler scaler;
    std::vector<bool> constant_feature;  // zero training variance, scaled by 1
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;

    std::size_t features() const { return X.cols; }
    std::size_t size() const { return X.rows; }
    Matrix train_X() const { return X.select_rows(train_idx); }
    Matrix test_X() const { return X.select_rows(test_idx); }
    std::vector<int> train_y() const;
    std::vector<int> test_y() const;

    void save(const std::filesystem::path& dir) const;
    static Dataset load(const std::filesystem::path& dir);
};

/// Stratified split: each class is shuffled with a seeded generator and
/// round(train_fraction · n_class) of its rows go to training. Index lists are
/// returned sorted.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(const std::vector<int>& y,
                                                                               double train_fraction,
                                                                               std::uint64_t seed);

/// Ordinal-encodes categoricals (sorted names), imputes numeric gaps with the
/// training median, splits 80/20 stratified and standardizes on the training rows.
Dataset encode_and_scale(const RawTable& raw, const std::string& positive_label, std::uint64_t seed,
                         const std::string& name = {});

/// Per-feature sampling interval of the data-free query domain.
struct FeatureBox {
    std::vector<double> lo;
    std::vector<double> hi;

    static FeatureBox uniform(std::size_t features, double radius);
    std::size_t features() const { return lo.size(); }
    double width(std::size_t f) const { return hi[f] - lo[f]; }
    bool contains(std::span<const double> row) const;
    Matrix sample_uniform(std::size_t n, std::mt19937_64& rng) const;
};

FeatureBox feature_box(const Dataset& ds, double radius = 3.0);

}  // namespace tabkd
