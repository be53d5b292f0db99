#include "tabkd/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json_util.hpp"
#include "tabkd/csv.hpp"

namespace tabkd {

using detail::json;

// ---------------------------------------------------------------------------
// Schema

DatasetSchema DatasetSchema::parse(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed dataset schema: ") + e.what());
    }
    DatasetSchema s;
    try {
        s.name = j.value("name", "");
        s.target = j.at("target").get<std::string>();
        s.positive = j.at("positive").get<std::string>();
        s.categorical = j.value("categorical", std::vector<std::string>{});
        s.drop = j.value("drop", std::vector<std::string>{});
        if (j.contains("missing")) s.missing_tokens = j.at("missing").get<std::vector<std::string>>();
        s.raw_columns = j.value("raw_columns", std::vector<std::string>{});
        s.url = j.value("url", "");
        if (j.contains("content_length")) s.content_length = j.at("content_length").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw DataError(std::string("dataset schema: ") + e.what());
    }
    return s;
}

DatasetSchema DatasetSchema::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open schema " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

bool DatasetSchema::is_categorical(const std::string& column) const {
    return std::find(categorical.begin(), categorical.end(), column) != categorical.end();
}

bool DatasetSchema::is_missing(const std::string& cell) const {
    return std::find(missing_tokens.begin(), missing_tokens.end(), cell) != missing_tokens.end();
}

// ---------------------------------------------------------------------------
// CSV ingestion

RawTable parse_csv(std::istream& in, const DatasetSchema& schema) {
    csv::Reader reader(in);
    csv::Record header;
    if (!reader.next(header)) throw DataError("csv: empty file, header row required");

    RawTable table;
    table.target_column = schema.target;
    std::optional<std::size_t> target_pos;
    std::vector<std::size_t> feature_pos;
    for (std::size_t i = 0; i < header.fields.size(); ++i) {
        const std::string& name = header.fields[i];
        if (name == schema.target) {
            target_pos = i;
        } else if (std::find(schema.drop.begin(), schema.drop.end(), name) == schema.drop.end()) {
            feature_pos.push_back(i);
            table.columns.push_back(name);
            table.kinds.push_back(schema.is_categorical(name) ? ColumnKind::kCategorical : ColumnKind::kNumeric);
        }
    }
    if (!target_pos) throw DataError("csv: target column '" + schema.target + "' not in header");

    csv::Record rec;
    while (reader.next(rec)) {
        if (rec.fields.size() != header.fields.size()) {
            throw DataError("csv: row at line " + std::to_string(rec.line) + " has " +
                            std::to_string(rec.fields.size()) + " cells, header has " +
                            std::to_string(header.fields.size()));
        }
        const std::string& t = rec.fields[*target_pos];
        if (schema.is_missing(t)) {
            ++table.dropped_missing_target;
            continue;
        }
        std::vector<std::string> cells;
        cells.reserve(feature_pos.size());
        for (std::size_t p : feature_pos) cells.push_back(rec.fields[p]);
        table.rows.push_back(std::move(cells));
        table.target.push_back(t);
    }
    std::set<std::string> classes(table.target.begin(), table.target.end());
    if (classes.size() != 2) {
        throw DataError("csv: target '" + schema.target + "' has " + std::to_string(classes.size()) +
                        " distinct values, binary targets only");
    }
    // Missing feature cells are normalized to the empty string.
    for (auto& row : table.rows)
        for (auto& cell : row)
            if (schema.is_missing(cell)) cell.clear();
    return table;
}

RawTable load_csv(const std::filesystem::path& path, const DatasetSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return parse_csv(in, schema);
}

// ---------------------------------------------------------------------------
// Encoding and scaling

void Scaler::apply(std::span<double> row) const {
    for (std::size_t f = 0; f < row.size(); ++f) row[f] = (row[f] - mean[f]) / stddev[f];
}

void Scaler::invert(std::span<double> row) const {
    for (std::size_t f = 0; f < row.size(); ++f) row[f] = row[f] * stddev[f] + mean[f];
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(const std::vector<int>& y,
                                                                               double train_fraction,
                                                                               std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < y.size(); ++i) by_class[y[i]].push_back(i);
    std::vector<std::size_t> train, test;
    for (auto& [label, idx] : by_class) {
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
        train.insert(train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
        test.insert(test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {train, test};
}

namespace {

std::optional<double> parse_number(const std::string& s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
    return v;
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

constexpr const char* kMissingCategory = "<missing>";

}  // namespace

Dataset encode_and_scale(const RawTable& raw, const std::string& positive_label, std::uint64_t seed,
                         const std::string& name) {
    const std::size_t n = raw.rows.size();
    const std::size_t F = raw.columns.size();
    if (n == 0) throw DataError("encode_and_scale: no rows");
    if (std::find(raw.target.begin(), raw.target.end(), positive_label) == raw.target.end()) {
        throw DataError("encode_and_scale: positive label '" + positive_label + "' never occurs in the target");
    }

    Dataset ds;
    ds.name = name;
    ds.feature_names = raw.columns;
    ds.kinds = raw.kinds;
    ds.categories.resize(F);
    ds.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) ds.y[i] = raw.target[i] == positive_label ? 1 : 0;
    std::tie(ds.train_idx, ds.test_idx) = stratified_split(ds.y, 0.8, seed);

    ds.X = Matrix(n, F);
    for (std::size_t f = 0; f < F; ++f) {
        if (raw.kinds[f] == ColumnKind::kCategorical) {
            std::set<std::string> names;
            for (const auto& row : raw.rows) names.insert(row[f].empty() ? kMissingCategory : row[f]);
            ds.categories[f].assign(names.begin(), names.end());
            std::map<std::string, double> code;
            for (std::size_t c = 0; c < ds.categories[f].size(); ++c) code[ds.categories[f][c]] = static_cast<double>(c);
            for (std::size_t i = 0; i < n; ++i) ds.X(i, f) = code.at(raw.rows[i][f].empty() ? kMissingCategory : raw.rows[i][f]);
        } else {
            std::vector<std::optional<double>> parsed(n);
            std::vector<double> train_values;
            for (std::size_t i = 0; i < n; ++i) {
                parsed[i] = parse_number(raw.rows[i][f]);
                if (!parsed[i] && !raw.rows[i][f].empty()) {
                    throw DataError("encode_and_scale: non-numeric value '" + raw.rows[i][f] + "' in numeric column '" +
                                    raw.columns[f] + "' (data row " + std::to_string(i + 1) + ")");
                }
            }
            for (std::size_t i : ds.train_idx)
                if (parsed[i]) train_values.push_back(*parsed[i]);
            const double fill = median(std::move(train_values));
            for (std::size_t i = 0; i < n; ++i) ds.X(i, f) = parsed[i].value_or(fill);
        }
    }

    ds.scaler.mean.assign(F, 0.0);
    ds.scaler.stddev.assign(F, 1.0);
    ds.constant_feature.assign(F, false);
    const double n_train = static_cast<double>(ds.train_idx.size());
    for (std::size_t f = 0; f < F; ++f) {
        double mu = 0.0;
        for (std::size_t i : ds.train_idx) mu += ds.X(i, f);
        mu /= n_train;
        double var = 0.0;
        for (std::size_t i : ds.train_idx) var += (ds.X(i, f) - mu) * (ds.X(i, f) - mu);
        var /= n_train;
        ds.scaler.mean[f] = mu;
        if (var > 0.0) {
            ds.scaler.stddev[f] = std::sqrt(var);
        } else {
            ds.constant_feature[f] = true;
        }
    }
    for (std::size_t i = 0; i < n; ++i) ds.scaler.apply(ds.X.row(i));
    return ds;
}

std::vector<int> Dataset::train_y() const {
    std::vector<int> out;
    for (std::size_t i : train_idx) out.push_back(y[i]);
    return out;
}

std::vector<int> Dataset::test_y() const {
    std::vector<int> out;
    for (std::size_t i : test_idx) out.push_back(y[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace

void Dataset::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "X.csv");
        if (!out) throw DataError("cannot write " + (dir / "X.csv").string());
        out << csv::join_row(feature_names) << '\n';
        for (std::size_t i = 0; i < X.rows; ++i) {
            for (std::size_t f = 0; f < X.cols; ++f) out << (f ? "," : "") << format_double(X(i, f));
            out << '\n';
        }
    }
    {
        std::ofstream out(dir / "y.csv");
        out << "label\n";
        for (int v : y) out << v << '\n';
    }
    json kinds = json::array();
    for (auto k : this->kinds) kinds.push_back(k == ColumnKind::kCategorical ? "categorical" : "numeric");
    json meta{{"format", "tabkd-dataset"},
              {"version", 1},
              {"name", name},
              {"feature_names", feature_names},
              {"kinds", kinds},
              {"categories", categories},
              {"scaler_mean", scaler.mean},
              {"scaler_std", scaler.stddev},
              {"constant_feature", constant_feature},
              {"train_idx", train_idx},
              {"test_idx", test_idx}};
    detail::write_json(dir / "meta.json", meta);
}

Dataset Dataset::load(const std::filesystem::path& dir) {
    const json meta = detail::read_json(dir / "meta.json");
    Dataset ds;
    try {
        ds.name = meta.value("name", "");
        ds.feature_names = meta.at("feature_names").get<std::vector<std::string>>();
        for (const auto& k : meta.at("kinds")) {
            ds.kinds.push_back(k.get<std::string>() == "categorical" ? ColumnKind::kCategorical : ColumnKind::kNumeric);
        }
        ds.categories = meta.at("categories").get<std::vector<std::vector<std::string>>>();
        ds.scaler.mean = meta.at("scaler_mean").get<std::vector<double>>();
        ds.scaler.stddev = meta.at("scaler_std").get<std::vector<double>>();
        ds.constant_feature = meta.at("constant_feature").get<std::vector<bool>>();
        ds.train_idx = meta.at("train_idx").get<std::vector<std::size_t>>();
        ds.test_idx = meta.at("test_idx").get<std::vector<std::size_t>>();
    } catch (const json::exception& e) {
        throw DataError("dataset meta in " + dir.string() + ": " + e.what());
    }

    std::ifstream xin(dir / "X.csv");
    if (!xin) throw DataError("cannot open " + (dir / "X.csv").string());
    auto records = csv::read_all(xin);
    if (records.empty()) throw DataError("X.csv: missing header");
    const std::size_t F = records.front().fields.size();
    ds.X = Matrix(0, F);
    for (std::size_t r = 1; r < records.size(); ++r) {
        std::vector<double> row;
        for (const auto& cell : records[r].fields) {
            auto v = parse_number(cell);
            if (!v) throw DataError("X.csv line " + std::to_string(records[r].line) + ": bad number '" + cell + "'");
            row.push_back(*v);
        }
        if (row.size() != F) throw DataError("X.csv line " + std::to_string(records[r].line) + ": wrong cell count");
        ds.X.append_row(row);
    }
    std::ifstream yin(dir / "y.csv");
    if (!yin) throw DataError("cannot open " + (dir / "y.csv").string());
    auto yrec = csv::read_all(yin);
    for (std::size_t r = 1; r < yrec.size(); ++r) ds.y.push_back(std::stoi(yrec[r].fields.at(0)));
    if (ds.y.size() != ds.X.rows) throw DataError("y.csv and X.csv row counts differ");
    return ds;
}

// ---------------------------------------------------------------------------
// Feature box

FeatureBox FeatureBox::uniform(std::size_t features, double radius) {
    if (!(radius > 0.0)) throw DataError("feature box radius must be positive");
    return FeatureBox{std::vector<double>(features, -radius), std::vector<double>(features, radius)};
}

bool FeatureBox::contains(std::span<const double> row) const {
    for (std::size_t f = 0; f < row.size(); ++f)
        if (row[f] < lo[f] || row[f] > hi[f]) return false;
    return true;
}

Matrix FeatureBox::sample_uniform(std::size_t n, std::mt19937_64& rng) const {
    Matrix out(n, features());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t f = 0; f < features(); ++f) out(i, f) = lo[f] + (hi[f] - lo[f]) * u(rng);
    return out;
}

FeatureBox feature_box(const Dataset& ds, double radius) { return FeatureBox::uniform(ds.features(), radius); }

}  // namespace tabkd
