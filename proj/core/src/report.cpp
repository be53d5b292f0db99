#include "tabkd/report.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <tuple>

#include "tabkd/csv.hpp"

namespace tabkd {

namespace {

std::vector<csv::Record> read_table(const std::filesystem::path& path, const std::string& header) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path.string());
    auto rows = csv::read_all(in);
    if (rows.empty() || csv::join_row(rows.front().fields) != header) {
        throw DataError(path.string() + ": unexpected header (expected " + header + ")");
    }
    rows.erase(rows.begin());
    return rows;
}

double number(const csv::Record& r, std::size_t i, const std::filesystem::path& path) {
    try {
        return std::stod(r.fields.at(i));
    } catch (const std::exception&) {
        throw DataError(path.string() + ":" + std::to_string(r.line) + ": bad number in column " + std::to_string(i));
    }
}

std::optional<double> optional_number(const csv::Record& r, std::size_t i, const std::filesystem::path& path) {
    if (r.fields.at(i) == "NA") return std::nullopt;
    return number(r, i, path);
}

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

}  // namespace

RunSummary read_run(const std::filesystem::path& dir) {
    RunSummary s;
    s.dir = dir;
    const auto final_path = dir / "final.csv";
    const auto rows = read_table(final_path, kFinalHeader);
    if (rows.size() != 1 || rows[0].fields.size() != 12) throw DataError(final_path.string() + ": expected one 12-column row");
    const auto& f = rows[0].fields;
    s.dataset = f[0];
    s.teacher = f[1];
    s.method = f[2];
    s.binning = f[3];
    s.seed = std::stoull(f[4]);
    s.final_metrics.accuracy = number(rows[0], 5, final_path);
    s.final_metrics.f1 = number(rows[0], 6, final_path);
    s.final_metrics.auc = optional_number(rows[0], 7, final_path);
    s.final_metrics.agreement = number(rows[0], 8, final_path);
    s.final_metrics.coverage = number(rows[0], 9, final_path);
    s.queries = std::stoull(f[10]);
    s.partial = f[11] == "1";

    const auto metrics_path = dir / "metrics.csv";
    if (std::filesystem::exists(metrics_path)) {
        for (const auto& r : read_table(metrics_path, kMetricsHeader)) {
            if (r.fields.size() != 10) throw DataError(metrics_path.string() + ":" + std::to_string(r.line) + ": expected 10 columns");
            Checkpoint c;
            c.step = std::stoull(r.fields[0]);
            c.queries = std::stoull(r.fields[1]);
            c.coverage = number(r, 2, metrics_path);
            c.agreement = number(r, 3, metrics_path);
            c.accuracy = number(r, 4, metrics_path);
            c.f1 = number(r, 5, metrics_path);
            c.auc = optional_number(r, 6, metrics_path);
            c.student_loss = number(r, 7, metrics_path);
            c.diversity = number(r, 8, metrics_path);
            c.hardness = number(r, 9, metrics_path);
            s.checkpoints.push_back(c);
        }
    }
    return s;
}

std::vector<RunSummary> collect_runs(const std::vector<std::filesystem::path>& roots) {
    std::vector<std::filesystem::path> dirs;
    for (const auto& root : roots) {
        if (!std::filesystem::exists(root)) throw DataError("no such run directory: " + root.string());
        if (std::filesystem::exists(root / "final.csv")) dirs.push_back(root);
        if (!std::filesystem::is_directory(root)) continue;
        for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
            if (e.is_directory() && std::filesystem::exists(e.path() / "final.csv")) dirs.push_back(e.path());
        }
    }
    std::sort(dirs.begin(), dirs.end());
    dirs.erase(std::unique(dirs.begin(), dirs.end()), dirs.end());
    std::vector<RunSummary> runs;
    for (const auto& d : dirs) runs.push_back(read_run(d));
    return runs;
}

void write_table2(const std::filesystem::path& path, const std::vector<RunSummary>& runs) {
    using Key = std::tuple<std::string, std::string, std::string>;
    std::map<Key, std::vector<const RunSummary*>> groups;
    for (const auto& r : runs) {
        const std::string method = r.method == "tabkd" && r.binning == "static" ? "tabkd_static" : r.method;
        groups[{r.dataset, method, r.teacher}].push_back(&r);
    }
    auto out = open_out(path);
    out << "dataset,method,teacher,metric,mean,std,n\n";
    for (const auto& [key, members] : groups) {
        const auto& [dataset, method, teacher] = key;
        auto emit = [&](const char* metric, auto get) {
            std::vector<double> v;
            for (const auto* r : members) {
                const std::optional<double> x = get(*r);
                if (x) v.push_back(*x);
            }
            const MeanStd ms = mean_std(v);
            out << dataset << ',' << method << ',' << teacher << ',' << metric << ',' << format_number(ms.mean) << ','
                << format_number(ms.std) << ',' << ms.n << '\n';
        };
        emit("accuracy", [](const RunSummary& r) { return std::optional<double>(r.final_metrics.accuracy); });
        emit("f1", [](const RunSummary& r) { return std::optional<double>(r.final_metrics.f1); });
        emit("auc", [](const RunSummary& r) { return r.final_metrics.auc; });
        emit("agreement", [](const RunSummary& r) { return std::optional<double>(r.final_metrics.agreement); });
    }
}

void write_fig2(const std::filesystem::path& path, const std::vector<RunSummary>& runs) {
    auto out = open_out(path);
    out << "dataset,teacher,method,seed,step,coverage,agreement\n";
    for (const auto& r : runs) {
        for (const auto& c : r.checkpoints) {
            out << r.dataset << ',' << r.teacher << ',' << r.method << ',' << r.seed << ',' << c.step << ','
                << format_number(c.coverage) << ',' << format_number(c.agreement) << '\n';
        }
    }
}

std::vector<CorrelationRow> correlate(const std::vector<RunSummary>& runs) {
    std::vector<CorrelationRow> rows;
    for (const auto& r : runs) {
        std::vector<double> cov, agr;
        for (const auto& c : r.checkpoints) {
            cov.push_back(c.coverage);
            agr.push_back(c.agreement);
        }
        rows.push_back({r.dataset, r.teacher, r.method, r.seed, cov.size(), coverage_agreement_correlation(cov, agr)});
    }
    return rows;
}

void write_correlations(const std::filesystem::path& path, const std::vector<CorrelationRow>& rows) {
    auto out = open_out(path);
    out << "dataset,teacher,method,seed,points,correlation\n";
    for (const auto& r : rows) {
        out << r.dataset << ',' << r.teacher << ',' << r.method << ',' << r.seed << ',' << r.points << ','
            << format_number(r.correlation) << '\n';
    }
}

}  // namespace tabkd
