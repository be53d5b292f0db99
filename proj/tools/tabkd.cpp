// tabkd command-line front end.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "tabkd/csv.hpp"
#include "tabkd/data.hpp"
#include "tabkd/error.hpp"
#include "tabkd/orchestrator.hpp"
#include "tabkd/report.hpp"
#include "tabkd/teachers.hpp"

namespace {

using namespace tabkd;
namespace fs = std::filesystem;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct Globals {
    std::uint64_t seed = 0;
    std::string config;
    std::string out;
    std::uint64_t budget = 0;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* budget_opt = nullptr;
};

struct RunArgs {
    std::string data;
    std::string teacher;
    std::string dataset;
    std::string seeds;
    std::string binning;
    std::vector<std::string> overrides;
};

void add_run_options(CLI::App* cmd, RunArgs& a) {
    cmd->add_option("--data", a.data, "Prepared dataset directory");
    cmd->add_option("--teacher", a.teacher, "Teacher model file");
    cmd->add_option("--dataset", a.dataset, "Dataset label used in reports (default: name stored with the data)");
    cmd->add_option("--seeds", a.seeds, "Comma separated seed list (overrides config)");
    cmd->add_option("--binning", a.binning, "dynamic or static")->check(CLI::IsMember({"dynamic", "static"}));
    cmd->add_option("--set", a.overrides, "Config override key=value (repeatable)");
}

RunConfig build_config(const Globals& g, const RunArgs& a, const std::string& default_out) {
    RunConfig cfg = g.config.empty() ? RunConfig{} : load_run_config(g.config);
    if (!a.data.empty()) cfg.data_dir = a.data;
    if (!a.teacher.empty()) cfg.teacher_path = a.teacher;
    if (!a.dataset.empty()) cfg.dataset = a.dataset;
    if (!a.binning.empty()) cfg.binning = a.binning == "static" ? BinningMode::kStatic : BinningMode::kDynamic;
    if (g.budget_opt->count() > 0) cfg.query_budget = g.budget;
    if (!a.seeds.empty()) {
        cfg.seeds.clear();
        std::stringstream ss(a.seeds);
        std::string s;
        while (std::getline(ss, s, ',')) cfg.seeds.push_back(std::stoull(s));
    } else if (g.seed_opt->count() > 0) {
        cfg.seeds = {g.seed};
    }
    for (const auto& o : a.overrides) apply_override(cfg, o);
    if (!g.out.empty()) cfg.output_dir = g.out;
    else if (g.config.empty()) cfg.output_dir = default_out;
    if (cfg.data_dir.empty()) throw StateError("--data (or data_dir in the config) is required");
    if (cfg.teacher_path.empty()) throw StateError("--teacher (or teacher_path in the config) is required");
    cfg.validate();
    return cfg;
}

Dataset load_data(RunConfig& cfg) {
    Dataset ds = Dataset::load(cfg.data_dir);
    if (cfg.dataset == RunConfig{}.dataset && !ds.name.empty()) cfg.dataset = ds.name;
    return ds;
}

void print_records(const std::vector<RunRecord>& runs) {
    std::cout << "seed,accuracy,f1,auc,agreement,coverage,queries,partial\n";
    for (const auto& r : runs) {
        const auto& m = r.final_metrics;
        std::cout << r.seed << ',' << format_number(m.accuracy) << ',' << format_number(m.f1) << ','
                  << format_number(m.auc) << ',' << format_number(m.agreement) << ',' << format_number(m.coverage)
                  << ',' << r.teacher_queries << ',' << (r.partial ? 1 : 0) << '\n';
    }
}

// --- fetch -----------------------------------------------------------------

void fetch(const std::string& schema_path, const std::string& out_path) {
    const DatasetSchema schema = DatasetSchema::load(schema_path);
    if (schema.url.empty()) throw DataError("schema " + schema_path + " has no download url; place the CSV manually");
    const std::string prefix = "https://";
    if (schema.url.rfind(prefix, 0) != 0) throw DataError("only https urls are supported: " + schema.url);
    const std::string rest = schema.url.substr(prefix.size());
    const auto slash = rest.find('/');
    const std::string host = rest.substr(0, slash);
    const std::string path = slash == std::string::npos ? "/" : rest.substr(slash);

    httplib::SSLClient client(host);
    client.set_follow_location(true);
    client.set_connection_timeout(30);
    client.set_read_timeout(120);
    auto res = client.Get(path);
    if (!res) throw DataError("download failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw DataError("download failed with HTTP status " + std::to_string(res->status));
    const std::string& body = res->body;
    if (res->has_header("Content-Length")) {
        const auto announced = std::stoull(res->get_header_value("Content-Length"));
        if (announced != body.size()) throw DataError("truncated download: " + std::to_string(body.size()) + " of " + std::to_string(announced) + " bytes");
    }
    if (schema.content_length && *schema.content_length != body.size()) {
        throw DataError("content length " + std::to_string(body.size()) + " differs from the configured " +
                        std::to_string(*schema.content_length));
    }
    if (fs::path(out_path).has_parent_path()) fs::create_directories(fs::path(out_path).parent_path());
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw DataError("cannot write " + out_path);
    if (!schema.raw_columns.empty()) out << csv::join_row(schema.raw_columns) << '\n';
    out << body;
    std::cout << "wrote " << body.size() << " bytes to " << out_path << '\n';
}

int run(int argc, char** argv) {
    CLI::App app{"Data-free distillation of tabular classifiers"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    g.seed_opt = app.add_option("--seed", g.seed, "Random seed");
    app.add_option("--config", g.config, "Run configuration file (JSON)");
    app.add_option("--out", g.out, "Output path");
    g.budget_opt = app.add_option("--budget", g.budget, "Teacher query budget");

    // fetch
    std::string schema_path, csv_path, name;
    auto* fetch_cmd = app.add_subcommand("fetch", "Download a dataset listed in a schema file");
    fetch_cmd->add_option("--schema", schema_path, "Dataset schema")->required();

    // prepare
    auto* prepare_cmd = app.add_subcommand("prepare", "Encode, split and standardize a CSV file");
    prepare_cmd->add_option("--schema", schema_path, "Dataset schema")->required();
    prepare_cmd->add_option("--csv", csv_path, "Input CSV")->required();
    prepare_cmd->add_option("--name", name, "Dataset name (default: schema name)");

    // train-teacher
    std::string data_dir, family_name = "mlp";
    auto* teacher_cmd = app.add_subcommand("train-teacher", "Train a teacher on a prepared dataset");
    teacher_cmd->add_option("--data", data_dir, "Prepared dataset directory")->required();
    teacher_cmd->add_option("--family", family_name, "mlp, rf or gbdt");

    RunArgs distill_args, baseline_args, ablation_args;
    auto* distill_cmd = app.add_subcommand("distill", "Three-phase distillation over the configured seeds");
    add_run_options(distill_cmd, distill_args);

    std::string strategy = "random";
    auto* baseline_cmd = app.add_subcommand("baseline", "Query-budgeted baseline");
    add_run_options(baseline_cmd, baseline_args);
    baseline_cmd->add_option("--strategy", strategy, "random or entropy_guided")
        ->check(CLI::IsMember({"random", "entropy_guided"}));

    auto* ablation_cmd = app.add_subcommand("ablation", "Dynamic versus static binning");
    add_run_options(ablation_cmd, ablation_args);

    std::string teacher_path, student_path;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a student against a teacher on the test split");
    evaluate_cmd->add_option("--data", data_dir, "Prepared dataset directory")->required();
    evaluate_cmd->add_option("--teacher", teacher_path, "Teacher model file")->required();
    evaluate_cmd->add_option("--student", student_path, "Student model file")->required();

    std::vector<std::string> run_dirs;
    auto* report_cmd = app.add_subcommand("report", "Aggregate run directories into table2.csv and fig2.csv");
    report_cmd->add_option("--runs", run_dirs, "Run directories")->required();
    auto* correlate_cmd = app.add_subcommand("correlate", "Coverage/agreement correlation per run");
    correlate_cmd->add_option("--runs", run_dirs, "Run directories")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (*fetch_cmd) {
        fetch(schema_path, g.out.empty() ? "data/" + DatasetSchema::load(schema_path).name + ".csv" : g.out);
    } else if (*prepare_cmd) {
        const DatasetSchema schema = DatasetSchema::load(schema_path);
        const RawTable raw = load_csv(csv_path, schema);
        const std::string ds_name = !name.empty() ? name : !schema.name.empty() ? schema.name : fs::path(csv_path).stem().string();
        const Dataset ds = encode_and_scale(raw, schema.positive, g.seed, ds_name);
        const fs::path out = g.out.empty() ? fs::path("prepared") / ds_name : fs::path(g.out);
        ds.save(out);
        std::size_t flagged = 0;
        for (bool c : ds.constant_feature) flagged += c;
        std::cout << ds_name << ": " << ds.size() << " rows, " << ds.features() << " features, "
                  << ds.train_idx.size() << " train / " << ds.test_idx.size() << " test";
        if (raw.dropped_missing_target) std::cout << ", " << raw.dropped_missing_target << " rows without target dropped";
        if (flagged) std::cout << ", " << flagged << " constant feature(s)";
        std::cout << "\nwrote " << out.string() << '\n';
    } else if (*teacher_cmd) {
        const Dataset ds = Dataset::load(data_dir);
        const TeacherFamily family = parse_family(family_name);
        TeacherReport report;
        auto teacher = train_teacher(ds, family, g.seed, &report);
        const fs::path out = g.out.empty() ? fs::path("teachers") / (ds.name + "_" + to_string(family) + ".json") : fs::path(g.out);
        if (out.has_parent_path()) fs::create_directories(out.parent_path());
        teacher->save(out);
        std::cout << to_string(family) << " teacher: train accuracy " << format_number(report.train_accuracy)
                  << ", test accuracy " << format_number(report.test_accuracy) << "\nwrote " << out.string() << '\n';
    } else if (*distill_cmd || *baseline_cmd) {
        const bool is_baseline = static_cast<bool>(*baseline_cmd);
        const RunArgs& a = is_baseline ? baseline_args : distill_args;
        const Method method = is_baseline ? parse_method(strategy) : Method::kTabKD;
        RunConfig cfg = build_config(g, a, "runs/" + to_string(method));
        if (is_baseline && !cfg.query_budget) cfg.query_budget = 9600;
        Dataset ds = load_data(cfg);
        auto teacher = load_teacher(cfg.teacher_path);
        print_records(run_seeds(cfg, ds, *teacher, method, cfg.output_dir));
        std::cout << "wrote " << cfg.output_dir.string() << '\n';
    } else if (*ablation_cmd) {
        RunConfig cfg = build_config(g, ablation_args, "runs/ablation");
        Dataset ds = load_data(cfg);
        auto teacher = load_teacher(cfg.teacher_path);
        const AblationRow row = run_ablation(cfg, ds, *teacher, cfg.output_dir);
        std::cout << kAblationHeader << '\n'
                  << row.dataset << ',' << to_string(row.teacher) << ',' << format_number(row.dynamic_accuracy.mean)
                  << ',' << format_number(row.static_accuracy.mean) << ',' << format_number(row.dynamic_agreement.mean)
                  << ',' << format_number(row.static_agreement.mean) << '\n';
    } else if (*evaluate_cmd) {
        const Dataset ds = Dataset::load(data_dir);
        auto teacher = load_teacher(teacher_path);
        const StudentNet student = StudentNet::load(student_path);
        const Matrix X = ds.test_X();
        const auto y = ds.test_y();
        const auto t = teacher->predict_labels(X);
        const Matrix p = student.predict(X);
        std::vector<int> s(p.rows);
        std::vector<double> scores(p.rows);
        for (std::size_t i = 0; i < p.rows; ++i) {
            s[i] = p(i, 1) > p(i, 0) ? 1 : 0;
            scores[i] = p(i, 1);
        }
        std::cout << "accuracy,f1,auc,agreement\n"
                  << format_number(accuracy(s, y)) << ',' << format_number(f1_score(s, y)) << ','
                  << format_number(auc(scores, y)) << ',' << format_number(agreement(s, t)) << '\n';
    } else if (*report_cmd) {
        std::vector<fs::path> roots(run_dirs.begin(), run_dirs.end());
        const auto runs = collect_runs(roots);
        const fs::path out = g.out.empty() ? fs::path("report") : fs::path(g.out);
        write_table2(out / "table2.csv", runs);
        write_fig2(out / "fig2.csv", runs);
        std::cout << runs.size() << " runs; wrote " << (out / "table2.csv").string() << " and "
                  << (out / "fig2.csv").string() << '\n';
    } else if (*correlate_cmd) {
        std::vector<fs::path> roots(run_dirs.begin(), run_dirs.end());
        const auto rows = correlate(collect_runs(roots));
        if (!g.out.empty()) write_correlations(g.out, rows);
        std::cout << "dataset,teacher,method,seed,points,correlation\n";
        for (const auto& r : rows) {
            std::cout << r.dataset << ',' << r.teacher << ',' << r.method << ',' << r.seed << ',' << r.points << ','
                      << format_number(r.correlation) << '\n';
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const tabkd::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const tabkd::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const tabkd::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
}
