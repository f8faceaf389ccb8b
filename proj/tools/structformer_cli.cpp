#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "structformer/datagen.hpp"
#include "structformer/ingest.hpp"
#include "structformer/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace structformer;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitUsage = 2;
constexpr int kExitCollapse = 3;

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    check_config(static_cast<bool>(in), "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    check(static_cast<bool>(out), "cannot write " + path.string());
    out << text;
}

std::string file_hash_hex(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    check(static_cast<bool>(in), "cannot hash " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(ss.str())));
    return buf;
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Every command records what it ran and what it produced.
void write_manifest(const fs::path& out_dir, const std::string& command, const json& config,
                    const std::vector<std::int64_t>& seeds,
                    const std::vector<fs::path>& artifacts, double wall_seconds) {
    json manifest;
    manifest["command"] = command;
    manifest["config"] = config;
    manifest["seeds"] = seeds;
    json hashes = json::object();
    for (const auto& artifact : artifacts) {
        hashes[fs::relative(artifact, out_dir).string()] = file_hash_hex(artifact);
    }
    manifest["artifact_hashes"] = hashes;
    manifest["wall_time_seconds"] = wall_seconds;
    write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

json metric_report_json(const MetricReport& m) {
    json j;
    j["accuracy"] = m.accuracy;
    j["f1"] = m.f1;
    j["precision"] = m.precision;
    j["recall"] = m.recall;
    j["train_loss"] = m.train_loss;
    j["val_loss"] = m.val_loss;
    return j;
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::int64_t> seed_override) {
    Stopwatch watch;
    GeneratorConfig cfg = GeneratorConfig::from_json(read_file(config_path));
    if (seed_override) cfg.seed = *seed_override;
    const CorpusStats stats = write_corpus(out_dir, cfg);
    const fs::path out(out_dir);
    write_manifest(out, "gen-data", json::parse(cfg.to_json()), {cfg.seed},
                   {out / "schema.json", out / "events.jsonl", out / "counts.json"},
                   watch.seconds());
    std::cout << "generated " << stats.n_users << " users, " << stats.n_events << " events -> "
              << out_dir << "\n";
    return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, std::optional<std::int64_t> seed_override) {
    Stopwatch watch;
    TrainConfig cfg = TrainConfig::from_json(read_file(config_path));
    if (seed_override) cfg.seeds = {*seed_override};

    const Corpus corpus = load_corpus(data_dir);
    const DatasetSplit split = split_by_user(corpus.sessions, cfg.split_fraction, cfg.split_seed);
    const LabelSpec spec = fit_label_spec(cfg.model.objective, split.train);

    const fs::path out(out_dir);
    fs::create_directories(out);
    const bool single = cfg.seeds.size() == 1;
    std::vector<fs::path> artifacts;
    json summary;
    summary["runs"] = json::array();
    bool any_collapsed = false;

    for (std::int64_t seed : cfg.seeds) {
        const TrainResult result = train(cfg, seed, split, corpus.schema, spec);
        const fs::path run_dir = single ? out : out / ("seed" + std::to_string(seed));
        fs::create_directories(run_dir);
        result.model.save((run_dir / "checkpoint").string(), spec);
        write_file(run_dir / "metrics.csv", result.metrics.to_csv());
        artifacts.push_back(run_dir / "metrics.csv");
        artifacts.push_back(run_dir / "checkpoint" / "model.bin");

        json run;
        run["seed"] = seed;
        run["collapsed"] = result.metrics.collapsed;
        if (result.metrics.collapsed) {
            run["diagnostic"] = result.metrics.collapse_diagnostic;
            std::cerr << "run seed " << seed << " collapsed: " << result.metrics.collapse_diagnostic
                      << "\n";
            any_collapsed = true;
        }
        run["best_step"] = result.metrics.best_step;
        run["metrics"] = metric_report_json(result.metrics.summary);
        summary["runs"].push_back(std::move(run));
        std::cout << "seed " << seed << ": val_loss=" << result.metrics.summary.val_loss
                  << " accuracy=" << result.metrics.summary.accuracy
                  << (result.metrics.collapsed ? " [collapsed]" : "") << "\n";
    }
    write_file(out / "summary.json", summary.dump(2) + "\n");
    artifacts.push_back(out / "summary.json");
    write_manifest(out, "train", json::parse(cfg.to_json()), cfg.seeds, artifacts, watch.seconds());
    if (single && any_collapsed) return kExitCollapse;
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint_dir, const std::string& data_dir,
             const std::string& out_dir, const std::string& split_mode, double split_fraction,
             std::int64_t split_seed) {
    Stopwatch watch;
    const Corpus corpus = load_corpus(data_dir);
    std::vector<Session> sessions;
    if (split_mode == "all") {
        sessions = corpus.sessions;
    } else {
        DatasetSplit split = split_by_user(corpus.sessions, split_fraction, split_seed);
        sessions = split_mode == "train" ? std::move(split.train) : std::move(split.validation);
    }
    const MetricReport report = evaluate_checkpoint(checkpoint_dir, corpus.schema, sessions);
    json j = metric_report_json(report);
    j["n_sessions"] = sessions.size();
    j["split"] = split_mode;
    std::cout << j.dump(2) << "\n";
    if (!out_dir.empty()) {
        const fs::path out(out_dir);
        write_file(out / "eval.json", j.dump(2) + "\n");
        write_manifest(out, "eval", json{{"checkpoint", checkpoint_dir}, {"data", data_dir}},
                       {}, {out / "eval.json"}, watch.seconds());
    }
    return kExitOk;
}

int cmd_benchmark(const std::string& config_path, const std::string& data_dir,
                  const std::string& out_dir, std::optional<int> jobs_override) {
    Stopwatch watch;
    BenchmarkConfig cfg = BenchmarkConfig::from_json(read_file(config_path));
    if (jobs_override) cfg.jobs = *jobs_override;

    const Corpus corpus = load_corpus(data_dir);
    const BenchmarkResult result = run_benchmark(cfg, corpus.sessions, corpus.schema);

    const fs::path out(out_dir);
    fs::create_directories(out);
    std::vector<fs::path> artifacts;
    write_file(out / "benchmark.csv", benchmark_csv(result));
    artifacts.push_back(out / "benchmark.csv");
    const std::string table = benchmark_table(result);
    write_file(out / "table.txt", table);
    artifacts.push_back(out / "table.txt");
    for (const auto& run : result.runs) {
        if (run.metrics.records.empty()) continue;  // gbdt rows have no step log
        const fs::path run_dir = out / "runs" / (run.entry + "-seed" + std::to_string(run.seed));
        write_file(run_dir / "metrics.csv", run.metrics.to_csv());
        artifacts.push_back(run_dir / "metrics.csv");
    }
    write_manifest(out, "benchmark", json::parse(cfg.to_json()), cfg.seeds, artifacts,
                   watch.seconds());
    std::cout << table;
    return kExitOk;
}

int cmd_export_curves(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
    Stopwatch watch;
    check_config(!run_dirs.empty(), "export-curves: no run directories given");
    std::string out_csv = "run,step,metric,value\n";
    const std::vector<std::string> metric_names = {"train_loss", "val_loss", "accuracy",
                                                   "f1",         "precision", "recall",
                                                   "lr"};
    for (const auto& dir : run_dirs) {
        const fs::path metrics_path = fs::path(dir) / "metrics.csv";
        std::ifstream in(metrics_path);
        check_config(static_cast<bool>(in), "export-curves: cannot open " + metrics_path.string());
        std::string line;
        std::getline(in, line);
        check_config(line == kMetricsCsvHeader,
                     "export-curves: unexpected header in " + metrics_path.string());
        const std::string run_name = fs::path(dir).filename().string();
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<std::string> cells;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) cells.push_back(cell);
            check_config(cells.size() == metric_names.size() + 1,
                         "export-curves: malformed row in " + metrics_path.string());
            for (std::size_t m = 0; m < metric_names.size(); ++m) {
                out_csv += run_name + "," + cells[0] + "," + metric_names[m] + "," + cells[m + 1] + "\n";
            }
        }
    }
    const fs::path out(out_dir);
    write_file(out / "curves.csv", out_csv);
    json cfg;
    cfg["runs"] = run_dirs;
    write_manifest(out, "export-curves", cfg, {}, {out / "curves.csv"}, watch.seconds());
    std::cout << "wrote " << (out / "curves.csv").string() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Behavior sequence modeling pipeline: structured tokenization, "
                 "transformer/MLP backbones, count-based GBDT baseline"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_dir, checkpoint_dir;
    std::string split_mode = "all";
    double split_fraction = 0.9;
    std::int64_t split_seed = 13;
    std::optional<std::int64_t> seed_override;
    std::optional<int> jobs_override;
    std::vector<std::string> run_dirs;

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic behavior corpus");
    gen->add_option("--config", config_path, "Generator config JSON")->required();
    gen->add_option("--out", out_dir, "Output directory")->required();
    gen->add_option("--seed", seed_override, "Override the config seed");

    auto* train_cmd = app.add_subcommand("train", "Train a model on a corpus");
    train_cmd->add_option("--config", config_path, "Train config JSON")->required();
    train_cmd->add_option("--data", data_dir, "Corpus directory")->required();
    train_cmd->add_option("--out", out_dir, "Output directory")->required();
    train_cmd->add_option("--seed", seed_override, "Run a single seed");

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval_cmd->add_option("--checkpoint", checkpoint_dir, "Checkpoint directory")->required();
    eval_cmd->add_option("--data", data_dir, "Corpus directory")->required();
    eval_cmd->add_option("--out", out_dir, "Optional output directory");
    eval_cmd->add_option("--split", split_mode, "all | train | validation")
        ->check(CLI::IsMember({"all", "train", "validation"}));
    eval_cmd->add_option("--split-fraction", split_fraction, "Split fraction for train/validation");
    eval_cmd->add_option("--split-seed", split_seed, "Split seed for train/validation");

    auto* bench = app.add_subcommand("benchmark", "Run a multi-config, multi-seed comparison");
    bench->add_option("--config", config_path, "Benchmark config JSON")->required();
    bench->add_option("--data", data_dir, "Corpus directory")->required();
    bench->add_option("--out", out_dir, "Output directory")->required();
    bench->add_option("--jobs", jobs_override, "Parallel runs");

    auto* curves = app.add_subcommand("export-curves", "Merge run metrics into a tidy curves CSV");
    curves->add_option("--runs", run_dirs, "Run directories (repeat or comma-separate)")
        ->required()
        ->delimiter(',');
    curves->add_option("--out", out_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(config_path, out_dir, seed_override);
        if (train_cmd->parsed()) return cmd_train(config_path, data_dir, out_dir, seed_override);
        if (eval_cmd->parsed())
            return cmd_eval(checkpoint_dir, data_dir, out_dir, split_mode, split_fraction, split_seed);
        if (bench->parsed()) return cmd_benchmark(config_path, data_dir, out_dir, jobs_override);
        if (curves->parsed()) return cmd_export_curves(run_dirs, out_dir);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfigError;
    }
    return kExitUsage;
}
