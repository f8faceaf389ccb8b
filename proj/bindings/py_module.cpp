#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "structformer/datagen.hpp"
#include "structformer/gbdt.hpp"
#include "structformer/ingest.hpp"
#include "structformer/trainer.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace structformer;

namespace {

std::string as_json_text(const py::object& obj) {
    if (py::isinstance<py::str>(obj)) {
        return obj.cast<std::string>();
    }
    return py::module_::import("json").attr("dumps")(obj).cast<std::string>();
}

py::object json_to_py(const std::string& text) {
    return py::module_::import("json").attr("loads")(text);
}

py::dict report_to_dict(const MetricReport& m) {
    py::dict d;
    d["accuracy"] = m.accuracy;
    d["f1"] = m.f1;
    d["precision"] = m.precision;
    d["recall"] = m.recall;
    d["train_loss"] = m.train_loss;
    d["val_loss"] = m.val_loss;
    return d;
}

py::dict py_generate_corpus(const py::object& config, const std::string& out_dir) {
    const GeneratorConfig cfg = GeneratorConfig::from_json(as_json_text(config));
    CorpusStats stats;
    {
        py::gil_scoped_release release;
        stats = write_corpus(out_dir, cfg);
    }
    py::dict d;
    d["n_users"] = stats.n_users;
    d["n_events"] = stats.n_events;
    d["out_dir"] = out_dir;
    return d;
}

py::dict py_train(const py::object& config, const std::string& data_dir,
                  const std::string& out_dir) {
    const TrainConfig cfg = TrainConfig::from_json(as_json_text(config));
    struct RunSummary {
        std::int64_t seed;
        MetricReport metrics;
        bool collapsed;
        std::string csv;
    };
    std::vector<RunSummary> summaries;
    {
        py::gil_scoped_release release;
        const Corpus corpus = load_corpus(data_dir);
        const DatasetSplit split =
            split_by_user(corpus.sessions, cfg.split_fraction, cfg.split_seed);
        const LabelSpec spec = fit_label_spec(cfg.model.objective, split.train);
        for (std::int64_t seed : cfg.seeds) {
            const TrainResult result = train(cfg, seed, split, corpus.schema, spec);
            if (!out_dir.empty()) {
                const fs::path run_dir = cfg.seeds.size() == 1
                                             ? fs::path(out_dir)
                                             : fs::path(out_dir) / ("seed" + std::to_string(seed));
                fs::create_directories(run_dir);
                result.model.save((run_dir / "checkpoint").string(), spec);
                std::ofstream metrics(run_dir / "metrics.csv", std::ios::trunc);
                metrics << result.metrics.to_csv();
            }
            summaries.push_back({seed, result.metrics.summary, result.metrics.collapsed,
                                 result.metrics.to_csv()});
        }
    }
    py::list runs;
    for (const auto& s : summaries) {
        py::dict run;
        run["seed"] = s.seed;
        run["collapsed"] = s.collapsed;
        run["metrics"] = report_to_dict(s.metrics);
        run["metrics_csv"] = s.csv;
        runs.append(run);
    }
    py::dict d;
    d["runs"] = runs;
    return d;
}

py::dict py_evaluate(const std::string& checkpoint_dir, const std::string& data_dir) {
    MetricReport report;
    std::size_t n_sessions = 0;
    {
        py::gil_scoped_release release;
        const Corpus corpus = load_corpus(data_dir);
        report = evaluate_checkpoint(checkpoint_dir, corpus.schema, corpus.sessions);
        n_sessions = corpus.sessions.size();
    }
    py::dict d = report_to_dict(report);
    d["n_sessions"] = n_sessions;
    return d;
}

py::dict py_benchmark(const py::object& config, const std::string& data_dir) {
    const BenchmarkConfig cfg = BenchmarkConfig::from_json(as_json_text(config));
    BenchmarkResult result;
    {
        py::gil_scoped_release release;
        const Corpus corpus = load_corpus(data_dir);
        result = run_benchmark(cfg, corpus.sessions, corpus.schema);
    }
    py::list rows;
    for (const auto& r : result.rows) {
        py::dict row;
        row["name"] = r.name;
        row["mean"] = report_to_dict(r.mean);
        row["std"] = report_to_dict(r.stddev);
        row["seeds"] = r.n_seeds;
        row["collapsed"] = r.any_collapsed;
        rows.append(row);
    }
    py::dict d;
    d["rows"] = rows;
    d["csv"] = benchmark_csv(result);
    d["table"] = benchmark_table(result);
    return d;
}

std::vector<int> py_assign_labels(const std::vector<int>& counts, const std::string& objective,
                                  const std::vector<double>& boundaries) {
    LabelSpec spec;
    spec.objective = objective_from_name(objective);
    spec.boundaries = boundaries;
    spec.fitted = true;
    std::vector<int> labels;
    labels.reserve(counts.size());
    for (int c : counts) labels.push_back(assign_label(c, spec));
    return labels;
}

CountRow py_count_featurize(const std::vector<std::string>& event_types,
                            const std::vector<std::string>& vocabulary) {
    Session s;
    s.user_id = "u";
    s.session_id = "s";
    std::int64_t ts = 0;
    for (const auto& t : event_types) {
        EventRecord e;
        e.timestamp = ++ts;
        e.event_type = t;
        s.events.push_back(std::move(e));
    }
    return count_featurize(s, vocabulary);
}

std::int64_t py_count_parameters(const py::object& schema, const std::string& preset,
                                 const std::string& objective, int max_len) {
    const FeatureSchema fs_schema = FeatureSchema::from_json(as_json_text(schema));
    ModelConfig cfg;
    cfg.backbone = BackboneConfig::preset(preset);
    cfg.objective = objective_from_name(objective);
    cfg.max_len = max_len;
    return count_parameters(fs_schema, cfg);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Behavior sequence modeling: structured tokenization, transformer/MLP "
              "backbones, count-based GBDT baseline";

    m.def("generate_corpus", &py_generate_corpus, py::arg("config"), py::arg("out_dir"),
          "Generate a synthetic behavior corpus (schema.json, events.jsonl, counts.json)");
    m.def("train", &py_train, py::arg("config"), py::arg("data_dir"), py::arg("out_dir") = "",
          "Train per the config seeds; returns per-run metrics, writes checkpoints when "
          "out_dir is given");
    m.def("evaluate", &py_evaluate, py::arg("checkpoint_dir"), py::arg("data_dir"),
          "Evaluate a checkpoint over every session in a corpus directory");
    m.def("benchmark", &py_benchmark, py::arg("config"), py::arg("data_dir"),
          "Run the multi-config, multi-seed comparison; returns rows plus CSV/table text");

    m.def("fit_quantiles", &fit_quantiles, py::arg("counts"), py::arg("probs"),
          "Linear-interpolation quantiles of an integer sample");
    m.def("assign_labels", &py_assign_labels, py::arg("counts"), py::arg("objective"),
          py::arg("boundaries"),
          "Class indices under the strict greater-than boundary rule");
    m.def(
        "classification_metrics",
        [](const std::vector<int>& predictions, const std::vector<int>& labels, int n_classes) {
            return report_to_dict(classification_metrics(predictions, labels, n_classes));
        },
        py::arg("predictions"), py::arg("labels"), py::arg("n_classes"),
        "Accuracy plus macro-averaged precision/recall/F1");
    m.def("count_featurize", &py_count_featurize, py::arg("event_types"), py::arg("vocabulary"),
          "Event-type histogram with a trailing OTHER column");
    m.def("count_parameters", &py_count_parameters, py::arg("schema"), py::arg("preset"),
          py::arg("objective") = "binary", py::arg("max_len") = 256,
          "Exact trainable-parameter count of a preset model on a schema");
    m.def("backbone_presets", &BackboneConfig::preset_names,
          "Names of the benchmark backbone configurations");
    m.def(
        "default_generator_config",
        [] { return json_to_py(GeneratorConfig{}.to_json()); },
        "Generator defaults as a dict");

#ifdef STRUCTFORMER_VERSION
    m.attr("__version__") = STRUCTFORMER_VERSION;
#else
    m.attr("__version__") = "dev";
#endif
}
