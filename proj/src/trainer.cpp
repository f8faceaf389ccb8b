#include "structformer/trainer.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <thread>

#include <json.hpp>

#include "structformer/adamw.hpp"

namespace structformer {

using json = nlohmann::ordered_json;

namespace {

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::string fmt_f3(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

struct CompiledSession {
    std::vector<CompiledEvent> events;
    int label = 0;
    real target = 0;  // log1p(count) for regression
    int count = 0;
};

std::vector<CompiledSession> compile_set(const std::vector<Session>& sessions,
                                         const FeatureSchema& schema, const NumericScaler& scaler,
                                         const LabelSpec& spec) {
    std::vector<CompiledSession> out;
    out.reserve(sessions.size());
    for (const auto& s : sessions) {
        CompiledSession c;
        c.events = compile_session(s, schema, scaler);
        c.count = s.user_session_count;
        if (spec.objective == Objective::regression) {
            c.target = regression_target(s.user_session_count);
        } else {
            c.label = assign_label(s.user_session_count, spec);
        }
        out.push_back(std::move(c));
    }
    return out;
}

double stable_lse_minus(const std::vector<real>& logits, int label) {
    real mx = logits[0];
    for (real v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (real v : logits) sum += std::exp(static_cast<double>(v - mx));
    return std::log(sum) + static_cast<double>(mx) - static_cast<double>(logits[static_cast<std::size_t>(label)]);
}

struct EvalOutcome {
    double loss = 0;
    MetricReport report;
};

EvalOutcome evaluate_compiled(const SequenceModel& model, const std::vector<CompiledSession>& set,
                              const LabelSpec& spec) {
    NoGradGuard no_grad;
    EvalOutcome out;
    const int n_classes = objective_classes(spec.objective);
    std::vector<int> predictions;
    std::vector<int> labels;
    double loss_total = 0.0;
    for (const auto& s : set) {
        const Tensor logits = model.forward(s.events);
        if (spec.objective == Objective::regression) {
            const double pred = static_cast<double>(logits.values()[0]);
            const double target = static_cast<double>(s.target);
            loss_total += (pred - target) * (pred - target);
            continue;
        }
        const auto& lv = logits.values();
        int argmax = 0;
        for (int c = 1; c < n_classes; ++c) {
            if (lv[static_cast<std::size_t>(c)] > lv[static_cast<std::size_t>(argmax)]) argmax = c;
        }
        predictions.push_back(argmax);
        labels.push_back(s.label);
        loss_total += stable_lse_minus(lv, s.label);
    }
    out.loss = loss_total / static_cast<double>(set.size());
    if (spec.objective != Objective::regression) {
        out.report = classification_metrics(predictions, labels, n_classes);
    }
    out.report.val_loss = out.loss;
    return out;
}

MetricReport chance_report(Objective objective) {
    MetricReport r;
    const int c = objective_classes(objective);
    const double chance = 1.0 / static_cast<double>(c);
    r.accuracy = chance;
    r.f1 = chance;
    r.precision = chance;
    r.recall = chance;
    r.train_loss = std::log(static_cast<double>(c));
    r.val_loss = std::log(static_cast<double>(c));
    return r;
}

}  // namespace

PlateauScheduler::PlateauScheduler(double lr_init, double factor, double lr_min, int patience,
                                   double min_delta)
    : lr_(lr_init),
      factor_(factor),
      lr_min_(lr_min),
      min_delta_(min_delta),
      patience_(patience),
      best_(std::numeric_limits<double>::infinity()) {
    check_config(lr_min <= lr_init, "scheduler: lr_min must not exceed lr_init");
    check_config(factor > 0.0 && factor < 1.0, "scheduler: factor must be in (0, 1)");
    check_config(patience >= 1, "scheduler: patience must be >= 1");
}

void PlateauScheduler::step(double monitored_loss) {
    if (monitored_loss < best_ - min_delta_) {
        best_ = monitored_loss;
        bad_evals_ = 0;
        return;
    }
    if (++bad_evals_ >= patience_) {
        bad_evals_ = 0;
        const double next = lr_ * factor_;
        // Snap products within rounding of the floor to the exact floor.
        lr_ = next <= lr_min_ * (1.0 + 1e-9) ? lr_min_ : next;
    }
}

void TrainConfig::validate() const {
    model.backbone.validate();
    check_config(batch_size >= 1, "train: batch_size must be >= 1");
    check_config(lr_min <= lr_init, "train: lr_min must not exceed lr_init");
    check_config(plateau_patience >= 1, "train: plateau_patience must be >= 1");
    check_config(max_steps >= 1, "train: max_steps must be >= 1");
    check_config(eval_interval >= 1, "train: eval_interval must be >= 1");
    check_config(!seeds.empty(), "train: need at least one seed");
    check_config(split_fraction > 0.0 && split_fraction < 1.0,
                 "train: split_fraction must be in (0, 1)");
    check_config(model.max_len >= 2, "train: max_len must be >= 2");
}

std::string TrainConfig::to_json() const {
    json j;
    j["model"] = json::parse(model.backbone.to_json());
    j["objective"] = objective_name(model.objective);
    j["max_len"] = model.max_len;
    j["name"] = name;
    j["batch_size"] = batch_size;
    j["lr_init"] = lr_init;
    j["lr_factor"] = lr_factor;
    j["lr_min"] = lr_min;
    j["plateau_patience"] = plateau_patience;
    j["plateau_min_delta"] = plateau_min_delta;
    j["max_steps"] = max_steps;
    j["eval_interval"] = eval_interval;
    j["seeds"] = seeds;
    j["split_fraction"] = split_fraction;
    j["split_seed"] = split_seed;
    return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("train config: invalid JSON: ") + e.what());
    }
    TrainConfig cfg;
    try {
        check_config(j.contains("model"), "train config: missing 'model'");
        if (j.at("model").is_string()) {
            cfg.model.backbone = BackboneConfig::preset(j.at("model").get<std::string>());
        } else {
            cfg.model.backbone = BackboneConfig::from_json(j.at("model").dump());
        }
        if (j.contains("objective")) {
            cfg.model.objective = objective_from_name(j.at("objective").get<std::string>());
        }
        if (j.contains("max_len")) cfg.model.max_len = j.at("max_len").get<int>();
        cfg.name = j.value("name", cfg.model.backbone.name);
        if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<int>();
        if (j.contains("lr_init")) cfg.lr_init = j.at("lr_init").get<double>();
        if (j.contains("lr_factor")) cfg.lr_factor = j.at("lr_factor").get<double>();
        if (j.contains("lr_min")) cfg.lr_min = j.at("lr_min").get<double>();
        if (j.contains("plateau_patience")) cfg.plateau_patience = j.at("plateau_patience").get<int>();
        if (j.contains("plateau_min_delta"))
            cfg.plateau_min_delta = j.at("plateau_min_delta").get<double>();
        if (j.contains("max_steps")) cfg.max_steps = j.at("max_steps").get<int>();
        if (j.contains("eval_interval")) cfg.eval_interval = j.at("eval_interval").get<int>();
        if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::int64_t>>();
        if (j.contains("split_fraction")) cfg.split_fraction = j.at("split_fraction").get<double>();
        if (j.contains("split_seed")) cfg.split_seed = j.at("split_seed").get<std::int64_t>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("train config: mistyped field: ") + e.what());
    }
    if (cfg.name.empty()) cfg.name = cfg.model.backbone.name;
    cfg.validate();
    return cfg;
}

std::string RunMetrics::to_csv() const {
    std::string out = kMetricsCsvHeader;
    out += "\n";
    for (const auto& r : records) {
        out += std::to_string(r.step) + "," + fmt_g(r.train_loss) + "," + fmt_g(r.val_loss) + "," +
               fmt_g(r.accuracy) + "," + fmt_g(r.f1) + "," + fmt_g(r.precision) + "," +
               fmt_g(r.recall) + "," + fmt_g(r.lr) + "\n";
    }
    return out;
}

TrainResult train(const TrainConfig& cfg, std::int64_t seed, const DatasetSplit& split,
                  const FeatureSchema& schema, const LabelSpec& spec) {
    cfg.validate();
    check_config(!split.train.empty() && !split.validation.empty(),
                 "train: both splits must be non-empty");
    check_config(spec.fitted, "train: label spec must be fitted");

    const NumericScaler scaler = NumericScaler::fit(split.train, schema);
    const auto train_set = compile_set(split.train, schema, scaler, spec);
    const auto val_set = compile_set(split.validation, schema, scaler, spec);

    TrainResult result;
    result.spec = spec;
    result.model = SequenceModel::init(schema, cfg.model, static_cast<std::uint64_t>(seed));
    result.model.set_scaler(scaler);
    result.metrics.seed = seed;
    SequenceModel& model = result.model;

    AdamW optimizer(model.params());
    PlateauScheduler scheduler(cfg.lr_init, cfg.lr_factor, cfg.lr_min, cfg.plateau_patience,
                               cfg.plateau_min_delta);

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::uint64_t epoch = 0;
    Rng shuffle_rng(Rng::mix(static_cast<std::uint64_t>(seed), epoch));
    shuffle_rng.shuffle(order);
    std::size_t cursor = 0;
    auto next_index = [&] {
        if (cursor == order.size()) {
            ++epoch;
            Rng rng(Rng::mix(static_cast<std::uint64_t>(seed), epoch));
            rng.shuffle(order);
            cursor = 0;
        }
        return order[cursor++];
    };

    double best_val = std::numeric_limits<double>::infinity();
    std::vector<std::vector<real>> best_snapshot = model.snapshot_values();
    double running_loss = 0.0;
    int running_count = 0;

    Tape& tape = active_tape();
    tape.clear();
    optimizer.zero_grad();

    for (std::int64_t step = 1; step <= cfg.max_steps; ++step) {
        std::vector<Tensor> logit_rows;
        std::vector<int> labels;
        std::vector<real> targets;
        logit_rows.reserve(static_cast<std::size_t>(cfg.batch_size));
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto& s = train_set[next_index()];
            logit_rows.push_back(model.forward(s.events));
            if (spec.objective == Objective::regression) {
                targets.push_back(s.target);
            } else {
                labels.push_back(s.label);
            }
        }
        const Tensor batch = stack_rows(logit_rows);
        const Tensor loss = spec.objective == Objective::regression
                                ? mse(flatten(batch), targets)
                                : cross_entropy(batch, labels);
        const double loss_value = static_cast<double>(loss.item());

        if (!is_finite(loss_value)) {
            tape.backward(loss);
            double grad_sq = 0.0, param_sq = 0.0;
            for (const auto& p : model.params()) {
                for (real g : p.tensor.grad()) grad_sq += static_cast<double>(g) * g;
                for (real v : p.tensor.values()) param_sq += static_cast<double>(v) * v;
            }
            result.metrics.collapsed = true;
            result.metrics.collapse_diagnostic =
                "non-finite loss at step " + std::to_string(step) + ": loss=" + fmt_g(loss_value) +
                " lr=" + fmt_g(scheduler.lr()) + " grad_norm=" + fmt_g(std::sqrt(grad_sq)) +
                " param_norm=" + fmt_g(std::sqrt(param_sq));
            optimizer.zero_grad();
            tape.clear();
            break;
        }

        tape.backward(loss);
        optimizer.step(static_cast<real>(scheduler.lr()));
        optimizer.zero_grad();
        tape.clear();
        running_loss += loss_value;
        ++running_count;

        if (step % cfg.eval_interval == 0 || step == cfg.max_steps) {
            const EvalOutcome eval = evaluate_compiled(model, val_set, spec);
            EvalRecord record;
            record.step = step;
            record.train_loss = running_loss / std::max(1, running_count);
            record.val_loss = eval.loss;
            record.accuracy = eval.report.accuracy;
            record.f1 = eval.report.f1;
            record.precision = eval.report.precision;
            record.recall = eval.report.recall;
            record.lr = scheduler.lr();
            result.metrics.records.push_back(record);

            if (eval.loss < best_val) {
                best_val = eval.loss;
                best_snapshot = model.snapshot_values();
                result.metrics.best_step = step;
                result.metrics.summary = eval.report;
                result.metrics.summary.train_loss = record.train_loss;
                result.metrics.summary.val_loss = eval.loss;
                result.metrics.summary.seed = seed;
            }
            scheduler.step(eval.loss);
            running_loss = 0.0;
            running_count = 0;
        }
    }

    model.restore_values(best_snapshot);
    if (result.metrics.collapsed) {
        result.metrics.summary = chance_report(spec.objective);
        result.metrics.summary.seed = seed;
    }
    return result;
}

TrainResult train(const TrainConfig& cfg, std::int64_t seed, const DatasetSplit& split,
                  const FeatureSchema& schema) {
    return train(cfg, seed, split, schema, fit_label_spec(cfg.model.objective, split.train));
}

MetricReport evaluate_model(const SequenceModel& model, const std::vector<Session>& sessions,
                            const LabelSpec& spec) {
    check_config(!sessions.empty(), "evaluate: empty session list");
    const auto set = compile_set(sessions, model.schema(), model.scaler(), spec);
    const EvalOutcome out = evaluate_compiled(model, set, spec);
    MetricReport report = out.report;
    report.val_loss = out.loss;
    return report;
}

MetricReport evaluate_checkpoint(const std::string& checkpoint_dir, const FeatureSchema& schema,
                                 const std::vector<Session>& sessions) {
    LabelSpec spec;
    const SequenceModel model = SequenceModel::load(checkpoint_dir, &spec);
    if (model.schema().hash() != schema.hash()) {
        throw ConfigError(
            "schema hash mismatch: checkpoint was trained on a different schema than the "
            "supplied data");
    }
    return evaluate_model(model, sessions, spec);
}

std::string BenchmarkConfig::to_json() const {
    json j;
    j["objective"] = objective_name(objective);
    j["seeds"] = seeds;
    j["split_fraction"] = split_fraction;
    j["split_seed"] = split_seed;
    j["jobs"] = jobs;
    j["entries"] = json::array();
    for (const auto& e : entries) {
        if (e.is_gbdt) {
            j["entries"].push_back({{"name", e.name}, {"model", "gbdt"}});
        } else {
            json t = json::parse(e.train.to_json());
            t["name"] = e.name;
            j["entries"].push_back(std::move(t));
        }
    }
    return j.dump(2);
}

BenchmarkConfig BenchmarkConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("benchmark config: invalid JSON: ") + e.what());
    }
    BenchmarkConfig cfg;
    try {
        if (j.contains("objective")) cfg.objective = objective_from_name(j.at("objective").get<std::string>());
        check_config(cfg.objective != Objective::regression,
                     "benchmark: only classification objectives are benchmarked");
        if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::int64_t>>();
        if (j.contains("split_fraction")) cfg.split_fraction = j.at("split_fraction").get<double>();
        if (j.contains("split_seed")) cfg.split_seed = j.at("split_seed").get<std::int64_t>();
        if (j.contains("jobs")) cfg.jobs = j.at("jobs").get<int>();
        check_config(j.contains("entries") && j.at("entries").is_array() && !j.at("entries").empty(),
                     "benchmark config: missing non-empty 'entries'");
        const json defaults = j.value("defaults", json::object());
        for (const auto& item : j.at("entries")) {
            json merged = defaults;
            for (const auto& [key, value] : item.items()) {
                merged[key] = value;
            }
            merged["objective"] = objective_name(cfg.objective);
            BenchmarkEntry entry;
            if (merged.contains("model") && merged.at("model").is_string() &&
                merged.at("model").get<std::string>() == "gbdt") {
                entry.is_gbdt = true;
                entry.name = merged.value("name", std::string("gbdt"));
            } else {
                entry.train = TrainConfig::from_json(merged.dump());
                entry.train.seeds = cfg.seeds;
                entry.train.split_fraction = cfg.split_fraction;
                entry.train.split_seed = cfg.split_seed;
                entry.name = entry.train.name;
            }
            check_config(!entry.name.empty(), "benchmark config: entry without a name");
            cfg.entries.push_back(std::move(entry));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("benchmark config: mistyped field: ") + e.what());
    }
    check_config(!cfg.seeds.empty(), "benchmark: need at least one seed");
    check_config(cfg.jobs >= 1, "benchmark: jobs must be >= 1");
    return cfg;
}

namespace {

BenchmarkRun run_gbdt_entry(const BenchmarkEntry& entry, std::int64_t seed,
                            const DatasetSplit& split, const FeatureSchema& schema,
                            const LabelSpec& spec) {
    const auto& vocab = schema.event_type_vocabulary();
    const auto train_rows = count_matrix(split.train, vocab);
    const auto val_rows = count_matrix(split.validation, vocab);
    std::vector<int> train_labels, val_labels;
    train_labels.reserve(split.train.size());
    for (const auto& s : split.train) train_labels.push_back(assign_label(s.user_session_count, spec));
    for (const auto& s : split.validation) val_labels.push_back(assign_label(s.user_session_count, spec));

    const GbdtGridResult grid =
        fit_gbdt_grid(train_rows, train_labels, val_rows, val_labels, spec.objective);

    std::vector<int> predictions;
    predictions.reserve(val_rows.size());
    for (const auto& r : val_rows) predictions.push_back(predict_gbdt_class(grid.best, r));

    BenchmarkRun run;
    run.entry = entry.name;
    run.seed = seed;
    run.summary = classification_metrics(predictions, val_labels, objective_classes(spec.objective));
    run.summary.train_loss = gbdt_loss(grid.best, train_rows, train_labels);
    run.summary.val_loss = grid.best_val_loss;
    run.summary.seed = seed;
    return run;
}

}  // namespace

BenchmarkResult run_benchmark(const BenchmarkConfig& cfg, const std::vector<Session>& sessions,
                              const FeatureSchema& schema) {
    check_config(!cfg.entries.empty(), "benchmark: no entries");
    const DatasetSplit split = split_by_user(sessions, cfg.split_fraction, cfg.split_seed);
    const LabelSpec spec = fit_label_spec(cfg.objective, split.train);

    struct Task {
        std::size_t entry_index;
        std::int64_t seed;
    };
    std::vector<Task> tasks;
    for (std::size_t e = 0; e < cfg.entries.size(); ++e) {
        for (std::int64_t seed : cfg.seeds) {
            tasks.push_back({e, seed});
        }
    }
    std::vector<BenchmarkRun> runs(tasks.size());

    std::atomic<std::size_t> next_task{0};
    auto worker = [&] {
        while (true) {
            const std::size_t t = next_task.fetch_add(1);
            if (t >= tasks.size()) break;
            const auto& task = tasks[t];
            const auto& entry = cfg.entries[task.entry_index];
            if (entry.is_gbdt) {
                runs[t] = run_gbdt_entry(entry, task.seed, split, schema, spec);
            } else {
                TrainConfig tc = entry.train;
                tc.model.objective = cfg.objective;
                const TrainResult result = train(tc, task.seed, split, schema, spec);
                BenchmarkRun run;
                run.entry = entry.name;
                run.seed = task.seed;
                run.summary = result.metrics.summary;
                run.collapsed = result.metrics.collapsed;
                run.metrics = result.metrics;
                runs[t] = std::move(run);
            }
        }
    };

    const int n_workers = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(tasks.size())));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_workers));
        for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    BenchmarkResult result;
    result.runs = runs;
    for (std::size_t e = 0; e < cfg.entries.size(); ++e) {
        std::vector<const BenchmarkRun*> entry_runs;
        for (std::size_t t = 0; t < tasks.size(); ++t) {
            if (tasks[t].entry_index == e) entry_runs.push_back(&runs[t]);
        }
        BenchmarkRow row;
        row.name = cfg.entries[e].name;
        row.n_seeds = static_cast<int>(entry_runs.size());
        row.single_seed_std = entry_runs.size() < 2;
        auto aggregate = [&](auto field) {
            double mean = 0.0;
            for (const auto* r : entry_runs) mean += field(r->summary);
            mean /= static_cast<double>(entry_runs.size());
            double var = 0.0;
            for (const auto* r : entry_runs) {
                const double d = field(r->summary) - mean;
                var += d * d;
            }
            const double std_dev = entry_runs.size() >= 2
                                       ? std::sqrt(var / static_cast<double>(entry_runs.size() - 1))
                                       : 0.0;
            return std::make_pair(mean, std_dev);
        };
        std::tie(row.mean.accuracy, row.stddev.accuracy) =
            aggregate([](const MetricReport& m) { return m.accuracy; });
        std::tie(row.mean.f1, row.stddev.f1) = aggregate([](const MetricReport& m) { return m.f1; });
        std::tie(row.mean.precision, row.stddev.precision) =
            aggregate([](const MetricReport& m) { return m.precision; });
        std::tie(row.mean.recall, row.stddev.recall) =
            aggregate([](const MetricReport& m) { return m.recall; });
        std::tie(row.mean.train_loss, row.stddev.train_loss) =
            aggregate([](const MetricReport& m) { return m.train_loss; });
        std::tie(row.mean.val_loss, row.stddev.val_loss) =
            aggregate([](const MetricReport& m) { return m.val_loss; });
        for (const auto* r : entry_runs) row.any_collapsed = row.any_collapsed || r->collapsed;
        result.rows.push_back(std::move(row));
    }
    return result;
}

std::string benchmark_csv(const BenchmarkResult& result) {
    std::string out =
        "model,accuracy_mean,accuracy_std,f1_mean,f1_std,precision_mean,precision_std,"
        "recall_mean,recall_std,train_loss_mean,train_loss_std,val_loss_mean,val_loss_std,"
        "seeds,collapsed\n";
    for (const auto& r : result.rows) {
        out += r.name + "," + fmt_g(r.mean.accuracy) + "," + fmt_g(r.stddev.accuracy) + "," +
               fmt_g(r.mean.f1) + "," + fmt_g(r.stddev.f1) + "," + fmt_g(r.mean.precision) + "," +
               fmt_g(r.stddev.precision) + "," + fmt_g(r.mean.recall) + "," +
               fmt_g(r.stddev.recall) + "," + fmt_g(r.mean.train_loss) + "," +
               fmt_g(r.stddev.train_loss) + "," + fmt_g(r.mean.val_loss) + "," +
               fmt_g(r.stddev.val_loss) + "," + std::to_string(r.n_seeds) + "," +
               (r.any_collapsed ? "yes" : "no") + "\n";
    }
    return out;
}

std::string benchmark_table(const BenchmarkResult& result) {
    auto cell = [](double mean, double std_dev) {
        return fmt_f3(mean) + " +/- " + fmt_f3(std_dev);
    };
    std::string out;
    char line[256];
    std::snprintf(line, sizeof(line), "%-22s %-16s %-16s %-16s %-16s %-16s %-16s\n", "Model",
                  "Accuracy", "F1", "Precision", "Recall", "Train loss", "Val loss");
    out += line;
    out += std::string(120, '-') + "\n";
    for (const auto& r : result.rows) {
        std::snprintf(line, sizeof(line), "%-22s %-16s %-16s %-16s %-16s %-16s %-16s%s\n",
                      r.name.c_str(), cell(r.mean.accuracy, r.stddev.accuracy).c_str(),
                      cell(r.mean.f1, r.stddev.f1).c_str(),
                      cell(r.mean.precision, r.stddev.precision).c_str(),
                      cell(r.mean.recall, r.stddev.recall).c_str(),
                      cell(r.mean.train_loss, r.stddev.train_loss).c_str(),
                      cell(r.mean.val_loss, r.stddev.val_loss).c_str(),
                      r.any_collapsed ? "  [collapsed]" : "");
        out += line;
    }
    return out;
}

}  // namespace structformer
