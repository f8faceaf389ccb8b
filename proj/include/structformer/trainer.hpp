#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "structformer/gbdt.hpp"
#include "structformer/ingest.hpp"
#include "structformer/model.hpp"

namespace structformer {

// Reduce-on-plateau: when the monitored loss fails to improve by more than
// min_delta for `patience` consecutive evaluations, lr <- max(lr * factor,
// lr_min). A product within rounding of lr_min snaps to it exactly.
class PlateauScheduler {
public:
    PlateauScheduler(double lr_init, double factor, double lr_min, int patience,
                     double min_delta = 1e-5);

    double lr() const { return lr_; }
    void step(double monitored_loss);

private:
    double lr_;
    double factor_;
    double lr_min_;
    double min_delta_;
    int patience_;
    int bad_evals_ = 0;
    double best_;
};

struct TrainConfig {
    ModelConfig model;
    std::string name;  // table row name; defaults to the backbone name
    int batch_size = 128;
    double lr_init = 1e-4;
    double lr_factor = 0.1;
    double lr_min = 1e-6;
    int plateau_patience = 3;
    double plateau_min_delta = 1e-5;
    int max_steps = 2000;
    int eval_interval = 50;
    std::vector<std::int64_t> seeds = {1, 2, 3};
    double split_fraction = 0.9;
    std::int64_t split_seed = 13;

    void validate() const;
    std::string to_json() const;
    static TrainConfig from_json(const std::string& text);
};

struct EvalRecord {
    std::int64_t step = 0;
    double train_loss = 0;
    double val_loss = 0;
    double accuracy = 0;
    double f1 = 0;
    double precision = 0;
    double recall = 0;
    double lr = 0;
};

inline constexpr const char* kMetricsCsvHeader =
    "step,train_loss,val_loss,accuracy,f1,precision,recall,lr";

struct RunMetrics {
    std::vector<EvalRecord> records;
    MetricReport summary;  // at the best-val-loss evaluation (retained checkpoint)
    std::int64_t best_step = 0;
    std::int64_t seed = 0;
    bool collapsed = false;
    std::string collapse_diagnostic;

    std::string to_csv() const;
};

struct TrainResult {
    SequenceModel model;  // restored to the best-val-loss parameters
    RunMetrics metrics;
    LabelSpec spec;
};

// One seeded run of the full training protocol: seeded epoch shuffling,
// AdamW steps, reduce-on-plateau on the validation loss, periodic full-split
// evaluation, best-checkpoint retention. A non-finite loss aborts the run
// and flags it as collapsed instead of propagating NaNs.
TrainResult train(const TrainConfig& cfg, std::int64_t seed, const DatasetSplit& split,
                  const FeatureSchema& schema, const LabelSpec& spec);
TrainResult train(const TrainConfig& cfg, std::int64_t seed, const DatasetSplit& split,
                  const FeatureSchema& schema);

// Deterministic full-split evaluation; never mutates parameters.
MetricReport evaluate_model(const SequenceModel& model, const std::vector<Session>& sessions,
                            const LabelSpec& spec);

// Loads a checkpoint and evaluates it on corpus sessions; refuses when the
// checkpoint schema hash differs from the corpus schema hash.
MetricReport evaluate_checkpoint(const std::string& checkpoint_dir, const FeatureSchema& schema,
                                 const std::vector<Session>& sessions);

// ----- benchmark: the multi-config, multi-seed comparison protocol -----

struct BenchmarkEntry {
    std::string name;
    bool is_gbdt = false;
    TrainConfig train;  // ignored for gbdt entries
};

struct BenchmarkConfig {
    Objective objective = Objective::binary;
    std::vector<std::int64_t> seeds = {1, 2, 3};
    double split_fraction = 0.9;
    std::int64_t split_seed = 13;
    int jobs = 1;
    std::vector<BenchmarkEntry> entries;

    std::string to_json() const;
    static BenchmarkConfig from_json(const std::string& text);
};

struct BenchmarkRun {
    std::string entry;
    std::int64_t seed = 0;
    MetricReport summary;
    bool collapsed = false;
    RunMetrics metrics;  // empty for gbdt entries
};

struct BenchmarkRow {
    std::string name;
    MetricReport mean;
    MetricReport stddev;
    int n_seeds = 0;
    bool any_collapsed = false;
    bool single_seed_std = false;  // std reported as 0 from < 2 seeds
};

struct BenchmarkResult {
    std::vector<BenchmarkRow> rows;
    std::vector<BenchmarkRun> runs;
};

// Runs every entry for every seed (in parallel up to cfg.jobs) and
// aggregates mean +/- std per entry. Collapsed runs are recorded at
// chance level and flagged rather than failing the benchmark.
BenchmarkResult run_benchmark(const BenchmarkConfig& cfg, const std::vector<Session>& sessions,
                              const FeatureSchema& schema);

// CSV with the benchmark table layout: model name, then mean/std pairs for
// accuracy, F1, precision, recall, train loss, val loss.
std::string benchmark_csv(const BenchmarkResult& result);
// Fixed-width text rendering of the same table.
std::string benchmark_table(const BenchmarkResult& result);

}  // namespace structformer
