#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "structformer/adamw.hpp"
#include "structformer/trainer.hpp"
#include "support/fixtures.hpp"

using namespace structformer;
namespace fs = std::filesystem;

namespace {

struct TrainFixture {
    FeatureSchema schema;
    DatasetSplit split;

    explicit TrainFixture(int n_users = 300, std::uint64_t seed = 21) {
        auto sessions = testsupport::small_corpus(n_users, seed, 1.0, 1.0, &schema);
        split = split_by_user(sessions, 0.9, 13);
    }
};

TrainConfig quick_config(const char* preset, int steps, double lr = 1e-3) {
    TrainConfig cfg;
    cfg.model.backbone = BackboneConfig::preset(preset);
    cfg.model.objective = Objective::binary;
    cfg.model.max_len = 24;
    cfg.batch_size = 32;
    cfg.lr_init = lr;
    cfg.max_steps = steps;
    cfg.eval_interval = 10;
    cfg.seeds = {1};
    return cfg;
}

std::uint64_t params_checksum(const SequenceModel& model) {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& p : model.params()) {
        const auto& v = p.tensor.values();
        h = fnv1a64(std::string_view(reinterpret_cast<const char*>(v.data()),
                                     v.size() * sizeof(real)), h);
    }
    return h;
}

}  // namespace

TEST_CASE("plateau scheduler: improvement keeps the learning rate") {
    PlateauScheduler sched(1e-4, 0.1, 1e-6, 2);
    sched.step(1.0);
    sched.step(0.9);
    sched.step(0.8);
    CHECK(sched.lr() == 1e-4);
}

TEST_CASE("plateau scheduler: reduces after patience non-improving evals") {
    PlateauScheduler sched(1e-4, 0.1, 1e-6, 2);
    sched.step(1.0);  // becomes best
    sched.step(1.0);  // bad 1
    CHECK(sched.lr() == 1e-4);
    sched.step(1.0);  // bad 2 -> reduce
    CHECK(sched.lr() == 1e-5);
}

TEST_CASE("plateau scheduler: repeated plateaus step exactly 1e-4, 1e-5, 1e-6, clamp") {
    PlateauScheduler sched(1e-4, 0.1, 1e-6, 1);
    std::vector<double> trace = {sched.lr()};
    for (int i = 0; i < 5; ++i) {
        sched.step(1.0);
        trace.push_back(sched.lr());
    }
    // First step only sets the best; each following one plateaus.
    CHECK(trace[0] == 1e-4);
    CHECK(trace[1] == 1e-4);
    CHECK(trace[2] == 1e-5);
    CHECK(trace[3] == 1e-6);
    CHECK(trace[4] == 1e-6);
    CHECK(trace[5] == 1e-6);
}

TEST_CASE("plateau scheduler: min-delta improvements below threshold count as plateau") {
    PlateauScheduler sched(1e-4, 0.1, 1e-6, 2, 1e-5);
    sched.step(1.0);
    sched.step(1.0 - 5e-6);  // under min_delta: bad 1
    sched.step(1.0 - 8e-6);  // under min_delta: bad 2 -> reduce
    CHECK(sched.lr() == 1e-5);
}

TEST_CASE("adamw at lr zero leaves parameters untouched across steps") {
    Rng rng(3);
    Tensor theta = Tensor::randn({4}, rng, 1, true);
    const auto before = theta.values();
    ParamMap params = {{"theta", theta}};
    AdamW opt(params);
    for (int step = 0; step < 2; ++step) {
        opt.zero_grad();
        theta.grad()[0] = real(0.5);
        opt.step(real(0));
    }
    CHECK(theta.values() == before);
}

TEST_CASE("training is deterministic: identical runs give identical CSV logs") {
    TrainFixture fx(120);
    const TrainConfig cfg = quick_config("structformer-tiny", 30);
    const TrainResult a = train(cfg, 5, fx.split, fx.schema);
    const TrainResult b = train(cfg, 5, fx.split, fx.schema);
    CHECK(a.metrics.to_csv() == b.metrics.to_csv());
    CHECK(params_checksum(a.model) == params_checksum(b.model));

    const TrainResult c = train(cfg, 6, fx.split, fx.schema);
    CHECK(c.metrics.to_csv() != a.metrics.to_csv());
}

TEST_CASE("learning-rate trace stays within [lr_min, lr_init] and never rises") {
    TrainFixture fx(120);
    TrainConfig cfg = quick_config("structformer-tiny", 60);
    cfg.lr_init = 1e-4;
    cfg.plateau_patience = 1;
    const TrainResult result = train(cfg, 2, fx.split, fx.schema);
    REQUIRE(!result.metrics.records.empty());
    double prev = cfg.lr_init;
    for (const auto& r : result.metrics.records) {
        CHECK(r.lr <= cfg.lr_init);
        CHECK(r.lr >= cfg.lr_min);
        CHECK(r.lr <= prev + 1e-18);
        prev = r.lr;
    }
}

TEST_CASE("metrics CSV carries the documented header and row count") {
    TrainFixture fx(100);
    const TrainConfig cfg = quick_config("mlp-small", 20);
    const TrainResult result = train(cfg, 1, fx.split, fx.schema);
    const std::string csv = result.metrics.to_csv();
    CHECK(csv.rfind("step,train_loss,val_loss,accuracy,f1,precision,recall,lr\n", 0) == 0);
    // 20 steps at eval interval 10 -> rows at steps 10 and 20.
    CHECK(result.metrics.records.size() == 2);
    CHECK(result.metrics.records.front().step == 10);
    CHECK(result.metrics.records.back().step == 20);
}

TEST_CASE("evaluation mutates nothing and untrained binary models sit at chance loss") {
    // No planted signal: an untrained model must sit at chance. On a signal
    // corpus random feature projections already correlate with the label.
    FeatureSchema schema;
    auto sessions = testsupport::small_corpus(800, 21, 0.0, 0.0, &schema);
    const DatasetSplit split = split_by_user(sessions, 0.9, 13);
    ModelConfig mcfg;
    mcfg.backbone = BackboneConfig::preset("structformer-tiny");
    mcfg.objective = Objective::binary;
    mcfg.max_len = 24;
    SequenceModel model = SequenceModel::init(schema, mcfg, 77);
    model.set_scaler(NumericScaler::fit(split.train, schema));
    const LabelSpec spec = fit_label_spec(Objective::binary, split.train);

    const auto checksum_before = params_checksum(model);
    const MetricReport report = evaluate_model(model, split.validation, spec);
    CHECK(params_checksum(model) == checksum_before);
    CHECK(report.val_loss == doctest::Approx(std::log(2.0)).epsilon(0.08));
    CHECK(report.accuracy > 0.3);
    CHECK(report.accuracy < 0.7);

    const MetricReport again = evaluate_model(model, split.validation, spec);
    CHECK(again.val_loss == report.val_loss);
    CHECK(again.accuracy == report.accuracy);
}

TEST_CASE("checkpoint round trip yields bit-identical evaluation") {
    TrainFixture fx(150);
    const TrainConfig cfg = quick_config("structformer-tiny", 20);
    const TrainResult result = train(cfg, 3, fx.split, fx.schema);

    const MetricReport in_memory = evaluate_model(result.model, fx.split.validation, result.spec);

    const auto dir = fs::temp_directory_path() / "sf_ckpt_test";
    fs::remove_all(dir);
    result.model.save(dir.string(), result.spec);
    const MetricReport reloaded = evaluate_checkpoint(dir.string(), fx.schema, fx.split.validation);
    CHECK(reloaded.val_loss == in_memory.val_loss);
    CHECK(reloaded.accuracy == in_memory.accuracy);
    CHECK(reloaded.f1 == in_memory.f1);

    // A different schema must be refused outright.
    const FeatureSchema other = testsupport::tiny_schema();
    CHECK_THROWS_WITH_AS(evaluate_checkpoint(dir.string(), other, fx.split.validation),
                         doctest::Contains("schema hash mismatch"), ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("overfit sanity: tiny transformer memorizes a small fixed set") {
    FeatureSchema schema;
    auto sessions = testsupport::small_corpus(40, 99, 1.0, 1.0, &schema);
    DatasetSplit split = split_by_user(sessions, 0.8, 3);

    TrainConfig cfg = quick_config("structformer-tiny", 150, 3e-3);
    cfg.batch_size = 32;
    cfg.eval_interval = 50;
    const TrainResult result = train(cfg, 11, split, schema);
    REQUIRE(!result.metrics.records.empty());
    const double first = result.metrics.records.front().train_loss;
    const double last = result.metrics.records.back().train_loss;
    INFO("train loss ", first, " -> ", last);
    CHECK(last < 0.45);
    CHECK(last < first);
}

TEST_CASE("non-finite loss aborts the run and reports chance-level metrics") {
    TrainFixture fx(120);
    TrainConfig cfg = quick_config("structformer-tiny", 40, 1e8);  // forced blow-up
    const TrainResult result = train(cfg, 1, fx.split, fx.schema);
    CHECK(result.metrics.collapsed);
    CHECK(result.metrics.collapse_diagnostic.find("non-finite loss") != std::string::npos);
    CHECK(result.metrics.collapse_diagnostic.find("lr=") != std::string::npos);
    CHECK(result.metrics.collapse_diagnostic.find("grad_norm=") != std::string::npos);
    CHECK(result.metrics.summary.accuracy == doctest::Approx(0.5));
    CHECK(result.metrics.summary.val_loss == doctest::Approx(std::log(2.0)));
}

TEST_CASE("regression objective trains and evaluates finite log-space loss") {
    TrainFixture fx(150);
    TrainConfig cfg = quick_config("mlp-small", 30);
    cfg.model.objective = Objective::regression;
    const TrainResult result = train(cfg, 4, fx.split, fx.schema);
    REQUIRE(!result.metrics.records.empty());
    for (const auto& r : result.metrics.records) {
        CHECK(is_finite(r.val_loss));
        CHECK(r.val_loss >= 0);
    }
    CHECK(result.metrics.records.back().val_loss < result.metrics.records.front().val_loss * 2);
}

TEST_CASE("benchmark aggregates per-entry rows over seeds") {
    FeatureSchema schema;
    auto sessions = testsupport::small_corpus(200, 55, 1.0, 1.0, &schema);

    BenchmarkConfig cfg;
    cfg.objective = Objective::binary;
    cfg.seeds = {1, 2};
    cfg.split_fraction = 0.9;
    cfg.split_seed = 13;
    cfg.jobs = 1;

    BenchmarkEntry nn;
    nn.name = "tiny";
    nn.train = quick_config("structformer-tiny", 20);
    cfg.entries.push_back(nn);

    BenchmarkEntry gbdt;
    gbdt.name = "gbdt";
    gbdt.is_gbdt = true;
    cfg.entries.push_back(gbdt);

    const BenchmarkResult result = run_benchmark(cfg, sessions, schema);
    REQUIRE(result.rows.size() == 2);
    REQUIRE(result.runs.size() == 4);
    CHECK(result.rows[0].name == "tiny");
    CHECK(result.rows[1].name == "gbdt");
    CHECK(result.rows[0].n_seeds == 2);

    // Mean/std agree with a direct two-sample computation.
    const double a = result.runs[0].summary.accuracy;
    const double b = result.runs[1].summary.accuracy;
    CHECK(result.rows[0].mean.accuracy == doctest::Approx((a + b) / 2));
    const double mean = (a + b) / 2;
    const double expected_std = std::sqrt((a - mean) * (a - mean) + (b - mean) * (b - mean));
    CHECK(result.rows[0].stddev.accuracy == doctest::Approx(expected_std));

    // GBDT is deterministic, so the seed-to-seed std collapses to zero.
    CHECK(result.rows[1].stddev.accuracy == doctest::Approx(0.0));

    const std::string csv = benchmark_csv(result);
    CHECK(csv.rfind("model,accuracy_mean,accuracy_std,f1_mean,f1_std,precision_mean,"
                    "precision_std,recall_mean,recall_std,train_loss_mean,train_loss_std,"
                    "val_loss_mean,val_loss_std,seeds,collapsed\n", 0) == 0);
    const std::string table = benchmark_table(result);
    CHECK(table.find("tiny") != std::string::npos);
    CHECK(table.find("gbdt") != std::string::npos);
}

TEST_CASE("benchmark records aborted runs as collapsed chance-level rows") {
    FeatureSchema schema;
    auto sessions = testsupport::small_corpus(120, 33, 1.0, 1.0, &schema);
    BenchmarkConfig cfg;
    cfg.objective = Objective::binary;
    cfg.seeds = {1};
    BenchmarkEntry exploding;
    exploding.name = "exploding";
    exploding.train = quick_config("structformer-tiny", 20, 1e9);
    cfg.entries.push_back(exploding);
    const BenchmarkResult result = run_benchmark(cfg, sessions, schema);
    REQUIRE(result.rows.size() == 1);
    CHECK(result.rows[0].any_collapsed);
    CHECK(result.rows[0].mean.accuracy == doctest::Approx(0.5));
    CHECK(result.rows[0].mean.val_loss == doctest::Approx(std::log(2.0)));
    CHECK(benchmark_csv(result).find(",yes\n") != std::string::npos);
}

TEST_CASE("benchmark with jobs > 1 matches the serial result exactly") {
    FeatureSchema schema;
    auto sessions = testsupport::small_corpus(150, 91, 1.0, 1.0, &schema);

    BenchmarkConfig cfg;
    cfg.objective = Objective::binary;
    cfg.seeds = {1, 2};
    cfg.jobs = 1;
    BenchmarkEntry nn;
    nn.name = "tiny";
    nn.train = quick_config("structformer-tiny", 15);
    cfg.entries.push_back(nn);
    BenchmarkEntry mlp;
    mlp.name = "mlp";
    mlp.train = quick_config("mlp-small", 15);
    cfg.entries.push_back(mlp);

    const BenchmarkResult serial = run_benchmark(cfg, sessions, schema);
    cfg.jobs = 4;
    const BenchmarkResult parallel = run_benchmark(cfg, sessions, schema);
    CHECK(benchmark_csv(serial) == benchmark_csv(parallel));
}

TEST_CASE("train config JSON round trip and validation") {
    TrainConfig cfg = quick_config("structformer-small", 100);
    cfg.name = "custom";
    const TrainConfig back = TrainConfig::from_json(cfg.to_json());
    CHECK(back.name == "custom");
    CHECK(back.model.backbone.layers == 4);
    CHECK(back.max_steps == 100);
    CHECK(back.batch_size == cfg.batch_size);

    CHECK_THROWS_AS(TrainConfig::from_json("{}"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_json(R"({"model":"structformer-tiny","batch_size":0})"),
                    ConfigError);
}
