#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "structformer/objectives.hpp"
#include "structformer/rng.hpp"

using namespace structformer;

TEST_CASE("quantiles: linear interpolation over 1..8") {
    const std::vector<int> counts = {1, 2, 3, 4, 5, 6, 7, 8};
    CHECK(fit_quantiles(counts, {0.5})[0] == doctest::Approx(4.5));

    const auto quartiles = fit_quantiles(counts, {0.25, 0.5, 0.75});
    CHECK(quartiles[0] == doctest::Approx(2.75));
    CHECK(quartiles[1] == doctest::Approx(4.5));
    CHECK(quartiles[2] == doctest::Approx(6.25));
}

TEST_CASE("quantiles: order statistics rule on an independent random sample") {
    // Oracle: rank h = (N-1)p, interpolate sorted[floor(h)]..sorted[floor(h)+1].
    Rng rng(3);
    std::vector<int> counts;
    for (int i = 0; i < 101; ++i) counts.push_back(static_cast<int>(rng.uniform_int(1, 50)));
    std::vector<int> sorted = counts;
    std::sort(sorted.begin(), sorted.end());
    for (double p : {0.1, 0.25, 0.5, 0.9}) {
        const double h = 100.0 * p;
        const auto lo = static_cast<std::size_t>(h);
        const double expected =
            sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
        CHECK(fit_quantiles(counts, {p})[0] == doctest::Approx(expected));
    }
}

TEST_CASE("quantiles: degenerate constant sample still labels totally") {
    const std::vector<int> counts = {3, 3, 3};
    const auto bounds = fit_quantiles(counts, {0.25, 0.5, 0.75});
    CHECK(bounds == std::vector<double>{3, 3, 3});

    LabelSpec spec;
    spec.objective = Objective::multiclass4;
    spec.boundaries = bounds;
    spec.fitted = true;
    CHECK(assign_label(3, spec) == 0);
    CHECK(assign_label(2, spec) == 0);
    CHECK(assign_label(4, spec) == 3);

    CHECK_THROWS(fit_quantiles({}, {0.5}));
    CHECK_THROWS(fit_quantiles({1, 2}, {0.0}));
}

TEST_CASE("labels: strict-inequality rule at boundaries") {
    LabelSpec binary;
    binary.objective = Objective::binary;
    binary.boundaries = {4.5};
    binary.fitted = true;
    CHECK(assign_label(7, binary) == 1);
    CHECK(assign_label(4, binary) == 0);

    LabelSpec quartile;
    quartile.objective = Objective::multiclass4;
    quartile.boundaries = {2.75, 4.5, 6.25};
    quartile.fitted = true;
    CHECK(assign_label(5, quartile) == 2);

    LabelSpec ties;
    ties.objective = Objective::multiclass4;
    ties.boundaries = {3, 5, 7};
    ties.fitted = true;
    CHECK(assign_label(3, ties) == 0);  // count equal to a boundary stays below it
    CHECK(assign_label(5, ties) == 1);
    CHECK(assign_label(8, ties) == 3);
}

TEST_CASE("labels are a rank statistic: invariant under increasing transforms") {
    Rng rng(11);
    std::vector<int> counts;
    for (int i = 0; i < 500; ++i) counts.push_back(static_cast<int>(rng.uniform_int(1, 200)));

    LabelSpec spec;
    spec.objective = Objective::multiclass4;
    spec.boundaries = fit_quantiles(counts, {0.25, 0.5, 0.75});
    spec.fitted = true;

    std::vector<int> transformed;
    for (int c : counts) transformed.push_back(3 * c + 1);  // strictly increasing
    LabelSpec spec_t;
    spec_t.objective = Objective::multiclass4;
    spec_t.boundaries = fit_quantiles(transformed, {0.25, 0.5, 0.75});
    spec_t.fitted = true;

    for (std::size_t i = 0; i < counts.size(); ++i) {
        CHECK(assign_label(counts[i], spec) == assign_label(transformed[i], spec_t));
    }
}

TEST_CASE("near-continuous samples give balanced binary and quartile classes") {
    Rng rng(29);
    std::vector<int> counts;
    for (int i = 0; i < 10000; ++i) counts.push_back(static_cast<int>(rng.uniform_int(1, 5000)));

    LabelSpec binary;
    binary.objective = Objective::binary;
    binary.boundaries = fit_quantiles(counts, {0.5});
    binary.fitted = true;
    double ones = 0;
    for (int c : counts) ones += assign_label(c, binary);
    CHECK(ones / 10000.0 == doctest::Approx(0.5).epsilon(0.02));

    LabelSpec quartile;
    quartile.objective = Objective::multiclass4;
    quartile.boundaries = fit_quantiles(counts, {0.25, 0.5, 0.75});
    quartile.fitted = true;
    std::vector<double> shares(4, 0);
    for (int c : counts) shares[static_cast<std::size_t>(assign_label(c, quartile))] += 1;
    for (double share : shares) {
        CHECK(share / 10000.0 == doctest::Approx(0.25).epsilon(0.06));
    }
}

TEST_CASE("metrics: perfect predictions score 1.0 everywhere") {
    const std::vector<int> labels = {0, 1, 2, 3, 1, 2};
    const MetricReport m = classification_metrics(labels, labels, 4);
    CHECK(m.accuracy == doctest::Approx(1.0));
    CHECK(m.f1 == doctest::Approx(1.0));
    CHECK(m.precision == doctest::Approx(1.0));
    CHECK(m.recall == doctest::Approx(1.0));
}

TEST_CASE("metrics: constant predictor on balanced binary labels") {
    const std::vector<int> predictions = {0, 0, 0, 0};
    const std::vector<int> labels = {0, 1, 0, 1};
    const MetricReport m = classification_metrics(predictions, labels, 2);
    CHECK(m.accuracy == doctest::Approx(0.5));
    // recall(class0) = 1, recall(class1) = 0 -> macro 0.5.
    CHECK(m.recall == doctest::Approx(0.5));
}

TEST_CASE("metrics: 2x2 confusion [[2,1],[1,2]] gives 2/3 across the board") {
    // rows = truth, cols = prediction
    const std::vector<int> labels = {0, 0, 0, 1, 1, 1};
    const std::vector<int> predictions = {0, 0, 1, 0, 1, 1};
    const MetricReport m = classification_metrics(predictions, labels, 2);
    CHECK(m.accuracy == doctest::Approx(4.0 / 6.0));
    CHECK(m.precision == doctest::Approx(2.0 / 3.0));
    CHECK(m.recall == doctest::Approx(2.0 / 3.0));
    CHECK(m.f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("metrics: classes absent from both sides leave the macro average") {
    // Only classes 0 and 1 appear; class 2 and 3 must not dilute the macro.
    const std::vector<int> predictions = {0, 1, 0, 1};
    const std::vector<int> labels = {0, 1, 1, 1};
    const MetricReport m4 = classification_metrics(predictions, labels, 4);
    const MetricReport m2 = classification_metrics(predictions, labels, 2);
    CHECK(m4.precision == doctest::Approx(m2.precision));
    CHECK(m4.recall == doctest::Approx(m2.recall));
    CHECK(m4.f1 == doctest::Approx(m2.f1));
}

TEST_CASE("metrics: permutation invariance over sample order") {
    Rng rng(7);
    std::vector<int> predictions, labels;
    for (int i = 0; i < 200; ++i) {
        predictions.push_back(static_cast<int>(rng.uniform_int(0, 3)));
        labels.push_back(static_cast<int>(rng.uniform_int(0, 3)));
    }
    const MetricReport base = classification_metrics(predictions, labels, 4);

    std::vector<std::size_t> perm(predictions.size());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<int> p2, l2;
    for (std::size_t i : perm) {
        p2.push_back(predictions[i]);
        l2.push_back(labels[i]);
    }
    const MetricReport shuffled = classification_metrics(p2, l2, 4);
    CHECK(base.accuracy == doctest::Approx(shuffled.accuracy));
    CHECK(base.f1 == doctest::Approx(shuffled.f1));

    CHECK_THROWS(classification_metrics({0, 1}, {0}, 2));
}

TEST_CASE("regression metrics: exact predictions, constant median, single element") {
    const std::vector<int> targets = {1, 4, 9, 2};
    std::vector<double> exact;
    for (int t : targets) exact.push_back(std::log1p(static_cast<double>(t)));
    const RegressionReport perfect = regression_metrics(exact, targets);
    CHECK(perfect.mse_log == doctest::Approx(0));
    CHECK(perfect.mae_count == doctest::Approx(0).epsilon(1e-6));

    const double median = 3.0;
    std::vector<double> constant(targets.size(), std::log1p(median));
    const RegressionReport at_median = regression_metrics(constant, targets);
    double expected_mae = 0;
    for (int t : targets) expected_mae += std::abs(median - t);
    expected_mae /= static_cast<double>(targets.size());
    CHECK(at_median.mae_count == doctest::Approx(expected_mae).epsilon(1e-6));

    const RegressionReport single = regression_metrics({std::log1p(3.0)}, {1});
    CHECK(single.mae_count == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("label spec JSON round trip") {
    LabelSpec spec;
    spec.objective = Objective::multiclass4;
    spec.boundaries = {2.75, 4.5, 6.25};
    spec.fitted = true;
    const LabelSpec back = LabelSpec::from_json(spec.to_json());
    CHECK(back.objective == spec.objective);
    CHECK(back.boundaries == spec.boundaries);
    CHECK(back.fitted);
    CHECK_THROWS_AS(objective_from_name("nope"), ConfigError);
}

TEST_CASE("regression target is log1p of the count") {
    CHECK(static_cast<double>(regression_target(0)) == doctest::Approx(0));
    CHECK(static_cast<double>(regression_target(7)) == doctest::Approx(std::log(8.0)).epsilon(1e-6));
}
