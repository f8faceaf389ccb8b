#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "structformer/gbdt.hpp"
#include "structformer/rng.hpp"
#include "support/fixtures.hpp"

using namespace structformer;
using testsupport::make_event;
using testsupport::make_session;

namespace {

// Brute-force best first split: enumerate every feature and every midpoint
// threshold directly from the data, summing gradient/hessian pairs per side.
// Same objective definition as the trainer, independent enumeration.
struct OracleSplit {
    bool found = false;
    int feature = -1;
    double threshold = 0;
    double gain = 0;
};

OracleSplit brute_force_first_split(const std::vector<CountRow>& rows,
                                    const std::vector<double>& grad,
                                    const std::vector<double>& hess, int min_leaf) {
    OracleSplit best;
    const auto term = [](double g, double h) { return g * g / (h + kGbdtLambda); };
    double g_total = 0, h_total = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        g_total += grad[i];
        h_total += hess[i];
    }
    const double parent = term(g_total, h_total);
    const int n_features = static_cast<int>(rows.front().size());
    for (int f = 0; f < n_features; ++f) {
        std::set<int> values;
        for (const auto& r : rows) values.insert(r[static_cast<std::size_t>(f)]);
        std::vector<int> sorted(values.begin(), values.end());
        for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
            const double threshold = 0.5 * (sorted[k] + sorted[k + 1]);
            double gl = 0, hl = 0;
            int nl = 0;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (rows[i][static_cast<std::size_t>(f)] <= threshold) {
                    gl += grad[i];
                    hl += hess[i];
                    ++nl;
                }
            }
            const int nr = static_cast<int>(rows.size()) - nl;
            if (nl < min_leaf || nr < min_leaf) continue;
            const double gain = term(gl, hl) + term(g_total - gl, h_total - hl) - parent;
            if (gain > best.gain + 1e-12 || (!best.found && gain > 1e-12)) {
                best = {true, f, threshold, gain};
            }
        }
    }
    return best;
}

GbdtModel manual_stump_model(double init_score, double eta) {
    // x0 > 2 -> +1 else -1
    GbdtModel model;
    model.objective = Objective::binary;
    model.n_features = 3;
    model.shrinkage = eta;
    model.init_scores = {init_score};
    Tree tree(3);
    tree[0].feature = 0;
    tree[0].threshold = 2.0;
    tree[0].left = 1;
    tree[0].right = 2;
    tree[1].leaf_value = -1.0;
    tree[2].leaf_value = 1.0;
    model.rounds.push_back({tree});
    return model;
}

}  // namespace

TEST_CASE("count featurization: histogram, OTHER column, permutation invariance") {
    const std::vector<std::string> vocab = {"A", "B", "C"};
    const Session s = make_session(
        "u", {make_event(1, "A"), make_event(2, "A"), make_event(3, "B")});
    CHECK(count_featurize(s, vocab) == CountRow{2, 1, 0, 0});

    Session shuffled = s;
    std::swap(shuffled.events[0], shuffled.events[2]);
    CHECK(count_featurize(shuffled, vocab) == count_featurize(s, vocab));

    const Session unknown = make_session(
        "u", {make_event(1, "Z"), make_event(2, "Q"), make_event(3, "Z")});
    CHECK(count_featurize(unknown, vocab) == CountRow{0, 0, 0, 3});
}

TEST_CASE("one threshold feature is separable with a single stump") {
    std::vector<CountRow> rows;
    std::vector<int> labels;
    for (int x = 0; x <= 9; ++x) {
        rows.push_back({x});
        labels.push_back(x > 2 ? 1 : 0);
    }
    GbdtHyperParams hp;
    hp.max_depth = 1;
    hp.n_rounds = 10;
    hp.min_samples_leaf = 1;
    const GbdtModel model = fit_gbdt(rows, labels, Objective::binary, hp);
    int correct = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        correct += predict_gbdt_class(model, rows[i]) == labels[i];
    }
    CHECK(correct == 10);
}

TEST_CASE("single-class labels produce a constant model with zero trees") {
    const std::vector<CountRow> rows = {{1, 2}, {3, 0}, {2, 2}};
    const std::vector<int> labels = {1, 1, 1};
    GbdtHyperParams hp;
    const GbdtModel model = fit_gbdt(rows, labels, Objective::binary, hp);
    CHECK(model.rounds.empty());
    for (const auto& r : rows) {
        CHECK(predict_gbdt_class(model, r) == 1);
    }

    const GbdtModel multi = fit_gbdt(rows, {2, 2, 2}, Objective::multiclass4, hp);
    CHECK(multi.rounds.empty());
    CHECK(predict_gbdt_class(multi, rows[0]) == 2);
}

TEST_CASE("zero-tree binary model at log-odds 0 predicts probability one half") {
    GbdtModel model;
    model.objective = Objective::binary;
    model.n_features = 2;
    model.shrinkage = 0.1;
    model.init_scores = {0.0};
    const double margin = predict_gbdt_value(model, {4, 7});
    CHECK(1.0 / (1.0 + std::exp(-margin)) == doctest::Approx(0.5));
    CHECK(predict_gbdt_class(model, {4, 7}) == 0);  // tie resolves to class 0
}

TEST_CASE("manual stump walks to the signed leaf at shrinkage 1") {
    const GbdtModel model = manual_stump_model(0.25, 1.0);
    CHECK(predict_gbdt_value(model, {3, 0, 0}) == doctest::Approx(1.25));
    CHECK(predict_gbdt_value(model, {2, 0, 0}) == doctest::Approx(-0.75));
}

TEST_CASE("prediction rejects rows of the wrong width") {
    const GbdtModel model = manual_stump_model(0.0, 1.0);
    CHECK_THROWS_AS(predict_gbdt_value(model, {1, 2}), ConfigError);
}

TEST_CASE("first split matches the brute-force oracle on random instances") {
    Rng rng(71);
    for (int instance = 0; instance < 15; ++instance) {
        std::vector<CountRow> rows;
        std::vector<int> labels;
        for (int i = 0; i < 20; ++i) {
            CountRow row;
            for (int f = 0; f < 4; ++f) {
                row.push_back(static_cast<int>(rng.uniform_int(0, 6)));
            }
            labels.push_back(static_cast<int>(rng.uniform_int(0, 1)));
            rows.push_back(std::move(row));
        }
        if (std::all_of(labels.begin(), labels.end(), [&](int y) { return y == labels[0]; })) {
            continue;
        }
        GbdtHyperParams hp;
        hp.n_rounds = 1;
        hp.max_depth = 1;
        hp.min_samples_leaf = 2;
        const GbdtModel model = fit_gbdt(rows, labels, Objective::binary, hp);

        // Replay the first round's gradient state at the constant init score.
        const double p = 1.0 / (1.0 + std::exp(-model.init_scores[0]));
        std::vector<double> grad, hess;
        for (int y : labels) {
            grad.push_back(p - y);
            hess.push_back(p * (1.0 - p));
        }
        const OracleSplit oracle = brute_force_first_split(rows, grad, hess, hp.min_samples_leaf);
        REQUIRE(!model.rounds.empty());
        const Tree& tree = model.rounds[0][0];
        if (!oracle.found) {
            CHECK(tree[0].is_leaf());
            continue;
        }
        REQUIRE(!tree[0].is_leaf());
        CHECK(tree[0].feature == oracle.feature);
        CHECK(tree[0].threshold == doctest::Approx(oracle.threshold));
    }
}

TEST_CASE("training loss is monotonically non-increasing per boosting round") {
    Rng rng(5);
    std::vector<CountRow> rows;
    std::vector<int> binary_labels;
    std::vector<int> multi_labels;
    std::vector<double> targets;
    for (int i = 0; i < 120; ++i) {
        CountRow row;
        for (int f = 0; f < 5; ++f) row.push_back(static_cast<int>(rng.uniform_int(0, 8)));
        rows.push_back(row);
        binary_labels.push_back(row[0] + row[1] > 7 ? 1 : 0);
        multi_labels.push_back(static_cast<int>(rng.uniform_int(0, 3)));
        targets.push_back(0.5 * row[2] + rng.normal() * 0.1);
    }
    GbdtHyperParams hp;
    hp.n_rounds = 40;
    hp.max_depth = 3;

    GbdtFitInfo info;
    fit_gbdt(rows, binary_labels, Objective::binary, hp, &info);
    REQUIRE(info.train_loss.size() == 41);
    for (std::size_t i = 1; i < info.train_loss.size(); ++i) {
        CHECK(info.train_loss[i] <= info.train_loss[i - 1] + 1e-9);
    }

    GbdtFitInfo info_multi;
    fit_gbdt(rows, multi_labels, Objective::multiclass4, hp, &info_multi);
    for (std::size_t i = 1; i < info_multi.train_loss.size(); ++i) {
        CHECK(info_multi.train_loss[i] <= info_multi.train_loss[i - 1] + 1e-9);
    }

    GbdtFitInfo info_reg;
    const GbdtModel reg = fit_gbdt(rows, targets, hp, &info_reg);
    for (std::size_t i = 1; i < info_reg.train_loss.size(); ++i) {
        CHECK(info_reg.train_loss[i] <= info_reg.train_loss[i - 1] + 1e-9);
    }
    // The linear relation on feature 2 should be well fit.
    CHECK(info_reg.train_loss.back() < 0.25 * info_reg.train_loss.front());
    CHECK(reg.objective == Objective::regression);
}

TEST_CASE("deterministic: identical input order gives identical models") {
    Rng rng(9);
    std::vector<CountRow> rows;
    std::vector<int> labels;
    for (int i = 0; i < 60; ++i) {
        rows.push_back({static_cast<int>(rng.uniform_int(0, 5)),
                        static_cast<int>(rng.uniform_int(0, 5))});
        labels.push_back(static_cast<int>(rng.uniform_int(0, 1)));
    }
    GbdtHyperParams hp;
    hp.n_rounds = 10;
    const GbdtModel a = fit_gbdt(rows, labels, Objective::binary, hp);
    const GbdtModel b = fit_gbdt(rows, labels, Objective::binary, hp);
    CHECK(a.to_json() == b.to_json());
}

TEST_CASE("JSON round trip preserves predictions exactly") {
    Rng rng(41);
    std::vector<CountRow> rows;
    std::vector<int> labels;
    for (int i = 0; i < 80; ++i) {
        rows.push_back({static_cast<int>(rng.uniform_int(0, 9)),
                        static_cast<int>(rng.uniform_int(0, 9)),
                        static_cast<int>(rng.uniform_int(0, 9))});
        labels.push_back(rows.back()[0] > 4 ? 1 : 0);
    }
    GbdtHyperParams hp;
    hp.n_rounds = 12;
    const GbdtModel model = fit_gbdt(rows, labels, Objective::binary, hp);
    const GbdtModel back = GbdtModel::from_json(model.to_json());
    for (const auto& r : rows) {
        CHECK(predict_gbdt_value(back, r) == predict_gbdt_value(model, r));
    }
}

TEST_CASE("the fixed tuning grid evaluates all eight combinations") {
    Rng rng(17);
    std::vector<CountRow> train_rows, val_rows;
    std::vector<int> train_labels, val_labels;
    for (int i = 0; i < 200; ++i) {
        CountRow row = {static_cast<int>(rng.uniform_int(0, 9)),
                        static_cast<int>(rng.uniform_int(0, 9))};
        const int label = row[0] + row[1] > 9 ? 1 : 0;
        if (i < 160) {
            train_rows.push_back(row);
            train_labels.push_back(label);
        } else {
            val_rows.push_back(row);
            val_labels.push_back(label);
        }
    }
    const GbdtGridResult grid =
        fit_gbdt_grid(train_rows, train_labels, val_rows, val_labels, Objective::binary);
    CHECK(grid.entries.size() == 8);
    double best = 1e30;
    for (const auto& e : grid.entries) best = std::min(best, e.val_loss);
    CHECK(grid.best_val_loss == doctest::Approx(best));
    int correct = 0;
    for (std::size_t i = 0; i < val_rows.size(); ++i) {
        correct += predict_gbdt_class(grid.best, val_rows[i]) == val_labels[i];
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(val_rows.size()) > 0.8);
}

TEST_CASE("count matrix CSV carries the vocabulary header plus OTHER") {
    const std::vector<std::string> vocab = {"A", "B"};
    const std::vector<CountRow> rows = {{2, 0, 1}, {0, 3, 0}};
    const auto path = std::filesystem::temp_directory_path() / "sf_counts_test.csv";
    export_count_matrix_csv(path.string(), rows, vocab);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "A,B,OTHER");
    std::getline(in, line);
    CHECK(line == "2,0,1");
    std::getline(in, line);
    CHECK(line == "0,3,0");
    std::filesystem::remove(path);
}

TEST_CASE("multiclass fit separates a 4-way count pattern") {
    Rng rng(3);
    std::vector<CountRow> rows;
    std::vector<int> labels;
    for (int i = 0; i < 200; ++i) {
        const int cls = static_cast<int>(rng.uniform_int(0, 3));
        CountRow row(4, 0);
        row[static_cast<std::size_t>(cls)] = 3 + static_cast<int>(rng.uniform_int(0, 2));
        row[static_cast<std::size_t>((cls + 1) % 4)] = static_cast<int>(rng.uniform_int(0, 2));
        rows.push_back(row);
        labels.push_back(cls);
    }
    GbdtHyperParams hp;
    hp.n_rounds = 20;
    const GbdtModel model = fit_gbdt(rows, labels, Objective::multiclass4, hp);
    int correct = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        correct += predict_gbdt_class(model, rows[i]) == labels[i];
    }
    CHECK(static_cast<double>(correct) / 200.0 > 0.95);
}
