#pragma once

#include <string>
#include <vector>

#include "structformer/objectives.hpp"
#include "structformer/schema.hpp"

namespace structformer {

// Per-session event-type histogram: one column per vocabulary entry plus a
// trailing OTHER column for unknown types. Order and per-event features are
// discarded by construction.
using CountRow = std::vector<int>;

CountRow count_featurize(const Session& session, const std::vector<std::string>& event_type_vocab);
std::vector<CountRow> count_matrix(const std::vector<Session>& sessions,
                                   const std::vector<std::string>& event_type_vocab);
void export_count_matrix_csv(const std::string& path, const std::vector<CountRow>& rows,
                             const std::vector<std::string>& event_type_vocab);

struct TreeNode {
    int feature = -1;  // < 0: leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double leaf_value = 0.0;

    bool is_leaf() const { return feature < 0; }
};

// Nodes in preorder, root at index 0.
using Tree = std::vector<TreeNode>;

double tree_predict(const Tree& tree, const CountRow& row);

struct GbdtHyperParams {
    int n_rounds = 100;
    int max_depth = 3;
    double learning_rate = 0.1;
    int min_samples_leaf = 5;
};

// Leaf-value regularizer in the Newton gain G^2/(H + lambda); part of the
// split objective definition.
inline constexpr double kGbdtLambda = 1.0;

struct GbdtModel {
    Objective objective = Objective::binary;
    int n_features = 0;
    double shrinkage = 0.1;
    std::vector<double> init_scores;        // [1] or [n_classes]
    std::vector<std::vector<Tree>> rounds;  // per round: one tree, or one per class

    std::string to_json() const;
    static GbdtModel from_json(const std::string& text);
    void save(const std::string& path) const;
    static GbdtModel load(const std::string& path);
};

struct GbdtFitInfo {
    // Training loss after init (index 0) and after each boosting round.
    std::vector<double> train_loss;
};

// Exact greedy second-order boosting. Split ties break on the lowest feature
// index, then the lowest threshold; training is fully deterministic for a
// fixed input order.
GbdtModel fit_gbdt(const std::vector<CountRow>& rows, const std::vector<int>& class_labels,
                   Objective objective, const GbdtHyperParams& hp, GbdtFitInfo* info = nullptr);
GbdtModel fit_gbdt(const std::vector<CountRow>& rows, const std::vector<double>& targets,
                   const GbdtHyperParams& hp, GbdtFitInfo* info = nullptr);

// Raw margin / value: init score plus shrinkage-scaled tree outputs.
std::vector<double> predict_gbdt_scores(const GbdtModel& model, const CountRow& row);
int predict_gbdt_class(const GbdtModel& model, const CountRow& row);
double predict_gbdt_value(const GbdtModel& model, const CountRow& row);

// Mean loss of the model on a labeled set (model selection metric).
double gbdt_loss(const GbdtModel& model, const std::vector<CountRow>& rows,
                 const std::vector<int>& class_labels);
double gbdt_loss(const GbdtModel& model, const std::vector<CountRow>& rows,
                 const std::vector<double>& targets);

struct GbdtGridEntry {
    GbdtHyperParams hp;
    double val_loss = 0.0;
};

struct GbdtGridResult {
    GbdtModel best;
    GbdtHyperParams best_hp;
    double best_val_loss = 0.0;
    std::vector<GbdtGridEntry> entries;
};

// Fixed tuning grid: depth {3,6} x rounds {100,300} x learning rate
// {0.05,0.1}, selected by validation loss.
GbdtGridResult fit_gbdt_grid(const std::vector<CountRow>& train_rows,
                             const std::vector<int>& train_labels,
                             const std::vector<CountRow>& val_rows,
                             const std::vector<int>& val_labels, Objective objective);

}  // namespace structformer
