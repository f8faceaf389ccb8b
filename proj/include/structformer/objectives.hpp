#pragma once

#include <string>
#include <vector>

#include "structformer/common.hpp"
#include "structformer/schema.hpp"

namespace structformer {

enum class Objective { binary, multiclass4, regression };

std::string objective_name(Objective o);
Objective objective_from_name(const std::string& name);
int objective_classes(Objective o);  // 2, 4, or 1 (regression output)

// Class boundaries over the session-count distribution. Fitted on the
// training split only and frozen for validation.
struct LabelSpec {
    Objective objective = Objective::binary;
    std::vector<double> boundaries;  // |1| median, |3| quartiles, empty for regression
    bool fitted = false;

    std::string to_json() const;
    static LabelSpec from_json(const std::string& text);
};

// Linear-interpolation quantiles: rank 1 + (N-1)p over the sorted sample.
std::vector<double> fit_quantiles(const std::vector<int>& counts, const std::vector<double>& probs);

LabelSpec fit_label_spec(Objective objective, const std::vector<Session>& train_sessions);

// Class index for classification objectives: the number of boundaries
// strictly below the count (ties go to the lower class).
int assign_label(int count, const LabelSpec& spec);

// Regression target: log1p(count) against the long tail.
real regression_target(int count);

struct MetricReport {
    double accuracy = 0;
    double f1 = 0;
    double precision = 0;
    double recall = 0;
    double train_loss = 0;
    double val_loss = 0;
    std::int64_t seed = 0;
};

// Accuracy plus macro-averaged precision/recall/F1. Classes absent from both
// predictions and labels are excluded from the macro average.
MetricReport classification_metrics(const std::vector<int>& predictions,
                                    const std::vector<int>& labels, int n_classes);

struct RegressionReport {
    double mse_log = 0;    // in log1p space
    double mae_count = 0;  // after expm1 back-transform, clamped at 0
};

RegressionReport regression_metrics(const std::vector<double>& pred_log,
                                    const std::vector<int>& target_counts);

}  // namespace structformer
