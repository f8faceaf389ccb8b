#include "structformer/objectives.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace structformer {

using json = nlohmann::ordered_json;

std::string objective_name(Objective o) {
    switch (o) {
        case Objective::binary: return "binary";
        case Objective::multiclass4: return "multiclass4";
        case Objective::regression: return "regression";
    }
    return "binary";
}

Objective objective_from_name(const std::string& name) {
    if (name == "binary") return Objective::binary;
    if (name == "multiclass4") return Objective::multiclass4;
    if (name == "regression") return Objective::regression;
    throw ConfigError("unknown objective '" + name + "' (binary|multiclass4|regression)");
}

int objective_classes(Objective o) {
    switch (o) {
        case Objective::binary: return 2;
        case Objective::multiclass4: return 4;
        case Objective::regression: return 1;
    }
    return 2;
}

std::string LabelSpec::to_json() const {
    json j;
    j["objective"] = objective_name(objective);
    j["boundaries"] = boundaries;
    j["fitted"] = fitted;
    return j.dump(2);
}

LabelSpec LabelSpec::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("label spec: invalid JSON: ") + e.what());
    }
    LabelSpec spec;
    spec.objective = objective_from_name(j.at("objective").get<std::string>());
    spec.boundaries = j.at("boundaries").get<std::vector<double>>();
    spec.fitted = j.value("fitted", true);
    return spec;
}

std::vector<double> fit_quantiles(const std::vector<int>& counts, const std::vector<double>& probs) {
    check(!counts.empty(), "fit_quantiles: empty sample");
    for (double p : probs) {
        check(p > 0.0 && p < 1.0, "fit_quantiles: probabilities must lie in (0, 1)");
    }
    std::vector<int> sorted = counts;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    std::vector<double> out;
    out.reserve(probs.size());
    for (double p : probs) {
        const double h = static_cast<double>(n - 1) * p;  // 0-based rank (N-1)p
        const auto lo = static_cast<std::size_t>(h);
        const double frac = h - static_cast<double>(lo);
        const double a = sorted[lo];
        const double b = sorted[std::min(lo + 1, n - 1)];
        out.push_back(a + frac * (b - a));
    }
    return out;
}

LabelSpec fit_label_spec(Objective objective, const std::vector<Session>& train_sessions) {
    check(!train_sessions.empty(), "fit_label_spec: empty training split");
    std::vector<int> counts;
    counts.reserve(train_sessions.size());
    for (const auto& s : train_sessions) counts.push_back(s.user_session_count);
    LabelSpec spec;
    spec.objective = objective;
    spec.fitted = true;
    switch (objective) {
        case Objective::binary:
            spec.boundaries = fit_quantiles(counts, {0.5});
            break;
        case Objective::multiclass4:
            spec.boundaries = fit_quantiles(counts, {0.25, 0.5, 0.75});
            break;
        case Objective::regression:
            break;
    }
    return spec;
}

int assign_label(int count, const LabelSpec& spec) {
    check(spec.fitted, "assign_label: spec not fitted");
    int label = 0;
    for (double b : spec.boundaries) {
        if (b < static_cast<double>(count)) ++label;
    }
    return label;
}

real regression_target(int count) {
    return static_cast<real>(std::log1p(static_cast<double>(count)));
}

MetricReport classification_metrics(const std::vector<int>& predictions,
                                    const std::vector<int>& labels, int n_classes) {
    check(predictions.size() == labels.size(),
          "metrics: got " + std::to_string(predictions.size()) + " predictions for " +
              std::to_string(labels.size()) + " labels");
    check(!labels.empty(), "metrics: empty input");
    std::vector<std::int64_t> tp(static_cast<std::size_t>(n_classes), 0);
    std::vector<std::int64_t> fp(static_cast<std::size_t>(n_classes), 0);
    std::vector<std::int64_t> fn(static_cast<std::size_t>(n_classes), 0);
    std::int64_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int p = predictions[i];
        const int y = labels[i];
        check(p >= 0 && p < n_classes && y >= 0 && y < n_classes, "metrics: class index out of range");
        if (p == y) {
            ++correct;
            ++tp[static_cast<std::size_t>(p)];
        } else {
            ++fp[static_cast<std::size_t>(p)];
            ++fn[static_cast<std::size_t>(y)];
        }
    }
    MetricReport report;
    report.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
    double sum_p = 0, sum_r = 0, sum_f = 0;
    int present = 0;
    for (int c = 0; c < n_classes; ++c) {
        const auto k = static_cast<std::size_t>(c);
        const std::int64_t support = tp[k] + fn[k];
        const std::int64_t predicted = tp[k] + fp[k];
        if (support == 0 && predicted == 0) continue;  // absent class, excluded from macro
        ++present;
        const double prec = predicted > 0 ? static_cast<double>(tp[k]) / static_cast<double>(predicted) : 0.0;
        const double rec = support > 0 ? static_cast<double>(tp[k]) / static_cast<double>(support) : 0.0;
        const double f1 = prec + rec > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
        sum_p += prec;
        sum_r += rec;
        sum_f += f1;
    }
    if (present > 0) {
        report.precision = sum_p / present;
        report.recall = sum_r / present;
        report.f1 = sum_f / present;
    }
    return report;
}

RegressionReport regression_metrics(const std::vector<double>& pred_log,
                                    const std::vector<int>& target_counts) {
    check(pred_log.size() == target_counts.size(), "regression metrics: length mismatch");
    check(!pred_log.empty(), "regression metrics: empty input");
    RegressionReport report;
    for (std::size_t i = 0; i < pred_log.size(); ++i) {
        const double t = std::log1p(static_cast<double>(target_counts[i]));
        const double d = pred_log[i] - t;
        report.mse_log += d * d;
        const double count_pred = std::max(0.0, std::expm1(pred_log[i]));
        report.mae_count += std::abs(count_pred - static_cast<double>(target_counts[i]));
    }
    report.mse_log /= static_cast<double>(pred_log.size());
    report.mae_count /= static_cast<double>(pred_log.size());
    return report;
}

}  // namespace structformer
