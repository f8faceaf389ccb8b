#include "structformer/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace structformer {

using json = nlohmann::ordered_json;

namespace {

constexpr double kLambda = kGbdtLambda;
constexpr double kMinGain = 1e-12;

double sigmoid(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

// -mean(y log p + (1-y) log(1-p)) from raw margins, computed stably.
double logistic_loss(const std::vector<double>& margins, const std::vector<int>& labels) {
    double total = 0.0;
    for (std::size_t i = 0; i < margins.size(); ++i) {
        const double m = margins[i];
        const double ym = labels[i] ? m : -m;
        total += ym > 0 ? std::log1p(std::exp(-ym)) : -ym + std::log1p(std::exp(ym));
    }
    return total / static_cast<double>(margins.size());
}

double softmax_loss(const std::vector<std::vector<double>>& scores, const std::vector<int>& labels) {
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto& row = scores[i];
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double s : row) sum += std::exp(s - mx);
        total += std::log(sum) + mx - row[static_cast<std::size_t>(labels[i])];
    }
    return total / static_cast<double>(labels.size());
}

struct SplitCandidate {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

double leaf_weight(double g, double h) {
    return -g / (h + kLambda);
}

double gain_term(double g, double h) {
    return g * g / (h + kLambda);
}

class TreeBuilder {
public:
    TreeBuilder(const std::vector<CountRow>& rows, const std::vector<double>& grad,
                const std::vector<double>& hess, const GbdtHyperParams& hp)
        : rows_(rows), grad_(grad), hess_(hess), hp_(hp) {}

    Tree build() {
        std::vector<int> indices(rows_.size());
        std::iota(indices.begin(), indices.end(), 0);
        Tree tree;
        grow(tree, indices, 0);
        return tree;
    }

private:
    int grow(Tree& tree, std::vector<int>& indices, int depth) {
        double g = 0.0, h = 0.0;
        for (int i : indices) {
            g += grad_[static_cast<std::size_t>(i)];
            h += hess_[static_cast<std::size_t>(i)];
        }
        const int node_id = static_cast<int>(tree.size());
        tree.push_back({});
        tree[static_cast<std::size_t>(node_id)].leaf_value = leaf_weight(g, h);

        if (depth >= hp_.max_depth ||
            static_cast<int>(indices.size()) < 2 * hp_.min_samples_leaf) {
            return node_id;
        }
        const SplitCandidate best = best_split(indices, g, h);
        if (!best.found) {
            return node_id;
        }

        std::vector<int> left, right;
        for (int i : indices) {
            const double v = rows_[static_cast<std::size_t>(i)][static_cast<std::size_t>(best.feature)];
            (v <= best.threshold ? left : right).push_back(i);
        }
        indices.clear();
        indices.shrink_to_fit();

        const int left_id = grow(tree, left, depth + 1);
        const int right_id = grow(tree, right, depth + 1);
        auto& node = tree[static_cast<std::size_t>(node_id)];
        node.feature = best.feature;
        node.threshold = best.threshold;
        node.left = left_id;
        node.right = right_id;
        return node_id;
    }

    SplitCandidate best_split(const std::vector<int>& indices, double g_total, double h_total) {
        SplitCandidate best;
        const int n_features = static_cast<int>(rows_.front().size());
        const double parent = gain_term(g_total, h_total);
        std::vector<int> sorted = indices;
        for (int f = 0; f < n_features; ++f) {
            std::sort(sorted.begin(), sorted.end(), [&](int a, int b) {
                const int va = rows_[static_cast<std::size_t>(a)][static_cast<std::size_t>(f)];
                const int vb = rows_[static_cast<std::size_t>(b)][static_cast<std::size_t>(f)];
                return va != vb ? va < vb : a < b;
            });
            double gl = 0.0, hl = 0.0;
            for (std::size_t pos = 0; pos + 1 < sorted.size(); ++pos) {
                const int i = sorted[pos];
                gl += grad_[static_cast<std::size_t>(i)];
                hl += hess_[static_cast<std::size_t>(i)];
                const int v = rows_[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)];
                const int v_next = rows_[static_cast<std::size_t>(sorted[pos + 1])][static_cast<std::size_t>(f)];
                if (v == v_next) continue;
                const auto n_left = static_cast<int>(pos) + 1;
                const auto n_right = static_cast<int>(sorted.size()) - n_left;
                if (n_left < hp_.min_samples_leaf || n_right < hp_.min_samples_leaf) continue;
                const double gain =
                    gain_term(gl, hl) + gain_term(g_total - gl, h_total - hl) - parent;
                if (gain > best.gain + kMinGain || (!best.found && gain > kMinGain)) {
                    best.found = true;
                    best.feature = f;
                    best.threshold = 0.5 * (static_cast<double>(v) + static_cast<double>(v_next));
                    best.gain = gain;
                }
            }
        }
        return best;
    }

    const std::vector<CountRow>& rows_;
    const std::vector<double>& grad_;
    const std::vector<double>& hess_;
    const GbdtHyperParams& hp_;
};

void check_rows(const std::vector<CountRow>& rows) {
    check_config(rows.size() >= 2, "gbdt: need at least 2 samples");
    for (const auto& r : rows) {
        check_config(r.size() == rows.front().size(), "gbdt: ragged count matrix");
    }
}

double clamped_log_odds(double p) {
    p = std::clamp(p, 1e-6, 1.0 - 1e-6);
    return std::log(p / (1.0 - p));
}

}  // namespace

CountRow count_featurize(const Session& session, const std::vector<std::string>& event_type_vocab) {
    CountRow row(event_type_vocab.size() + 1, 0);
    for (const auto& e : session.events) {
        const auto it = std::find(event_type_vocab.begin(), event_type_vocab.end(), e.event_type);
        if (it == event_type_vocab.end()) {
            ++row.back();  // OTHER
        } else {
            ++row[static_cast<std::size_t>(it - event_type_vocab.begin())];
        }
    }
    return row;
}

std::vector<CountRow> count_matrix(const std::vector<Session>& sessions,
                                   const std::vector<std::string>& event_type_vocab) {
    std::vector<CountRow> rows;
    rows.reserve(sessions.size());
    for (const auto& s : sessions) {
        rows.push_back(count_featurize(s, event_type_vocab));
    }
    return rows;
}

void export_count_matrix_csv(const std::string& path, const std::vector<CountRow>& rows,
                             const std::vector<std::string>& event_type_vocab) {
    std::ofstream out(path, std::ios::trunc);
    check(static_cast<bool>(out), "cannot write " + path);
    for (std::size_t i = 0; i < event_type_vocab.size(); ++i) {
        out << event_type_vocab[i] << ",";
    }
    out << "OTHER\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out << ",";
            out << row[i];
        }
        out << "\n";
    }
}

double tree_predict(const Tree& tree, const CountRow& row) {
    int node = 0;
    while (!tree[static_cast<std::size_t>(node)].is_leaf()) {
        const auto& n = tree[static_cast<std::size_t>(node)];
        node = static_cast<double>(row[static_cast<std::size_t>(n.feature)]) <= n.threshold
                   ? n.left
                   : n.right;
    }
    return tree[static_cast<std::size_t>(node)].leaf_value;
}

GbdtModel fit_gbdt(const std::vector<CountRow>& rows, const std::vector<int>& class_labels,
                   Objective objective, const GbdtHyperParams& hp, GbdtFitInfo* info) {
    check_rows(rows);
    check_config(objective != Objective::regression,
                 "gbdt: class labels passed for the regression objective");
    check_config(class_labels.size() == rows.size(), "gbdt: label count mismatch");
    const int n_classes = objective_classes(objective);
    const auto n = rows.size();
    for (int y : class_labels) {
        check_config(y >= 0 && y < n_classes, "gbdt: class label out of range");
    }

    GbdtModel model;
    model.objective = objective;
    model.n_features = static_cast<int>(rows.front().size());
    model.shrinkage = hp.learning_rate;

    const bool single_class =
        std::all_of(class_labels.begin(), class_labels.end(),
                    [&](int y) { return y == class_labels.front(); });

    if (objective == Objective::binary) {
        double p1 = 0.0;
        for (int y : class_labels) p1 += y;
        p1 /= static_cast<double>(n);
        model.init_scores = {clamped_log_odds(p1)};

        std::vector<double> margins(n, model.init_scores[0]);
        if (info) info->train_loss = {logistic_loss(margins, class_labels)};
        if (single_class) return model;  // constant initial score, zero trees

        std::vector<double> grad(n), hess(n);
        for (int round = 0; round < hp.n_rounds; ++round) {
            for (std::size_t i = 0; i < n; ++i) {
                const double p = sigmoid(margins[i]);
                grad[i] = p - static_cast<double>(class_labels[i]);
                hess[i] = p * (1.0 - p);
            }
            Tree tree = TreeBuilder(rows, grad, hess, hp).build();
            for (std::size_t i = 0; i < n; ++i) {
                margins[i] += hp.learning_rate * tree_predict(tree, rows[i]);
            }
            model.rounds.push_back({std::move(tree)});
            if (info) info->train_loss.push_back(logistic_loss(margins, class_labels));
        }
        return model;
    }

    // Multi-class: one-vs-rest trees per round on softmax gradients.
    std::vector<double> prior(static_cast<std::size_t>(n_classes), 0.0);
    for (int y : class_labels) prior[static_cast<std::size_t>(y)] += 1.0;
    model.init_scores.resize(static_cast<std::size_t>(n_classes));
    for (int k = 0; k < n_classes; ++k) {
        model.init_scores[static_cast<std::size_t>(k)] =
            std::log(std::max(prior[static_cast<std::size_t>(k)] / static_cast<double>(n), 1e-6));
    }

    std::vector<std::vector<double>> scores(n, model.init_scores);
    if (info) info->train_loss = {softmax_loss(scores, class_labels)};
    if (single_class) return model;

    std::vector<std::vector<double>> probs(n, std::vector<double>(static_cast<std::size_t>(n_classes)));
    std::vector<double> grad(n), hess(n);
    for (int round = 0; round < hp.n_rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const double mx = *std::max_element(scores[i].begin(), scores[i].end());
            double sum = 0.0;
            for (int k = 0; k < n_classes; ++k) {
                probs[i][static_cast<std::size_t>(k)] = std::exp(scores[i][static_cast<std::size_t>(k)] - mx);
                sum += probs[i][static_cast<std::size_t>(k)];
            }
            for (auto& p : probs[i]) p /= sum;
        }
        std::vector<Tree> round_trees;
        round_trees.reserve(static_cast<std::size_t>(n_classes));
        for (int k = 0; k < n_classes; ++k) {
            for (std::size_t i = 0; i < n; ++i) {
                const double p = probs[i][static_cast<std::size_t>(k)];
                grad[i] = p - (class_labels[i] == k ? 1.0 : 0.0);
                hess[i] = p * (1.0 - p);
            }
            round_trees.push_back(TreeBuilder(rows, grad, hess, hp).build());
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (int k = 0; k < n_classes; ++k) {
                scores[i][static_cast<std::size_t>(k)] +=
                    hp.learning_rate * tree_predict(round_trees[static_cast<std::size_t>(k)], rows[i]);
            }
        }
        model.rounds.push_back(std::move(round_trees));
        if (info) info->train_loss.push_back(softmax_loss(scores, class_labels));
    }
    return model;
}

GbdtModel fit_gbdt(const std::vector<CountRow>& rows, const std::vector<double>& targets,
                   const GbdtHyperParams& hp, GbdtFitInfo* info) {
    check_rows(rows);
    check_config(targets.size() == rows.size(), "gbdt: target count mismatch");
    const auto n = rows.size();

    GbdtModel model;
    model.objective = Objective::regression;
    model.n_features = static_cast<int>(rows.front().size());
    model.shrinkage = hp.learning_rate;
    model.init_scores = {std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(n)};

    std::vector<double> pred(n, model.init_scores[0]);
    auto mse_of = [&] {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            total += (pred[i] - targets[i]) * (pred[i] - targets[i]);
        }
        return total / static_cast<double>(n);
    };
    if (info) info->train_loss = {mse_of()};

    std::vector<double> grad(n);
    const std::vector<double> hess(n, 1.0);
    for (int round = 0; round < hp.n_rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            grad[i] = pred[i] - targets[i];
        }
        Tree tree = TreeBuilder(rows, grad, hess, hp).build();
        for (std::size_t i = 0; i < n; ++i) {
            pred[i] += hp.learning_rate * tree_predict(tree, rows[i]);
        }
        model.rounds.push_back({std::move(tree)});
        if (info) info->train_loss.push_back(mse_of());
    }
    return model;
}

std::vector<double> predict_gbdt_scores(const GbdtModel& model, const CountRow& row) {
    check_config(static_cast<int>(row.size()) == model.n_features,
                 "gbdt: row width " + std::to_string(row.size()) + " does not match training width " +
                     std::to_string(model.n_features));
    std::vector<double> scores = model.init_scores;
    for (const auto& round : model.rounds) {
        for (std::size_t k = 0; k < round.size(); ++k) {
            scores[k] += model.shrinkage * tree_predict(round[k], row);
        }
    }
    return scores;
}

int predict_gbdt_class(const GbdtModel& model, const CountRow& row) {
    const auto scores = predict_gbdt_scores(model, row);
    if (model.objective == Objective::binary) {
        return scores[0] > 0.0 ? 1 : 0;
    }
    return static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

double predict_gbdt_value(const GbdtModel& model, const CountRow& row) {
    return predict_gbdt_scores(model, row)[0];
}

double gbdt_loss(const GbdtModel& model, const std::vector<CountRow>& rows,
                 const std::vector<int>& class_labels) {
    check_config(rows.size() == class_labels.size(), "gbdt loss: size mismatch");
    if (model.objective == Objective::binary) {
        std::vector<double> margins;
        margins.reserve(rows.size());
        for (const auto& r : rows) margins.push_back(predict_gbdt_scores(model, r)[0]);
        return logistic_loss(margins, class_labels);
    }
    std::vector<std::vector<double>> scores;
    scores.reserve(rows.size());
    for (const auto& r : rows) scores.push_back(predict_gbdt_scores(model, r));
    return softmax_loss(scores, class_labels);
}

double gbdt_loss(const GbdtModel& model, const std::vector<CountRow>& rows,
                 const std::vector<double>& targets) {
    check_config(rows.size() == targets.size(), "gbdt loss: size mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double d = predict_gbdt_value(model, rows[i]) - targets[i];
        total += d * d;
    }
    return total / static_cast<double>(rows.size());
}

GbdtGridResult fit_gbdt_grid(const std::vector<CountRow>& train_rows,
                             const std::vector<int>& train_labels,
                             const std::vector<CountRow>& val_rows,
                             const std::vector<int>& val_labels, Objective objective) {
    GbdtGridResult result;
    bool first = true;
    for (int depth : {3, 6}) {
        for (int rounds : {100, 300}) {
            for (double lr : {0.05, 0.1}) {
                GbdtHyperParams hp;
                hp.max_depth = depth;
                hp.n_rounds = rounds;
                hp.learning_rate = lr;
                GbdtModel model = fit_gbdt(train_rows, train_labels, objective, hp);
                const double val_loss = gbdt_loss(model, val_rows, val_labels);
                result.entries.push_back({hp, val_loss});
                if (first || val_loss < result.best_val_loss) {
                    first = false;
                    result.best = std::move(model);
                    result.best_hp = hp;
                    result.best_val_loss = val_loss;
                }
            }
        }
    }
    return result;
}

namespace {

json tree_to_json(const Tree& tree, int node) {
    const auto& n = tree[static_cast<std::size_t>(node)];
    if (n.is_leaf()) {
        return json{{"value", n.leaf_value}};
    }
    json j;
    j["feature"] = n.feature;
    j["threshold"] = n.threshold;
    j["left"] = tree_to_json(tree, n.left);
    j["right"] = tree_to_json(tree, n.right);
    return j;
}

int tree_from_json(const json& j, Tree& tree) {
    const int id = static_cast<int>(tree.size());
    tree.push_back({});
    if (j.contains("value")) {
        tree[static_cast<std::size_t>(id)].leaf_value = j.at("value").get<double>();
        return id;
    }
    const int left = tree_from_json(j.at("left"), tree);
    const int right = tree_from_json(j.at("right"), tree);
    auto& node = tree[static_cast<std::size_t>(id)];
    node.feature = j.at("feature").get<int>();
    node.threshold = j.at("threshold").get<double>();
    node.left = left;
    node.right = right;
    return id;
}

}  // namespace

std::string GbdtModel::to_json() const {
    json j;
    j["objective"] = objective_name(objective);
    j["n_features"] = n_features;
    j["shrinkage"] = shrinkage;
    j["init_scores"] = init_scores;
    j["rounds"] = json::array();
    for (const auto& round : rounds) {
        json r = json::array();
        for (const auto& tree : round) {
            r.push_back(tree_to_json(tree, 0));
        }
        j["rounds"].push_back(std::move(r));
    }
    return j.dump(2);
}

GbdtModel GbdtModel::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("gbdt model: invalid JSON: ") + e.what());
    }
    GbdtModel model;
    model.objective = objective_from_name(j.at("objective").get<std::string>());
    model.n_features = j.at("n_features").get<int>();
    model.shrinkage = j.at("shrinkage").get<double>();
    model.init_scores = j.at("init_scores").get<std::vector<double>>();
    for (const auto& r : j.at("rounds")) {
        std::vector<Tree> round;
        for (const auto& t : r) {
            Tree tree;
            tree_from_json(t, tree);
            round.push_back(std::move(tree));
        }
        model.rounds.push_back(std::move(round));
    }
    return model;
}

void GbdtModel::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    check(static_cast<bool>(out), "cannot write " + path);
    out << to_json() << "\n";
}

GbdtModel GbdtModel::load(const std::string& path) {
    std::ifstream in(path);
    check_config(static_cast<bool>(in), "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

}  // namespace structformer
