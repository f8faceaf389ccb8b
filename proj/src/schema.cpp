#include "structformer/schema.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace structformer {

using json = nlohmann::ordered_json;

FeatureSchema::FeatureSchema(std::vector<CategoricalFeature> categorical,
                             std::vector<std::string> numerical,
                             int embedding_dim)
    : categorical_(std::move(categorical)),
      numerical_(std::move(numerical)),
      embedding_dim_(embedding_dim) {
    validate();
    build_index();
}

void FeatureSchema::validate() const {
    check_config(embedding_dim_ > 0, "schema: embedding_dim must be positive");
    check_config(k_cat() + k_num() >= 1, "schema: at least one feature is required");
    std::set<std::string> names;
    for (const auto& f : categorical_) {
        check_config(!f.name.empty(), "schema: empty categorical feature name");
        check_config(names.insert(f.name).second, "schema: duplicate feature name '" + f.name + "'");
        std::set<std::string> vocab;
        for (const auto& v : f.vocabulary) {
            check_config(vocab.insert(v).second,
                         "schema: duplicate category '" + v + "' in feature '" + f.name + "'");
            check_config(v != kUnknownCategory,
                         "schema: category name '" + v + "' collides with the unknown sentinel");
        }
    }
    for (const auto& n : numerical_) {
        check_config(!n.empty(), "schema: empty numerical feature name");
        check_config(names.insert(n).second, "schema: duplicate feature name '" + n + "'");
    }
    check_config(encoded_width() > 0, "schema: encoded width must be positive");
}

void FeatureSchema::build_index() {
    cat_index_.clear();
    num_index_.clear();
    vocab_index_.clear();
    for (int i = 0; i < k_cat(); ++i) {
        cat_index_[categorical_[static_cast<std::size_t>(i)].name] = i;
        std::map<std::string, int> vocab;
        const auto& words = categorical_[static_cast<std::size_t>(i)].vocabulary;
        for (int j = 0; j < static_cast<int>(words.size()); ++j) {
            vocab[words[static_cast<std::size_t>(j)]] = j + 1;  // 0 is the sentinel
        }
        vocab_index_.push_back(std::move(vocab));
    }
    for (int i = 0; i < k_num(); ++i) {
        num_index_[numerical_[static_cast<std::size_t>(i)]] = i;
    }
}

std::optional<int> FeatureSchema::categorical_index(const std::string& name) const {
    auto it = cat_index_.find(name);
    if (it == cat_index_.end()) return std::nullopt;
    return it->second;
}

std::optional<int> FeatureSchema::numerical_index(const std::string& name) const {
    auto it = num_index_.find(name);
    if (it == num_index_.end()) return std::nullopt;
    return it->second;
}

bool FeatureSchema::has_feature(const std::string& name) const {
    return cat_index_.count(name) > 0 || num_index_.count(name) > 0;
}

int FeatureSchema::category_index(int feature, const std::string& category) const {
    const auto& vocab = vocab_index_[static_cast<std::size_t>(feature)];
    auto it = vocab.find(category);
    return it == vocab.end() ? kUnknownIndex : it->second;
}

const std::vector<std::string>& FeatureSchema::event_type_vocabulary() const {
    static const std::vector<std::string> empty;
    auto idx = categorical_index(kEventTypeFeature);
    if (!idx) return empty;
    return categorical_[static_cast<std::size_t>(*idx)].vocabulary;
}

std::string FeatureSchema::to_json() const {
    json j;
    j["categorical_features"] = json::array();
    for (const auto& f : categorical_) {
        j["categorical_features"].push_back({{"name", f.name}, {"vocabulary", f.vocabulary}});
    }
    j["numerical_features"] = numerical_;
    j["embedding_dim"] = embedding_dim_;
    return j.dump(2);
}

FeatureSchema FeatureSchema::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("schema: invalid JSON: ") + e.what());
    }
    try {
        std::vector<CategoricalFeature> cats;
        for (const auto& f : j.at("categorical_features")) {
            CategoricalFeature cf;
            cf.name = f.at("name").get<std::string>();
            cf.vocabulary = f.at("vocabulary").get<std::vector<std::string>>();
            cats.push_back(std::move(cf));
        }
        auto nums = j.at("numerical_features").get<std::vector<std::string>>();
        const int c = j.at("embedding_dim").get<int>();
        return FeatureSchema(std::move(cats), std::move(nums), c);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("schema: missing or mistyped field: ") + e.what());
    }
}

FeatureSchema FeatureSchema::load(const std::string& path) {
    std::ifstream in(path);
    check_config(static_cast<bool>(in), "schema: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

void FeatureSchema::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    check(static_cast<bool>(out), "schema: cannot write " + path);
    out << to_json() << "\n";
}

std::uint64_t FeatureSchema::hash() const {
    return fnv1a64(to_json());
}

void EventRecord::validate(const FeatureSchema& schema) const {
    for (const auto& [name, value] : categorical_values) {
        check_config(schema.categorical_index(name).has_value(),
                     "event: '" + name + "' is not a categorical feature of the schema");
        (void)value;
    }
    for (const auto& [name, value] : numerical_values) {
        check_config(schema.numerical_index(name).has_value(),
                     "event: '" + name + "' is not a numerical feature of the schema");
        check_config(is_finite(value), "event: non-finite value for feature '" + name + "'");
    }
}

void Session::validate(const FeatureSchema& schema) const {
    check_config(!events.empty(), "session " + user_id + "/" + session_id + ": no events");
    check_config(user_session_count >= 1,
                 "session " + user_id + "/" + session_id + ": user_session_count must be >= 1");
    std::int64_t prev = events.front().timestamp;
    for (const auto& e : events) {
        check_config(e.timestamp >= prev,
                     "session " + user_id + "/" + session_id + ": events out of timestamp order");
        prev = e.timestamp;
        e.validate(schema);
    }
}

}  // namespace structformer
