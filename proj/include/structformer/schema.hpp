#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "structformer/common.hpp"

namespace structformer {

// Index 0 of every categorical vocabulary is reserved for this sentinel;
// real categories start at index 1.
inline constexpr int kUnknownIndex = 0;
inline constexpr const char* kUnknownCategory = "<unknown>";

// Conventional name of the categorical feature that carries the event type.
// Its vocabulary doubles as the column layout of the count-based tabular view.
inline constexpr const char* kEventTypeFeature = "event_type";

struct CategoricalFeature {
    std::string name;
    std::vector<std::string> vocabulary;  // real categories; sentinel not listed

    // Vocabulary size including the sentinel slot.
    int table_size() const { return static_cast<int>(vocabulary.size()) + 1; }
};

class FeatureSchema {
public:
    FeatureSchema() = default;
    FeatureSchema(std::vector<CategoricalFeature> categorical,
                  std::vector<std::string> numerical,
                  int embedding_dim);

    const std::vector<CategoricalFeature>& categorical_features() const { return categorical_; }
    const std::vector<std::string>& numerical_features() const { return numerical_; }
    int embedding_dim() const { return embedding_dim_; }

    int k_cat() const { return static_cast<int>(categorical_.size()); }
    int k_num() const { return static_cast<int>(numerical_.size()); }

    // Encoded event width m = c * k_cat + k_num.
    int encoded_width() const { return embedding_dim_ * k_cat() + k_num(); }

    std::optional<int> categorical_index(const std::string& name) const;
    std::optional<int> numerical_index(const std::string& name) const;
    bool has_feature(const std::string& name) const;

    // Index into the feature's embedding table; unknown strings resolve to
    // the sentinel at index 0.
    int category_index(int feature, const std::string& category) const;

    // Vocabulary of the event_type feature; empty when the schema lacks one.
    const std::vector<std::string>& event_type_vocabulary() const;

    std::string to_json() const;
    static FeatureSchema from_json(const std::string& text);
    static FeatureSchema load(const std::string& path);
    void save(const std::string& path) const;

    // Stable content hash; checkpoints refuse to evaluate on a different schema.
    std::uint64_t hash() const;

private:
    void validate() const;
    void build_index();

    std::vector<CategoricalFeature> categorical_;
    std::vector<std::string> numerical_;
    int embedding_dim_ = 0;
    std::map<std::string, int> cat_index_;
    std::map<std::string, int> num_index_;
    std::vector<std::map<std::string, int>> vocab_index_;
};

struct EventRecord {
    std::int64_t timestamp = 0;  // milliseconds
    std::string event_type;
    std::map<std::string, std::string> categorical_values;  // absent key = missing
    std::map<std::string, real> numerical_values;           // absent key = missing

    // Throws ConfigError when a key names no schema feature or a numerical
    // value is non-finite.
    void validate(const FeatureSchema& schema) const;
};

struct Session {
    std::string user_id;
    std::string session_id;
    std::vector<EventRecord> events;  // sorted by timestamp
    int user_session_count = 1;      // label source; total sessions of this user

    void validate(const FeatureSchema& schema) const;
};

struct DatasetSplit {
    std::vector<Session> train;
    std::vector<Session> validation;
    double split_fraction = 0.9;
    std::int64_t split_seed = 0;
};

}  // namespace structformer
