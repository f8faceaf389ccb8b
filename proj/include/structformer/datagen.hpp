#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "structformer/schema.hpp"

namespace structformer {

// Synthetic behavior corpus: long-tailed per-user session counts plus two
// independently switchable engagement signals.
//   engagement_mix_strength: shifts the event-type mix and per-event feature
//     values with the user's count percentile (count-visible signal).
//   order_signal_strength: plants a signature ordered bigram whose direction
//     encodes high vs low engagement while leaving event-type counts
//     class-independent (order-only signal, invisible to count features).
struct GeneratorConfig {
    int n_users = 1000;
    double pareto_shape = 1.5;   // tail exponent, > 1
    double pareto_scale = 16.0;  // tail spread; keeps quantile tie mass small
    int max_sessions = 256;
    std::vector<std::string> event_types = default_event_types();
    double engagement_mix_strength = 1.0;
    double order_signal_strength = 1.0;
    int min_events = 4;
    int max_events = 14;
    std::int64_t seed = 1;

    static std::vector<std::string> default_event_types();
    void validate() const;

    std::string to_json() const;
    static GeneratorConfig from_json(const std::string& text);
};

// The two event types whose ordered adjacency carries the planted order
// signal (the last two of the configured list). Their base frequency is
// identical in the low- and high-engagement mixes.
std::pair<std::string, std::string> signature_pair(const GeneratorConfig& cfg);

// Schema the generated corpus conforms to: event_type plus two more
// categorical features and two numerical features, embedding_dim 32.
FeatureSchema default_schema(const GeneratorConfig& cfg);

// Per-user session counts from a discretized shifted-Pareto tail on
// [1, max_sessions]; deterministic under cfg.seed.
std::map<std::string, int> sample_session_counts(const GeneratorConfig& cfg);

// One recorded session per user; labels come from the counts map.
std::vector<Session> generate_sessions(const GeneratorConfig& cfg,
                                       const std::map<std::string, int>& counts);

// Writes schema.json, events.jsonl and the ground-truth counts.json sidecar.
struct CorpusStats {
    int n_users = 0;
    std::int64_t n_events = 0;
};
CorpusStats write_corpus(const std::string& dir, const GeneratorConfig& cfg);

}  // namespace structformer
