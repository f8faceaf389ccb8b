#pragma once

// Shared builders for schemas, sessions and miniature models.

#include <string>
#include <vector>

#include "structformer/datagen.hpp"
#include "structformer/model.hpp"
#include "structformer/trainer.hpp"

namespace testsupport {

using namespace structformer;

inline FeatureSchema tiny_schema(int embedding_dim = 3) {
    std::vector<CategoricalFeature> cats;
    cats.push_back({kEventTypeFeature, {"click", "view", "buy"}});
    cats.push_back({"kind", {"alpha", "beta"}});
    return FeatureSchema(std::move(cats), {"x", "y"}, embedding_dim);
}

inline EventRecord make_event(std::int64_t ts, const std::string& type,
                              std::map<std::string, std::string> cats = {},
                              std::map<std::string, real> nums = {}) {
    EventRecord e;
    e.timestamp = ts;
    e.event_type = type;
    e.categorical_values = std::move(cats);
    e.categorical_values[kEventTypeFeature] = type;
    e.numerical_values = std::move(nums);
    return e;
}

inline Session make_session(const std::string& user, std::vector<EventRecord> events,
                            int count = 1) {
    Session s;
    s.user_id = user;
    s.session_id = "s0";
    s.events = std::move(events);
    s.user_session_count = count;
    return s;
}

inline Session random_session(Rng& rng, const FeatureSchema& schema, int n_events,
                              const std::string& user = "u0", int count = 1) {
    static const char* kinds[] = {"alpha", "beta"};
    const auto& types = schema.event_type_vocabulary();
    std::vector<EventRecord> events;
    std::int64_t ts = 1000;
    for (int i = 0; i < n_events; ++i) {
        ts += rng.uniform_int(1, 500);
        EventRecord e;
        e.timestamp = ts;
        e.event_type = types[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(types.size()) - 1))];
        e.categorical_values[kEventTypeFeature] = e.event_type;
        if (rng.bernoulli(0.7)) {
            e.categorical_values["kind"] = kinds[rng.uniform_int(0, 1)];
        }
        if (rng.bernoulli(0.8)) {
            e.numerical_values["x"] = static_cast<real>(rng.normal());
        }
        if (rng.bernoulli(0.5)) {
            e.numerical_values["y"] = static_cast<real>(rng.normal());
        }
        events.push_back(std::move(e));
    }
    return make_session(user, std::move(events), count);
}

inline ModelConfig mini_transformer_config(Objective objective = Objective::binary) {
    ModelConfig cfg;
    cfg.backbone.kind = BackboneKind::transformer;
    cfg.backbone.name = "mini";
    cfg.backbone.hidden_dim = 8;
    cfg.backbone.layers = 2;
    cfg.backbone.heads = 2;
    cfg.objective = objective;
    cfg.max_len = 16;
    return cfg;
}

// Small generated corpus for integration-style tests.
inline std::vector<Session> small_corpus(int n_users, std::uint64_t seed, double mix = 1.0,
                                         double order = 1.0,
                                         FeatureSchema* schema_out = nullptr) {
    GeneratorConfig cfg;
    cfg.n_users = n_users;
    cfg.seed = static_cast<std::int64_t>(seed);
    cfg.engagement_mix_strength = mix;
    cfg.order_signal_strength = order;
    if (schema_out) *schema_out = default_schema(cfg);
    auto counts = sample_session_counts(cfg);
    return generate_sessions(cfg, counts);
}

}  // namespace testsupport
