#include "structformer/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "structformer/ingest.hpp"
#include "structformer/rng.hpp"

namespace structformer {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr double kMixSharpness = 2.0;
constexpr double kSignatureWeight = 0.08;
// The signature bigram lands within the first few positions; adjacency
// against absolute positional embeddings stays learnable at desk scale.
constexpr int kSignatureWindow = 6;

// Engagement score of a non-signature event type: evenly spaced in
// [-0.5, 0.5] by list position, so later types mark higher engagement.
double type_score(int index, int n_scored) {
    if (n_scored <= 1) return 0.0;
    return static_cast<double>(index) / static_cast<double>(n_scored - 1) - 0.5;
}

std::vector<double> mix_weights(int n_types, double w) {
    // Signature types (last two) keep a fixed small weight in both mixes so
    // the order signal stays invisible to count features.
    const int n_scored = n_types - 2;
    std::vector<double> weights(static_cast<std::size_t>(n_types));
    for (int t = 0; t < n_scored; ++t) {
        const double s = type_score(t, n_scored);
        const double low = std::exp(-kMixSharpness * s);
        const double high = std::exp(kMixSharpness * s);
        weights[static_cast<std::size_t>(t)] = (1.0 - w) * low + w * high;
    }
    weights[static_cast<std::size_t>(n_scored)] = kSignatureWeight;
    weights[static_cast<std::size_t>(n_scored + 1)] = kSignatureWeight;
    return weights;
}

std::string user_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "u%06d", index);
    return buf;
}

double interp_median(std::vector<int> counts) {
    std::sort(counts.begin(), counts.end());
    const std::size_t n = counts.size();
    const double h = static_cast<double>(n - 1) * 0.5;
    const auto lo = static_cast<std::size_t>(h);
    const double frac = h - static_cast<double>(lo);
    const double a = counts[lo];
    const double b = counts[std::min(lo + 1, n - 1)];
    return a + frac * (b - a);
}

}  // namespace

std::vector<std::string> GeneratorConfig::default_event_types() {
    return {"session_start", "level_start", "level_end", "ad_view",
            "purchase",      "bonus",       "achievement", "reward"};
}

void GeneratorConfig::validate() const {
    check_config(n_users >= 2, "generator: n_users must be >= 2");
    check_config(pareto_shape > 1.0, "generator: pareto_shape must be > 1");
    check_config(pareto_scale > 0.0, "generator: pareto_scale must be > 0");
    check_config(max_sessions >= 4, "generator: max_sessions must be >= 4");
    check_config(event_types.size() >= 4, "generator: need at least 4 event types");
    check_config(engagement_mix_strength >= 0.0 && engagement_mix_strength <= 1.0,
                 "generator: engagement_mix_strength must be in [0, 1]");
    check_config(order_signal_strength >= 0.0 && order_signal_strength <= 1.0,
                 "generator: order_signal_strength must be in [0, 1]");
    check_config(min_events >= 1 && max_events >= min_events,
                 "generator: need 1 <= min_events <= max_events");
}

std::string GeneratorConfig::to_json() const {
    json j;
    j["n_users"] = n_users;
    j["pareto_shape"] = pareto_shape;
    j["pareto_scale"] = pareto_scale;
    j["max_sessions"] = max_sessions;
    j["event_types"] = event_types;
    j["engagement_mix_strength"] = engagement_mix_strength;
    j["order_signal_strength"] = order_signal_strength;
    j["min_events"] = min_events;
    j["max_events"] = max_events;
    j["seed"] = seed;
    return j.dump(2);
}

GeneratorConfig GeneratorConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("generator config: invalid JSON: ") + e.what());
    }
    GeneratorConfig cfg;
    try {
        if (j.contains("n_users")) cfg.n_users = j.at("n_users").get<int>();
        if (j.contains("pareto_shape")) cfg.pareto_shape = j.at("pareto_shape").get<double>();
        if (j.contains("pareto_scale")) cfg.pareto_scale = j.at("pareto_scale").get<double>();
        if (j.contains("max_sessions")) cfg.max_sessions = j.at("max_sessions").get<int>();
        if (j.contains("event_types")) cfg.event_types = j.at("event_types").get<std::vector<std::string>>();
        if (j.contains("engagement_mix_strength"))
            cfg.engagement_mix_strength = j.at("engagement_mix_strength").get<double>();
        if (j.contains("order_signal_strength"))
            cfg.order_signal_strength = j.at("order_signal_strength").get<double>();
        if (j.contains("min_events")) cfg.min_events = j.at("min_events").get<int>();
        if (j.contains("max_events")) cfg.max_events = j.at("max_events").get<int>();
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::int64_t>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("generator config: mistyped field: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::pair<std::string, std::string> signature_pair(const GeneratorConfig& cfg) {
    const auto n = cfg.event_types.size();
    return {cfg.event_types[n - 2], cfg.event_types[n - 1]};
}

FeatureSchema default_schema(const GeneratorConfig& cfg) {
    std::vector<CategoricalFeature> cats;
    cats.push_back({kEventTypeFeature, cfg.event_types});
    cats.push_back({"difficulty", {"easy", "normal", "hard"}});
    cats.push_back({"screen", {"home", "shop", "level", "profile"}});
    return FeatureSchema(std::move(cats), {"duration", "score"}, 32);
}

std::map<std::string, int> sample_session_counts(const GeneratorConfig& cfg) {
    cfg.validate();
    Rng rng(Rng::mix(static_cast<std::uint64_t>(cfg.seed), 0x5e55104ull));
    std::map<std::string, int> counts;
    for (int i = 0; i < cfg.n_users; ++i) {
        const double u = rng.uniform01();
        const double tail = std::pow(1.0 - u, -1.0 / cfg.pareto_shape) - 1.0;
        auto count = static_cast<std::int64_t>(1 + std::llround(cfg.pareto_scale * tail));
        count = std::clamp<std::int64_t>(count, 1, cfg.max_sessions);
        counts[user_name(i)] = static_cast<int>(count);
    }
    return counts;
}

std::vector<Session> generate_sessions(const GeneratorConfig& cfg,
                                       const std::map<std::string, int>& counts) {
    cfg.validate();
    check_config(static_cast<int>(counts.size()) == cfg.n_users,
                 "generator: counts map does not match n_users");

    // Mid-rank percentile of each user's count among all users.
    std::vector<int> all_counts;
    all_counts.reserve(counts.size());
    for (const auto& [user, count] : counts) all_counts.push_back(count);
    std::vector<int> sorted_counts = all_counts;
    std::sort(sorted_counts.begin(), sorted_counts.end());
    auto percentile = [&](int c) {
        const auto lo = std::lower_bound(sorted_counts.begin(), sorted_counts.end(), c);
        const auto hi = std::upper_bound(sorted_counts.begin(), sorted_counts.end(), c);
        const double less = static_cast<double>(lo - sorted_counts.begin());
        const double ties = static_cast<double>(hi - lo);
        return (less + 0.5 * ties) / static_cast<double>(sorted_counts.size());
    };
    const double median = interp_median(all_counts);

    const int n_types = static_cast<int>(cfg.event_types.size());
    const int sig_a = n_types - 2;
    const int sig_b = n_types - 1;

    std::vector<Session> sessions;
    sessions.reserve(counts.size());
    int user_index = 0;
    for (const auto& [user, count] : counts) {
        Rng rng(Rng::mix(static_cast<std::uint64_t>(cfg.seed),
                         0xc0de0000ull + static_cast<std::uint64_t>(user_index)));
        const double w = cfg.engagement_mix_strength * percentile(count);
        const auto weights = mix_weights(n_types, w);

        const int n_base = static_cast<int>(rng.uniform_int(cfg.min_events, cfg.max_events));
        std::vector<int> types(static_cast<std::size_t>(n_base));
        for (auto& t : types) t = static_cast<int>(rng.categorical(weights));

        // The order signal: one signature bigram whose direction encodes the
        // engagement class; both classes receive the same event multiset.
        if (rng.bernoulli(cfg.order_signal_strength)) {
            const bool high = static_cast<double>(count) > median;
            const auto pos = static_cast<std::size_t>(
                rng.uniform_int(0, std::min(n_base, kSignatureWindow)));
            types.insert(types.begin() + static_cast<std::ptrdiff_t>(pos),
                         high ? std::initializer_list<int>{sig_a, sig_b}
                              : std::initializer_list<int>{sig_b, sig_a});
        }

        Session s;
        s.user_id = user;
        s.session_id = "s0";
        s.user_session_count = count;
        std::int64_t ts = 1700000000000ll + static_cast<std::int64_t>(user_index) * 10000000ll;
        for (int t : types) {
            EventRecord e;
            ts += rng.uniform_int(500, 60000);
            e.timestamp = ts;
            e.event_type = cfg.event_types[static_cast<std::size_t>(t)];
            e.categorical_values[kEventTypeFeature] = e.event_type;
            if (rng.bernoulli(0.75)) {
                const std::vector<double> diff_w = {1.6 - 0.9 * w, 1.0, 0.5 + 1.1 * w};
                static const char* kDifficulty[] = {"easy", "normal", "hard"};
                e.categorical_values["difficulty"] = kDifficulty[rng.categorical(diff_w)];
            }
            if (rng.bernoulli(0.8)) {
                static const char* kScreen[] = {"home", "shop", "level", "profile"};
                e.categorical_values["screen"] = kScreen[rng.uniform_int(0, 3)];
            }
            if (rng.bernoulli(0.85)) {
                e.numerical_values["duration"] = static_cast<real>(std::exp(rng.normal(3.4, 0.6)));
            }
            if (rng.bernoulli(0.6)) {
                e.numerical_values["score"] = static_cast<real>(rng.normal(5.0 + 4.0 * w, 1.5));
            }
            s.events.push_back(std::move(e));
        }
        sessions.push_back(std::move(s));
        ++user_index;
    }
    return sessions;
}

CorpusStats write_corpus(const std::string& dir, const GeneratorConfig& cfg) {
    cfg.validate();
    fs::create_directories(dir);
    const FeatureSchema schema = default_schema(cfg);
    schema.save((fs::path(dir) / "schema.json").string());
    const auto counts = sample_session_counts(cfg);
    const auto sessions = generate_sessions(cfg, counts);
    serialize_sessions((fs::path(dir) / "events.jsonl").string(), sessions);
    save_session_counts((fs::path(dir) / "counts.json").string(), counts);
    CorpusStats stats;
    stats.n_users = cfg.n_users;
    for (const auto& s : sessions) {
        stats.n_events += static_cast<std::int64_t>(s.events.size());
    }
    return stats;
}

}  // namespace structformer
