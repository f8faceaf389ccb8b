#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "structformer/datagen.hpp"
#include "structformer/ingest.hpp"
#include "structformer/objectives.hpp"

using namespace structformer;

namespace {

GeneratorConfig base_config(int n_users, std::int64_t seed, double mix, double order) {
    GeneratorConfig cfg;
    cfg.n_users = n_users;
    cfg.seed = seed;
    cfg.engagement_mix_strength = mix;
    cfg.order_signal_strength = order;
    return cfg;
}

// Two-sample chi-squared homogeneity statistic over event-type histograms.
double chi_squared_statistic(const std::vector<std::int64_t>& a,
                             const std::vector<std::int64_t>& b) {
    const double total_a = static_cast<double>(std::accumulate(a.begin(), a.end(), std::int64_t(0)));
    const double total_b = static_cast<double>(std::accumulate(b.begin(), b.end(), std::int64_t(0)));
    const double total = total_a + total_b;
    double stat = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t) {
        const double col = static_cast<double>(a[t] + b[t]);
        if (col == 0) continue;
        const double ea = col * total_a / total;
        const double eb = col * total_b / total;
        stat += (a[t] - ea) * (a[t] - ea) / ea;
        stat += (b[t] - eb) * (b[t] - eb) / eb;
    }
    return stat;
}

}  // namespace

TEST_CASE("config validation rejects out-of-range knobs") {
    CHECK_THROWS_AS(base_config(1, 1, 0, 0).validate(), ConfigError);
    GeneratorConfig bad_alpha = base_config(10, 1, 0, 0);
    bad_alpha.pareto_shape = 1.0;
    CHECK_THROWS_AS(bad_alpha.validate(), ConfigError);
    GeneratorConfig bad_mix = base_config(10, 1, 1.5, 0);
    CHECK_THROWS_AS(bad_mix.validate(), ConfigError);
    GeneratorConfig bad_max = base_config(10, 1, 0, 0);
    bad_max.max_sessions = 3;
    CHECK_THROWS_AS(bad_max.validate(), ConfigError);
}

TEST_CASE("degenerate tail: alpha -> infinity collapses every count to 1") {
    GeneratorConfig cfg = base_config(500, 9, 0, 0);
    cfg.pareto_shape = 1e6;
    for (const auto& [user, count] : sample_session_counts(cfg)) {
        CHECK(count == 1);
    }
}

TEST_CASE("right skew: empirical median strictly below the mean at n=10000") {
    GeneratorConfig cfg = base_config(10000, 4, 0, 0);
    const auto counts = sample_session_counts(cfg);
    std::vector<int> values;
    values.reserve(counts.size());
    for (const auto& [user, count] : counts) values.push_back(count);
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) /
                        static_cast<double>(values.size());
    const double median = fit_quantiles(values, {0.5})[0];
    CHECK(median < mean);
    CHECK(*std::max_element(values.begin(), values.end()) <= cfg.max_sessions);
    CHECK(*std::min_element(values.begin(), values.end()) >= 1);
}

TEST_CASE("identical config twice gives byte-identical corpora") {
    const GeneratorConfig cfg = base_config(200, 31, 0.7, 0.6);
    const auto counts_a = sample_session_counts(cfg);
    const auto counts_b = sample_session_counts(cfg);
    CHECK(counts_a == counts_b);
    const auto text_a = serialize_sessions_to_string(generate_sessions(cfg, counts_a));
    const auto text_b = serialize_sessions_to_string(generate_sessions(cfg, counts_b));
    CHECK(text_a == text_b);
}

TEST_CASE("generated corpus satisfies every session invariant") {
    const GeneratorConfig cfg = base_config(150, 8, 1.0, 1.0);
    const FeatureSchema schema = default_schema(cfg);
    const auto sessions = generate_sessions(cfg, sample_session_counts(cfg));
    CHECK(sessions.size() == 150);
    for (const auto& s : sessions) {
        CHECK_NOTHROW(s.validate(schema));
    }
}

TEST_CASE("no planted signal: top and bottom quartile mixes are indistinguishable") {
    const GeneratorConfig cfg = base_config(10000, 42, 0.0, 0.0);
    const auto counts = sample_session_counts(cfg);
    const auto sessions = generate_sessions(cfg, counts);

    std::vector<int> values;
    for (const auto& [user, count] : counts) values.push_back(count);
    const auto quartiles = fit_quantiles(values, {0.25, 0.75});

    const auto& types = cfg.event_types;
    std::vector<std::int64_t> top(types.size(), 0), bottom(types.size(), 0);
    for (const auto& s : sessions) {
        const double c = s.user_session_count;
        std::vector<std::int64_t>* bucket = nullptr;
        if (c > quartiles[1]) bucket = &top;
        if (c <= quartiles[0]) bucket = &bottom;
        if (!bucket) continue;
        for (const auto& e : s.events) {
            const auto it = std::find(types.begin(), types.end(), e.event_type);
            REQUIRE(it != types.end());
            ++(*bucket)[static_cast<std::size_t>(it - types.begin())];
        }
    }
    // df = 7 for 8 event types; chi2_{0.99} = 18.475, so stat below the
    // critical value means p > 0.01.
    CHECK(chi_squared_statistic(top, bottom) < 18.475);
}

TEST_CASE("order signal 1: the signature bigram direction encodes the class") {
    const GeneratorConfig cfg = base_config(400, 12, 0.0, 1.0);
    const auto counts = sample_session_counts(cfg);
    const auto sessions = generate_sessions(cfg, counts);
    const auto [a, b] = signature_pair(cfg);

    std::vector<int> values;
    for (const auto& [user, count] : counts) values.push_back(count);
    const double median = fit_quantiles(values, {0.5})[0];

    for (const auto& s : sessions) {
        const bool high = s.user_session_count > median;
        bool found_forward = false, found_reverse = false;
        for (std::size_t i = 0; i + 1 < s.events.size(); ++i) {
            if (s.events[i].event_type == a && s.events[i + 1].event_type == b) found_forward = true;
            if (s.events[i].event_type == b && s.events[i + 1].event_type == a) found_reverse = true;
        }
        if (high) {
            CHECK(found_forward);
        } else {
            CHECK(found_reverse);
        }
    }
}

TEST_CASE("mix signal 1: bonus-event count correlates positively with engagement") {
    const GeneratorConfig cfg = base_config(4000, 77, 1.0, 0.0);
    const auto counts = sample_session_counts(cfg);
    const auto sessions = generate_sessions(cfg, counts);

    std::vector<double> bonus_counts, labels;
    for (const auto& s : sessions) {
        double bonus = 0;
        for (const auto& e : s.events) {
            if (e.event_type == "bonus") ++bonus;
        }
        bonus_counts.push_back(bonus);
        labels.push_back(static_cast<double>(s.user_session_count));
    }
    const auto n = static_cast<double>(bonus_counts.size());
    const double mean_x = std::accumulate(bonus_counts.begin(), bonus_counts.end(), 0.0) / n;
    const double mean_y = std::accumulate(labels.begin(), labels.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < bonus_counts.size(); ++i) {
        sxy += (bonus_counts[i] - mean_x) * (labels[i] - mean_y);
        sxx += (bonus_counts[i] - mean_x) * (bonus_counts[i] - mean_x);
        syy += (labels[i] - mean_y) * (labels[i] - mean_y);
    }
    const double pearson = sxy / std::sqrt(sxx * syy);
    INFO("pearson = ", pearson);
    CHECK(pearson > 0.1);
}

TEST_CASE("order-only corpora keep event-type counts class-independent") {
    const GeneratorConfig cfg = base_config(10000, 5, 0.0, 1.0);
    const auto counts = sample_session_counts(cfg);
    const auto sessions = generate_sessions(cfg, counts);

    std::vector<int> values;
    for (const auto& [user, count] : counts) values.push_back(count);
    const double median = fit_quantiles(values, {0.5})[0];

    std::vector<std::int64_t> high(cfg.event_types.size(), 0), low(cfg.event_types.size(), 0);
    std::int64_t n_high = 0, n_low = 0;
    for (const auto& s : sessions) {
        const bool is_high = s.user_session_count > median;
        (is_high ? n_high : n_low) += 1;
        auto& bucket = is_high ? high : low;
        for (const auto& e : s.events) {
            const auto it = std::find(cfg.event_types.begin(), cfg.event_types.end(), e.event_type);
            ++bucket[static_cast<std::size_t>(it - cfg.event_types.begin())];
        }
    }
    CHECK(chi_squared_statistic(high, low) < 18.475);
}

TEST_CASE("default schema matches the documented layout") {
    const GeneratorConfig cfg = base_config(10, 1, 0, 0);
    const FeatureSchema schema = default_schema(cfg);
    CHECK(schema.k_cat() == 3);
    CHECK(schema.k_num() == 2);
    CHECK(schema.embedding_dim() == 32);
    CHECK(schema.encoded_width() == 32 * 3 + 2);
    CHECK(schema.event_type_vocabulary() == cfg.event_types);
}
