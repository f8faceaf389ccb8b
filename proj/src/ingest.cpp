#include "structformer/ingest.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "structformer/rng.hpp"

namespace structformer {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

EventRecord parse_event_line(const json& j, std::size_t line_no, const FeatureSchema& schema,
                             std::int64_t& unknown_warnings) {
    EventRecord event;
    if (!j.contains("ts") || !j.at("ts").is_number_integer()) {
        throw ParseError(line_no, "field 'ts' must be an integer timestamp");
    }
    event.timestamp = j.at("ts").get<std::int64_t>();
    if (!j.contains("event_type") || !j.at("event_type").is_string()) {
        throw ParseError(line_no, "field 'event_type' must be a string");
    }
    event.event_type = j.at("event_type").get<std::string>();

    // The event type participates in tokenization as an ordinary categorical
    // feature when the schema declares one under the conventional name.
    if (auto idx = schema.categorical_index(kEventTypeFeature)) {
        event.categorical_values[kEventTypeFeature] = event.event_type;
        if (schema.category_index(*idx, event.event_type) == kUnknownIndex) {
            ++unknown_warnings;
        }
    }

    if (j.contains("cat")) {
        if (!j.at("cat").is_object()) {
            throw ParseError(line_no, "field 'cat' must be an object");
        }
        for (const auto& [name, value] : j.at("cat").items()) {
            if (!value.is_string()) {
                throw ParseError(line_no, "categorical feature '" + name + "' must be a string");
            }
            auto idx = schema.categorical_index(name);
            if (!idx) {
                throw ParseError(line_no, "'" + name + "' is not a categorical feature of the schema");
            }
            if (schema.category_index(*idx, value.get<std::string>()) == kUnknownIndex) {
                ++unknown_warnings;
            }
            event.categorical_values[name] = value.get<std::string>();
        }
    }
    if (j.contains("num")) {
        if (!j.at("num").is_object()) {
            throw ParseError(line_no, "field 'num' must be an object");
        }
        for (const auto& [name, value] : j.at("num").items()) {
            if (!value.is_number()) {
                throw ParseError(line_no, "numerical feature '" + name + "' must be a number");
            }
            if (!schema.numerical_index(name)) {
                throw ParseError(line_no, "'" + name + "' is not a numerical feature of the schema");
            }
            const double x = value.get<double>();
            if (!is_finite(x)) {
                throw ParseError(line_no, "numerical feature '" + name + "' must be finite");
            }
            event.numerical_values[name] = static_cast<real>(x);
        }
    }
    return event;
}

}  // namespace

ParseResult parse_event_log(const std::string& path, const FeatureSchema& schema) {
    std::ifstream in(path);
    check_config(static_cast<bool>(in), "event log: cannot open " + path);

    ParseResult result;
    std::map<std::pair<std::string, std::string>, std::vector<EventRecord>> groups;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
        }
        if (!j.is_object()) {
            throw ParseError(line_no, "expected a JSON object");
        }
        if (!j.contains("user_id") || !j.at("user_id").is_string()) {
            throw ParseError(line_no, "field 'user_id' must be a string");
        }
        if (!j.contains("session_id") || !j.at("session_id").is_string()) {
            throw ParseError(line_no, "field 'session_id' must be a string");
        }
        EventRecord event = parse_event_line(j, line_no, schema, result.unknown_category_warnings);
        groups[{j.at("user_id").get<std::string>(), j.at("session_id").get<std::string>()}]
            .push_back(std::move(event));
        ++result.lines_parsed;
    }

    std::map<std::string, int> per_user;
    for (auto& [key, events] : groups) {
        std::stable_sort(events.begin(), events.end(),
                         [](const EventRecord& a, const EventRecord& b) { return a.timestamp < b.timestamp; });
        Session s;
        s.user_id = key.first;
        s.session_id = key.second;
        s.events = std::move(events);
        result.sessions.push_back(std::move(s));
        ++per_user[key.first];
    }
    for (auto& s : result.sessions) {
        s.user_session_count = per_user[s.user_id];
        s.validate(schema);
    }
    return result;
}

std::string serialize_sessions_to_string(const std::vector<Session>& sessions) {
    std::ostringstream out;
    for (const auto& s : sessions) {
        for (const auto& e : s.events) {
            json j;
            j["user_id"] = s.user_id;
            j["session_id"] = s.session_id;
            j["ts"] = e.timestamp;
            j["event_type"] = e.event_type;
            json cat = json::object();
            for (const auto& [name, value] : e.categorical_values) {
                if (name == kEventTypeFeature) continue;  // carried by the top-level field
                cat[name] = value;
            }
            json num = json::object();
            for (const auto& [name, value] : e.numerical_values) {
                num[name] = static_cast<double>(value);
            }
            j["cat"] = cat;
            j["num"] = num;
            out << j.dump() << "\n";
        }
    }
    return out.str();
}

void serialize_sessions(const std::string& path, const std::vector<Session>& sessions) {
    std::ofstream out(path, std::ios::trunc);
    check(static_cast<bool>(out), "cannot write " + path);
    out << serialize_sessions_to_string(sessions);
}

std::map<std::string, int> load_session_counts(const std::string& path) {
    std::ifstream in(path);
    check_config(static_cast<bool>(in), "session counts: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("session counts: invalid JSON: ") + e.what());
    }
    std::map<std::string, int> counts;
    for (const auto& [user, count] : j.items()) {
        check_config(count.is_number_integer() && count.get<int>() >= 1,
                     "session counts: count for '" + user + "' must be a positive integer");
        counts[user] = count.get<int>();
    }
    return counts;
}

void save_session_counts(const std::string& path, const std::map<std::string, int>& counts) {
    json j = json::object();
    for (const auto& [user, count] : counts) {
        j[user] = count;
    }
    std::ofstream out(path, std::ios::trunc);
    check(static_cast<bool>(out), "cannot write " + path);
    out << j.dump(2) << "\n";
}

void apply_session_counts(std::vector<Session>& sessions, const std::map<std::string, int>& counts) {
    for (auto& s : sessions) {
        auto it = counts.find(s.user_id);
        check_config(it != counts.end(), "session counts: no entry for user '" + s.user_id + "'");
        s.user_session_count = it->second;
    }
}

DatasetSplit split_by_user(const std::vector<Session>& sessions, double fraction,
                           std::int64_t seed) {
    check_config(fraction > 0.0 && fraction < 1.0, "split: fraction must be in (0, 1)");
    std::set<std::string> user_set;
    for (const auto& s : sessions) {
        user_set.insert(s.user_id);
    }
    check_config(user_set.size() >= 2, "split: need at least 2 distinct users, got " +
                                           std::to_string(user_set.size()));

    std::vector<std::string> users(user_set.begin(), user_set.end());
    Rng rng(static_cast<std::uint64_t>(seed));
    rng.shuffle(users);

    const auto n = static_cast<std::int64_t>(users.size());
    auto n_train = static_cast<std::int64_t>(std::llround(fraction * static_cast<double>(n)));
    n_train = std::clamp<std::int64_t>(n_train, 1, n - 1);

    std::set<std::string> train_users(users.begin(), users.begin() + n_train);
    DatasetSplit split;
    split.split_fraction = fraction;
    split.split_seed = seed;
    for (const auto& s : sessions) {
        if (train_users.count(s.user_id)) {
            split.train.push_back(s);
        } else {
            split.validation.push_back(s);
        }
    }
    return split;
}

Corpus load_corpus(const std::string& dir) {
    Corpus corpus{FeatureSchema::load((fs::path(dir) / "schema.json").string()), {}, 0};
    ParseResult parsed = parse_event_log((fs::path(dir) / "events.jsonl").string(), corpus.schema);
    corpus.sessions = std::move(parsed.sessions);
    corpus.unknown_category_warnings = parsed.unknown_category_warnings;
    const auto counts_path = fs::path(dir) / "counts.json";
    if (fs::exists(counts_path)) {
        apply_session_counts(corpus.sessions, load_session_counts(counts_path.string()));
    }
    return corpus;
}

}  // namespace structformer
