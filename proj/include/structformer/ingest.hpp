#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "structformer/schema.hpp"

namespace structformer {

struct ParseResult {
    std::vector<Session> sessions;
    // Category strings that resolved to the unknown sentinel.
    std::int64_t unknown_category_warnings = 0;
    std::int64_t lines_parsed = 0;
};

// Parses a JSONL event log (one event object per line) and groups events
// into sessions keyed by (user_id, session_id), sorted by timestamp.
// user_session_count is the number of sessions observed per user; a ground
// truth sidecar can override it via apply_session_counts.
ParseResult parse_event_log(const std::string& path, const FeatureSchema& schema);

// Writes sessions back to the JSONL event-log format (inverse of parsing).
void serialize_sessions(const std::string& path, const std::vector<Session>& sessions);
std::string serialize_sessions_to_string(const std::vector<Session>& sessions);

// Ground-truth session counts sidecar: JSON object user_id -> count.
std::map<std::string, int> load_session_counts(const std::string& path);
void save_session_counts(const std::string& path, const std::map<std::string, int>& counts);
void apply_session_counts(std::vector<Session>& sessions, const std::map<std::string, int>& counts);

// Deterministic user-disjoint split. The label derives from a per-user
// statistic, so splitting by session would leak it.
DatasetSplit split_by_user(const std::vector<Session>& sessions, double fraction,
                           std::int64_t seed);

// Convenience loader for a corpus directory (events.jsonl, counts.json,
// schema.json as written by the generator / gen-data command).
struct Corpus {
    FeatureSchema schema;
    std::vector<Session> sessions;
    std::int64_t unknown_category_warnings = 0;
};
Corpus load_corpus(const std::string& dir);

}  // namespace structformer
