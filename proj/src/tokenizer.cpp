#include "structformer/tokenizer.hpp"

#include <algorithm>
#include <cmath>

namespace structformer {

NumericScaler NumericScaler::fit(const std::vector<Session>& train, const FeatureSchema& schema) {
    const int k = schema.k_num();
    std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
    std::vector<double> sum_sq(static_cast<std::size_t>(k), 0.0);
    std::vector<std::int64_t> n(static_cast<std::size_t>(k), 0);
    for (const auto& s : train) {
        for (const auto& e : s.events) {
            for (const auto& [name, value] : e.numerical_values) {
                if (auto idx = schema.numerical_index(name)) {
                    const auto j = static_cast<std::size_t>(*idx);
                    sum[j] += static_cast<double>(value);
                    sum_sq[j] += static_cast<double>(value) * static_cast<double>(value);
                    ++n[j];
                }
            }
        }
    }
    NumericScaler scaler;
    scaler.mean.resize(static_cast<std::size_t>(k));
    scaler.stddev.resize(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
        const auto i = static_cast<std::size_t>(j);
        if (n[i] == 0) {
            scaler.mean[i] = real(0);
            scaler.stddev[i] = real(1);
            ++scaler.empty_feature_warnings;
            continue;
        }
        const double mean = sum[i] / static_cast<double>(n[i]);
        const double var = std::max(0.0, sum_sq[i] / static_cast<double>(n[i]) - mean * mean);
        scaler.mean[i] = static_cast<real>(mean);
        scaler.stddev[i] = std::max(static_cast<real>(std::sqrt(var)), real(1e-6));
    }
    return scaler;
}

NumericScaler NumericScaler::identity(const FeatureSchema& schema) {
    NumericScaler scaler;
    scaler.mean.assign(static_cast<std::size_t>(schema.k_num()), real(0));
    scaler.stddev.assign(static_cast<std::size_t>(schema.k_num()), real(1));
    return scaler;
}

CompiledEvent compile_event(const EventRecord& event, const FeatureSchema& schema,
                            const NumericScaler& scaler) {
    CompiledEvent out;
    out.cat_index.assign(static_cast<std::size_t>(schema.k_cat()), -1);
    out.num_value.assign(static_cast<std::size_t>(schema.k_num()), real(0));
    for (const auto& [name, value] : event.categorical_values) {
        if (auto idx = schema.categorical_index(name)) {
            out.cat_index[static_cast<std::size_t>(*idx)] = schema.category_index(*idx, value);
        }
    }
    for (const auto& [name, value] : event.numerical_values) {
        if (auto idx = schema.numerical_index(name)) {
            out.num_value[static_cast<std::size_t>(*idx)] = scaler.apply(*idx, value);
        }
    }
    return out;
}

std::vector<CompiledEvent> compile_session(const Session& session, const FeatureSchema& schema,
                                           const NumericScaler& scaler) {
    std::vector<CompiledEvent> out;
    out.reserve(session.events.size());
    for (const auto& e : session.events) {
        out.push_back(compile_event(e, schema, scaler));
    }
    return out;
}

TokenizerParams TokenizerParams::init(const FeatureSchema& schema, int token_dim,
                                      int max_positions, Rng& rng, bool with_sequence_extras) {
    check_config(token_dim > 0, "tokenizer: token_dim must be positive");
    check_config(max_positions >= 2, "tokenizer: max_positions must be >= 2");
    const real init_std = real(0.02);
    TokenizerParams p;
    p.token_dim = token_dim;
    p.max_positions = max_positions;
    for (const auto& f : schema.categorical_features()) {
        p.embeddings.push_back(
            Tensor::randn({f.table_size(), schema.embedding_dim()}, rng, init_std, true));
    }
    p.projection = Tensor::randn({schema.encoded_width(), token_dim}, rng, init_std, true);
    if (with_sequence_extras) {
        p.cls = Tensor::randn({token_dim}, rng, init_std, true);
        p.positional = Tensor::randn({max_positions, token_dim}, rng, init_std, true);
    }
    return p;
}

void TokenizerParams::register_params(ParamMap& out, const FeatureSchema& schema) const {
    for (int j = 0; j < schema.k_cat(); ++j) {
        out.push_back({"emb." + schema.categorical_features()[static_cast<std::size_t>(j)].name,
                       embeddings[static_cast<std::size_t>(j)]});
    }
    out.push_back({"proj.W", projection});
    if (cls.defined()) {
        out.push_back({"cls", cls});
        out.push_back({"pos", positional});
    }
}

TokenizerParams TokenizerParams::from_params(const ParamMap& params, const FeatureSchema& schema) {
    TokenizerParams p;
    for (const auto& f : schema.categorical_features()) {
        p.embeddings.push_back(find_param(params, "emb." + f.name));
    }
    p.projection = find_param(params, "proj.W");
    p.token_dim = p.projection.dim(1);
    const bool has_extras =
        std::any_of(params.begin(), params.end(), [](const NamedParam& n) { return n.name == "cls"; });
    if (has_extras) {
        p.cls = find_param(params, "cls");
        p.positional = find_param(params, "pos");
        p.max_positions = p.positional.dim(0);
    }
    return p;
}

Tensor encode_compiled_event(const CompiledEvent& event, const FeatureSchema& schema,
                             const TokenizerParams& params) {
    const int c = schema.embedding_dim();
    std::vector<Tensor> parts;
    parts.reserve(static_cast<std::size_t>(schema.k_cat()) + 1);
    for (int j = 0; j < schema.k_cat(); ++j) {
        const int idx = event.cat_index[static_cast<std::size_t>(j)];
        if (idx >= 0) {
            parts.push_back(embedding_lookup(params.embeddings[static_cast<std::size_t>(j)], idx));
        } else {
            parts.push_back(Tensor::zeros({c}));
        }
    }
    if (schema.k_num() > 0) {
        parts.push_back(Tensor::from({schema.k_num()}, event.num_value));
    }
    return concat_vec(parts);
}

Tensor encode_event(const EventRecord& event, const FeatureSchema& schema,
                    const TokenizerParams& params, const NumericScaler& scaler) {
    event.validate(schema);
    return encode_compiled_event(compile_event(event, schema, scaler), schema, params);
}

namespace {

// Feature matrix A for the most recent max_rows events.
Tensor feature_matrix(const std::vector<CompiledEvent>& events, const FeatureSchema& schema,
                      const TokenizerParams& params, int max_rows) {
    check(!events.empty(), "encode: session has no events");
    const int n = std::min<int>(static_cast<int>(events.size()), max_rows);
    const auto start = events.size() - static_cast<std::size_t>(n);
    std::vector<Tensor> rows;
    rows.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        rows.push_back(encode_compiled_event(events[start + static_cast<std::size_t>(i)], schema, params));
    }
    return stack_rows(rows);
}

}  // namespace

Tensor encode_event_rows(const std::vector<CompiledEvent>& events, const FeatureSchema& schema,
                         const TokenizerParams& params, int max_len) {
    check_config(max_len >= 2, "encode: max_len must be >= 2");
    const Tensor a = feature_matrix(events, schema, params, max_len - 1);
    return matmul(a, params.projection);
}

TokenSequence encode_session(const std::vector<CompiledEvent>& events, const FeatureSchema& schema,
                             const TokenizerParams& params, int max_len) {
    check_config(max_len >= 2, "encode: max_len must be >= 2");
    check_config(params.cls.defined(),
                 "encode: tokenizer has no CLS/positional parameters");
    check_config(max_len <= params.max_positions,
                 "encode: max_len exceeds the positional table size");
    const Tensor projected = encode_event_rows(events, schema, params, max_len);
    const int n = projected.dim(0);
    const Tensor with_pos = add(projected, slice_rows(params.positional, 1, n + 1));

    std::vector<Tensor> blocks;
    blocks.push_back(params.cls);  // single row at position 0
    blocks.push_back(with_pos);
    const int pad = max_len - 1 - n;
    if (pad > 0) {
        blocks.push_back(Tensor::zeros({pad, params.token_dim}));
    }
    TokenSequence seq;
    seq.tokens = concat_rows(blocks);
    seq.source_length = n;
    seq.mask.assign(static_cast<std::size_t>(max_len), 0);
    for (int i = 0; i <= n; ++i) {
        seq.mask[static_cast<std::size_t>(i)] = 1;
    }
    return seq;
}

TokenSequence encode_session(const Session& session, const FeatureSchema& schema,
                             const TokenizerParams& params, const NumericScaler& scaler,
                             int max_len) {
    return encode_session(compile_session(session, schema, scaler), schema, params, max_len);
}

}  // namespace structformer
