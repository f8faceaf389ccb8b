#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "structformer/ops.hpp"
#include "structformer/schema.hpp"

namespace structformer {

// Per-feature standardization of numerical values, fitted on the training
// split only. Missing values stay exactly zero after normalization, so the
// zero-vector missing convention survives scaling.
struct NumericScaler {
    std::vector<real> mean;
    std::vector<real> stddev;  // floored at 1e-6
    int empty_feature_warnings = 0;

    static NumericScaler fit(const std::vector<Session>& train, const FeatureSchema& schema);
    static NumericScaler identity(const FeatureSchema& schema);

    real apply(int feature, real value) const {
        return (value - mean[static_cast<std::size_t>(feature)]) /
               stddev[static_cast<std::size_t>(feature)];
    }
};

// Pre-resolved event: embedding indices (-1 = missing) and normalized
// numerical values. Lets the training loop skip string lookups per batch.
struct CompiledEvent {
    std::vector<int> cat_index;
    std::vector<real> num_value;
};

CompiledEvent compile_event(const EventRecord& event, const FeatureSchema& schema,
                            const NumericScaler& scaler);
std::vector<CompiledEvent> compile_session(const Session& session, const FeatureSchema& schema,
                                           const NumericScaler& scaler);

struct TokenizerParams {
    std::vector<Tensor> embeddings;  // one [V_j x c] table per categorical feature
    Tensor projection;               // [m x d]
    Tensor cls;                      // [d]; undefined for pooling-only models
    Tensor positional;               // [L_max x d]; undefined for pooling-only models
    int token_dim = 0;
    int max_positions = 0;

    // with_sequence_extras adds the CLS token and positional table; the MLP
    // path pools event tokens directly and owns neither.
    static TokenizerParams init(const FeatureSchema& schema, int token_dim, int max_positions,
                                Rng& rng, bool with_sequence_extras = true);
    void register_params(ParamMap& out, const FeatureSchema& schema) const;
    static TokenizerParams from_params(const ParamMap& params, const FeatureSchema& schema);
};

struct TokenSequence {
    Tensor tokens;                   // [L_max x d], CLS at position 0
    std::vector<std::uint8_t> mask;  // 1 = real token, 0 = padding
    int source_length = 0;           // events kept after truncation
};

// One event to its m-wide feature row: embedded categoricals, raw normalized
// numericals, zero sub-vectors for missing features.
Tensor encode_event(const EventRecord& event, const FeatureSchema& schema,
                    const TokenizerParams& params, const NumericScaler& scaler);
Tensor encode_compiled_event(const CompiledEvent& event, const FeatureSchema& schema,
                             const TokenizerParams& params);

// Projected event token rows A*W for one session, truncated to the most
// recent max_len events. No CLS, no positional terms: the permutation
// invariant view the MLP backbone consumes.
Tensor encode_event_rows(const std::vector<CompiledEvent>& events, const FeatureSchema& schema,
                         const TokenizerParams& params, int max_len);

// Full token sequence: CLS, projected rows with positional embeddings for
// positions 1..n, masked zero padding up to max_len.
TokenSequence encode_session(const std::vector<CompiledEvent>& events, const FeatureSchema& schema,
                             const TokenizerParams& params, int max_len);
TokenSequence encode_session(const Session& session, const FeatureSchema& schema,
                             const TokenizerParams& params, const NumericScaler& scaler,
                             int max_len);

}  // namespace structformer
