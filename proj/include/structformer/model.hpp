#pragma once

#include <cstdint>
#include <string>

#include "structformer/backbones.hpp"
#include "structformer/objectives.hpp"

namespace structformer {

struct ModelConfig {
    BackboneConfig backbone;
    Objective objective = Objective::binary;
    int max_len = 256;  // longest admitted sequence incl. CLS

    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
};

// Tokenizer + backbone + head over one schema: the trainable unit and the
// checkpoint unit.
class SequenceModel {
public:
    static SequenceModel init(const FeatureSchema& schema, const ModelConfig& cfg,
                              std::uint64_t seed);

    // Per-session forward: class logits, or the log1p prediction for the
    // regression objective (shape [1]).
    Tensor forward(const std::vector<CompiledEvent>& events, Rng* dropout_rng = nullptr) const;

    const ParamMap& params() const { return params_; }
    const FeatureSchema& schema() const { return schema_; }
    const ModelConfig& config() const { return config_; }
    const NumericScaler& scaler() const { return scaler_; }
    void set_scaler(NumericScaler scaler) { scaler_ = std::move(scaler); }

    std::int64_t parameter_count() const { return count_trainable(params_); }

    // Deep copies of parameter values (best-checkpoint retention).
    std::vector<std::vector<real>> snapshot_values() const;
    void restore_values(const std::vector<std::vector<real>>& snapshot);

    // Checkpoint directory: model.bin, model_config.json, label_spec.json,
    // schema.json. Refuses to load against a different schema hash.
    void save(const std::string& dir, const LabelSpec& spec) const;
    static SequenceModel load(const std::string& dir, LabelSpec* spec_out = nullptr);

private:
    FeatureSchema schema_;
    ModelConfig config_;
    TokenizerParams tokenizer_;
    TransformerParams transformer_;
    MlpParams mlp_;
    HeadParams head_;
    NumericScaler scaler_;
    ParamMap params_;
};

// Exact trainable-scalar count of a fully instantiated model.
std::int64_t count_parameters(const FeatureSchema& schema, const ModelConfig& cfg);

}  // namespace structformer
