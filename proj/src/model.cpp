#include "structformer/model.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "structformer/serialize.hpp"

namespace structformer {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path);
    check_config(static_cast<bool>(in), "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    check(static_cast<bool>(out), "cannot write " + path.string());
    out << text;
}

}  // namespace

std::string ModelConfig::to_json() const {
    json j;
    j["backbone"] = json::parse(backbone.to_json());
    j["objective"] = objective_name(objective);
    j["max_len"] = max_len;
    return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model config: invalid JSON: ") + e.what());
    }
    ModelConfig cfg;
    check_config(j.contains("backbone"), "model config: missing 'backbone'");
    cfg.backbone = BackboneConfig::from_json(j.at("backbone").dump());
    if (j.contains("objective")) cfg.objective = objective_from_name(j.at("objective").get<std::string>());
    if (j.contains("max_len")) cfg.max_len = j.at("max_len").get<int>();
    check_config(cfg.max_len >= 2, "model config: max_len must be >= 2");
    return cfg;
}

SequenceModel SequenceModel::init(const FeatureSchema& schema, const ModelConfig& cfg,
                                  std::uint64_t seed) {
    cfg.backbone.validate();
    SequenceModel m;
    m.schema_ = schema;
    m.config_ = cfg;
    m.scaler_ = NumericScaler::identity(schema);
    Rng rng(Rng::mix(seed, 0x10de1ull));
    m.tokenizer_ = TokenizerParams::init(schema, cfg.backbone.hidden_dim, cfg.max_len, rng,
                                        cfg.backbone.kind == BackboneKind::transformer);
    int head_in = cfg.backbone.hidden_dim;
    if (cfg.backbone.kind == BackboneKind::transformer) {
        m.transformer_ = TransformerParams::init(cfg.backbone, rng);
    } else {
        m.mlp_ = MlpParams::init(cfg.backbone, rng);
        head_in = cfg.backbone.mlp_neurons.back();
    }
    m.head_ = HeadParams::init(head_in, objective_classes(cfg.objective), rng);

    m.tokenizer_.register_params(m.params_, schema);
    if (cfg.backbone.kind == BackboneKind::transformer) {
        m.transformer_.register_params(m.params_);
    } else {
        m.mlp_.register_params(m.params_);
    }
    m.head_.register_params(m.params_);
    return m;
}

Tensor SequenceModel::forward(const std::vector<CompiledEvent>& events, Rng* dropout_rng) const {
    // Padding beyond the real sequence cannot change unmasked outputs, so the
    // sequence is padded only up to its own length.
    const int max_len =
        std::min<int>(config_.max_len, static_cast<int>(events.size()) + 1);
    if (config_.backbone.kind == BackboneKind::transformer) {
        const TokenSequence seq = encode_session(events, schema_, tokenizer_, max_len);
        const Tensor cls = transformer_encode(seq, config_.backbone, transformer_, dropout_rng);
        return head_forward(head_, cls);
    }
    const Tensor rows = encode_event_rows(events, schema_, tokenizer_, max_len);
    const Tensor pooled = mlp_encode(rows, config_.backbone, mlp_, dropout_rng);
    return head_forward(head_, pooled);
}

std::vector<std::vector<real>> SequenceModel::snapshot_values() const {
    std::vector<std::vector<real>> snapshot;
    snapshot.reserve(params_.size());
    for (const auto& p : params_) {
        snapshot.push_back(p.tensor.values());
    }
    return snapshot;
}

void SequenceModel::restore_values(const std::vector<std::vector<real>>& snapshot) {
    check(snapshot.size() == params_.size(), "restore: snapshot size mismatch");
    for (std::size_t i = 0; i < snapshot.size(); ++i) {
        check(snapshot[i].size() == params_[i].tensor.numel(), "restore: tensor size mismatch");
        const_cast<Tensor&>(params_[i].tensor).values() = snapshot[i];
    }
}

void SequenceModel::save(const std::string& dir, const LabelSpec& spec) const {
    fs::create_directories(dir);
    ParamMap stored = params_;
    stored.push_back({"norm.mean", Tensor::from({std::max(1, schema_.k_num())},
                                                schema_.k_num() ? scaler_.mean
                                                                : std::vector<real>{real(0)})});
    stored.push_back({"norm.std", Tensor::from({std::max(1, schema_.k_num())},
                                               schema_.k_num() ? scaler_.stddev
                                                               : std::vector<real>{real(1)})});
    save_tensor_container((fs::path(dir) / "model.bin").string(), stored);
    write_file(fs::path(dir) / "model_config.json", config_.to_json() + "\n");
    write_file(fs::path(dir) / "label_spec.json", spec.to_json() + "\n");
    schema_.save((fs::path(dir) / "schema.json").string());
}

SequenceModel SequenceModel::load(const std::string& dir, LabelSpec* spec_out) {
    const FeatureSchema schema = FeatureSchema::load((fs::path(dir) / "schema.json").string());
    const ModelConfig cfg = ModelConfig::from_json(read_file(fs::path(dir) / "model_config.json"));
    const LabelSpec spec = LabelSpec::from_json(read_file(fs::path(dir) / "label_spec.json"));
    check_config(spec.objective == cfg.objective, "checkpoint: label spec does not match objective");
    if (spec_out) *spec_out = spec;

    ParamMap stored = load_tensor_container((fs::path(dir) / "model.bin").string());
    SequenceModel m;
    m.schema_ = schema;
    m.config_ = cfg;
    NumericScaler scaler = NumericScaler::identity(schema);
    ParamMap trainable;
    for (auto& p : stored) {
        if (p.name == "norm.mean") {
            if (schema.k_num() > 0) scaler.mean = p.tensor.values();
        } else if (p.name == "norm.std") {
            if (schema.k_num() > 0) scaler.stddev = p.tensor.values();
        } else {
            p.tensor.set_requires_grad(true);
            trainable.push_back(p);
        }
    }
    m.scaler_ = std::move(scaler);
    m.params_ = std::move(trainable);
    m.tokenizer_ = TokenizerParams::from_params(m.params_, schema);
    if (cfg.backbone.kind == BackboneKind::transformer) {
        m.transformer_ = TransformerParams::from_params(m.params_, cfg.backbone);
    } else {
        m.mlp_ = MlpParams::from_params(m.params_, cfg.backbone);
    }
    m.head_ = HeadParams::from_params(m.params_);
    return m;
}

std::int64_t count_parameters(const FeatureSchema& schema, const ModelConfig& cfg) {
    return SequenceModel::init(schema, cfg, 0).parameter_count();
}

}  // namespace structformer
