#include "structformer/backbones.hpp"

#include <cmath>

#include <json.hpp>

namespace structformer {

using json = nlohmann::ordered_json;

namespace {

constexpr real kInitStd = real(0.02);
constexpr real kMaskLogit = real(-1e9);

std::string block_prefix(int i) {
    return "blocks." + std::to_string(i) + ".";
}

}  // namespace

void BackboneConfig::validate() const {
    check_config(hidden_dim > 0, "backbone: hidden_dim must be positive");
    check_config(dropout >= 0.0 && dropout < 1.0, "backbone: dropout must be in [0, 1)");
    if (kind == BackboneKind::transformer) {
        check_config(layers >= 0, "backbone: layers must be >= 0");
        check_config(heads >= 1, "backbone: heads must be >= 1");
        check_config(hidden_dim % heads == 0, "backbone: hidden_dim must be divisible by heads");
        check_config(ffn_ratio >= 1, "backbone: ffn_ratio must be >= 1");
    } else {
        check_config(!mlp_neurons.empty(), "backbone: mlp_neurons must be non-empty");
        for (int n : mlp_neurons) {
            check_config(n > 0, "backbone: mlp_neurons must be positive");
        }
    }
}

BackboneConfig BackboneConfig::preset(const std::string& name) {
    BackboneConfig cfg;
    cfg.name = name;
    if (name == "structformer-tiny") {
        cfg.kind = BackboneKind::transformer;
        cfg.hidden_dim = 64;
        cfg.layers = 1;
        cfg.heads = 1;
    } else if (name == "structformer-small") {
        cfg.kind = BackboneKind::transformer;
        cfg.hidden_dim = 64;
        cfg.layers = 4;
        cfg.heads = 4;
    } else if (name == "structformer-medium") {
        cfg.kind = BackboneKind::transformer;
        cfg.hidden_dim = 512;
        cfg.layers = 1;
        cfg.heads = 1;
    } else if (name == "structformer-large") {
        cfg.kind = BackboneKind::transformer;
        cfg.hidden_dim = 512;
        cfg.layers = 4;
        cfg.heads = 4;
    } else if (name == "structformer-xlarge") {
        cfg.kind = BackboneKind::transformer;
        cfg.hidden_dim = 512;
        cfg.layers = 8;
        cfg.heads = 8;
    } else if (name == "mlp-small") {
        cfg.kind = BackboneKind::mlp;
        cfg.hidden_dim = 64;
        cfg.mlp_neurons = {256, 128, 64};
    } else if (name == "mlp-medium") {
        cfg.kind = BackboneKind::mlp;
        cfg.hidden_dim = 64;
        cfg.mlp_neurons = {512, 256, 128};
    } else if (name == "mlp-large") {
        cfg.kind = BackboneKind::mlp;
        cfg.hidden_dim = 64;
        cfg.mlp_neurons = {512, 512, 256, 128};
    } else {
        throw ConfigError("unknown backbone preset '" + name + "'");
    }
    return cfg;
}

std::vector<std::string> BackboneConfig::preset_names() {
    return {"structformer-tiny",  "structformer-small", "structformer-medium",
            "structformer-large", "structformer-xlarge", "mlp-small",
            "mlp-medium",         "mlp-large"};
}

std::string BackboneConfig::to_json() const {
    json j;
    j["kind"] = kind == BackboneKind::transformer ? "transformer" : "mlp";
    j["name"] = name;
    j["hidden_dim"] = hidden_dim;
    j["layers"] = layers;
    j["heads"] = heads;
    j["mlp_neurons"] = mlp_neurons;
    j["ffn_ratio"] = ffn_ratio;
    j["dropout"] = dropout;
    return j.dump(2);
}

BackboneConfig BackboneConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("backbone config: invalid JSON: ") + e.what());
    }
    BackboneConfig cfg;
    try {
        if (j.contains("preset")) {
            cfg = preset(j.at("preset").get<std::string>());
        }
        if (j.contains("kind")) {
            const auto kind = j.at("kind").get<std::string>();
            check_config(kind == "transformer" || kind == "mlp",
                         "backbone config: kind must be 'transformer' or 'mlp'");
            cfg.kind = kind == "transformer" ? BackboneKind::transformer : BackboneKind::mlp;
        }
        if (j.contains("name")) cfg.name = j.at("name").get<std::string>();
        if (j.contains("hidden_dim")) cfg.hidden_dim = j.at("hidden_dim").get<int>();
        if (j.contains("layers")) cfg.layers = j.at("layers").get<int>();
        if (j.contains("heads")) cfg.heads = j.at("heads").get<int>();
        if (j.contains("mlp_neurons")) cfg.mlp_neurons = j.at("mlp_neurons").get<std::vector<int>>();
        if (j.contains("ffn_ratio")) cfg.ffn_ratio = j.at("ffn_ratio").get<int>();
        if (j.contains("dropout")) cfg.dropout = j.at("dropout").get<double>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("backbone config: mistyped field: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

TransformerParams TransformerParams::init(const BackboneConfig& cfg, Rng& rng) {
    cfg.validate();
    const int d = cfg.hidden_dim;
    const int f = cfg.ffn_ratio * d;
    TransformerParams p;
    for (int i = 0; i < cfg.layers; ++i) {
        BlockParams b;
        b.ln1_gain = Tensor::full({d}, real(1), true);
        b.ln1_bias = Tensor::zeros({d}, true);
        b.attn.wq = Tensor::randn({d, d}, rng, kInitStd, true);
        b.attn.bq = Tensor::zeros({d}, true);
        b.attn.wk = Tensor::randn({d, d}, rng, kInitStd, true);
        b.attn.bk = Tensor::zeros({d}, true);
        b.attn.wv = Tensor::randn({d, d}, rng, kInitStd, true);
        b.attn.bv = Tensor::zeros({d}, true);
        b.attn.wo = Tensor::randn({d, d}, rng, kInitStd, true);
        b.attn.bo = Tensor::zeros({d}, true);
        b.ln2_gain = Tensor::full({d}, real(1), true);
        b.ln2_bias = Tensor::zeros({d}, true);
        b.ffn_w1 = Tensor::randn({d, f}, rng, kInitStd, true);
        b.ffn_b1 = Tensor::zeros({f}, true);
        b.ffn_w2 = Tensor::randn({f, d}, rng, kInitStd, true);
        b.ffn_b2 = Tensor::zeros({d}, true);
        p.blocks.push_back(std::move(b));
    }
    p.final_gain = Tensor::full({d}, real(1), true);
    p.final_bias = Tensor::zeros({d}, true);
    return p;
}

void TransformerParams::register_params(ParamMap& out) const {
    for (int i = 0; i < static_cast<int>(blocks.size()); ++i) {
        const auto& b = blocks[static_cast<std::size_t>(i)];
        const std::string pre = block_prefix(i);
        out.push_back({pre + "ln1.g", b.ln1_gain});
        out.push_back({pre + "ln1.b", b.ln1_bias});
        out.push_back({pre + "attn.wq", b.attn.wq});
        out.push_back({pre + "attn.bq", b.attn.bq});
        out.push_back({pre + "attn.wk", b.attn.wk});
        out.push_back({pre + "attn.bk", b.attn.bk});
        out.push_back({pre + "attn.wv", b.attn.wv});
        out.push_back({pre + "attn.bv", b.attn.bv});
        out.push_back({pre + "attn.wo", b.attn.wo});
        out.push_back({pre + "attn.bo", b.attn.bo});
        out.push_back({pre + "ln2.g", b.ln2_gain});
        out.push_back({pre + "ln2.b", b.ln2_bias});
        out.push_back({pre + "ffn.w1", b.ffn_w1});
        out.push_back({pre + "ffn.b1", b.ffn_b1});
        out.push_back({pre + "ffn.w2", b.ffn_w2});
        out.push_back({pre + "ffn.b2", b.ffn_b2});
    }
    out.push_back({"final_ln.g", final_gain});
    out.push_back({"final_ln.b", final_bias});
}

TransformerParams TransformerParams::from_params(const ParamMap& params, const BackboneConfig& cfg) {
    TransformerParams p;
    for (int i = 0; i < cfg.layers; ++i) {
        const std::string pre = block_prefix(i);
        BlockParams b;
        b.ln1_gain = find_param(params, pre + "ln1.g");
        b.ln1_bias = find_param(params, pre + "ln1.b");
        b.attn.wq = find_param(params, pre + "attn.wq");
        b.attn.bq = find_param(params, pre + "attn.bq");
        b.attn.wk = find_param(params, pre + "attn.wk");
        b.attn.bk = find_param(params, pre + "attn.bk");
        b.attn.wv = find_param(params, pre + "attn.wv");
        b.attn.bv = find_param(params, pre + "attn.bv");
        b.attn.wo = find_param(params, pre + "attn.wo");
        b.attn.bo = find_param(params, pre + "attn.bo");
        b.ln2_gain = find_param(params, pre + "ln2.g");
        b.ln2_bias = find_param(params, pre + "ln2.b");
        b.ffn_w1 = find_param(params, pre + "ffn.w1");
        b.ffn_b1 = find_param(params, pre + "ffn.b1");
        b.ffn_w2 = find_param(params, pre + "ffn.w2");
        b.ffn_b2 = find_param(params, pre + "ffn.b2");
        p.blocks.push_back(std::move(b));
    }
    p.final_gain = find_param(params, "final_ln.g");
    p.final_bias = find_param(params, "final_ln.b");
    return p;
}

MlpParams MlpParams::init(const BackboneConfig& cfg, Rng& rng) {
    cfg.validate();
    MlpParams p;
    int in_dim = cfg.hidden_dim;
    for (int n : cfg.mlp_neurons) {
        p.weights.push_back(Tensor::randn({in_dim, n}, rng, kInitStd, true));
        p.biases.push_back(Tensor::zeros({n}, true));
        in_dim = n;
    }
    return p;
}

void MlpParams::register_params(ParamMap& out) const {
    for (int i = 0; i < static_cast<int>(weights.size()); ++i) {
        out.push_back({"mlp." + std::to_string(i) + ".w", weights[static_cast<std::size_t>(i)]});
        out.push_back({"mlp." + std::to_string(i) + ".b", biases[static_cast<std::size_t>(i)]});
    }
}

MlpParams MlpParams::from_params(const ParamMap& params, const BackboneConfig& cfg) {
    MlpParams p;
    for (int i = 0; i < static_cast<int>(cfg.mlp_neurons.size()); ++i) {
        p.weights.push_back(find_param(params, "mlp." + std::to_string(i) + ".w"));
        p.biases.push_back(find_param(params, "mlp." + std::to_string(i) + ".b"));
    }
    return p;
}

HeadParams HeadParams::init(int in_dim, int out_dim, Rng& rng) {
    HeadParams h;
    h.weight = Tensor::randn({in_dim, out_dim}, rng, kInitStd, true);
    h.bias = Tensor::zeros({out_dim}, true);
    return h;
}

void HeadParams::register_params(ParamMap& out) const {
    out.push_back({"head.w", weight});
    out.push_back({"head.b", bias});
}

HeadParams HeadParams::from_params(const ParamMap& params) {
    HeadParams h;
    h.weight = find_param(params, "head.w");
    h.bias = find_param(params, "head.b");
    return h;
}

Tensor multi_head_attention(const Tensor& x, const std::vector<std::uint8_t>& mask, int heads,
                            const AttentionParams& params) {
    const int length = x.dim(0);
    const int d = x.dim(1);
    check_dims(d % heads == 0, "attention: dim " + std::to_string(d) + " not divisible by " +
                                   std::to_string(heads) + " heads");
    check(static_cast<int>(mask.size()) == length, "attention: mask length mismatch");
    check(mask[0] != 0, "attention: position 0 (CLS) must be unmasked");
    const int head_dim = d / heads;

    const Tensor q = add_row_broadcast(matmul(x, params.wq), params.bq);
    const Tensor k = add_row_broadcast(matmul(x, params.wk), params.bk);
    const Tensor v = add_row_broadcast(matmul(x, params.wv), params.bv);

    std::vector<real> key_bias(static_cast<std::size_t>(length));
    for (int j = 0; j < length; ++j) {
        key_bias[static_cast<std::size_t>(j)] = mask[static_cast<std::size_t>(j)] ? real(0) : kMaskLogit;
    }
    const Tensor key_bias_t = Tensor::from({length}, key_bias);
    const real inv_sqrt = static_cast<real>(1.0 / std::sqrt(static_cast<double>(head_dim)));

    std::vector<Tensor> contexts;
    contexts.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        const int c0 = h * head_dim;
        const int c1 = c0 + head_dim;
        const Tensor qh = slice_cols(q, c0, c1);
        const Tensor kh = slice_cols(k, c0, c1);
        const Tensor vh = slice_cols(v, c0, c1);
        Tensor scores = scale(matmul_nt(qh, kh), inv_sqrt);
        scores = add_row_broadcast(scores, key_bias_t);
        const Tensor weights = softmax_rows(scores);
        contexts.push_back(matmul(weights, vh));
    }
    const Tensor merged = heads == 1 ? contexts[0] : concat_cols(contexts);
    return add_row_broadcast(matmul(merged, params.wo), params.bo);
}

Tensor transformer_encode(const TokenSequence& seq, const BackboneConfig& cfg,
                          const TransformerParams& params, Rng* dropout_rng) {
    cfg.validate();
    check_config(cfg.kind == BackboneKind::transformer, "transformer_encode: wrong backbone kind");
    Tensor x = seq.tokens;
    for (const auto& block : params.blocks) {
        Tensor attended = multi_head_attention(layer_norm(x, block.ln1_gain, block.ln1_bias),
                                               seq.mask, cfg.heads, block.attn);
        if (dropout_rng && cfg.dropout > 0.0) {
            attended = dropout(attended, cfg.dropout, *dropout_rng);
        }
        x = add(x, attended);
        Tensor hidden = layer_norm(x, block.ln2_gain, block.ln2_bias);
        hidden = add_row_broadcast(matmul(hidden, block.ffn_w1), block.ffn_b1);
        hidden = gelu(hidden);
        hidden = add_row_broadcast(matmul(hidden, block.ffn_w2), block.ffn_b2);
        if (dropout_rng && cfg.dropout > 0.0) {
            hidden = dropout(hidden, cfg.dropout, *dropout_rng);
        }
        x = add(x, hidden);
    }
    x = layer_norm(x, params.final_gain, params.final_bias);
    return take_row(x, 0);
}

Tensor mlp_encode(const Tensor& event_rows, const BackboneConfig& cfg, const MlpParams& params,
                  Rng* dropout_rng) {
    cfg.validate();
    check_config(cfg.kind == BackboneKind::mlp, "mlp_encode: wrong backbone kind");
    Tensor h = as_row_matrix(mean_pool_rows(event_rows));
    for (std::size_t i = 0; i < params.weights.size(); ++i) {
        h = add_row_broadcast(matmul(h, params.weights[i]), params.biases[i]);
        h = gelu(h);
        if (dropout_rng && cfg.dropout > 0.0) {
            h = dropout(h, cfg.dropout, *dropout_rng);
        }
    }
    return take_row(h, 0);
}

Tensor head_forward(const HeadParams& head, const Tensor& features) {
    return take_row(add_row_broadcast(matmul(as_row_matrix(features), head.weight), head.bias), 0);
}

}  // namespace structformer
