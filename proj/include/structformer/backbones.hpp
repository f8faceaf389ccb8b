#pragma once

#include <string>
#include <vector>

#include "structformer/ops.hpp"
#include "structformer/tokenizer.hpp"

namespace structformer {

enum class BackboneKind { transformer, mlp };

struct BackboneConfig {
    BackboneKind kind = BackboneKind::transformer;
    std::string name = "structformer-tiny";
    int hidden_dim = 64;            // token dim d for both backbone kinds
    int layers = 1;                 // transformer
    int heads = 1;                  // transformer
    std::vector<int> mlp_neurons;   // mlp
    int ffn_ratio = 4;
    double dropout = 0.0;

    void validate() const;

    // Named benchmark rows: structformer-{tiny,small,medium,large,xlarge},
    // mlp-{small,medium,large}.
    static BackboneConfig preset(const std::string& name);
    static std::vector<std::string> preset_names();

    std::string to_json() const;
    static BackboneConfig from_json(const std::string& text);
};

struct AttentionParams {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct BlockParams {
    Tensor ln1_gain, ln1_bias;
    AttentionParams attn;
    Tensor ln2_gain, ln2_bias;
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

struct TransformerParams {
    std::vector<BlockParams> blocks;
    Tensor final_gain, final_bias;

    static TransformerParams init(const BackboneConfig& cfg, Rng& rng);
    void register_params(ParamMap& out) const;
    static TransformerParams from_params(const ParamMap& params, const BackboneConfig& cfg);
};

struct MlpParams {
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;

    static MlpParams init(const BackboneConfig& cfg, Rng& rng);
    void register_params(ParamMap& out) const;
    static MlpParams from_params(const ParamMap& params, const BackboneConfig& cfg);
};

struct HeadParams {
    Tensor weight;  // [in x out]
    Tensor bias;    // [out]

    static HeadParams init(int in_dim, int out_dim, Rng& rng);
    void register_params(ParamMap& out) const;
    static HeadParams from_params(const ParamMap& params);
};

// Scaled dot-product attention over all heads; masked key positions receive
// -1e9 before the softmax, so they contribute exactly zero weight.
Tensor multi_head_attention(const Tensor& x, const std::vector<std::uint8_t>& mask, int heads,
                            const AttentionParams& params);

// Pre-LN encoder stack; returns the final-LN CLS vector (position 0).
Tensor transformer_encode(const TokenSequence& seq, const BackboneConfig& cfg,
                          const TransformerParams& params, Rng* dropout_rng = nullptr);

// Average pooling over event token rows, then the hidden linear stack.
Tensor mlp_encode(const Tensor& event_rows, const BackboneConfig& cfg, const MlpParams& params,
                  Rng* dropout_rng = nullptr);

Tensor head_forward(const HeadParams& head, const Tensor& features);

}  // namespace structformer
