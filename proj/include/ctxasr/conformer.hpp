#pragma once
#include <string>
#include <vector>

#include "ctxasr/attention.hpp"
#include "ctxasr/context.hpp"
#include "ctxasr/graph.hpp"
#include "ctxasr/params.hpp"
#include "ctxasr/rng.hpp"

namespace ctxasr {

enum class Consumption { None, FeatureConcat, CrossAttention, Prompt };

std::string to_string(Consumption c);

struct EncoderConfig {
    int n_blocks = 2;
    int d_model = 32;
    int heads = 2;
    int d_head = 8;
    int conv_kernel = 4;
    int ff_expansion = 2;
    int subsample_factor = 3;
    int cw = 40;
    int d_feat = 16;
    int token_window = 30;
    Consumption consumption = Consumption::None;
    std::vector<int> prompt_blocks;  // empty means every block

    bool equips(int block) const;
    int input_dim() const { return subsample_factor * d_feat; }
};

struct FeedForwardParams {
    Tensor ln_g, ln_b;
    Tensor w1, b1;  // [d x e*d]
    Tensor w2, b2;  // [e*d x d]

    static FeedForwardParams init(int d_model, int expansion, Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct ConvModuleParams {
    Tensor ln_g, ln_b;      // pre-conv LN
    Tensor pw1_w, pw1_b;    // [d x 2d], GLU halves
    Tensor dw_w, dw_b;      // [K x d] depthwise kernel, causal
    Tensor dw_ln_g, dw_ln_b;
    Tensor pw2_w, pw2_b;    // [d x d]

    static ConvModuleParams init(int d_model, int kernel, Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct ConformerBlockParams {
    FeedForwardParams ff1, ff2;
    Tensor att_ln_g, att_ln_b;
    AttentionBlockParams attention;
    ConvModuleParams conv;
    Tensor final_ln_g, final_ln_b;

    static ConformerBlockParams init(const EncoderConfig& cfg, bool with_cross, Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct EncoderParams {
    Tensor in_proj_w, in_proj_b;  // [f*d_feat x d_model]
    Tensor fc_ctx_w;              // [d_model x d_model], FeatureConcat mode only
    std::vector<ConformerBlockParams> blocks;

    static EncoderParams init(const EncoderConfig& cfg, Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
    int64_t param_count();
};

// Frame stacking: groups of `factor` consecutive frames concatenate along the
// feature axis; the tail group is zero-padded.
Tensor subsample(const Tensor& features, int factor);

// Absolute sinusoidal rows added to acoustic frames after input projection.
Tensor sinusoidal_positions(int t_frames, int d_model);

// One conformer block: half-step feed-forward, attention stage selected by
// `mode`, causal convolution module, half-step feed-forward, final layer norm.
Var conformer_block(Graph& g, Var x, const PromptEmbedding& prompt,
                    ConformerBlockParams& params, const WindowMask& mask, Consumption mode,
                    int token_window);

// Full encoder over raw features. The prompt is consumed per the configured
// mode; pass an empty prompt when there is no context.
Var encode(Graph& g, const Tensor& features, const PromptEmbedding& prompt,
           const EncoderConfig& cfg, EncoderParams& params);

}  // namespace ctxasr
