#include "ctxasr/conformer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ctxasr {

std::string to_string(Consumption c) {
    switch (c) {
        case Consumption::None: return "none";
        case Consumption::FeatureConcat: return "feature-concat";
        case Consumption::CrossAttention: return "cross-attention";
        case Consumption::Prompt: return "prompt";
    }
    return "?";
}

bool EncoderConfig::equips(int block) const {
    if (consumption != Consumption::Prompt && consumption != Consumption::CrossAttention)
        return false;
    if (prompt_blocks.empty()) return true;
    return std::find(prompt_blocks.begin(), prompt_blocks.end(), block) != prompt_blocks.end();
}

namespace {

Tensor kernel_init(std::vector<int> shape, Rng& rng) {
    Tensor t(std::move(shape));
    double scale = 1.0 / std::sqrt(static_cast<double>(t.shape[0]));
    for (double& v : t.data) v = rng.normal() * scale;
    t.set_requires_grad(true);
    return t;
}

Tensor ln_gamma(int d) {
    Tensor t({d}, 1.0);
    t.set_requires_grad(true);
    return t;
}

Tensor zeros_param(std::vector<int> shape) {
    Tensor t(std::move(shape));
    t.set_requires_grad(true);
    return t;
}

Var dense(Graph& g, Var x, Tensor& w, Tensor& b) {
    return g.add_rows(g.matmul(x, g.param(w)), g.param(b));
}

Var feed_forward(Graph& g, Var x, FeedForwardParams& p) {
    Var h = g.layer_norm(x, g.param(p.ln_g), g.param(p.ln_b), kLayerNormEps);
    h = g.swish(dense(g, h, p.w1, p.b1));
    return dense(g, h, p.w2, p.b2);
}

Var conv_module(Graph& g, Var x, ConvModuleParams& p) {
    int d = g.shape(x)[1];
    Var h = g.layer_norm(x, g.param(p.ln_g), g.param(p.ln_b), kLayerNormEps);
    h = dense(g, h, p.pw1_w, p.pw1_b);  // [T x 2d]
    Var gate = g.sigmoid(g.slice(h, 1, d, 2 * d));
    h = g.mul(g.slice(h, 1, 0, d), gate);  // GLU
    h = g.conv1d_depthwise_causal(h, g.param(p.dw_w), g.param(p.dw_b));
    h = g.layer_norm(h, g.param(p.dw_ln_g), g.param(p.dw_ln_b), kLayerNormEps);
    h = g.swish(h);
    return dense(g, h, p.pw2_w, p.pw2_b);
}

}  // namespace

FeedForwardParams FeedForwardParams::init(int d_model, int expansion, Rng& rng) {
    FeedForwardParams p;
    p.ln_g = ln_gamma(d_model);
    p.ln_b = zeros_param({d_model});
    p.w1 = kernel_init({d_model, expansion * d_model}, rng);
    p.b1 = zeros_param({expansion * d_model});
    p.w2 = kernel_init({expansion * d_model, d_model}, rng);
    p.b2 = zeros_param({d_model});
    return p;
}

void FeedForwardParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".ln.gamma", ln_g);
    fn(prefix + ".ln.beta", ln_b);
    fn(prefix + ".w1", w1);
    fn(prefix + ".b1", b1);
    fn(prefix + ".w2", w2);
    fn(prefix + ".b2", b2);
}

ConvModuleParams ConvModuleParams::init(int d_model, int kernel, Rng& rng) {
    ConvModuleParams p;
    p.ln_g = ln_gamma(d_model);
    p.ln_b = zeros_param({d_model});
    p.pw1_w = kernel_init({d_model, 2 * d_model}, rng);
    p.pw1_b = zeros_param({2 * d_model});
    p.dw_w = kernel_init({kernel, d_model}, rng);
    p.dw_b = zeros_param({d_model});
    p.dw_ln_g = ln_gamma(d_model);
    p.dw_ln_b = zeros_param({d_model});
    p.pw2_w = kernel_init({d_model, d_model}, rng);
    p.pw2_b = zeros_param({d_model});
    return p;
}

void ConvModuleParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".ln.gamma", ln_g);
    fn(prefix + ".ln.beta", ln_b);
    fn(prefix + ".pw1.weight", pw1_w);
    fn(prefix + ".pw1.bias", pw1_b);
    fn(prefix + ".dw.weight", dw_w);
    fn(prefix + ".dw.bias", dw_b);
    fn(prefix + ".dw_ln.gamma", dw_ln_g);
    fn(prefix + ".dw_ln.beta", dw_ln_b);
    fn(prefix + ".pw2.weight", pw2_w);
    fn(prefix + ".pw2.bias", pw2_b);
}

ConformerBlockParams ConformerBlockParams::init(const EncoderConfig& cfg, bool with_cross,
                                                Rng& rng) {
    ConformerBlockParams p;
    p.ff1 = FeedForwardParams::init(cfg.d_model, cfg.ff_expansion, rng);
    p.att_ln_g = ln_gamma(cfg.d_model);
    p.att_ln_b = zeros_param({cfg.d_model});
    p.attention = AttentionBlockParams::init(cfg.d_model, cfg.heads, cfg.d_head, with_cross, rng);
    p.conv = ConvModuleParams::init(cfg.d_model, cfg.conv_kernel, rng);
    p.ff2 = FeedForwardParams::init(cfg.d_model, cfg.ff_expansion, rng);
    p.final_ln_g = ln_gamma(cfg.d_model);
    p.final_ln_b = zeros_param({cfg.d_model});
    return p;
}

void ConformerBlockParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    ff1.visit(prefix + ".ff1", fn);
    fn(prefix + ".att.ln.gamma", att_ln_g);
    fn(prefix + ".att.ln.beta", att_ln_b);
    attention.visit(prefix + ".att", fn);
    conv.visit(prefix + ".conv", fn);
    ff2.visit(prefix + ".ff2", fn);
    fn(prefix + ".final_ln.gamma", final_ln_g);
    fn(prefix + ".final_ln.beta", final_ln_b);
}

EncoderParams EncoderParams::init(const EncoderConfig& cfg, Rng& rng) {
    EncoderParams p;
    p.in_proj_w = kernel_init({cfg.input_dim(), cfg.d_model}, rng);
    p.in_proj_b = zeros_param({cfg.d_model});
    if (cfg.consumption == Consumption::FeatureConcat)
        p.fc_ctx_w = kernel_init({cfg.d_model, cfg.d_model}, rng);
    p.blocks.reserve(static_cast<size_t>(cfg.n_blocks));
    for (int b = 0; b < cfg.n_blocks; ++b) {
        bool with_cross = cfg.consumption == Consumption::CrossAttention && cfg.equips(b);
        p.blocks.push_back(ConformerBlockParams::init(cfg, with_cross, rng));
    }
    return p;
}

void EncoderParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".in_proj.weight", in_proj_w);
    fn(prefix + ".in_proj.bias", in_proj_b);
    if (fc_ctx_w.numel() > 0) fn(prefix + ".fc_ctx.weight", fc_ctx_w);
    for (size_t b = 0; b < blocks.size(); ++b)
        blocks[b].visit(prefix + ".block" + std::to_string(b), fn);
}

int64_t EncoderParams::param_count() {
    int64_t n = 0;
    visit("e", [&n](const std::string&, Tensor& t) { n += t.numel(); });
    return n;
}

Tensor subsample(const Tensor& features, int factor) {
    if (features.rank() != 2 || features.rows() < 1)
        throw std::invalid_argument("subsample: need a non-empty rank-2 feature matrix");
    if (factor < 1) throw std::invalid_argument("subsample: factor must be >= 1");
    int t = features.rows(), d = features.cols();
    int groups = (t + factor - 1) / factor;
    Tensor out({groups, factor * d});
    for (int grp = 0; grp < groups; ++grp)
        for (int k = 0; k < factor; ++k) {
            int src = grp * factor + k;
            if (src >= t) break;  // zero padding stays
            for (int j = 0; j < d; ++j) out.at(grp, k * d + j) = features.at(src, j);
        }
    return out;
}

Tensor sinusoidal_positions(int t_frames, int d_model) {
    Tensor pe({t_frames, d_model});
    for (int t = 0; t < t_frames; ++t)
        for (int j = 0; j < d_model; ++j) {
            double exponent = static_cast<double>(2 * (j / 2)) / d_model;
            double angle = t / std::pow(10000.0, exponent);
            pe.at(t, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    return pe;
}

Var conformer_block(Graph& g, Var x, const PromptEmbedding& prompt,
                    ConformerBlockParams& params, const WindowMask& mask, Consumption mode,
                    int token_window) {
    if (prompt.size > 0 && mode != Consumption::Prompt && mode != Consumption::CrossAttention)
        throw std::invalid_argument("conformer_block: prompt given but mode is " +
                                    to_string(mode));
    Var h = g.add(x, g.scale(feed_forward(g, x, params.ff1), 0.5));

    Var att_in = g.layer_norm(h, g.param(params.att_ln_g), g.param(params.att_ln_b),
                              kLayerNormEps);
    Var att;
    switch (mode) {
        case Consumption::Prompt:
            att = mhsa_prompted(g, att_in, prompt, params.attention, mask, token_window);
            break;
        case Consumption::CrossAttention:
            att = mhca_biasing(g, mhsa_plain(g, att_in, params.attention, mask), prompt,
                               params.attention);
            break;
        case Consumption::None:
        case Consumption::FeatureConcat:
            att = mhsa_plain(g, att_in, params.attention, mask);
            break;
    }
    h = g.add(h, att);

    h = g.add(h, conv_module(g, h, params.conv));
    h = g.add(h, g.scale(feed_forward(g, h, params.ff2), 0.5));
    return g.layer_norm(h, g.param(params.final_ln_g), g.param(params.final_ln_b),
                        kLayerNormEps);
}

Var encode(Graph& g, const Tensor& features, const PromptEmbedding& prompt,
           const EncoderConfig& cfg, EncoderParams& params) {
    Tensor stacked = subsample(features, cfg.subsample_factor);
    int t_out = stacked.rows();

    Var x;
    if (cfg.consumption == Consumption::FeatureConcat) {
        if (prompt.size > 1)
            throw std::invalid_argument("encode: feature concat needs a summary prompt, got " +
                                        std::to_string(prompt.size) + " rows");
        Var widened = feature_concat(g, prompt, g.constant(stacked), cfg.d_model);
        Var w_full = g.concat({g.param(params.fc_ctx_w), g.param(params.in_proj_w)}, 0);
        x = g.add_rows(g.matmul(widened, w_full), g.param(params.in_proj_b));
    } else {
        x = g.add_rows(g.matmul(g.constant(stacked), g.param(params.in_proj_w)),
                       g.param(params.in_proj_b));
    }
    x = g.add(x, g.constant(sinusoidal_positions(t_out, cfg.d_model)));

    for (int b = 0; b < cfg.n_blocks; ++b) {
        bool equipped = cfg.equips(b);
        Consumption block_mode = equipped ? cfg.consumption : Consumption::None;
        if (cfg.consumption == Consumption::FeatureConcat) block_mode = Consumption::None;
        int s_cols = block_mode == Consumption::Prompt ? prompt.size : 0;
        WindowMask mask = build_window_mask(t_out, s_cols, cfg.cw);
        PromptEmbedding fed = prompt;
        if (block_mode == Consumption::None)
            fed = PromptEmbedding{g.constant(Tensor::zeros({0, cfg.d_model})), 0};
        x = conformer_block(g, x, fed, params.blocks[static_cast<size_t>(b)], mask, block_mode,
                            cfg.token_window);
    }
    return x;
}

}  // namespace ctxasr
