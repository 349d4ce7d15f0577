#include "ctxasr/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace ctxasr {

namespace {

Tensor kernel_init(std::vector<int> shape, Rng& rng) {
    Tensor t(std::move(shape));
    double scale = 1.0 / std::sqrt(static_cast<double>(t.shape[0]));
    for (double& v : t.data) v = rng.normal() * scale;
    t.set_requires_grad(true);
    return t;
}

// Scaled dot-product attention over pre-projected q/k/v, one softmax shared
// across all key columns of the mask.
Var attention_heads(Graph& g, Var q, Var k, Var v, int heads, int d_head,
                    const std::vector<uint8_t>& mask, Var wo) {
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_head));
    std::vector<Var> outs;
    outs.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        int c0 = h * d_head, c1 = c0 + d_head;
        Var scores = g.scale(g.matmul(g.slice(q, 1, c0, c1), g.transpose(g.slice(k, 1, c0, c1))),
                             inv_sqrt);
        Var attn = g.softmax_masked(scores, mask);
        outs.push_back(g.matmul(attn, g.slice(v, 1, c0, c1)));
    }
    return g.matmul(heads == 1 ? outs[0] : g.concat(outs, 1), wo);
}

}  // namespace

WindowMask build_window_mask(int t_frames, int prompt_cols, int cw) {
    if (t_frames < 1) throw std::invalid_argument("build_window_mask: need at least one frame");
    if (prompt_cols < 0 || cw < 0)
        throw std::invalid_argument("build_window_mask: negative prompt_cols or cw");
    WindowMask m;
    m.t_frames = t_frames;
    m.prompt_cols = prompt_cols;
    m.cw = cw;
    m.bytes.assign(static_cast<size_t>(t_frames) * (prompt_cols + t_frames), 0);
    int cols = prompt_cols + t_frames;
    for (int i = 0; i < t_frames; ++i) {
        uint8_t* row = m.bytes.data() + static_cast<size_t>(i) * cols;
        for (int p = 0; p < prompt_cols; ++p) row[p] = 1;
        for (int j = std::max(0, i - cw); j <= i; ++j) row[prompt_cols + j] = 1;
    }
    return m;
}

AttentionBlockParams AttentionBlockParams::init(int d_model, int heads, int d_head,
                                                bool with_cross, Rng& rng) {
    AttentionBlockParams p;
    p.heads = heads;
    p.d_head = d_head;
    int inner = heads * d_head;
    p.wq = kernel_init({d_model, inner}, rng);
    p.wk = kernel_init({d_model, inner}, rng);
    p.wv = kernel_init({d_model, inner}, rng);
    p.wo = kernel_init({inner, d_model}, rng);
    p.has_cross = with_cross;
    if (with_cross) {
        p.ca_wq = kernel_init({d_model, inner}, rng);
        p.ca_wk = kernel_init({d_model, inner}, rng);
        p.ca_wv = kernel_init({d_model, inner}, rng);
        p.ca_wo = kernel_init({inner, d_model}, rng);
    }
    return p;
}

int AttentionBlockParams::param_count() const {
    int64_t n = wq.numel() + wk.numel() + wv.numel() + wo.numel();
    return static_cast<int>(n) + cross_param_count();
}

int AttentionBlockParams::cross_param_count() const {
    if (!has_cross) return 0;
    return static_cast<int>(ca_wq.numel() + ca_wk.numel() + ca_wv.numel() + ca_wo.numel());
}

void AttentionBlockParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".wq", wq);
    fn(prefix + ".wk", wk);
    fn(prefix + ".wv", wv);
    fn(prefix + ".wo", wo);
    if (has_cross) {
        fn(prefix + ".ca_wq", ca_wq);
        fn(prefix + ".ca_wk", ca_wk);
        fn(prefix + ".ca_wv", ca_wv);
        fn(prefix + ".ca_wo", ca_wo);
    }
}

Var mhsa_plain(Graph& g, Var acoustic, AttentionBlockParams& p, const WindowMask& mask) {
    const Tensor& a = g.val(acoustic);
    if (mask.prompt_cols != 0)
        throw std::invalid_argument("mhsa_plain: mask carries prompt columns");
    if (mask.t_frames != a.rows())
        throw std::invalid_argument("mhsa_plain: mask built for " +
                                    std::to_string(mask.t_frames) + " frames, input has " +
                                    std::to_string(a.rows()));
    Var q = g.matmul(acoustic, g.param(p.wq));
    Var k = g.matmul(acoustic, g.param(p.wk));
    Var v = g.matmul(acoustic, g.param(p.wv));
    return attention_heads(g, q, k, v, p.heads, p.d_head, mask.bytes, g.param(p.wo));
}

Var mhsa_prompted(Graph& g, Var acoustic, const PromptEmbedding& prompt,
                  AttentionBlockParams& p, const WindowMask& mask, int max_prompt_rows) {
    const Tensor& a = g.val(acoustic);
    if (prompt.size > max_prompt_rows)
        throw std::invalid_argument("mhsa_prompted: prompt has " + std::to_string(prompt.size) +
                                    " rows, window allows " + std::to_string(max_prompt_rows));
    if (mask.prompt_cols != prompt.size || mask.t_frames != a.rows())
        throw std::invalid_argument("mhsa_prompted: mask built for (" +
                                    std::to_string(mask.t_frames) + "," +
                                    std::to_string(mask.prompt_cols) + "), got T=" +
                                    std::to_string(a.rows()) + " S'=" +
                                    std::to_string(prompt.size));
    Var keys_in = g.concat({prompt.values, acoustic}, 0);
    Var q = g.matmul(acoustic, g.param(p.wq));
    Var k = g.matmul(keys_in, g.param(p.wk));
    Var v = g.matmul(keys_in, g.param(p.wv));
    return attention_heads(g, q, k, v, p.heads, p.d_head, mask.bytes, g.param(p.wo));
}

Var mhca_biasing(Graph& g, Var mhsa_out, const PromptEmbedding& prompt,
                 AttentionBlockParams& p) {
    if (!p.has_cross)
        throw std::invalid_argument("mhca_biasing: cross-attention kernels are absent");
    if (prompt.size == 0) return mhsa_out;  // no context, no bias term
    const Tensor& x = g.val(mhsa_out);
    Var q = g.matmul(mhsa_out, g.param(p.ca_wq));
    Var k = g.matmul(prompt.values, g.param(p.ca_wk));
    Var v = g.matmul(prompt.values, g.param(p.ca_wv));
    std::vector<uint8_t> visible(static_cast<size_t>(x.rows()) * prompt.size, 1);
    Var bias = attention_heads(g, q, k, v, p.heads, p.d_head, visible, g.param(p.ca_wo));
    return g.add(mhsa_out, bias);
}

Var feature_concat(Graph& g, const PromptEmbedding& summary, Var acoustic, int d_prompt) {
    const Tensor& a = g.val(acoustic);
    if (summary.size > 1)
        throw std::invalid_argument("feature_concat: needs a single summary row, got " +
                                    std::to_string(summary.size));
    int t = a.rows();
    Var row = summary.size == 1 ? summary.values : g.constant(Tensor::zeros({1, d_prompt}));
    if (g.shape(row)[1] != d_prompt)
        throw std::invalid_argument("feature_concat: summary width " +
                                    std::to_string(g.shape(row)[1]) + " != " +
                                    std::to_string(d_prompt));
    std::vector<int> idx(static_cast<size_t>(t), 0);
    Var tiled = g.gather_rows(row, idx);          // [T x d_prompt]
    return g.concat({tiled, acoustic}, 1);        // prompt columns first
}

}  // namespace ctxasr
