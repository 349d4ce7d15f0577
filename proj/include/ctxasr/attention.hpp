#pragma once
#include <cstdint>
#include <vector>

#include "ctxasr/context.hpp"
#include "ctxasr/graph.hpp"
#include "ctxasr/params.hpp"
#include "ctxasr/rng.hpp"

namespace ctxasr {

// Visibility pattern for one attention call: T acoustic queries over
// S' prompt columns followed by T acoustic columns. Every query sees all
// prompt columns plus acoustic frames j with i-cw <= j <= i; never the
// future.
struct WindowMask {
    int t_frames = 0;
    int prompt_cols = 0;
    int cw = 0;
    std::vector<uint8_t> bytes;  // [t_frames x (prompt_cols + t_frames)], row-major

    int key_cols() const { return prompt_cols + t_frames; }
    bool visible(int query, int key) const {
        return bytes[static_cast<size_t>(query) * key_cols() + key] != 0;
    }
};

WindowMask build_window_mask(int t_frames, int prompt_cols, int cw);

// Shared q/k/v/o kernels of one block's self-attention, plus the optional
// separate cross-attention kernel set used by the biasing module.
struct AttentionBlockParams {
    Tensor wq, wk, wv;  // [d_model x (heads * d_head)]
    Tensor wo;          // [(heads * d_head) x d_model]
    int heads = 0;
    int d_head = 0;
    bool has_cross = false;
    Tensor ca_wq, ca_wk, ca_wv, ca_wo;

    static AttentionBlockParams init(int d_model, int heads, int d_head, bool with_cross,
                                     Rng& rng);
    int param_count() const;
    int cross_param_count() const;
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

// Plain windowed self-attention; the mask must carry no prompt columns.
Var mhsa_plain(Graph& g, Var acoustic, AttentionBlockParams& p, const WindowMask& mask);

// Prompted self-attention: keys and values come from the time-axis concat of
// prompt rows and acoustic rows through the SAME kernels, queries from the
// acoustic rows only, so the output keeps length T.
Var mhsa_prompted(Graph& g, Var acoustic, const PromptEmbedding& prompt,
                  AttentionBlockParams& p, const WindowMask& mask, int max_prompt_rows);

// Cross-attention biasing: queries from the self-attention output, keys and
// values from the prompt through dedicated kernels, result added residually.
// An empty prompt contributes nothing.
Var mhca_biasing(Graph& g, Var mhsa_out, const PromptEmbedding& prompt,
                 AttentionBlockParams& p);

// Prepends one summary row to every acoustic frame along the feature axis;
// an empty prompt contributes a zero row.
Var feature_concat(Graph& g, const PromptEmbedding& summary, Var acoustic, int d_prompt);

}  // namespace ctxasr
