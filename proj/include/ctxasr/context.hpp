#pragma once
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ctxasr/graph.hpp"
#include "ctxasr/params.hpp"
#include "ctxasr/rng.hpp"
#include "ctxasr/vocab.hpp"

namespace ctxasr {

// How previous-turn text becomes an embedding sequence. Frozen kinds run a
// fixed random-weight text transformer and never receive gradient; learned
// kinds look rows up in a trainable table.
enum class ContextGeneratorKind {
    None,
    FrozenSentence,  // single summary row (CLS output)
    FrozenToken,     // one row per sub-word, CLS discarded
    LearnedRandom,   // trainable table, random init
    LearnedCopied,   // trainable table, copied from the prediction network
};

std::string to_string(ContextGeneratorKind k);

// Frozen 2-layer text transformer (width 128, 2 heads, GELU feed-forward,
// learned positional rows, prepended CLS row). Weights are drawn once from a
// seeded generator and never trained, so its output is a pure function of
// the token sequence.
class FrozenTinyTransformer {
public:
    static constexpr int kWidth = 128;
    static constexpr int kLayers = 2;
    static constexpr int kHeads = 2;
    static constexpr int kFfInner = 512;
    static constexpr int kMaxPositions = 512;

    FrozenTinyTransformer(int vocab_size, uint64_t seed);

    struct Output {
        Tensor values;    // [(S+1) x 128], row 0 is CLS
        bool truncated;   // input exceeded kMaxPositions-1 and was cut
    };
    Output forward(const std::vector<int>& tokens) const;

private:
    struct Layer {
        Tensor wq, wk, wv, wo;       // [128 x 128]
        Tensor attn_ln_g, attn_ln_b;
        Tensor ff_w1, ff_b1, ff_w2, ff_b2;
        Tensor ff_ln_g, ff_ln_b;
    };
    Tensor tok_embedding_;  // [V x 128]
    Tensor pos_embedding_;  // [kMaxPositions x 128]
    Tensor cls_row_;        // [1 x 128]
    Tensor emb_ln_g_, emb_ln_b_;
    std::vector<Layer> layers_;
};

// Dense-tanh projection stack with a final layer norm and truncation to the
// first (or most recent) token_window rows.
struct PromptEncoderParams {
    std::vector<std::pair<Tensor, Tensor>> projections;  // (weight [in x out], bias [out])
    Tensor ln_gamma, ln_beta;                            // [d_model]
    int token_window = 30;
    bool keep_first = true;

    static PromptEncoderParams init(int d_enc, int d_model, int token_window, Rng& rng);

    int d_in() const { return projections.front().first.shape[0]; }
    int d_out() const { return projections.back().first.shape[1]; }
    int param_count() const;
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

// Prompt rows for one utterance; size == 0 encodes absent context.
struct PromptEmbedding {
    Var values;  // [size x d_model]
    int size = 0;
};

// Context generator + projection stack: text in, prompt rows out.
class PromptPath {
public:
    PromptPath() = default;
    PromptPath(ContextGeneratorKind kind, int vocab_size, int d_emb, int d_model,
               int token_window, uint64_t frozen_seed, Rng& rng);

    ContextGeneratorKind kind() const { return kind_; }
    int d_enc() const;

    // Embedding sequence for a token list: [S x d_enc]. Frozen kinds enter
    // the graph as constants; learned kinds go through the trainable table.
    Var encode_context(Graph& g, const std::vector<int>& tokens);

    // Full pipeline; empty text short-circuits to an empty prompt.
    PromptEmbedding build(Graph& g, const std::string& context_text, const Vocabulary& vocab);

    PromptEncoderParams& projections() { return proj_; }
    Tensor& embedding() { return embedding_; }
    const FrozenTinyTransformer* frozen() const { return frozen_.get(); }

    // Trainable parameters added by the prompt path.
    int added_param_count();
    void visit(const std::string& prefix, const ParamVisitor& fn);

private:
    ContextGeneratorKind kind_ = ContextGeneratorKind::None;
    std::shared_ptr<FrozenTinyTransformer> frozen_;
    Tensor embedding_;  // [V x d_emb] for learned kinds
    PromptEncoderParams proj_;
};

// Applies the projection stack, layer norm and truncation; rows stay in the
// same order. S=0 passes through to an empty prompt.
Var project_prompt(Graph& g, Var enc, PromptEncoderParams& params);

// Copy-initialization: the embedding table becomes a value copy of
// `source_embedding` (then trains independently); when `cp_source` is given
// the first projection weight is initialized from it. Shape mismatch throws
// before anything is copied.
void init_copied(PromptPath& path, const Tensor& source_embedding, const Tensor* cp_source);

}  // namespace ctxasr
