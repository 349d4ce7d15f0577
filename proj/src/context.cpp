#include "ctxasr/context.hpp"

#include <cmath>
#include <stdexcept>

namespace ctxasr {

std::string to_string(ContextGeneratorKind k) {
    switch (k) {
        case ContextGeneratorKind::None: return "none";
        case ContextGeneratorKind::FrozenSentence: return "frozen-sent";
        case ContextGeneratorKind::FrozenToken: return "frozen-tok";
        case ContextGeneratorKind::LearnedRandom: return "spm-tok";
        case ContextGeneratorKind::LearnedCopied: return "spm-tok+cp";
    }
    return "?";
}

namespace {

Tensor seeded_matrix(std::vector<int> shape, Rng& rng, double scale) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.normal() * scale;
    return t;
}

std::vector<uint8_t> ones_mask(int r, int c) {
    return std::vector<uint8_t>(static_cast<size_t>(r) * c, 1);
}

}  // namespace

FrozenTinyTransformer::FrozenTinyTransformer(int vocab_size, uint64_t seed) {
    Rng rng(derive_seed(seed, 0x7f02));
    const double emb_scale = 0.02;
    const double kern_scale = 1.0 / std::sqrt(static_cast<double>(kWidth));
    tok_embedding_ = seeded_matrix({vocab_size, kWidth}, rng, emb_scale);
    pos_embedding_ = seeded_matrix({kMaxPositions, kWidth}, rng, emb_scale);
    cls_row_ = seeded_matrix({1, kWidth}, rng, emb_scale);
    emb_ln_g_ = Tensor({kWidth}, 1.0);
    emb_ln_b_ = Tensor::zeros({kWidth});
    layers_.resize(kLayers);
    for (Layer& l : layers_) {
        l.wq = seeded_matrix({kWidth, kWidth}, rng, kern_scale);
        l.wk = seeded_matrix({kWidth, kWidth}, rng, kern_scale);
        l.wv = seeded_matrix({kWidth, kWidth}, rng, kern_scale);
        l.wo = seeded_matrix({kWidth, kWidth}, rng, kern_scale);
        l.attn_ln_g = Tensor({kWidth}, 1.0);
        l.attn_ln_b = Tensor::zeros({kWidth});
        l.ff_w1 = seeded_matrix({kWidth, kFfInner}, rng, kern_scale);
        l.ff_b1 = Tensor::zeros({kFfInner});
        l.ff_w2 = seeded_matrix({kFfInner, kWidth}, rng, 1.0 / std::sqrt(double(kFfInner)));
        l.ff_b2 = Tensor::zeros({kWidth});
        l.ff_ln_g = Tensor({kWidth}, 1.0);
        l.ff_ln_b = Tensor::zeros({kWidth});
    }
}

FrozenTinyTransformer::Output FrozenTinyTransformer::forward(std::vector<int> const& raw) const {
    std::vector<int> tokens = raw;
    bool truncated = false;
    if (static_cast<int>(tokens.size()) > kMaxPositions - 1) {
        tokens.resize(kMaxPositions - 1);
        truncated = true;
    }
    const int s = static_cast<int>(tokens.size());
    const int rows = s + 1;

    Tensor emb({rows, kWidth});
    for (int j = 0; j < kWidth; ++j) emb.at(0, j) = cls_row_.data[j] + pos_embedding_.at(0, j);
    for (int i = 0; i < s; ++i) {
        int id = tokens[static_cast<size_t>(i)];
        if (id < 0 || id >= tok_embedding_.rows())
            throw std::invalid_argument("frozen encoder: token id " + std::to_string(id) +
                                        " out of range");
        for (int j = 0; j < kWidth; ++j)
            emb.at(i + 1, j) = tok_embedding_.at(id, j) + pos_embedding_.at(i + 1, j);
    }

    Graph g(Graph::Mode::Inference);
    const double ln_eps = 1e-12;
    const int d_head = kWidth / kHeads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_head));
    auto ln = [&](Var x, const Tensor& gm, const Tensor& bt) {
        return g.layer_norm(x, g.constant(gm), g.constant(bt), ln_eps);
    };

    Var h = ln(g.constant(emb), emb_ln_g_, emb_ln_b_);
    for (const Layer& l : layers_) {
        Var q = g.matmul(h, g.constant(l.wq));
        Var k = g.matmul(h, g.constant(l.wk));
        Var v = g.matmul(h, g.constant(l.wv));
        std::vector<Var> heads;
        for (int hd = 0; hd < kHeads; ++hd) {
            int c0 = hd * d_head, c1 = c0 + d_head;
            Var scores = g.scale(
                g.matmul(g.slice(q, 1, c0, c1), g.transpose(g.slice(k, 1, c0, c1))), inv_sqrt);
            Var attn = g.softmax_masked(scores, ones_mask(rows, rows));
            heads.push_back(g.matmul(attn, g.slice(v, 1, c0, c1)));
        }
        Var att_out = g.matmul(g.concat(heads, 1), g.constant(l.wo));
        h = ln(g.add(h, att_out), l.attn_ln_g, l.attn_ln_b);
        Var ff = g.add_rows(
            g.matmul(g.gelu(g.add_rows(g.matmul(h, g.constant(l.ff_w1)), g.constant(l.ff_b1))),
                     g.constant(l.ff_w2)),
            g.constant(l.ff_b2));
        h = ln(g.add(h, ff), l.ff_ln_g, l.ff_ln_b);
    }
    return Output{g.val(h), truncated};
}

PromptEncoderParams PromptEncoderParams::init(int d_enc, int d_model, int token_window,
                                              Rng& rng) {
    PromptEncoderParams p;
    double s0 = 1.0 / std::sqrt(static_cast<double>(d_enc));
    p.projections.emplace_back(seeded_matrix({d_enc, d_enc}, rng, s0), Tensor::zeros({d_enc}));
    p.projections.emplace_back(seeded_matrix({d_enc, d_model}, rng, s0),
                               Tensor::zeros({d_model}));
    p.ln_gamma = Tensor({d_model}, 1.0);
    p.ln_beta = Tensor::zeros({d_model});
    p.token_window = token_window;
    for (auto& [w, b] : p.projections) {
        w.set_requires_grad(true);
        b.set_requires_grad(true);
    }
    p.ln_gamma.set_requires_grad(true);
    p.ln_beta.set_requires_grad(true);
    return p;
}

int PromptEncoderParams::param_count() const {
    int64_t n = ln_gamma.numel() + ln_beta.numel();
    for (const auto& [w, b] : projections) n += w.numel() + b.numel();
    return static_cast<int>(n);
}

void PromptEncoderParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    for (size_t i = 0; i < projections.size(); ++i) {
        fn(prefix + ".proj" + std::to_string(i) + ".weight", projections[i].first);
        fn(prefix + ".proj" + std::to_string(i) + ".bias", projections[i].second);
    }
    fn(prefix + ".ln.gamma", ln_gamma);
    fn(prefix + ".ln.beta", ln_beta);
}

Var project_prompt(Graph& g, Var enc, PromptEncoderParams& params) {
    Var h = enc;
    for (auto& [w, b] : params.projections)
        h = g.tanh(g.add_rows(g.matmul(h, g.param(w)), g.param(b)));
    h = g.layer_norm(h, g.param(params.ln_gamma), g.param(params.ln_beta), kLayerNormEps);
    int s = g.shape(h)[0];
    int keep = std::min(s, params.token_window);
    if (keep == s) return h;
    return params.keep_first ? g.slice(h, 0, 0, keep) : g.slice(h, 0, s - keep, s);
}

PromptPath::PromptPath(ContextGeneratorKind kind, int vocab_size, int d_emb, int d_model,
                       int token_window, uint64_t frozen_seed, Rng& rng)
    : kind_(kind) {
    if (kind == ContextGeneratorKind::None) return;
    if (kind == ContextGeneratorKind::FrozenSentence || kind == ContextGeneratorKind::FrozenToken)
        frozen_ = std::make_shared<FrozenTinyTransformer>(vocab_size, frozen_seed);
    else {
        embedding_ = seeded_matrix({vocab_size, d_emb}, rng,
                                   1.0 / std::sqrt(static_cast<double>(d_emb)));
        embedding_.set_requires_grad(true);
    }
    proj_ = PromptEncoderParams::init(d_enc(), d_model, token_window, rng);
}

int PromptPath::d_enc() const {
    switch (kind_) {
        case ContextGeneratorKind::FrozenSentence:
        case ContextGeneratorKind::FrozenToken:
            return FrozenTinyTransformer::kWidth;
        case ContextGeneratorKind::LearnedRandom:
        case ContextGeneratorKind::LearnedCopied:
            return embedding_.cols();
        case ContextGeneratorKind::None:
            break;
    }
    throw std::invalid_argument("prompt path: no context generator configured");
}

Var PromptPath::encode_context(Graph& g, const std::vector<int>& tokens) {
    switch (kind_) {
        case ContextGeneratorKind::FrozenSentence: {
            Tensor out = frozen_->forward(tokens).values;
            Tensor cls({1, out.cols()});
            for (int j = 0; j < out.cols(); ++j) cls.at(0, j) = out.at(0, j);
            return g.constant(std::move(cls));
        }
        case ContextGeneratorKind::FrozenToken: {
            Tensor out = frozen_->forward(tokens).values;
            Tensor seq({out.rows() - 1, out.cols()});
            for (int i = 1; i < out.rows(); ++i)
                for (int j = 0; j < out.cols(); ++j) seq.at(i - 1, j) = out.at(i, j);
            return g.constant(std::move(seq));
        }
        case ContextGeneratorKind::LearnedRandom:
        case ContextGeneratorKind::LearnedCopied:
            return g.gather_rows(g.param(embedding_), tokens);
        case ContextGeneratorKind::None:
            break;
    }
    throw std::invalid_argument("prompt path: encode_context without a generator");
}

PromptEmbedding PromptPath::build(Graph& g, const std::string& context_text,
                                  const Vocabulary& vocab) {
    if (kind_ == ContextGeneratorKind::None || context_text.empty()) {
        int d = kind_ == ContextGeneratorKind::None ? 0 : proj_.d_out();
        return PromptEmbedding{g.constant(Tensor::zeros({0, d})), 0};
    }
    std::vector<int> tokens = tokenize(context_text, vocab);
    Var enc = encode_context(g, tokens);
    Var prompt = project_prompt(g, enc, proj_);
    return PromptEmbedding{prompt, g.shape(prompt)[0]};
}

int PromptPath::added_param_count() {
    if (kind_ == ContextGeneratorKind::None) return 0;
    int n = proj_.param_count();
    if (kind_ == ContextGeneratorKind::LearnedRandom || kind_ == ContextGeneratorKind::LearnedCopied)
        n += static_cast<int>(embedding_.numel());
    return n;
}

void PromptPath::visit(const std::string& prefix, const ParamVisitor& fn) {
    if (kind_ == ContextGeneratorKind::None) return;
    if (kind_ == ContextGeneratorKind::LearnedRandom || kind_ == ContextGeneratorKind::LearnedCopied)
        fn(prefix + ".embedding", embedding_);
    proj_.visit(prefix, fn);
}

void init_copied(PromptPath& path, const Tensor& source_embedding, const Tensor* cp_source) {
    if (path.kind() != ContextGeneratorKind::LearnedRandom &&
        path.kind() != ContextGeneratorKind::LearnedCopied)
        throw std::invalid_argument("init_copied: prompt path has no learnable embedding");
    Tensor& table = path.embedding();
    if (table.shape != source_embedding.shape)
        throw std::invalid_argument("init_copied: embedding shapes differ, " +
                                    shape_str(table.shape) + " vs " +
                                    shape_str(source_embedding.shape));
    Tensor& first_w = path.projections().projections.front().first;
    if (cp_source && first_w.shape != cp_source->shape)
        throw std::invalid_argument("init_copied: projection shape " + shape_str(first_w.shape) +
                                    " incompatible with copy source " +
                                    shape_str(cp_source->shape));
    table.data = source_embedding.data;
    if (cp_source) first_w.data = cp_source->data;
}

}  // namespace ctxasr
