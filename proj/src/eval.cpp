#include "ctxasr/eval.hpp"

#include <algorithm>
#include <stdexcept>

#include "ctxasr/errors.hpp"

namespace ctxasr {

EditCounts edit_distance(const std::vector<int>& hyp, const std::vector<int>& ref) {
    if (ref.empty()) throw std::invalid_argument("edit_distance: empty reference");
    size_t h = hyp.size(), r = ref.size();
    std::vector<int> prev(r + 1), cur(r + 1);
    for (size_t j = 0; j <= r; ++j) prev[j] = static_cast<int>(j);
    for (size_t i = 1; i <= h; ++i) {
        cur[0] = static_cast<int>(i);
        for (size_t j = 1; j <= r; ++j) {
            int sub = prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
            cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return EditCounts{prev[r], static_cast<int>(r)};
}

double wer(const std::vector<int>& hyp, const std::vector<int>& ref) {
    return edit_distance(hyp, ref).rate();
}

double rwerr(double baseline_wer, double candidate_wer) {
    if (baseline_wer <= 0.0)
        throw std::invalid_argument("rwerr: baseline error rate must be positive");
    return 100.0 * (baseline_wer - candidate_wer) / baseline_wer;
}

std::string to_string(ContextMode m) {
    return m == ContextMode::AsLabeled ? "as-labeled" : "force-empty";
}

ContextMode context_mode_from_string(const std::string& s) {
    if (s == "as-labeled") return ContextMode::AsLabeled;
    if (s == "force-empty") return ContextMode::ForceEmpty;
    throw UsageError("unknown context mode '" + s + "'");
}

EvalResult evaluate(Model& model, const Corpus& corpus, const Vocabulary& vocab,
                    const SynthMeta& meta, ContextMode mode) {
    if (corpus.utterances.empty()) throw DataError("evaluation corpus is empty");
    struct Acc {
        long edits = 0;
        long ref = 0;
        int n = 0;
        void add(const EditCounts& c) {
            edits += c.edits;
            ref += c.ref_len;
            ++n;
        }
        double rate() const { return ref == 0 ? 0.0 : static_cast<double>(edits) / ref; }
    };
    Acc all, with_ctx, without_ctx, ambiguous;

    for (const Utterance& u : corpus.utterances) {
        std::vector<int> ref = transcript_ids(u.transcript, vocab);
        std::string context = mode == ContextMode::AsLabeled ? u.context_text : std::string();
        std::vector<int> hyp = model.decode(u.features, context, vocab);
        EditCounts c = edit_distance(hyp, ref);
        all.add(c);
        if (u.context_text.empty())
            without_ctx.add(c);
        else
            with_ctx.add(c);
        bool has_ambiguous = false;
        for (int id : ref) has_ambiguous = has_ambiguous || meta.is_ambiguous_id(id);
        if (has_ambiguous) ambiguous.add(c);
    }

    EvalResult r;
    r.wer_all = all.rate();
    r.wer_with_context = with_ctx.rate();
    r.wer_without_context = without_ctx.rate();
    r.wer_ambiguous = ambiguous.rate();
    r.n_all = all.n;
    r.n_with_context = with_ctx.n;
    r.n_without_context = without_ctx.n;
    r.n_ambiguous = ambiguous.n;
    return r;
}

}  // namespace ctxasr
