#pragma once
#include <string>
#include <vector>

#include "ctxasr/model.hpp"
#include "ctxasr/synth.hpp"

namespace ctxasr {

struct EditCounts {
    int edits = 0;
    int ref_len = 0;

    double rate() const { return static_cast<double>(edits) / ref_len; }
};

// Uniform-cost Levenshtein alignment (substitutions, insertions, deletions).
EditCounts edit_distance(const std::vector<int>& hyp, const std::vector<int>& ref);

// Token error rate against a non-empty reference.
double wer(const std::vector<int>& hyp, const std::vector<int>& ref);

// Relative error-rate reduction in percent; positive means `candidate` wins.
double rwerr(double baseline_wer, double candidate_wer);

enum class ContextMode { AsLabeled, ForceEmpty };

std::string to_string(ContextMode m);
ContextMode context_mode_from_string(const std::string& s);

// Corpus-level rates (summed edits over summed reference lengths) for the
// whole set and its breakdowns: by context presence in the data, and by
// whether the reference carries a homophone-pair member.
struct EvalResult {
    double wer_all = 0.0;
    double wer_with_context = 0.0;
    double wer_without_context = 0.0;
    double wer_ambiguous = 0.0;
    int n_all = 0;
    int n_with_context = 0;
    int n_without_context = 0;
    int n_ambiguous = 0;
};

EvalResult evaluate(Model& model, const Corpus& corpus, const Vocabulary& vocab,
                    const SynthMeta& meta, ContextMode mode);

}  // namespace ctxasr
