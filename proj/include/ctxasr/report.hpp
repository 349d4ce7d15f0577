#pragma once
#include <string>
#include <vector>

#include "ctxasr/eval.hpp"

namespace ctxasr {

// Serialized output of one evaluation run; the unit the report command
// consumes and the machine-readable unit it can emit.
struct EvalRecord {
    std::string name;         // run label, e.g. "prompt-spm-cp"
    std::string consumption;  // none | feature-concat | cross-attention | prompt
    std::string generator;    // none | frozen-sent | frozen-tok | spm-tok
    bool cp = false;
    std::string regime;       // all | mha-proj | proj-only
    std::string context_mode; // as-labeled | force-empty
    long params_total = 0;
    long params_trainable = 0;
    EvalResult metrics;

    std::string to_json() const;
    static EvalRecord from_json(const std::string& text);
};

void write_eval_record(const std::string& path, const EvalRecord& record);
EvalRecord read_eval_record(const std::string& path);

// Ablation table against a baseline record: per candidate the relative
// error-rate reduction on the ambiguous subset and overall, plus exact
// added/trainable parameter percentages. `records` switches to one JSON
// record per line (parseable by EvalRecord::from_json plus rwerr fields).
std::string format_report(const EvalRecord& baseline, const std::vector<EvalRecord>& candidates,
                          bool records);

}  // namespace ctxasr
