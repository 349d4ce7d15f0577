#include "ctxasr/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "ctxasr/errors.hpp"

namespace ctxasr {

using nlohmann::json;

namespace {

json metrics_to_json(const EvalResult& m) {
    json j;
    j["wer_all"] = m.wer_all;
    j["wer_with_context"] = m.wer_with_context;
    j["wer_without_context"] = m.wer_without_context;
    j["wer_ambiguous"] = m.wer_ambiguous;
    j["n_all"] = m.n_all;
    j["n_with_context"] = m.n_with_context;
    j["n_without_context"] = m.n_without_context;
    j["n_ambiguous"] = m.n_ambiguous;
    return j;
}

EvalResult metrics_from_json(const json& j) {
    EvalResult m;
    m.wer_all = j.at("wer_all").get<double>();
    m.wer_with_context = j.at("wer_with_context").get<double>();
    m.wer_without_context = j.at("wer_without_context").get<double>();
    m.wer_ambiguous = j.at("wer_ambiguous").get<double>();
    m.n_all = j.at("n_all").get<int>();
    m.n_with_context = j.at("n_with_context").get<int>();
    m.n_without_context = j.at("n_without_context").get<int>();
    m.n_ambiguous = j.at("n_ambiguous").get<int>();
    return m;
}

}  // namespace

std::string EvalRecord::to_json() const {
    json j;
    j["name"] = name;
    j["consumption"] = consumption;
    j["generator"] = generator;
    j["cp"] = cp;
    j["regime"] = regime;
    j["context_mode"] = context_mode;
    j["params_total"] = params_total;
    j["params_trainable"] = params_trainable;
    j["metrics"] = metrics_to_json(metrics);
    return j.dump();
}

EvalRecord EvalRecord::from_json(const std::string& text) {
    json j = json::parse(text);
    EvalRecord r;
    r.name = j.at("name").get<std::string>();
    r.consumption = j.at("consumption").get<std::string>();
    r.generator = j.at("generator").get<std::string>();
    r.cp = j.at("cp").get<bool>();
    r.regime = j.at("regime").get<std::string>();
    r.context_mode = j.at("context_mode").get<std::string>();
    r.params_total = j.at("params_total").get<long>();
    r.params_trainable = j.at("params_trainable").get<long>();
    r.metrics = metrics_from_json(j.at("metrics"));
    return r;
}

void write_eval_record(const std::string& path, const EvalRecord& record) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write eval record " + path);
    out << record.to_json() << "\n";
}

EvalRecord read_eval_record(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open eval record " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return EvalRecord::from_json(text);
    } catch (const json::exception& e) {
        throw DataError(path + ": malformed eval record: " + e.what());
    }
}

std::string format_report(const EvalRecord& baseline, const std::vector<EvalRecord>& candidates,
                          bool records) {
    std::ostringstream out;
    auto added_pct = [&](const EvalRecord& r) {
        return 100.0 * static_cast<double>(r.params_total - baseline.params_total) /
               baseline.params_total;
    };
    auto trainable_pct = [](const EvalRecord& r) {
        return 100.0 * static_cast<double>(r.params_trainable) / r.params_total;
    };
    if (records) {
        for (const EvalRecord& r : candidates) {
            json j = json::parse(r.to_json());
            j["rwerr_ambiguous"] = rwerr(baseline.metrics.wer_ambiguous, r.metrics.wer_ambiguous);
            j["rwerr_all"] = rwerr(baseline.metrics.wer_all, r.metrics.wer_all);
            j["added_params_pct"] = added_pct(r);
            j["trainable_params_pct"] = trainable_pct(r);
            out << j.dump() << "\n";
        }
        return out.str();
    }

    char line[192];
    std::snprintf(line, sizeof(line), "%-20s %-12s %3s %-9s %12s %10s %8s %8s\n", "consumption",
                  "generator", "cp", "regime", "rWERR-ambig", "rWERR-all", "+params", "train%");
    out << line;
    std::snprintf(line, sizeof(line), "%-20s %-12s %3s %-9s %11.1f%% %9.1f%% %7.1f%% %7.1f%%\n",
                  baseline.consumption.c_str(), baseline.generator.c_str(),
                  baseline.cp ? "yes" : "no", baseline.regime.c_str(), 0.0, 0.0, 0.0,
                  trainable_pct(baseline));
    out << line;
    for (const EvalRecord& r : candidates) {
        std::snprintf(line, sizeof(line), "%-20s %-12s %3s %-9s %11.1f%% %9.1f%% %7.1f%% %7.1f%%\n",
                      r.consumption.c_str(), r.generator.c_str(), r.cp ? "yes" : "no",
                      r.regime.c_str(), rwerr(baseline.metrics.wer_ambiguous, r.metrics.wer_ambiguous),
                      rwerr(baseline.metrics.wer_all, r.metrics.wer_all), added_pct(r),
                      trainable_pct(r));
        out << line;
    }
    return out.str();
}

}  // namespace ctxasr
