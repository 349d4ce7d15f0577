#include "ctxasr/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "ctxasr/errors.hpp"
#include "ctxasr/rng.hpp"

namespace ctxasr {

std::string to_string(Regime r) {
    switch (r) {
        case Regime::All: return "all";
        case Regime::MhaAndProjections: return "mha-proj";
        case Regime::ProjectionsOnly: return "proj-only";
    }
    return "?";
}

Regime regime_from_string(const std::string& s) {
    if (s == "all") return Regime::All;
    if (s == "mha-proj") return Regime::MhaAndProjections;
    if (s == "proj-only") return Regime::ProjectionsOnly;
    throw UsageError("unknown regime '" + s + "'");
}

bool FreezeMask::trainable(const std::string& name) const {
    bool context_path = name.rfind("prompt.", 0) == 0;
    switch (regime) {
        case Regime::All:
            return true;
        case Regime::ProjectionsOnly:
            return context_path;
        case Regime::MhaAndProjections:
            return context_path || name.find(".att.") != std::string::npos;
    }
    return true;
}

double lr_at(int step, const TrainConfig& config) {
    if (step <= config.warmup_steps)
        return config.lr_peak * static_cast<double>(step) / config.warmup_steps;
    double progress = static_cast<double>(step - config.warmup_steps) / config.decay_interval;
    return config.lr_peak * std::pow(config.decay_rate, progress);
}

Registry Registry::of(Model& model) {
    Registry r;
    model.visit([&r](const std::string& name, Tensor& t) { r.items.emplace_back(name, &t); });
    return r;
}

int64_t Registry::count_trainable(const FreezeMask& mask) const {
    int64_t n = 0;
    for (const auto& [name, t] : items)
        if (mask.trainable(name)) n += t->numel();
    return n;
}

void adam_step(const Registry& params, AdamState& state, int step, const TrainConfig& config,
               const FreezeMask& mask) {
    if (step < 1) throw std::invalid_argument("adam_step: step counts from 1");
    double lr = lr_at(step, config);
    double bc1 = 1.0 - std::pow(state.beta1, step);
    double bc2 = 1.0 - std::pow(state.beta2, step);
    for (const auto& [name, t] : params.items) {
        if (!mask.trainable(name)) continue;
        if (t->grad.empty()) continue;
        auto& [m, v] = state.moments[name];
        if (m.size() != t->data.size()) {
            m.assign(t->data.size(), 0.0);
            v.assign(t->data.size(), 0.0);
        }
        for (size_t i = 0; i < t->data.size(); ++i) {
            double g = t->grad[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            double m_hat = m[i] / bc1;
            double v_hat = v[i] / bc2;
            t->data[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
}

TrainResult train(Model& model, const Corpus& corpus, const Vocabulary& vocab,
                  const TrainConfig& config, const std::string& out_dir) {
    if (corpus.utterances.empty()) throw DataError("training corpus is empty");
    std::filesystem::create_directories(out_dir);
    std::ofstream metrics(out_dir + "/metrics.jsonl");
    if (!metrics) throw DataError("cannot write metrics log in " + out_dir);

    Registry registry = Registry::of(model);
    FreezeMask mask{config.regime};
    AdamState adam;
    Rng rng(derive_seed(config.seed, 0x7a41));

    std::vector<size_t> order(corpus.utterances.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    size_t cursor = order.size();  // trigger a shuffle on first use

    TrainResult result;
    for (int step = 1; step <= config.total_steps; ++step) {
        for (auto& [name, t] : registry.items) t->zero_grad();
        double batch_loss = 0.0;
        for (int b = 0; b < config.batch_size; ++b) {
            if (cursor == order.size()) {
                rng.shuffle(order);
                cursor = 0;
            }
            const Utterance& utt = corpus.utterances[order[cursor++]];
            Tensor features = utt.features;
            if (config.use_specaugment)
                features = spec_augment(features, config.sa_time_masks,
                                        std::min(config.sa_time_width, features.rows()),
                                        config.sa_feat_masks,
                                        std::min(config.sa_feat_width, features.cols()), rng);
            std::vector<int> targets = transcript_ids(utt.transcript, vocab);
            std::string context = config.use_context ? utt.context_text : std::string();
            Graph g;
            Var loss = model.loss(g, features, context, targets, vocab);
            double value = g.val(loss).data[0];
            if (!std::isfinite(value))
                throw DivergenceError("loss diverged at step " + std::to_string(step));
            batch_loss += value;
            g.backward(g.scale(loss, 1.0 / config.batch_size));
        }
        batch_loss /= config.batch_size;
        adam_step(registry, adam, step, config, mask);
        result.step_losses.push_back(batch_loss);

        nlohmann::json rec;
        rec["step"] = step;
        rec["loss"] = batch_loss;
        rec["lr"] = lr_at(step, config);
        metrics << rec.dump() << "\n";

        if (step % config.checkpoint_interval == 0 || step == config.total_steps) {
            char name[32];
            std::snprintf(name, sizeof(name), "step_%06d.ckpt", step);
            std::string path = out_dir + "/" + name;
            if (result.checkpoint_paths.empty() || result.checkpoint_paths.back() != path) {
                write_checkpoint(path, snapshot(model));
                result.checkpoint_paths.push_back(path);
            }
        }
    }
    result.final_loss = result.step_losses.empty() ? 0.0 : result.step_losses.back();

    int take = std::min<int>(config.n_average, static_cast<int>(result.checkpoint_paths.size()));
    std::vector<std::string> tail(result.checkpoint_paths.end() - take,
                                  result.checkpoint_paths.end());
    NamedTensors averaged = checkpoint_average(tail);
    result.final_checkpoint = out_dir + "/final.ckpt";
    write_checkpoint(result.final_checkpoint, averaged);
    return result;
}

}  // namespace ctxasr
