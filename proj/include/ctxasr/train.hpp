#pragma once
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctxasr/checkpoint.hpp"
#include "ctxasr/model.hpp"
#include "ctxasr/synth.hpp"

namespace ctxasr {

enum class Regime { All, MhaAndProjections, ProjectionsOnly };

std::string to_string(Regime r);
Regime regime_from_string(const std::string& s);

// Name predicate deciding which parameters train under a regime. The sets
// nest: ProjectionsOnly (context projections, prompt layer norm, learned
// context embedding) sits inside MhaAndProjections (plus every attention
// kernel and the attention-module layer norms) inside All.
struct FreezeMask {
    Regime regime = Regime::All;

    bool trainable(const std::string& name) const;
};

struct TrainConfig {
    double lr_peak = 2e-3;
    int warmup_steps = 200;
    double decay_rate = 0.5;
    int decay_interval = 1000;
    int total_steps = 1500;
    int batch_size = 8;
    Regime regime = Regime::All;
    int checkpoint_interval = 100;
    int n_average = 5;
    uint64_t seed = 1;
    bool use_context = true;  // the seed phase trains context-free
    bool use_specaugment = true;
    int sa_time_masks = 1;
    int sa_time_width = 4;
    int sa_feat_masks = 1;
    int sa_feat_width = 3;
};

// lr(step): linear warm-up to lr_peak, then stepless exponential decay.
double lr_at(int step, const TrainConfig& config);

// Flat view over a model's named parameters.
struct Registry {
    std::vector<std::pair<std::string, Tensor*>> items;

    static Registry of(Model& model);
    int64_t count_trainable(const FreezeMask& mask) const;
};

// Per-parameter first/second moment buffers.
struct AdamState {
    std::unordered_map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One update over every trainable parameter from its accumulated gradient.
// Frozen parameters (and their moments) are untouched bitwise.
void adam_step(const Registry& params, AdamState& state, int step, const TrainConfig& config,
               const FreezeMask& mask);

struct TrainResult {
    std::vector<std::string> checkpoint_paths;
    std::string final_checkpoint;  // average of the last n_average checkpoints
    double final_loss = 0.0;
    std::vector<double> step_losses;
};

// Minibatch RNN-T training with checkpointing and a metrics log
// (line-delimited {step, loss, lr} records at <out_dir>/metrics.jsonl).
// Aborts with DivergenceError when the loss goes non-finite.
TrainResult train(Model& model, const Corpus& corpus, const Vocabulary& vocab,
                  const TrainConfig& config, const std::string& out_dir);

}  // namespace ctxasr
