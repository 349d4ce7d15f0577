#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "ctxasr/conformer.hpp"
#include "ctxasr/context.hpp"
#include "ctxasr/synth.hpp"
#include "ctxasr/transducer.hpp"
#include "ctxasr/vocab.hpp"

namespace ctxasr {

struct ModelConfig {
    EncoderConfig encoder;
    ContextGeneratorKind generator = ContextGeneratorKind::None;
    bool cp = false;  // copy prediction-net embedding + joint kernel into the prompt path
    int vocab_size = 64;
    int d_emb = 32;
    int lstm_layers = 1;
    int d_pred = 32;
    int d_joint = 32;
    int max_symbols_per_frame = 4;
    uint64_t init_seed = 1;
    uint64_t frozen_seed = 1234;

    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
    void save(const std::string& path) const;
    static ModelConfig load(const std::string& path);
};

// Full conformer transducer with an optional context path.
struct Model {
    ModelConfig config;
    EncoderParams encoder;
    PromptPath prompt;
    PredictionNetParams predictor;
    JointParams joint;

    static Model init(const ModelConfig& config);

    void visit(const ParamVisitor& fn);
    int64_t param_count();
    int64_t added_param_count_vs_baseline();

    // Copy-initialization of the prompt path from the transducer (the CP
    // variant): the embedding table from the prediction network, the first
    // projection from the encoder-side rows of the joint kernel.
    void apply_cp();

    PromptEmbedding build_prompt(Graph& g, const std::string& context_text,
                                 const Vocabulary& vocab);
    Var encode_utterance(Graph& g, const Tensor& features, const PromptEmbedding& prompt_rows);

    // RNN-T loss of one utterance; context_text may be empty.
    Var loss(Graph& g, const Tensor& features, const std::string& context_text,
             const std::vector<int>& targets, const Vocabulary& vocab);

    std::vector<int> decode(const Tensor& features, const std::string& context_text,
                            const Vocabulary& vocab);
};

// Target ids for a reference transcript (exact piece lookup).
std::vector<int> transcript_ids(const std::vector<std::string>& transcript,
                                const Vocabulary& vocab);

}  // namespace ctxasr
