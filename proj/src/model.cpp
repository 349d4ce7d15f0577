#include "ctxasr/model.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "ctxasr/errors.hpp"

namespace ctxasr {

using nlohmann::json;

namespace {

ContextGeneratorKind generator_from_string(const std::string& s, bool cp) {
    if (s == "none") return ContextGeneratorKind::None;
    if (s == "frozen-sent") return ContextGeneratorKind::FrozenSentence;
    if (s == "frozen-tok") return ContextGeneratorKind::FrozenToken;
    if (s == "spm-tok")
        return cp ? ContextGeneratorKind::LearnedCopied : ContextGeneratorKind::LearnedRandom;
    throw UsageError("unknown context generator '" + s + "'");
}

std::string generator_to_string(ContextGeneratorKind k) {
    switch (k) {
        case ContextGeneratorKind::None: return "none";
        case ContextGeneratorKind::FrozenSentence: return "frozen-sent";
        case ContextGeneratorKind::FrozenToken: return "frozen-tok";
        case ContextGeneratorKind::LearnedRandom:
        case ContextGeneratorKind::LearnedCopied: return "spm-tok";
    }
    return "?";
}

Consumption consumption_from_string(const std::string& s) {
    if (s == "none") return Consumption::None;
    if (s == "feature-concat") return Consumption::FeatureConcat;
    if (s == "cross-attention") return Consumption::CrossAttention;
    if (s == "prompt") return Consumption::Prompt;
    throw UsageError("unknown consumption mode '" + s + "'");
}

}  // namespace

void ModelConfig::validate() const {
    if (encoder.consumption == Consumption::None) {
        if (generator != ContextGeneratorKind::None)
            throw UsageError("consumption 'none' cannot take a context generator");
    } else if (generator == ContextGeneratorKind::None) {
        throw UsageError("consumption '" + to_string(encoder.consumption) +
                         "' needs a context generator");
    }
    if (encoder.consumption == Consumption::FeatureConcat &&
        generator != ContextGeneratorKind::FrozenSentence)
        throw UsageError("feature-concat requires the frozen-sent generator");
    if (cp && generator != ContextGeneratorKind::LearnedCopied)
        throw UsageError("--cp applies only to the spm-tok generator");
    if (cp && (encoder.d_model != d_joint || d_emb != d_joint))
        throw UsageError("--cp requires d_model == d_emb == d_joint for an exact copy");
}

std::string ModelConfig::to_json() const {
    json j;
    j["n_blocks"] = encoder.n_blocks;
    j["d_model"] = encoder.d_model;
    j["heads"] = encoder.heads;
    j["d_head"] = encoder.d_head;
    j["conv_kernel"] = encoder.conv_kernel;
    j["ff_expansion"] = encoder.ff_expansion;
    j["subsample_factor"] = encoder.subsample_factor;
    j["cw"] = encoder.cw;
    j["d_feat"] = encoder.d_feat;
    j["token_window"] = encoder.token_window;
    j["consumption"] = to_string(encoder.consumption);
    j["prompt_blocks"] = encoder.prompt_blocks;
    j["generator"] = generator_to_string(generator);
    j["cp"] = cp;
    j["vocab_size"] = vocab_size;
    j["d_emb"] = d_emb;
    j["lstm_layers"] = lstm_layers;
    j["d_pred"] = d_pred;
    j["d_joint"] = d_joint;
    j["max_symbols_per_frame"] = max_symbols_per_frame;
    j["init_seed"] = init_seed;
    j["frozen_seed"] = frozen_seed;
    return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    ModelConfig c;
    c.encoder.n_blocks = j.at("n_blocks").get<int>();
    c.encoder.d_model = j.at("d_model").get<int>();
    c.encoder.heads = j.at("heads").get<int>();
    c.encoder.d_head = j.at("d_head").get<int>();
    c.encoder.conv_kernel = j.at("conv_kernel").get<int>();
    c.encoder.ff_expansion = j.at("ff_expansion").get<int>();
    c.encoder.subsample_factor = j.at("subsample_factor").get<int>();
    c.encoder.cw = j.at("cw").get<int>();
    c.encoder.d_feat = j.at("d_feat").get<int>();
    c.encoder.token_window = j.at("token_window").get<int>();
    c.encoder.consumption = consumption_from_string(j.at("consumption").get<std::string>());
    c.encoder.prompt_blocks = j.at("prompt_blocks").get<std::vector<int>>();
    c.cp = j.at("cp").get<bool>();
    c.generator = generator_from_string(j.at("generator").get<std::string>(), c.cp);
    c.vocab_size = j.at("vocab_size").get<int>();
    c.d_emb = j.at("d_emb").get<int>();
    c.lstm_layers = j.at("lstm_layers").get<int>();
    c.d_pred = j.at("d_pred").get<int>();
    c.d_joint = j.at("d_joint").get<int>();
    c.max_symbols_per_frame = j.at("max_symbols_per_frame").get<int>();
    c.init_seed = j.at("init_seed").get<uint64_t>();
    c.frozen_seed = j.at("frozen_seed").get<uint64_t>();
    return c;
}

void ModelConfig::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write model config " + path);
    out << to_json() << "\n";
}

ModelConfig ModelConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model config " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return from_json(text);
    } catch (const json::exception& e) {
        throw DataError(path + ": malformed model config: " + e.what());
    }
}

Model Model::init(const ModelConfig& config) {
    config.validate();
    Model m;
    m.config = config;
    Rng rng(derive_seed(config.init_seed, 0xA11));
    m.encoder = EncoderParams::init(config.encoder, rng);
    m.predictor = PredictionNetParams::init(config.vocab_size, config.d_emb, config.lstm_layers,
                                            config.d_pred, rng);
    m.joint = JointParams::init(config.encoder.d_model, config.d_pred, config.d_joint,
                                config.vocab_size, rng);
    m.prompt = PromptPath(config.generator, config.vocab_size, config.d_emb,
                          config.encoder.d_model, config.encoder.token_window,
                          config.frozen_seed, rng);
    return m;
}

void Model::visit(const ParamVisitor& fn) {
    encoder.visit("encoder", fn);
    prompt.visit("prompt", fn);
    predictor.visit("predictor", fn);
    joint.visit("joint", fn);
}

int64_t Model::param_count() {
    int64_t n = 0;
    visit([&n](const std::string&, Tensor& t) { n += t.numel(); });
    return n;
}

int64_t Model::added_param_count_vs_baseline() {
    int64_t n = prompt.added_param_count();
    for (auto& block : encoder.blocks) n += block.attention.cross_param_count();
    n += encoder.fc_ctx_w.numel();
    return n;
}

void Model::apply_cp() {
    // Encoder-side rows of the joint kernel: the block multiplying the
    // d_model encoder features.
    int d_model = config.encoder.d_model;
    Tensor enc_rows({d_model, config.d_joint});
    for (int i = 0; i < d_model; ++i)
        for (int j = 0; j < config.d_joint; ++j) enc_rows.at(i, j) = joint.w1.at(i, j);
    init_copied(prompt, predictor.embedding, &enc_rows);
}

PromptEmbedding Model::build_prompt(Graph& g, const std::string& context_text,
                                    const Vocabulary& vocab) {
    if (config.encoder.consumption == Consumption::None)
        return PromptEmbedding{g.constant(Tensor::zeros({0, config.encoder.d_model})), 0};
    return prompt.build(g, context_text, vocab);
}

Var Model::encode_utterance(Graph& g, const Tensor& features,
                            const PromptEmbedding& prompt_rows) {
    return encode(g, features, prompt_rows, config.encoder, encoder);
}

Var Model::loss(Graph& g, const Tensor& features, const std::string& context_text,
                const std::vector<int>& targets, const Vocabulary& vocab) {
    PromptEmbedding p = build_prompt(g, context_text, vocab);
    Var enc = encode_utterance(g, features, p);
    return rnnt_loss(g, enc, targets, predictor, joint);
}

std::vector<int> Model::decode(const Tensor& features, const std::string& context_text,
                               const Vocabulary& vocab) {
    Graph g(Graph::Mode::Inference);
    PromptEmbedding p = build_prompt(g, context_text, vocab);
    Var enc = encode_utterance(g, features, p);
    return greedy_decode(g.val(enc), predictor, joint, config.max_symbols_per_frame);
}

std::vector<int> transcript_ids(const std::vector<std::string>& transcript,
                                const Vocabulary& vocab) {
    std::vector<int> ids;
    ids.reserve(transcript.size());
    for (const auto& piece : transcript) {
        int id = vocab.id_of(piece);
        if (id < 0) throw DataError("transcript piece '" + piece + "' not in vocabulary");
        ids.push_back(id);
    }
    return ids;
}

}  // namespace ctxasr
