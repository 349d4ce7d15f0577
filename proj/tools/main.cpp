#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ctxasr/checkpoint.hpp"
#include "ctxasr/errors.hpp"
#include "ctxasr/eval.hpp"
#include "ctxasr/model.hpp"
#include "ctxasr/report.hpp"
#include "ctxasr/synth.hpp"
#include "ctxasr/train.hpp"

namespace fs = std::filesystem;
using namespace ctxasr;
using nlohmann::json;

namespace {

struct ArchFlags {
    int n_blocks = 2;
    int d_model = 32;
    int heads = 2;
    int d_head = 8;
    int conv_kernel = 4;
    int ff_expansion = 2;
    int subsample = 3;
    int cw = 40;
    int token_window = 30;
    int d_emb = 32;
    int lstm_layers = 1;
    int d_pred = 32;
    int d_joint = 32;
    uint64_t frozen_seed = 1234;
};

void add_arch_flags(CLI::App* cmd, ArchFlags& a) {
    cmd->add_option("--blocks", a.n_blocks, "conformer blocks");
    cmd->add_option("--d-model", a.d_model, "encoder width");
    cmd->add_option("--heads", a.heads, "attention heads");
    cmd->add_option("--d-head", a.d_head, "per-head width");
    cmd->add_option("--conv-kernel", a.conv_kernel, "depthwise conv kernel");
    cmd->add_option("--ff-expansion", a.ff_expansion, "feed-forward expansion");
    cmd->add_option("--subsample", a.subsample, "frame stacking factor");
    cmd->add_option("--cw", a.cw, "acoustic context window");
    cmd->add_option("--token-window", a.token_window, "prompt truncation window");
    cmd->add_option("--d-emb", a.d_emb, "prediction embedding width");
    cmd->add_option("--lstm-layers", a.lstm_layers, "prediction LSTM layers");
    cmd->add_option("--d-pred", a.d_pred, "prediction output width");
    cmd->add_option("--d-joint", a.d_joint, "joint hidden width");
    cmd->add_option("--frozen-seed", a.frozen_seed, "frozen text encoder seed");
}

ModelConfig make_model_config(const ArchFlags& a, const std::string& consumption,
                              const std::string& generator, bool cp, int d_feat, int vocab_size,
                              uint64_t init_seed) {
    json j;
    j["n_blocks"] = a.n_blocks;
    j["d_model"] = a.d_model;
    j["heads"] = a.heads;
    j["d_head"] = a.d_head;
    j["conv_kernel"] = a.conv_kernel;
    j["ff_expansion"] = a.ff_expansion;
    j["subsample_factor"] = a.subsample;
    j["cw"] = a.cw;
    j["d_feat"] = d_feat;
    j["token_window"] = a.token_window;
    j["consumption"] = consumption;
    j["prompt_blocks"] = json::array();
    j["generator"] = generator;
    j["cp"] = cp;
    j["vocab_size"] = vocab_size;
    j["d_emb"] = a.d_emb;
    j["lstm_layers"] = a.lstm_layers;
    j["d_pred"] = a.d_pred;
    j["d_joint"] = a.d_joint;
    j["max_symbols_per_frame"] = 4;
    j["init_seed"] = init_seed;
    j["frozen_seed"] = a.frozen_seed;
    return ModelConfig::from_json(j.dump());
}

std::string sidecar_path(const std::string& checkpoint) { return checkpoint + ".json"; }

ModelConfig load_sidecar(const std::string& checkpoint, std::string* regime_out) {
    std::string path = sidecar_path(checkpoint);
    if (!fs::exists(path)) throw DataError("missing model config sidecar " + path);
    if (regime_out) {
        std::ifstream in(path);
        json j;
        in >> j;
        *regime_out = j.value("regime", "all");
    }
    return ModelConfig::load(path);
}

void write_sidecar(const std::string& checkpoint, const ModelConfig& config,
                   const std::string& regime) {
    json j = json::parse(config.to_json());
    j["regime"] = regime;
    std::ofstream out(sidecar_path(checkpoint));
    if (!out) throw DataError("cannot write " + sidecar_path(checkpoint));
    out << j.dump(2) << "\n";
}

int cmd_gen_data(const SynthConfig& base, const std::string& out_dir, int train_sessions,
                 int dev_sessions, int test_sessions) {
    fs::create_directories(out_dir);
    Vocabulary vocab = build_synth_vocab(base.vocab_size);
    vocab.save(out_dir + "/vocab.txt");

    struct Split {
        const char* name;
        int sessions;
        int offset;
    };
    SynthMeta meta_out;
    for (const Split& split :
         {Split{"train", train_sessions, 0}, Split{"dev", dev_sessions, train_sessions},
          Split{"test", test_sessions, train_sessions + dev_sessions}}) {
        SynthConfig cfg = base;
        cfg.n_sessions = split.sessions;
        cfg.session_offset = split.offset;
        SynthOutput out = gen_corpus(cfg);
        write_corpus(out.corpus, out_dir + "/" + split.name + ".jsonl");
        meta_out = out.meta;

        int non_initial = 0, with_context = 0, ambiguous = 0;
        Vocabulary v = build_synth_vocab(cfg.vocab_size);
        for (const Utterance& u : out.corpus.utterances) {
            if (!session_initial(u)) {
                ++non_initial;
                if (!u.context_text.empty()) ++with_context;
            }
            for (const auto& piece : u.transcript)
                if (out.meta.is_ambiguous_id(v.id_of(piece))) {
                    ++ambiguous;
                    break;
                }
        }
        double coverage =
            non_initial == 0 ? 0.0 : static_cast<double>(with_context) / non_initial;
        std::printf("%s: %zu utterances, %d with-context / %d non-initial (coverage %.3f), "
                    "%d ambiguous\n",
                    split.name, out.corpus.utterances.size(), with_context, non_initial, coverage,
                    ambiguous);
    }
    meta_out.config = base;
    write_meta(meta_out, out_dir + "/meta.json");
    return 0;
}

int cmd_train(const std::string& corpus_dir, const std::string& out_dir, const std::string& phase,
              const std::string& seed_checkpoint, const std::string& consumption,
              const std::string& generator, bool cp, const std::string& regime,
              const ArchFlags& arch, TrainConfig tcfg) {
    SynthMeta meta = read_meta(corpus_dir + "/meta.json");
    Vocabulary vocab = Vocabulary::load(corpus_dir + "/vocab.txt");
    Corpus corpus = read_corpus(corpus_dir + "/train.jsonl");

    tcfg.regime = regime_from_string(regime);

    Model model = [&] {
        if (phase == "seed") {
            ModelConfig mc = make_model_config(arch, "none", "none", false, meta.config.d_feat,
                                               vocab.size(), tcfg.seed);
            Model m = Model::init(mc);
            return m;
        }
        if (seed_checkpoint.empty())
            throw UsageError("--phase finetune requires --checkpoint with the seed model");
        ModelConfig mc = make_model_config(arch, consumption, generator, cp, meta.config.d_feat,
                                           vocab.size(), tcfg.seed);
        Model m = Model::init(mc);
        load_into(m, read_checkpoint(seed_checkpoint), /*allow_fresh_context=*/true);
        if (cp) m.apply_cp();
        return m;
    }();
    if (phase == "seed") tcfg.use_context = false;

    TrainResult result = train(model, corpus, vocab, tcfg, out_dir);
    write_sidecar(result.final_checkpoint, model.config, regime);
    std::printf("trained %d steps, final loss %.4f, wrote %s\n", tcfg.total_steps,
                result.final_loss, result.final_checkpoint.c_str());
    return 0;
}

Model load_model(const std::string& checkpoint, std::string* regime) {
    ModelConfig mc = load_sidecar(checkpoint, regime);
    Model m = Model::init(mc);
    load_into(m, read_checkpoint(checkpoint), /*allow_fresh_context=*/false);
    return m;
}

int cmd_decode(const std::string& corpus_dir, const std::string& split,
               const std::string& checkpoint, const std::string& context_mode,
               const std::string& out_path) {
    Vocabulary vocab = Vocabulary::load(corpus_dir + "/vocab.txt");
    Corpus corpus = read_corpus(corpus_dir + "/" + split + ".jsonl");
    Model model = load_model(checkpoint, nullptr);
    ContextMode mode = context_mode_from_string(context_mode);

    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path);
        if (!file) throw DataError("cannot write " + out_path);
        out = &file;
    }
    for (const Utterance& u : corpus.utterances) {
        std::string context = mode == ContextMode::AsLabeled ? u.context_text : std::string();
        std::vector<int> hyp = model.decode(u.features, context, vocab);
        json rec;
        rec["id"] = u.id;
        json pieces = json::array();
        for (int id : hyp) pieces.push_back(vocab.piece(id));
        rec["transcript"] = std::move(pieces);
        (*out) << rec.dump() << "\n";
    }
    return 0;
}

int cmd_eval(const std::string& corpus_dir, const std::string& split,
             const std::string& checkpoint, const std::string& context_mode,
             const std::string& out_path, const std::string& name) {
    Vocabulary vocab = Vocabulary::load(corpus_dir + "/vocab.txt");
    SynthMeta meta = read_meta(corpus_dir + "/meta.json");
    Corpus corpus = read_corpus(corpus_dir + "/" + split + ".jsonl");
    std::string regime;
    Model model = load_model(checkpoint, &regime);
    ContextMode mode = context_mode_from_string(context_mode);

    EvalRecord rec;
    rec.name = name.empty() ? fs::path(checkpoint).stem().string() : name;
    rec.consumption = to_string(model.config.encoder.consumption);
    switch (model.config.generator) {
        case ContextGeneratorKind::None: rec.generator = "none"; break;
        case ContextGeneratorKind::FrozenSentence: rec.generator = "frozen-sent"; break;
        case ContextGeneratorKind::FrozenToken: rec.generator = "frozen-tok"; break;
        default: rec.generator = "spm-tok"; break;
    }
    rec.cp = model.config.cp;
    rec.regime = regime;
    rec.context_mode = context_mode;
    rec.params_total = static_cast<long>(model.param_count());
    Registry registry = Registry::of(model);
    rec.params_trainable =
        static_cast<long>(registry.count_trainable(FreezeMask{regime_from_string(regime)}));
    rec.metrics = evaluate(model, corpus, vocab, meta, mode);

    std::cout << rec.to_json() << "\n";
    if (!out_path.empty()) write_eval_record(out_path, rec);
    return 0;
}

int cmd_report(const std::string& baseline_path, const std::vector<std::string>& candidate_paths,
               const std::string& format) {
    if (format != "table" && format != "records")
        throw UsageError("--format must be table or records");
    EvalRecord baseline = read_eval_record(baseline_path);
    std::vector<EvalRecord> candidates;
    for (const auto& p : candidate_paths) candidates.push_back(read_eval_record(p));
    std::cout << format_report(baseline, candidates, format == "records");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"context-prompted streaming conformer transducer toolkit"};
    app.require_subcommand(1);
    // Optional config file for defaults; explicit flags override its values.
    app.set_config("--config", "", "read defaults from a TOML/INI file");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic multi-turn corpus");
    SynthConfig synth;
    std::string gen_out;
    int train_sessions = 1200, dev_sessions = 100, test_sessions = 667;
    uint64_t gen_seed = 0;
    gen->add_option("--seed", gen_seed, "generation seed")->required();
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--train-sessions", train_sessions);
    gen->add_option("--dev-sessions", dev_sessions);
    gen->add_option("--test-sessions", test_sessions);
    gen->add_option("--vocab-size", synth.vocab_size);
    gen->add_option("--pairs", synth.n_homophone_pairs);
    gen->add_option("--frames-per-token", synth.frames_per_token);
    gen->add_option("--d-feat", synth.d_feat);
    gen->add_option("--noise", synth.noise_sigma);
    gen->add_option("--coverage", synth.context_coverage);
    gen->add_option("--turns", synth.turns_per_session);
    gen->add_option("--min-tokens", synth.min_tokens);
    gen->add_option("--max-tokens", synth.max_tokens);

    // train
    auto* tr = app.add_subcommand("train", "train the seed model or fine-tune a variant");
    std::string tr_corpus, tr_out, tr_phase = "seed", tr_ckpt;
    std::string tr_consumption = "none", tr_generator = "none", tr_regime = "all";
    bool tr_cp = false, tr_no_sa = false;
    ArchFlags arch;
    TrainConfig tcfg;
    uint64_t tr_seed = 0;
    tr->add_option("--seed", tr_seed, "training seed")->required();
    tr->add_option("--corpus", tr_corpus, "data directory from gen-data")->required();
    tr->add_option("--out", tr_out, "output directory")->required();
    tr->add_option("--phase", tr_phase, "seed | finetune")
        ->check(CLI::IsMember({"seed", "finetune"}));
    tr->add_option("--checkpoint", tr_ckpt, "seed checkpoint for --phase finetune");
    tr->add_option("--consumption", tr_consumption,
                   "none | feature-concat | cross-attention | prompt");
    tr->add_option("--generator", tr_generator, "none | frozen-sent | frozen-tok | spm-tok");
    tr->add_flag("--cp", tr_cp, "copy transducer weights into the prompt path");
    tr->add_option("--regime", tr_regime, "all | mha-proj | proj-only");
    tr->add_option("--steps", tcfg.total_steps);
    tr->add_option("--batch", tcfg.batch_size);
    tr->add_option("--lr-peak", tcfg.lr_peak);
    tr->add_option("--warmup", tcfg.warmup_steps);
    tr->add_option("--decay-rate", tcfg.decay_rate);
    tr->add_option("--decay-interval", tcfg.decay_interval);
    tr->add_option("--ckpt-interval", tcfg.checkpoint_interval);
    tr->add_option("--n-average", tcfg.n_average);
    tr->add_flag("--no-specaugment", tr_no_sa, "disable feature masking");
    add_arch_flags(tr, arch);

    // decode
    auto* de = app.add_subcommand("decode", "greedy-decode a corpus split");
    std::string de_corpus, de_ckpt, de_out, de_context = "as-labeled", de_split = "test";
    de->add_option("--corpus", de_corpus)->required();
    de->add_option("--checkpoint", de_ckpt)->required();
    de->add_option("--out", de_out, "hypothesis file (default stdout)");
    de->add_option("--context", de_context)->check(CLI::IsMember({"as-labeled", "force-empty"}));
    de->add_option("--split", de_split)->check(CLI::IsMember({"train", "dev", "test"}));

    // eval
    auto* ev = app.add_subcommand("eval", "score a checkpoint on a corpus split");
    std::string ev_corpus, ev_ckpt, ev_out, ev_context = "as-labeled", ev_split = "test", ev_name;
    ev->add_option("--corpus", ev_corpus)->required();
    ev->add_option("--checkpoint", ev_ckpt)->required();
    ev->add_option("--out", ev_out, "eval record file");
    ev->add_option("--context", ev_context)->check(CLI::IsMember({"as-labeled", "force-empty"}));
    ev->add_option("--split", ev_split)->check(CLI::IsMember({"train", "dev", "test"}));
    ev->add_option("--name", ev_name, "record label");

    // report
    auto* re = app.add_subcommand("report", "ablation table from eval records");
    std::string re_baseline, re_format = "table";
    std::vector<std::string> re_candidates;
    re->add_option("--baseline", re_baseline)->required();
    re->add_option("--candidate", re_candidates, "candidate eval records")->required();
    re->add_option("--format", re_format)->check(CLI::IsMember({"table", "records"}));

    try {
        app.parse(argc, argv);
        if (gen->parsed()) {
            synth.seed = gen_seed;
            return cmd_gen_data(synth, gen_out, train_sessions, dev_sessions, test_sessions);
        }
        if (tr->parsed()) {
            tcfg.seed = tr_seed;
            tcfg.use_specaugment = !tr_no_sa;
            // Invalid combinations fail before any compute.
            if (tr_phase == "seed" && (tr_consumption != "none" || tr_generator != "none"))
                throw UsageError("--phase seed trains context-free; drop --consumption/--generator");
            if (tr_phase == "finetune" && tr_consumption != "none") {
                ModelConfig probe = make_model_config(arch, tr_consumption, tr_generator, tr_cp,
                                                      16, 64, 1);
                probe.validate();
            }
            return cmd_train(tr_corpus, tr_out, tr_phase, tr_ckpt, tr_consumption, tr_generator,
                             tr_cp, tr_regime, arch, tcfg);
        }
        if (de->parsed()) return cmd_decode(de_corpus, de_split, de_ckpt, de_context, de_out);
        if (ev->parsed())
            return cmd_eval(ev_corpus, ev_split, ev_ckpt, ev_context, ev_out, ev_name);
        if (re->parsed()) return cmd_report(re_baseline, re_candidates, re_format);
        return 2;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "numeric divergence: %s\n", e.what());
        return 4;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "invalid configuration: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
