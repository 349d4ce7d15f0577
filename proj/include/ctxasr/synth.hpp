#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "ctxasr/rng.hpp"
#include "ctxasr/tensor.hpp"
#include "ctxasr/vocab.hpp"

namespace ctxasr {

struct SynthConfig {
    int vocab_size = 64;
    int n_homophone_pairs = 8;
    int frames_per_token = 6;
    int d_feat = 16;
    double noise_sigma = 0.3;
    double context_coverage = 0.7;
    int turns_per_session = 3;
    int n_sessions = 100;
    int session_offset = 0;  // first session index; signatures depend on seed only
    int min_tokens = 3;
    int max_tokens = 6;
    uint64_t seed = 1;
};

// One turn of a session: features, reference transcript, and the previous
// turn's reference text when the session carried it over.
struct Utterance {
    std::string id;  // s<session>_t<turn>
    Tensor features;                      // [frames_per_token * len(transcript) x d_feat]
    std::vector<std::string> transcript;  // piece strings
    std::string context_text;             // empty for session-initial turns
};

struct Corpus {
    std::vector<Utterance> utterances;
};

// Which ids form homophone pairs and which cue ids select each member.
// pairs[p] = (member_a, member_b); cues[p] = (cue_for_a, cue_for_b).
struct SynthMeta {
    SynthConfig config;
    std::vector<std::pair<int, int>> pairs;
    std::vector<std::pair<int, int>> cues;

    bool is_ambiguous_id(int id) const;
};

// Deterministic vocabulary for a corpus: ids 0/1 reserved, one piece per
// lowercase letter, then distinct two-letter content pieces.
Vocabulary build_synth_vocab(int vocab_size);

struct SynthOutput {
    Corpus corpus;
    SynthMeta meta;
};

// Deterministic per seed. Every token id maps to a fixed feature signature
// (pair members share one); the correct member in turn k is selected by a
// cue planted in turn k-1, with per-pair balanced member labels.
SynthOutput gen_corpus(const SynthConfig& config);

// Zeroes random time strips and feature bands on a copy of the input.
Tensor spec_augment(const Tensor& features, int n_time_masks, int time_width, int n_feat_masks,
                    int feat_width, Rng& rng);

// Line-delimited records; feature rows are base64 little-endian f32.
void write_corpus(const Corpus& corpus, const std::string& path);
Corpus read_corpus(const std::string& path);

void write_meta(const SynthMeta& meta, const std::string& path);
SynthMeta read_meta(const std::string& path);

bool session_initial(const Utterance& u);

}  // namespace ctxasr
