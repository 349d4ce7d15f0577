#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <stdexcept>

#include "ctxasr/errors.hpp"
#include "ctxasr/synth.hpp"

using namespace ctxasr;

namespace {

SynthConfig small_config() {
    SynthConfig c;
    c.vocab_size = 64;
    c.n_homophone_pairs = 8;
    c.frames_per_token = 4;
    c.d_feat = 8;
    c.noise_sigma = 0.0;
    c.n_sessions = 40;
    c.seed = 7;
    return c;
}

// id lookup for a generated corpus
std::vector<int> ids_of(const Utterance& u, const Vocabulary& v) {
    std::vector<int> ids;
    for (const auto& piece : u.transcript) ids.push_back(v.id_of(piece));
    return ids;
}

}  // namespace

TEST_CASE("deterministic generation, shared homophone signatures at sigma zero") {
    SynthConfig cfg = small_config();
    SynthOutput a = gen_corpus(cfg);
    SynthOutput b = gen_corpus(cfg);
    REQUIRE(a.corpus.utterances.size() == b.corpus.utterances.size());
    for (size_t i = 0; i < a.corpus.utterances.size(); ++i) {
        CHECK(a.corpus.utterances[i].features.data == b.corpus.utterances[i].features.data);
        CHECK(a.corpus.utterances[i].transcript == b.corpus.utterances[i].transcript);
        CHECK(a.corpus.utterances[i].context_text == b.corpus.utterances[i].context_text);
    }

    // At sigma=0 every occurrence of a token id has identical frames, and the
    // two members of a pair share them.
    Vocabulary vocab = build_synth_vocab(cfg.vocab_size);
    std::map<int, std::vector<double>> first_frame;
    for (const Utterance& u : a.corpus.utterances) {
        std::vector<int> ids = ids_of(u, vocab);
        for (size_t k = 0; k < ids.size(); ++k) {
            std::vector<double> frame(static_cast<size_t>(cfg.d_feat));
            for (int j = 0; j < cfg.d_feat; ++j)
                frame[static_cast<size_t>(j)] = u.features.at(static_cast<int>(k) * cfg.frames_per_token, j);
            auto [it, fresh] = first_frame.emplace(ids[k], frame);
            if (!fresh) CHECK(it->second == frame);
        }
    }
    for (const auto& [ma, mb] : a.meta.pairs) {
        REQUIRE(first_frame.count(ma));
        REQUIRE(first_frame.count(mb));
        CHECK(first_frame[ma] == first_frame[mb]);
    }
}

TEST_CASE("labels of a pair are selected by the previous turn's cue") {
    SynthConfig cfg = small_config();
    SynthOutput out = gen_corpus(cfg);
    Vocabulary vocab = build_synth_vocab(cfg.vocab_size);

    int checked = 0;
    for (size_t i = 0; i < out.corpus.utterances.size(); ++i) {
        const Utterance& u = out.corpus.utterances[i];
        if (session_initial(u)) continue;
        const Utterance& prev = out.corpus.utterances[i - 1];
        std::vector<int> ids = ids_of(u, vocab);
        std::vector<int> prev_ids = ids_of(prev, vocab);
        for (int id : ids) {
            for (size_t p = 0; p < out.meta.pairs.size(); ++p) {
                const auto& [ma, mb] = out.meta.pairs[p];
                if (id != ma && id != mb) continue;
                const auto& [ca, cb] = out.meta.cues[p];
                int cue_a = static_cast<int>(std::count(prev_ids.begin(), prev_ids.end(), ca));
                int cue_b = static_cast<int>(std::count(prev_ids.begin(), prev_ids.end(), cb));
                CHECK(cue_a + cue_b == 1);  // exactly one cue in the previous turn
                CHECK((id == ma ? cue_a : cue_b) == 1);
                ++checked;
            }
        }
    }
    CHECK(checked > 20);  // ambiguous tokens actually occur
}

TEST_CASE("per-pair member labels are balanced") {
    SynthConfig cfg = small_config();
    cfg.n_sessions = 300;
    SynthOutput out = gen_corpus(cfg);
    Vocabulary vocab = build_synth_vocab(cfg.vocab_size);
    std::map<int, int> count;
    for (const Utterance& u : out.corpus.utterances)
        for (int id : ids_of(u, vocab))
            if (out.meta.is_ambiguous_id(id)) count[id]++;
    for (const auto& [ma, mb] : out.meta.pairs) {
        int a = count[ma], b = count[mb];
        REQUIRE(a + b > 0);
        double minority = static_cast<double>(std::min(a, b)) / (a + b);
        // A features-only classifier can do no better than the majority side.
        CHECK(minority >= 0.45);
    }
}

TEST_CASE("context coverage matches the configured fraction on non-initial turns") {
    SynthConfig cfg = small_config();
    cfg.n_sessions = 5000;
    cfg.turns_per_session = 3;
    cfg.context_coverage = 0.7;
    SynthOutput out = gen_corpus(cfg);
    int non_initial = 0, with_context = 0;
    for (const Utterance& u : out.corpus.utterances) {
        if (session_initial(u)) {
            CHECK(u.context_text.empty());
            continue;
        }
        ++non_initial;
        if (!u.context_text.empty()) ++with_context;
    }
    double frac = static_cast<double>(with_context) / non_initial;
    CHECK(frac >= 0.68);
    CHECK(frac <= 0.72);
}

TEST_CASE("context text reproduces the previous transcript") {
    SynthConfig cfg = small_config();
    SynthOutput out = gen_corpus(cfg);
    for (size_t i = 0; i < out.corpus.utterances.size(); ++i) {
        const Utterance& u = out.corpus.utterances[i];
        if (u.context_text.empty()) continue;
        std::string prev;
        for (const auto& piece : out.corpus.utterances[i - 1].transcript) prev += piece;
        CHECK(u.context_text == prev);
    }
}

TEST_CASE("utterance frame counts follow frames_per_token") {
    SynthConfig cfg = small_config();
    SynthOutput out = gen_corpus(cfg);
    for (const Utterance& u : out.corpus.utterances) {
        CHECK(u.features.rows() ==
              cfg.frames_per_token * static_cast<int>(u.transcript.size()));
        CHECK(u.features.cols() == cfg.d_feat);
    }
}

TEST_CASE("gen_corpus rejects a vocabulary too small for the pairs") {
    SynthConfig cfg = small_config();
    cfg.vocab_size = 40;  // 12 content ids < 4*8+1
    CHECK_THROWS_AS(gen_corpus(cfg), std::invalid_argument);
}

TEST_CASE("spec_augment masking") {
    Rng rng(3);
    Tensor f({6, 5}, 1.0);

    Tensor same = spec_augment(f, 0, 2, 0, 2, rng);
    CHECK(same.data == f.data);

    Tensor wiped = spec_augment(f, 1, 6, 0, 0, rng);
    for (double v : wiped.data) CHECK(v == 0.0);
    // copy semantics: the input is untouched
    for (double v : f.data) CHECK(v == 1.0);

    // Masked-cell count equals the union area of the strips.
    for (int trial = 0; trial < 20; ++trial) {
        Tensor g = spec_augment(f, 1, 2, 1, 2, rng);
        std::set<int> time_rows, feat_cols;
        for (int i = 0; i < 6; ++i) {
            bool all_zero = true;
            for (int j = 0; j < 5; ++j) all_zero = all_zero && g.at(i, j) == 0.0;
            if (all_zero) time_rows.insert(i);
        }
        for (int j = 0; j < 5; ++j) {
            bool all_zero = true;
            for (int i = 0; i < 6; ++i) all_zero = all_zero && g.at(i, j) == 0.0;
            if (all_zero) feat_cols.insert(j);
        }
        int zeros = 0;
        for (double v : g.data) zeros += v == 0.0 ? 1 : 0;
        int t_rows = static_cast<int>(time_rows.size());
        int f_cols = static_cast<int>(feat_cols.size());
        CHECK(t_rows == 2);
        CHECK(f_cols == 2);
        CHECK(zeros == t_rows * 5 + f_cols * 6 - t_rows * f_cols);
    }

    CHECK_THROWS_AS(spec_augment(f, 1, 7, 0, 0, rng), std::invalid_argument);
}

TEST_CASE("corpus file round-trip is exact") {
    SynthConfig cfg = small_config();
    cfg.noise_sigma = 0.3;
    cfg.n_sessions = 1;

    Corpus empty;
    write_corpus(empty, "corpus_empty.jsonl");
    CHECK(read_corpus("corpus_empty.jsonl").utterances.empty());

    SynthOutput one = gen_corpus(cfg);
    write_corpus(one.corpus, "corpus_one.jsonl");
    Corpus back = read_corpus("corpus_one.jsonl");
    REQUIRE(back.utterances.size() == one.corpus.utterances.size());
    for (size_t i = 0; i < back.utterances.size(); ++i) {
        CHECK(back.utterances[i].id == one.corpus.utterances[i].id);
        CHECK(back.utterances[i].transcript == one.corpus.utterances[i].transcript);
        CHECK(back.utterances[i].context_text == one.corpus.utterances[i].context_text);
        CHECK(back.utterances[i].features.data == one.corpus.utterances[i].features.data);
    }

    cfg.n_sessions = 334;  // just over 1000 utterances, order preserved
    SynthOutput big = gen_corpus(cfg);
    write_corpus(big.corpus, "corpus_big.jsonl");
    Corpus big_back = read_corpus("corpus_big.jsonl");
    REQUIRE(big_back.utterances.size() == big.corpus.utterances.size());
    for (size_t i = 0; i < big_back.utterances.size(); ++i) {
        CHECK(big_back.utterances[i].id == big.corpus.utterances[i].id);
        CHECK(big_back.utterances[i].features.data == big.corpus.utterances[i].features.data);
    }
}

TEST_CASE("malformed corpus lines name the offending line") {
    {
        std::FILE* f = std::fopen("corpus_bad.jsonl", "w");
        std::fputs("{\"id\": \"ok\", \"transcript\": [], \"context_text\": \"\", \"features\": []}\n",
                   f);
        std::fputs("this is not json\n", f);
        std::fclose(f);
    }
    CHECK_THROWS_WITH_AS(read_corpus("corpus_bad.jsonl"), doctest::Contains(":2"), DataError);
}

TEST_CASE("meta file round-trip") {
    SynthConfig cfg = small_config();
    SynthOutput out = gen_corpus(cfg);
    write_meta(out.meta, "meta_roundtrip.json");
    SynthMeta back = read_meta("meta_roundtrip.json");
    CHECK(back.pairs == out.meta.pairs);
    CHECK(back.cues == out.meta.cues);
    CHECK(back.config.vocab_size == cfg.vocab_size);
    CHECK(back.config.seed == cfg.seed);
    CHECK(back.is_ambiguous_id(out.meta.pairs[0].first));
    CHECK_FALSE(back.is_ambiguous_id(0));
}

TEST_CASE("an oracle with previous-turn text separates all ambiguous tokens") {
    SynthConfig cfg = small_config();
    cfg.noise_sigma = 0.0;
    SynthOutput out = gen_corpus(cfg);
    Vocabulary vocab = build_synth_vocab(cfg.vocab_size);

    // signature -> candidate ids (from the corpus itself)
    std::map<std::vector<double>, std::set<int>> by_signature;
    for (const Utterance& u : out.corpus.utterances) {
        std::vector<int> ids = ids_of(u, vocab);
        for (size_t k = 0; k < ids.size(); ++k) {
            std::vector<double> frame(static_cast<size_t>(cfg.d_feat));
            for (int j = 0; j < cfg.d_feat; ++j)
                frame[static_cast<size_t>(j)] = u.features.at(static_cast<int>(k) * cfg.frames_per_token, j);
            by_signature[frame].insert(ids[k]);
        }
    }

    int errors = 0, total = 0;
    for (size_t i = 0; i < out.corpus.utterances.size(); ++i) {
        const Utterance& u = out.corpus.utterances[i];
        std::vector<int> ids = ids_of(u, vocab);
        std::vector<int> prev_ids =
            session_initial(u) ? std::vector<int>{} : ids_of(out.corpus.utterances[i - 1], vocab);
        for (size_t k = 0; k < ids.size(); ++k) {
            std::vector<double> frame(static_cast<size_t>(cfg.d_feat));
            for (int j = 0; j < cfg.d_feat; ++j)
                frame[static_cast<size_t>(j)] = u.features.at(static_cast<int>(k) * cfg.frames_per_token, j);
            const std::set<int>& cands = by_signature[frame];
            int guess;
            if (cands.size() == 1) {
                guess = *cands.begin();
            } else {
                // ambiguous: resolve via the cue in the previous turn
                guess = -1;
                for (size_t p = 0; p < out.meta.pairs.size(); ++p) {
                    const auto& [ma, mb] = out.meta.pairs[p];
                    if (!cands.count(ma) || !cands.count(mb)) continue;
                    const auto& [ca, cb] = out.meta.cues[p];
                    if (std::count(prev_ids.begin(), prev_ids.end(), ca)) guess = ma;
                    if (std::count(prev_ids.begin(), prev_ids.end(), cb)) guess = mb;
                }
            }
            ++total;
            errors += guess == ids[k] ? 0 : 1;
        }
    }
    CHECK(total > 0);
    CHECK(errors == 0);
}
