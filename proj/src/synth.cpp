#include "ctxasr/synth.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "ctxasr/errors.hpp"

namespace ctxasr {

namespace {

using nlohmann::json;

constexpr int kReserved = 2;
constexpr int kAlphabet = 26;
int content_base() { return kReserved + kAlphabet; }

double snap_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

const char kB64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::vector<uint8_t>& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    for (size_t i = 0; i < bytes.size(); i += 3) {
        uint32_t chunk = static_cast<uint32_t>(bytes[i]) << 16;
        int have = 1;
        if (i + 1 < bytes.size()) {
            chunk |= static_cast<uint32_t>(bytes[i + 1]) << 8;
            ++have;
        }
        if (i + 2 < bytes.size()) {
            chunk |= bytes[i + 2];
            ++have;
        }
        out.push_back(kB64Alphabet[(chunk >> 18) & 63]);
        out.push_back(kB64Alphabet[(chunk >> 12) & 63]);
        out.push_back(have > 1 ? kB64Alphabet[(chunk >> 6) & 63] : '=');
        out.push_back(have > 2 ? kB64Alphabet[chunk & 63] : '=');
    }
    return out;
}

std::vector<uint8_t> base64_decode(const std::string& text) {
    auto value_of = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    std::vector<uint8_t> out;
    uint32_t chunk = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=') break;
        int v = value_of(c);
        if (v < 0) throw DataError("invalid base64 character");
        chunk = (chunk << 6) | static_cast<uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<uint8_t>((chunk >> bits) & 0xff));
        }
    }
    return out;
}

std::string encode_feature_row(const Tensor& features, int row) {
    int d = features.cols();
    std::vector<uint8_t> bytes(static_cast<size_t>(d) * 4);
    for (int j = 0; j < d; ++j) {
        float f = static_cast<float>(features.at(row, j));
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        bytes[static_cast<size_t>(j) * 4 + 0] = static_cast<uint8_t>(bits & 0xff);
        bytes[static_cast<size_t>(j) * 4 + 1] = static_cast<uint8_t>((bits >> 8) & 0xff);
        bytes[static_cast<size_t>(j) * 4 + 2] = static_cast<uint8_t>((bits >> 16) & 0xff);
        bytes[static_cast<size_t>(j) * 4 + 3] = static_cast<uint8_t>((bits >> 24) & 0xff);
    }
    return base64_encode(bytes);
}

std::vector<double> decode_feature_row(const std::string& text) {
    std::vector<uint8_t> bytes = base64_decode(text);
    if (bytes.size() % 4 != 0) throw DataError("feature row byte count not a multiple of 4");
    std::vector<double> row(bytes.size() / 4);
    for (size_t j = 0; j < row.size(); ++j) {
        uint32_t bits = static_cast<uint32_t>(bytes[j * 4]) |
                        (static_cast<uint32_t>(bytes[j * 4 + 1]) << 8) |
                        (static_cast<uint32_t>(bytes[j * 4 + 2]) << 16) |
                        (static_cast<uint32_t>(bytes[j * 4 + 3]) << 24);
        float f;
        std::memcpy(&f, &bits, 4);
        row[j] = static_cast<double>(f);
    }
    return row;
}

}  // namespace

bool SynthMeta::is_ambiguous_id(int id) const {
    for (const auto& [a, b] : pairs)
        if (id == a || id == b) return true;
    return false;
}

Vocabulary build_synth_vocab(int vocab_size) {
    if (vocab_size < content_base() + 1)
        throw std::invalid_argument("synth vocabulary needs at least " +
                                    std::to_string(content_base() + 1) + " pieces");
    std::vector<std::string> pieces = {"<blank>", "<unk>"};
    for (char c = 'a'; c <= 'z'; ++c) pieces.push_back(std::string(1, c));
    int content = vocab_size - content_base();
    if (content > kAlphabet * kAlphabet)
        throw std::invalid_argument("synth vocabulary larger than the two-letter piece space");
    for (int k = 0; k < content; ++k) {
        std::string piece;
        piece.push_back(static_cast<char>('a' + k / kAlphabet));
        piece.push_back(static_cast<char>('a' + k % kAlphabet));
        pieces.push_back(piece);
    }
    return Vocabulary(pieces);
}

SynthOutput gen_corpus(const SynthConfig& config) {
    int content = config.vocab_size - content_base();
    int needed = 4 * config.n_homophone_pairs + 1;
    if (content < needed)
        throw std::invalid_argument("vocab too small: " + std::to_string(config.n_homophone_pairs) +
                                    " pairs need " + std::to_string(needed) +
                                    " content ids, have " + std::to_string(content));
    if (config.turns_per_session < 1 || config.min_tokens < 2 ||
        config.max_tokens < config.min_tokens)
        throw std::invalid_argument("invalid synth config");
    if (config.context_coverage < 0.0 || config.context_coverage > 1.0)
        throw std::invalid_argument("context_coverage outside [0,1]");

    Vocabulary vocab = build_synth_vocab(config.vocab_size);
    SynthOutput out;
    out.meta.config = config;

    // Partition content ids: members, cues, fillers.
    int base = content_base();
    std::vector<int> fillers;
    for (int p = 0; p < config.n_homophone_pairs; ++p) {
        out.meta.pairs.emplace_back(base + 2 * p, base + 2 * p + 1);
        int cue_base = base + 2 * config.n_homophone_pairs;
        out.meta.cues.emplace_back(cue_base + 2 * p, cue_base + 2 * p + 1);
    }
    for (int id = base + 4 * config.n_homophone_pairs; id < config.vocab_size; ++id)
        fillers.push_back(id);

    // Fixed per-id signatures; pair members share one.
    Rng sig_rng(derive_seed(config.seed, 0xf5));
    std::vector<std::vector<double>> signature(static_cast<size_t>(config.vocab_size));
    for (int id = 0; id < config.vocab_size; ++id) {
        signature[static_cast<size_t>(id)].resize(static_cast<size_t>(config.d_feat));
        for (double& v : signature[static_cast<size_t>(id)]) v = sig_rng.normal();
    }
    for (const auto& [a, b] : out.meta.pairs) signature[static_cast<size_t>(b)] = signature[static_cast<size_t>(a)];

    // Balanced member-side pools, kept separately for context-carrying and
    // context-dropped turns so each evaluation subset sees near-equal labels
    // per pair (shuffled (A,B) blocks, imbalance at most one).
    const int pools = 2 * config.n_homophone_pairs;
    std::vector<std::vector<int>> side_pool(static_cast<size_t>(pools));
    std::vector<size_t> side_cursor(static_cast<size_t>(pools), 0);
    std::vector<Rng> side_rng;
    for (int p = 0; p < pools; ++p)
        side_rng.emplace_back(derive_seed(derive_seed(config.seed, 0x51de + static_cast<uint64_t>(p)),
                                         static_cast<uint64_t>(config.session_offset)));
    auto draw_side = [&](int pair, bool kept) {
        int slot = 2 * pair + (kept ? 1 : 0);
        auto& pool = side_pool[static_cast<size_t>(slot)];
        auto& cur = side_cursor[static_cast<size_t>(slot)];
        if (cur == pool.size()) {
            std::vector<int> block = {0, 1};
            side_rng[static_cast<size_t>(slot)].shuffle(block);
            pool.insert(pool.end(), block.begin(), block.end());
        }
        return pool[cur++];
    };

    auto emit_features = [&](const std::vector<int>& ids, Rng& rng) {
        Tensor f({static_cast<int>(ids.size()) * config.frames_per_token, config.d_feat});
        int row = 0;
        for (int id : ids)
            for (int k = 0; k < config.frames_per_token; ++k, ++row)
                for (int j = 0; j < config.d_feat; ++j)
                    f.at(row, j) = snap_f32(signature[static_cast<size_t>(id)][static_cast<size_t>(j)] +
                                            config.noise_sigma * rng.normal());
        return f;
    };

    for (int s = 0; s < config.n_sessions; ++s) {
        int session_index = config.session_offset + s;
        Rng rng(derive_seed(config.seed, 0x5e50 + static_cast<uint64_t>(session_index)));
        int planted_pair = -1, planted_side = 0;
        bool planted_kept = false;
        std::vector<int> prev_ids;
        for (int turn = 0; turn < config.turns_per_session; ++turn) {
            std::vector<int> ids;
            bool keep_context = turn > 0 && planted_kept;
            if (planted_pair >= 0) {
                const auto& pr = out.meta.pairs[static_cast<size_t>(planted_pair)];
                ids.push_back(planted_side == 0 ? pr.first : pr.second);
            }
            int next_pair = -1, next_side = 0;
            bool next_kept = false;
            if (turn + 1 < config.turns_per_session) {
                next_pair = rng.randint(0, config.n_homophone_pairs - 1);
                next_kept = rng.bernoulli(config.context_coverage);
            }
            int length = rng.randint(config.min_tokens, config.max_tokens);
            if (next_pair >= 0) {
                next_side = draw_side(next_pair, next_kept);
                const auto& cue = out.meta.cues[static_cast<size_t>(next_pair)];
                ids.push_back(next_side == 0 ? cue.first : cue.second);
            }
            while (static_cast<int>(ids.size()) < length)
                ids.push_back(fillers[static_cast<size_t>(rng.randint(0, static_cast<int>(fillers.size()) - 1))]);
            rng.shuffle(ids);

            Utterance u;
            u.id = "s" + std::to_string(session_index) + "_t" + std::to_string(turn);
            u.features = emit_features(ids, rng);
            for (int id : ids) u.transcript.push_back(vocab.piece(id));
            if (keep_context) {
                std::string text;
                for (int id : prev_ids) text += vocab.piece(id);
                u.context_text = text;
            }
            out.corpus.utterances.push_back(std::move(u));

            prev_ids = ids;
            planted_pair = next_pair;
            planted_side = next_side;
            planted_kept = next_kept;
        }
    }
    return out;
}

Tensor spec_augment(const Tensor& features, int n_time_masks, int time_width, int n_feat_masks,
                    int feat_width, Rng& rng) {
    int t = features.rows(), d = features.cols();
    if (time_width > t || feat_width > d)
        throw std::invalid_argument("spec_augment: mask widths exceed feature extents");
    Tensor out = features;
    for (int m = 0; m < n_time_masks; ++m) {
        int start = time_width == t ? 0 : rng.randint(0, t - time_width);
        for (int i = start; i < start + time_width; ++i)
            for (int j = 0; j < d; ++j) out.at(i, j) = 0.0;
    }
    for (int m = 0; m < n_feat_masks; ++m) {
        int start = feat_width == d ? 0 : rng.randint(0, d - feat_width);
        for (int i = 0; i < t; ++i)
            for (int j = start; j < start + feat_width; ++j) out.at(i, j) = 0.0;
    }
    return out;
}

void write_corpus(const Corpus& corpus, const std::string& path) {
    std::ofstream outf(path);
    if (!outf) throw DataError("cannot write corpus file " + path);
    for (const Utterance& u : corpus.utterances) {
        json rec;
        rec["id"] = u.id;
        rec["transcript"] = u.transcript;
        rec["context_text"] = u.context_text;
        json rows = json::array();
        for (int r = 0; r < u.features.rows(); ++r) rows.push_back(encode_feature_row(u.features, r));
        rec["features"] = std::move(rows);
        outf << rec.dump() << "\n";
    }
}

Corpus read_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus file " + path);
    Corpus corpus;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(path + ":" + std::to_string(line_no) + ": malformed record: " +
                            e.what());
        }
        try {
            Utterance u;
            u.id = rec.at("id").get<std::string>();
            u.transcript = rec.at("transcript").get<std::vector<std::string>>();
            u.context_text = rec.at("context_text").get<std::string>();
            const json& rows = rec.at("features");
            std::vector<std::vector<double>> decoded;
            for (const auto& row : rows) decoded.push_back(decode_feature_row(row.get<std::string>()));
            int d = decoded.empty() ? 0 : static_cast<int>(decoded[0].size());
            u.features = Tensor({static_cast<int>(decoded.size()), d});
            for (size_t r = 0; r < decoded.size(); ++r) {
                if (static_cast<int>(decoded[r].size()) != d)
                    throw DataError("ragged feature rows");
                for (int j = 0; j < d; ++j) u.features.at(static_cast<int>(r), j) = decoded[r][static_cast<size_t>(j)];
            }
            corpus.utterances.push_back(std::move(u));
        } catch (const json::exception& e) {
            throw DataError(path + ":" + std::to_string(line_no) + ": malformed record: " +
                            e.what());
        }
    }
    return corpus;
}

void write_meta(const SynthMeta& meta, const std::string& path) {
    json j;
    j["vocab_size"] = meta.config.vocab_size;
    j["n_homophone_pairs"] = meta.config.n_homophone_pairs;
    j["frames_per_token"] = meta.config.frames_per_token;
    j["d_feat"] = meta.config.d_feat;
    j["noise_sigma"] = meta.config.noise_sigma;
    j["context_coverage"] = meta.config.context_coverage;
    j["turns_per_session"] = meta.config.turns_per_session;
    j["n_sessions"] = meta.config.n_sessions;
    j["session_offset"] = meta.config.session_offset;
    j["min_tokens"] = meta.config.min_tokens;
    j["max_tokens"] = meta.config.max_tokens;
    j["seed"] = meta.config.seed;
    j["pairs"] = json::array();
    for (const auto& [a, b] : meta.pairs) j["pairs"].push_back({a, b});
    j["cues"] = json::array();
    for (const auto& [a, b] : meta.cues) j["cues"].push_back({a, b});
    std::ofstream out(path);
    if (!out) throw DataError("cannot write meta file " + path);
    out << j.dump(2) << "\n";
}

SynthMeta read_meta(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open meta file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw DataError(path + ": malformed meta: " + e.what());
    }
    SynthMeta meta;
    meta.config.vocab_size = j.at("vocab_size").get<int>();
    meta.config.n_homophone_pairs = j.at("n_homophone_pairs").get<int>();
    meta.config.frames_per_token = j.at("frames_per_token").get<int>();
    meta.config.d_feat = j.at("d_feat").get<int>();
    meta.config.noise_sigma = j.at("noise_sigma").get<double>();
    meta.config.context_coverage = j.at("context_coverage").get<double>();
    meta.config.turns_per_session = j.at("turns_per_session").get<int>();
    meta.config.n_sessions = j.at("n_sessions").get<int>();
    meta.config.session_offset = j.value("session_offset", 0);
    meta.config.min_tokens = j.at("min_tokens").get<int>();
    meta.config.max_tokens = j.at("max_tokens").get<int>();
    meta.config.seed = j.at("seed").get<uint64_t>();
    for (const auto& pr : j.at("pairs")) meta.pairs.emplace_back(pr[0].get<int>(), pr[1].get<int>());
    for (const auto& cu : j.at("cues")) meta.cues.emplace_back(cu[0].get<int>(), cu[1].get<int>());
    return meta;
}

bool session_initial(const Utterance& u) {
    auto pos = u.id.rfind("_t");
    return pos != std::string::npos && u.id.substr(pos + 2) == "0";
}

}  // namespace ctxasr
