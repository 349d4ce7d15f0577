#include "ctxasr/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "ctxasr/errors.hpp"

namespace ctxasr {

Vocabulary::Vocabulary(std::vector<std::string> pieces) : pieces_(std::move(pieces)) {
    if (pieces_.size() < 2)
        throw std::invalid_argument("vocabulary: need at least blank and unk pieces");
    index_.reserve(pieces_.size());
    for (size_t i = 0; i < pieces_.size(); ++i) {
        if (!index_.emplace(pieces_[i], static_cast<int>(i)).second)
            throw std::invalid_argument("vocabulary: duplicate piece '" + pieces_[i] + "'");
        max_len_ = std::max<int>(max_len_, static_cast<int>(pieces_[i].size()));
    }
}

const std::string& Vocabulary::piece(int id) const {
    if (id < 0 || id >= size())
        throw std::invalid_argument("vocabulary: id " + std::to_string(id) + " out of range");
    return pieces_[static_cast<size_t>(id)];
}

int Vocabulary::id_of(const std::string& piece) const {
    auto it = index_.find(piece);
    return it == index_.end() ? -1 : it->second;
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open vocabulary file " + path);
    std::vector<std::string> pieces;
    std::string line;
    while (std::getline(in, line)) pieces.push_back(line);
    return Vocabulary(std::move(pieces));
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write vocabulary file " + path);
    for (const auto& p : pieces_) out << p << "\n";
}

std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab) {
    std::vector<int> ids;
    size_t pos = 0;
    while (pos < text.size()) {
        int best = -1;
        size_t best_len = 0;
        size_t cap =
            std::min<size_t>(static_cast<size_t>(vocab.max_piece_length()), text.size() - pos);
        for (size_t len = cap; len >= 1; --len) {
            int id = vocab.id_of(text.substr(pos, len));
            if (id >= 0) {
                best = id;
                best_len = len;
                break;
            }
        }
        if (best < 0) {
            ids.push_back(Vocabulary::kUnkId);
            pos += 1;
        } else {
            ids.push_back(best);
            pos += best_len;
        }
    }
    return ids;
}

std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab) {
    std::string out;
    for (int id : ids) out += vocab.piece(id);
    return out;
}

}  // namespace ctxasr
