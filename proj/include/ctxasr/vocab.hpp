#pragma once
#include <string>
#include <unordered_map>
#include <vector>

namespace ctxasr {

// Sub-word inventory. Line index in the vocabulary file is the id; id 0 is
// the blank label, id 1 the unknown piece. Tokenization is total as long as
// every corpus character is present as a single-character piece.
class Vocabulary {
public:
    static constexpr int kBlankId = 0;
    static constexpr int kUnkId = 1;

    explicit Vocabulary(std::vector<std::string> pieces);

    int size() const { return static_cast<int>(pieces_.size()); }
    const std::string& piece(int id) const;
    int id_of(const std::string& piece) const;  // -1 when absent
    int max_piece_length() const { return max_len_; }

    static Vocabulary load(const std::string& path);
    void save(const std::string& path) const;

private:
    std::vector<std::string> pieces_;
    std::unordered_map<std::string, int> index_;
    int max_len_ = 0;
};

// Greedy longest-match segmentation. Unknown characters map to the unk id
// (one id per character). Deterministic; empty text gives an empty sequence.
std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab);

// Concatenates piece strings; inverse of tokenize on unk-free text.
std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab);

}  // namespace ctxasr
