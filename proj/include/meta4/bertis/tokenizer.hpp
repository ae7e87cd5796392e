#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "meta4/core/error.hpp"

namespace meta4::bertis {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;
inline constexpr int kSepId = 3;
inline constexpr size_t kNumSpecials = 4;
inline constexpr size_t kMaxSeqLen = 32;

// Cased word splitter: runs of alphanumerics are words, every other
// non-space character is its own token ("don't stop." -> don ' t stop .).
std::vector<std::string> split_words(const std::string& text);

class Vocabulary {
  public:
    Vocabulary();  // just the four specials

    size_t size() const { return tokens_.size(); }
    int id_of(const std::string& token) const;  // [UNK] when absent
    const std::string& token_of(int id) const;

    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

    void add(const std::string& token);

  private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

// Most-frequent-first (ties lexicographic), capped at max_size entries
// including the specials.
Vocabulary build_vocab(const std::vector<std::string>& texts,
                       size_t max_size);

// Fixed-length encoded sentence: [CLS] w1..wn [SEP] then [PAD]s.
struct TokenSequence {
    std::vector<int> token_ids;      // kMaxSeqLen
    std::vector<int> segment_ids;    // all zero (single sentence)
    std::vector<int> position_ids;   // 0..kMaxSeqLen-1
    std::vector<uint8_t> attention;  // 1 = real token, 0 = padding
    size_t real_len = 0;
};

TokenSequence tokenize(const std::string& text, const Vocabulary& vocab);

}  // namespace meta4::bertis
