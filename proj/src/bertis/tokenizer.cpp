#include "meta4/bertis/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace meta4::bertis {

namespace {

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

const std::vector<std::string>& special_tokens() {
    static const std::vector<std::string> s = {"[PAD]", "[UNK]", "[CLS]",
                                               "[SEP]"};
    return s;
}

}  // namespace

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> out;
    std::string word;
    for (char c : text) {
        if (is_word_char(c)) {
            word += c;
            continue;
        }
        if (!word.empty()) {
            out.push_back(std::move(word));
            word.clear();
        }
        if (!std::isspace(static_cast<unsigned char>(c))) {
            out.emplace_back(1, c);
        }
    }
    if (!word.empty()) out.push_back(std::move(word));
    return out;
}

Vocabulary::Vocabulary() {
    for (const auto& t : special_tokens()) add(t);
}

void Vocabulary::add(const std::string& token) {
    require(!token.empty(), "vocabulary: empty token");
    require(ids_.find(token) == ids_.end(), "vocabulary: duplicate token '",
            token, "'");
    ids_.emplace(token, static_cast<int>(tokens_.size()));
    tokens_.push_back(token);
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
    require(id >= 0 && static_cast<size_t>(id) < tokens_.size(),
            "vocabulary: id ", id, " out of range [0, ", tokens_.size(), ")");
    return tokens_[static_cast<size_t>(id)];
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot write '", path, "'");
    for (const auto& t : tokens_) out << t << "\n";
    require(out.good(), "short write to '", path, "'");
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open '", path, "'");
    Vocabulary v;
    std::string line;
    size_t idx = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (idx < kNumSpecials) {
            require(line == special_tokens()[idx], path, ": line ", idx + 1,
                    " must be ", special_tokens()[idx]);
        } else {
            v.add(line);
        }
        ++idx;
    }
    require(idx >= kNumSpecials, path, ": missing special tokens");
    return v;
}

Vocabulary build_vocab(const std::vector<std::string>& texts,
                       size_t max_size) {
    require(!texts.empty(), "build_vocab: empty corpus");
    require(max_size > kNumSpecials, "build_vocab: max_size must exceed ",
            kNumSpecials);
    // std::map keeps ties resolved lexicographically after the stable sort.
    std::map<std::string, size_t> freq;
    for (const auto& text : texts) {
        for (auto& w : split_words(text)) ++freq[w];
    }
    std::vector<std::pair<std::string, size_t>> entries(freq.begin(),
                                                        freq.end());
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& a, const auto& b) {
                         return a.second > b.second;
                     });
    Vocabulary v;
    for (const auto& [token, count] : entries) {
        if (v.size() >= max_size) break;
        v.add(token);
    }
    return v;
}

TokenSequence tokenize(const std::string& text, const Vocabulary& vocab) {
    std::vector<int> ids;
    ids.push_back(kClsId);
    for (const auto& w : split_words(text)) {
        if (ids.size() == kMaxSeqLen - 1) break;  // leave room for [SEP]
        ids.push_back(vocab.id_of(w));
    }
    ids.push_back(kSepId);

    TokenSequence seq;
    seq.real_len = ids.size();
    seq.token_ids = std::move(ids);
    seq.token_ids.resize(kMaxSeqLen, kPadId);
    seq.segment_ids.assign(kMaxSeqLen, 0);
    seq.position_ids.resize(kMaxSeqLen);
    for (size_t i = 0; i < kMaxSeqLen; ++i) {
        seq.position_ids[i] = static_cast<int>(i);
    }
    seq.attention.assign(kMaxSeqLen, 0);
    for (size_t i = 0; i < seq.real_len; ++i) seq.attention[i] = 1;
    return seq;
}

}  // namespace meta4::bertis
