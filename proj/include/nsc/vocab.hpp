#pragma once

#include <algorithm>
#include <string>
#include <unordered_map>
#include <vector>

#include "nsc/error.hpp"
#include "nsc/token.hpp"

namespace nsc {

// Frequency-ranked token<->id bijection with the four reserved ids in front.
class Vocabulary {
  public:
    Vocabulary() {
        for (const std::string* t : {&kPadText, &kEosText, &kBosText, &kUnkText}) push(*t);
    }

    static Vocabulary from_tokens(const std::vector<std::string>& non_reserved) {
        Vocabulary v;
        for (const auto& t : non_reserved) v.push(t);
        return v;
    }

    size_t size() const { return tokens_.size(); }

    TokenId lookup(const std::string& token) const {
        auto it = ids_.find(token);
        return it == ids_.end() ? kUnk : it->second;
    }

    const std::string& token(TokenId id) const {
        if (id < 0 || size_t(id) >= tokens_.size()) {
            throw VocabError("id " + std::to_string(id) + " outside vocabulary of " +
                             std::to_string(tokens_.size()));
        }
        return tokens_[size_t(id)];
    }

    TokenSeq encode(const std::vector<std::string>& words) const {
        TokenSeq out;
        out.reserve(words.size());
        for (const auto& w : words) out.push_back(lookup(w));
        return out;
    }

    std::vector<std::string> decode(const TokenSeq& ids) const {
        std::vector<std::string> out;
        out.reserve(ids.size());
        for (TokenId id : ids) out.push_back(token(id));
        return out;
    }

    // Tokens beyond the reserved prefix, in id order; enough to rebuild the
    // vocabulary exactly (tokens are whitespace-free by corpus format).
    std::vector<std::string> contents() const {
        return {tokens_.begin() + kNumReserved, tokens_.end()};
    }

  private:
    void push(std::string t) {
        ids_.emplace(t, TokenId(tokens_.size()));
        tokens_.push_back(std::move(t));
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> ids_;
};

// Keeps the `limit` most frequent tokens, ties broken lexicographically.
// Reserved token spellings never occupy a non-reserved slot.
inline Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus, size_t limit) {
    if (limit < 1) throw ConfigError("vocabulary limit must be at least 1");
    if (corpus.empty()) throw DataError("cannot build a vocabulary from an empty corpus");

    std::unordered_map<std::string, size_t> freq;
    for (const auto& line : corpus) {
        for (const auto& tok : line) {
            if (tok == kPadText || tok == kEosText || tok == kBosText || tok == kUnkText) continue;
            ++freq[tok];
        }
    }
    std::vector<std::pair<std::string, size_t>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (ranked.size() > limit) ranked.resize(limit);

    std::vector<std::string> kept;
    kept.reserve(ranked.size());
    for (auto& [tok, count] : ranked) kept.push_back(std::move(tok));
    return Vocabulary::from_tokens(kept);
}

}  // namespace nsc
