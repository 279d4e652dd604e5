#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "nsc/error.hpp"
#include "nsc/metrics.hpp"
#include "nsc/model.hpp"
#include "nsc/token.hpp"

namespace nsc {

// Selection-style combination baselines: pass one system through unchanged,
// pick the sentence-BLEU oracle, or pick by a reference-free heuristic.

struct SelectionPolicy {
    enum class Kind { kFixed, kOracle, kHeuristic };

    Kind kind = Kind::kHeuristic;
    size_t fixed_index = 0;  // 0-based position of the pass-through system

    static SelectionPolicy fixed(size_t index) { return {Kind::kFixed, index}; }
    static SelectionPolicy oracle() { return {Kind::kOracle, 0}; }
    static SelectionPolicy heuristic() { return {Kind::kHeuristic, 0}; }

    // "fixed:1" (1-based, matching the system1.txt file naming), "oracle",
    // "heuristic".
    static SelectionPolicy parse(const std::string& text) {
        if (text == "oracle") return oracle();
        if (text == "heuristic") return heuristic();
        const std::string prefix = "fixed:";
        if (text.rfind(prefix, 0) == 0) {
            const std::string digits = text.substr(prefix.size());
            if (!digits.empty() && digits.find_first_not_of("0123456789") == std::string::npos) {
                size_t k = std::stoul(digits);
                if (k >= 1) return fixed(k - 1);
            }
        }
        throw ConfigError("unknown selection policy '" + text + "' (want fixed:K, oracle, or heuristic)");
    }

    std::string name() const {
        switch (kind) {
            case Kind::kFixed: return "fixed:" + std::to_string(fixed_index + 1);
            case Kind::kOracle: return "oracle";
            default: return "heuristic";
        }
    }
};

namespace detail {

// Shared core over both text and id sequences. `is_unk` marks unknown tokens,
// `bleu` scores a hypothesis against the reference.
template <typename Seq, typename UnkPred, typename BleuFn>
size_t select_index_impl(const std::vector<Seq>& systems, const Seq* reference, const SelectionPolicy& policy,
                         UnkPred is_unk, BleuFn bleu) {
    if (systems.empty()) throw InputError("selection needs at least one system hypothesis");
    switch (policy.kind) {
        case SelectionPolicy::Kind::kFixed: {
            if (policy.fixed_index >= systems.size()) {
                throw ConfigError("fixed system " + std::to_string(policy.fixed_index + 1) + " out of range, only " +
                                  std::to_string(systems.size()) + " systems");
            }
            return policy.fixed_index;
        }
        case SelectionPolicy::Kind::kOracle: {
            if (reference == nullptr) throw ConfigError("oracle selection needs a reference");
            size_t best = 0;
            double best_score = bleu(systems[0], *reference);
            for (size_t k = 1; k < systems.size(); ++k) {
                double score = bleu(systems[k], *reference);
                if (score > best_score) {
                    best = k;
                    best_score = score;
                }
            }
            return best;
        }
        default: {  // fewest UNKs, ties by longest, then lowest index
            auto unk_count = [&](const Seq& seq) {
                size_t count = 0;
                for (const auto& token : seq) count += is_unk(token);
                return count;
            };
            size_t best = 0;
            size_t best_unks = unk_count(systems[0]);
            for (size_t k = 1; k < systems.size(); ++k) {
                size_t unks = unk_count(systems[k]);
                if (unks < best_unks || (unks == best_unks && systems[k].size() > systems[best].size())) {
                    best = k;
                    best_unks = unks;
                }
            }
            return best;
        }
    }
}

inline double oracle_sentence_bleu(const Sentence& hyp, const Sentence& ref) {
    BleuOptions opt;
    opt.smooth_add1 = true;
    return sentence_bleu(hyp, ref, opt).score;
}

inline Sentence stringify(const TokenSeq& seq) {
    Sentence out;
    out.reserve(seq.size());
    for (TokenId t : seq) out.push_back(std::to_string(t));
    return out;
}

}  // namespace detail

inline size_t select_index(const std::vector<Sentence>& systems, const Sentence* reference,
                           const SelectionPolicy& policy) {
    return detail::select_index_impl(
        systems, reference, policy, [](const std::string& w) { return w == kUnkText; },
        detail::oracle_sentence_bleu);
}

inline size_t select_index(const CombinationExample& example, const SelectionPolicy& policy) {
    return detail::select_index_impl(
        example.systems, example.reference.empty() ? nullptr : &example.reference, policy,
        [](TokenId t) { return t == kUnk; }, [](const TokenSeq& hyp, const TokenSeq& ref) {
            BleuOptions opt;
            opt.smooth_add1 = true;
            opt.case_insensitive = false;
            return sentence_bleu(detail::stringify(hyp), detail::stringify(ref), opt).score;
        });
}

inline const Sentence& select(const std::vector<Sentence>& systems, const Sentence* reference,
                              const SelectionPolicy& policy) {
    return systems[select_index(systems, reference, policy)];
}

inline const TokenSeq& select(const CombinationExample& example, const SelectionPolicy& policy) {
    return example.systems[select_index(example, policy)];
}

// systems is [K][num_sentences]; references may be null for reference-free
// policies.
inline std::vector<Sentence> select_corpus(const std::vector<std::vector<Sentence>>& systems,
                                           const std::vector<Sentence>* references, const SelectionPolicy& policy) {
    if (systems.empty()) throw InputError("selection needs at least one system");
    size_t n = systems[0].size();
    for (size_t k = 1; k < systems.size(); ++k) {
        if (systems[k].size() != n) {
            throw DataError("system " + std::to_string(k + 1) + " has " + std::to_string(systems[k].size()) +
                            " sentences, system 1 has " + std::to_string(n));
        }
    }
    if (references != nullptr && references->size() != n) {
        throw DataError("reference has " + std::to_string(references->size()) + " sentences, systems have " +
                        std::to_string(n));
    }
    std::vector<Sentence> out;
    out.reserve(n);
    std::vector<Sentence> row(systems.size());
    for (size_t i = 0; i < n; ++i) {
        for (size_t k = 0; k < systems.size(); ++k) row[k] = systems[k][i];
        out.push_back(select(row, references ? &(*references)[i] : nullptr, policy));
    }
    return out;
}

}  // namespace nsc
