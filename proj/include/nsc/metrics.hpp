#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "nsc/error.hpp"
#include "nsc/token.hpp"

namespace nsc {

struct BleuReport {
    double score = 0;                // 0..100
    std::vector<double> precisions;  // clipped p_1..p_max_n
    double brevity_penalty = 0;
    size_t hyp_len = 0;
    size_t ref_len = 0;
};

struct BleuOptions {
    size_t max_n = 4;
    bool case_insensitive = true;
    bool smooth_add1 = false;  // add-one on clipped counts for n >= 2 (sentence-level diagnostics)
};

struct RibesReport {
    double score = 0;
    double nkt = 0;        // normalized Kendall's tau, (tau+1)/2
    double precision = 0;  // aligned words / |hyp|
    double brevity_penalty = 0;
    double alpha = 0.25;
    double beta = 0.10;
    size_t aligned = 0;
    bool degenerate = false;  // fewer than 2 aligned words; score floored to 0
};

struct RibesOptions {
    double alpha = 0.25;
    double beta = 0.10;
};

namespace detail {

inline std::string lower_ascii(std::string s) {
    for (char& c : s) c = char(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

inline Sentence lower_sentence(const Sentence& s) {
    Sentence out;
    out.reserve(s.size());
    for (const std::string& w : s) out.push_back(lower_ascii(w));
    return out;
}

// n-gram occurrence counts; the n-gram is its space-joined text
inline std::map<std::string, size_t> ngram_counts(const Sentence& words, size_t n) {
    std::map<std::string, size_t> counts;
    if (words.size() < n) return counts;
    for (size_t i = 0; i + n <= words.size(); ++i) {
        std::string key = words[i];
        for (size_t j = 1; j < n; ++j) {
            key += ' ';
            key += words[i + j];
        }
        ++counts[key];
    }
    return counts;
}

}  // namespace detail

inline double brevity_penalty(size_t hyp_len, size_t ref_len) {
    if (hyp_len == 0) return 0;
    if (hyp_len >= ref_len) return 1;
    return std::exp(1.0 - double(ref_len) / double(hyp_len));
}

// Corpus-level BLEU with clipped n-gram precisions; no smoothing by default,
// so any empty precision zeroes the score.
inline BleuReport corpus_bleu(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs,
                              const BleuOptions& opt = {}) {
    if (hyps.size() != refs.size()) {
        throw DataError("hypothesis corpus has " + std::to_string(hyps.size()) + " lines, reference has " +
                        std::to_string(refs.size()));
    }
    if (hyps.empty()) throw DataError("cannot score an empty corpus");
    if (opt.max_n < 1) throw ConfigError("max n-gram order must be at least 1");

    std::vector<size_t> matched(opt.max_n, 0), total(opt.max_n, 0);
    BleuReport rep;
    for (size_t s = 0; s < hyps.size(); ++s) {
        Sentence hyp = opt.case_insensitive ? detail::lower_sentence(hyps[s]) : hyps[s];
        Sentence ref = opt.case_insensitive ? detail::lower_sentence(refs[s]) : refs[s];
        rep.hyp_len += hyp.size();
        rep.ref_len += ref.size();
        for (size_t n = 1; n <= opt.max_n; ++n) {
            auto hc = detail::ngram_counts(hyp, n);
            auto rc = detail::ngram_counts(ref, n);
            for (const auto& [gram, count] : hc) {
                auto it = rc.find(gram);
                matched[n - 1] += std::min(count, it == rc.end() ? size_t(0) : it->second);
            }
            total[n - 1] += hyp.size() >= n ? hyp.size() - n + 1 : 0;
        }
    }

    rep.precisions.resize(opt.max_n, 0.0);
    double log_sum = 0;
    bool zero = false;
    for (size_t n = 0; n < opt.max_n; ++n) {
        size_t m = matched[n], t = total[n];
        if (opt.smooth_add1 && n >= 1) {
            ++m;
            ++t;
        }
        rep.precisions[n] = t == 0 ? 0.0 : double(m) / double(t);
        if (rep.precisions[n] <= 0.0) {
            zero = true;
        } else {
            log_sum += std::log(rep.precisions[n]);
        }
    }
    rep.brevity_penalty = brevity_penalty(rep.hyp_len, rep.ref_len);
    rep.score = zero ? 0.0 : rep.brevity_penalty * std::exp(log_sum / double(opt.max_n)) * 100.0;
    return rep;
}

inline BleuReport sentence_bleu(const Sentence& hyp, const Sentence& ref, const BleuOptions& opt = {}) {
    return corpus_bleu({hyp}, {ref}, opt);
}

// RIBES word alignment: a hypothesis word aligns to a reference position when
// the word is unique in both sentences, or failing that when one of its
// bigram contexts (word+right, left+word) is unique in both.
inline std::vector<size_t> ribes_alignment(const Sentence& hyp, const Sentence& ref) {
    auto positions = [](const Sentence& s, const std::string& w) {
        std::vector<size_t> out;
        for (size_t i = 0; i < s.size(); ++i) {
            if (s[i] == w) out.push_back(i);
        }
        return out;
    };
    auto bigram_positions = [](const Sentence& s, const std::string& a, const std::string& b) {
        std::vector<size_t> out;
        for (size_t i = 0; i + 1 < s.size(); ++i) {
            if (s[i] == a && s[i + 1] == b) out.push_back(i);
        }
        return out;
    };

    std::vector<size_t> aligned;  // reference positions, hypothesis order
    for (size_t i = 0; i < hyp.size(); ++i) {
        auto in_ref = positions(ref, hyp[i]);
        if (in_ref.empty()) continue;
        if (in_ref.size() == 1 && positions(hyp, hyp[i]).size() == 1) {
            aligned.push_back(in_ref[0]);
            continue;
        }
        if (i + 1 < hyp.size()) {  // word + right neighbour
            auto r = bigram_positions(ref, hyp[i], hyp[i + 1]);
            if (r.size() == 1 && bigram_positions(hyp, hyp[i], hyp[i + 1]).size() == 1) {
                aligned.push_back(r[0]);
                continue;
            }
        }
        if (i > 0) {  // left neighbour + word
            auto r = bigram_positions(ref, hyp[i - 1], hyp[i]);
            if (r.size() == 1 && bigram_positions(hyp, hyp[i - 1], hyp[i]).size() == 1) {
                aligned.push_back(r[0] + 1);
                continue;
            }
        }
    }
    return aligned;
}

// Kendall's tau over a list of positions: (concordant - discordant) / pairs.
inline double kendall_tau(const std::vector<size_t>& order) {
    const size_t n = order.size();
    if (n < 2) throw InputError("Kendall's tau needs at least two positions");
    long long concordant = 0, discordant = 0;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            if (order[i] < order[j]) ++concordant;
            else if (order[i] > order[j]) ++discordant;
        }
    }
    return double(concordant - discordant) / (double(n) * double(n - 1) / 2.0);
}

inline RibesReport sentence_ribes(const Sentence& hyp, const Sentence& ref, const RibesOptions& opt = {}) {
    if (hyp.empty() || ref.empty()) throw DataError("RIBES needs nonempty sentences");
    RibesReport rep;
    rep.alpha = opt.alpha;
    rep.beta = opt.beta;
    std::vector<size_t> aligned = ribes_alignment(hyp, ref);
    rep.aligned = aligned.size();
    rep.precision = double(aligned.size()) / double(hyp.size());
    rep.brevity_penalty = brevity_penalty(hyp.size(), ref.size());
    if (aligned.size() < 2) {
        rep.degenerate = true;
        return rep;  // score floored to 0, tau undefined
    }
    rep.nkt = (kendall_tau(aligned) + 1.0) / 2.0;
    rep.score = rep.nkt * std::pow(rep.precision, opt.alpha) * std::pow(rep.brevity_penalty, opt.beta);
    return rep;
}

struct CorpusRibes {
    double score = 0;  // mean over sentences
    size_t degenerate = 0;
    std::vector<RibesReport> sentences;
};

inline CorpusRibes corpus_ribes(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs,
                                const RibesOptions& opt = {}) {
    if (hyps.size() != refs.size()) {
        throw DataError("hypothesis corpus has " + std::to_string(hyps.size()) + " lines, reference has " +
                        std::to_string(refs.size()));
    }
    if (hyps.empty()) throw DataError("cannot score an empty corpus");
    CorpusRibes out;
    for (size_t s = 0; s < hyps.size(); ++s) {
        out.sentences.push_back(sentence_ribes(hyps[s], refs[s], opt));
        out.score += out.sentences.back().score;
        if (out.sentences.back().degenerate) ++out.degenerate;
    }
    out.score /= double(hyps.size());
    return out;
}

inline size_t count_unk(const std::vector<Sentence>& corpus, const std::string& unk_token = kUnkText) {
    size_t count = 0;
    for (const Sentence& s : corpus) count += size_t(std::count(s.begin(), s.end(), unk_token));
    return count;
}

}  // namespace nsc
