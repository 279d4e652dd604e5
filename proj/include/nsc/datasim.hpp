#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "nsc/config.hpp"
#include "nsc/decoder.hpp"
#include "nsc/error.hpp"
#include "nsc/model.hpp"
#include "nsc/rng.hpp"
#include "nsc/text.hpp"
#include "nsc/token.hpp"
#include "nsc/train.hpp"
#include "nsc/vocab.hpp"

namespace nsc {

// ---------------------------------------------------------------------------
// Synthetic parallel tasks: desk-scale stand-ins for real bitext.

enum class SynthTask { kCopy, kReverse, kLexmap };

inline SynthTask parse_task(const std::string& name) {
    if (name == "copy") return SynthTask::kCopy;
    if (name == "reverse") return SynthTask::kReverse;
    if (name == "lexmap") return SynthTask::kLexmap;
    throw ConfigError("unknown task '" + name + "' (copy, reverse, lexmap)");
}

struct ParallelCorpus {
    std::vector<Sentence> sources;
    std::vector<Sentence> targets;
};

// Seeded bijection over the synthetic vocabulary, used by the lexmap task.
inline std::vector<size_t> lexmap_permutation(size_t vocab, uint64_t seed) {
    std::vector<size_t> perm(vocab);
    std::iota(perm.begin(), perm.end(), size_t(0));
    Rng rng = substream(seed, "lexmap");
    rng.shuffle(perm);
    return perm;
}

// Sources drawn uniformly; each sentence from its own substream so output is
// independent of generation order and count.
inline ParallelCorpus synthetic_task_generate(SynthTask task, size_t vocab, size_t min_len, size_t max_len,
                                              size_t count, uint64_t seed) {
    if (vocab < 4) throw ConfigError("synthetic vocabulary must have at least 4 types");
    if (min_len < 1 || max_len < min_len) throw ConfigError("invalid length range");
    std::vector<size_t> lexmap = lexmap_permutation(vocab, seed);
    ParallelCorpus out;
    for (size_t i = 0; i < count; ++i) {
        Rng rng = substream(seed, "gen", i);
        size_t len = min_len + rng.below(max_len - min_len + 1);
        Sentence src;
        std::vector<size_t> ids;
        for (size_t j = 0; j < len; ++j) {
            ids.push_back(rng.below(vocab));
            src.push_back("w" + std::to_string(ids.back()));
        }
        Sentence tgt;
        switch (task) {
            case SynthTask::kCopy:
                tgt = src;
                break;
            case SynthTask::kReverse:
                tgt.assign(src.rbegin(), src.rend());
                break;
            case SynthTask::kLexmap:
                for (size_t id : ids) tgt.push_back("w" + std::to_string(lexmap[id]));
                break;
        }
        out.sources.push_back(std::move(src));
        out.targets.push_back(std::move(tgt));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Corruption channels: turn references into simulated system outputs.

struct CorruptionProfile {
    std::string kind = "custom";
    double oov_substitution_rate = 0;
    double omission_rate = 0;
    double repetition_rate = 0;
    size_t local_reorder_window = 0;  // clamped to the sentence length at apply time
    double function_word_error_rate = 0;
    // Tokens rarer than this corpus frequency are OOV-substitution targets;
    // the default makes every token a target.
    size_t oov_frequency_threshold = std::numeric_limits<size_t>::max();
    std::vector<std::string> function_words;

    void validate() const {
        for (double r : {oov_substitution_rate, omission_rate, repetition_rate, function_word_error_rate}) {
            if (r < 0.0 || r > 1.0) throw ConfigError("corruption rates must lie in [0,1]");
        }
    }

    static CorruptionProfile nmt_like() {
        CorruptionProfile p;
        p.kind = "nmt-like";
        p.oov_substitution_rate = 0.15;
        p.omission_rate = 0.05;
        p.repetition_rate = 0.05;
        return p;
    }

    static CorruptionProfile smt_like() {
        CorruptionProfile p;
        p.kind = "smt-like";
        p.local_reorder_window = 3;
        p.function_word_error_rate = 0.15;
        return p;
    }

    static CorruptionProfile pbmt_like() {
        CorruptionProfile p;
        p.kind = "pbmt-like";
        p.local_reorder_window = 2;
        p.function_word_error_rate = 0.10;
        return p;
    }

    static CorruptionProfile by_name(const std::string& name) {
        if (name == "nmt-like") return nmt_like();
        if (name == "smt-like") return smt_like();
        if (name == "pbmt-like") return pbmt_like();
        if (name == "identity") {
            CorruptionProfile p;
            p.kind = "identity";
            return p;
        }
        throw ConfigError("unknown corruption profile '" + name + "'");
    }
};

inline std::unordered_map<std::string, size_t> token_frequencies(const std::vector<Sentence>& corpus) {
    std::unordered_map<std::string, size_t> freq;
    for (const Sentence& s : corpus) {
        for (const std::string& w : s) ++freq[w];
    }
    return freq;
}

inline std::vector<std::string> top_frequent_tokens(const std::vector<Sentence>& corpus, size_t n) {
    auto freq = token_frequencies(corpus);
    std::vector<std::pair<std::string, size_t>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    std::vector<std::string> out;
    for (size_t i = 0; i < std::min(n, ranked.size()); ++i) out.push_back(ranked[i].first);
    return out;
}

// Channels apply in a fixed order: OOV substitution, omission, repetition,
// local reordering, function-word errors. One rng draw per decision keeps a
// profile's stream layout independent of outcomes.
inline Sentence corrupt(const Sentence& reference, const CorruptionProfile& p,
                        const std::unordered_map<std::string, size_t>& freq, Rng& rng) {
    if (reference.empty()) throw InputError("cannot corrupt an empty sentence");
    p.validate();

    Sentence cur;
    for (const std::string& w : reference) {
        auto it = freq.find(w);
        size_t f = it == freq.end() ? 0 : it->second;
        bool hit = rng.uniform() < p.oov_substitution_rate;
        cur.push_back(hit && f < p.oov_frequency_threshold ? kUnkText : w);
    }

    Sentence kept;  // omission never empties the sentence
    for (size_t i = 0; i < cur.size(); ++i) {
        bool last_chance = kept.empty() && i + 1 == cur.size();
        bool drop = rng.uniform() < p.omission_rate;
        if (!drop || last_chance) kept.push_back(cur[i]);
    }
    cur = std::move(kept);

    Sentence doubled;
    for (const std::string& w : cur) {
        doubled.push_back(w);
        if (rng.uniform() < p.repetition_rate) doubled.push_back(w);
    }
    cur = std::move(doubled);

    if (p.local_reorder_window > 0 && cur.size() > 1) {
        // sort by jittered position: displacement is bounded by the window
        size_t w = std::min(p.local_reorder_window, cur.size());
        std::vector<double> key(cur.size());
        for (size_t i = 0; i < cur.size(); ++i) key[i] = double(i) + rng.uniform() * double(w + 1);
        std::vector<size_t> order(cur.size());
        std::iota(order.begin(), order.end(), size_t(0));
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return key[a] < key[b]; });
        Sentence shuffled;
        for (size_t i : order) shuffled.push_back(cur[i]);
        cur = std::move(shuffled);
    }

    if (p.function_word_error_rate > 0 && !p.function_words.empty()) {
        auto is_fw = [&](const std::string& w) {
            return std::find(p.function_words.begin(), p.function_words.end(), w) != p.function_words.end();
        };
        Sentence edited;
        for (size_t g = 0; g <= cur.size(); ++g) {
            if (rng.uniform() < p.function_word_error_rate) {
                edited.push_back(p.function_words[rng.below(p.function_words.size())]);
            }
            if (g < cur.size()) {
                bool drop = is_fw(cur[g]) && rng.uniform() < p.function_word_error_rate;
                if (!drop) edited.push_back(cur[g]);
            }
        }
        if (!edited.empty()) cur = std::move(edited);
    }
    return cur;
}

// Whole-corpus corruption; sentence i draws from substream(seed, ., i), so
// results do not depend on processing order.
inline std::vector<Sentence> corrupt_corpus(const std::vector<Sentence>& references, const CorruptionProfile& p,
                                            uint64_t seed) {
    auto freq = token_frequencies(references);
    std::vector<Sentence> out;
    out.reserve(references.size());
    for (size_t i = 0; i < references.size(); ++i) {
        Rng rng = substream(seed, "corruption", i);
        out.push_back(corrupt(references[i], p, freq, rng));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cross-fold simulation (fold A model translates fold B, and vice versa).

struct FoldAssignment {
    std::vector<int> fold;  // 0 = A, 1 = B per sentence id

    static FoldAssignment make(size_t count, uint64_t seed) {
        std::vector<size_t> ids(count);
        std::iota(ids.begin(), ids.end(), size_t(0));
        Rng rng = substream(seed, "fold");
        rng.shuffle(ids);
        FoldAssignment fa;
        fa.fold.assign(count, 1);
        for (size_t i = 0; i < (count + 1) / 2; ++i) fa.fold[ids[i]] = 0;
        return fa;
    }

    size_t size_of(int which) const { return size_t(std::count(fold.begin(), fold.end(), which)); }
};

struct ProvenanceEntry {
    size_t id = 0;
    char fold = '-';           // fold the sentence belongs to
    char translated_by = '-';  // fold the producing model was trained on
    std::string tag;
};

inline std::vector<std::string> provenance_lines(const std::vector<ProvenanceEntry>& entries) {
    std::vector<std::string> lines;
    for (const auto& e : entries) {
        lines.push_back(std::to_string(e.id) + "\t" + std::string(1, e.fold) + "\t" + e.tag);
    }
    return lines;
}

struct CombinationCorpus {
    std::vector<Sentence> source;
    std::vector<std::vector<Sentence>> systems;  // K aligned corpora
    std::vector<Sentence> reference;
    std::vector<ProvenanceEntry> provenance;  // one entry per sentence per system

    size_t size() const { return source.size(); }
    size_t num_systems() const { return systems.size(); }
};

// An Adapter supplies: a `tag` string, `Model train(sources, targets)`, and
// `Sentence translate(model, source)`. The artifact's own toy NMT below is
// the default; anything conforming plugs in.
template <typename Adapter>
CombinationCorpus crossfold_simulate(const ParallelCorpus& corpus, const std::vector<Adapter>& systems,
                                     uint64_t seed) {
    const size_t n = corpus.sources.size();
    if (corpus.targets.size() != n) {
        throw DataError("parallel corpus misaligned: " + std::to_string(n) + " sources vs " +
                        std::to_string(corpus.targets.size()) + " targets");
    }
    if (n < 2) throw ConfigError("cross-fold simulation needs at least 2 sentences");
    if (systems.empty()) throw ConfigError("cross-fold simulation needs at least one system");

    FoldAssignment fa = FoldAssignment::make(n, seed);
    std::vector<Sentence> src_a, tgt_a, src_b, tgt_b;
    for (size_t i = 0; i < n; ++i) {
        (fa.fold[i] == 0 ? src_a : src_b).push_back(corpus.sources[i]);
        (fa.fold[i] == 0 ? tgt_a : tgt_b).push_back(corpus.targets[i]);
    }

    CombinationCorpus out;
    out.source = corpus.sources;
    out.reference = corpus.targets;
    for (const Adapter& sys : systems) {
        auto model_a = sys.train(src_a, tgt_a);  // translates fold B
        auto model_b = sys.train(src_b, tgt_b);  // translates fold A
        std::vector<Sentence> translations(n);
        for (size_t i = 0; i < n; ++i) {
            bool in_a = fa.fold[i] == 0;
            translations[i] = sys.translate(in_a ? model_b : model_a, corpus.sources[i]);
            out.provenance.push_back({i, in_a ? 'A' : 'B', in_a ? 'B' : 'A', sys.tag});
        }
        out.systems.push_back(std::move(translations));
    }
    return out;
}

// Corruption-channel counterpart: system k is the reference corpus pushed
// through profile k.
inline CombinationCorpus simulate_corruption(const ParallelCorpus& corpus,
                                             const std::vector<CorruptionProfile>& profiles, uint64_t seed) {
    if (corpus.sources.size() != corpus.targets.size()) {
        throw DataError("parallel corpus misaligned: " + std::to_string(corpus.sources.size()) + " sources vs " +
                        std::to_string(corpus.targets.size()) + " targets");
    }
    if (profiles.empty()) throw ConfigError("corruption simulation needs at least one profile");
    CombinationCorpus out;
    out.source = corpus.sources;
    out.reference = corpus.targets;
    for (size_t k = 0; k < profiles.size(); ++k) {
        CorruptionProfile p = profiles[k];
        if (p.function_word_error_rate > 0 && p.function_words.empty()) {
            // stock profiles carry no word list; stand in with the corpus's
            // most frequent tokens
            p.function_words = top_frequent_tokens(corpus.targets, 10);
        }
        out.systems.push_back(corrupt_corpus(corpus.targets, p, substream_seed(seed, "system", k)));
        for (size_t i = 0; i < corpus.targets.size(); ++i) {
            out.provenance.push_back({i, '-', '-', profiles[k].kind});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// The artifact's own toy NMT as a cross-fold system: K=1, no source input,
// one union vocabulary hosting both sides of the pair.

struct ToyNmtAdapter {
    ModelConfig base;  // hidden/embedding/epochs/beam; num_systems and use_source are overridden
    uint64_t seed = 1;
    std::string tag = "toy-nmt";

    struct Model {
        ModelParams<float> params;
        Vocabulary vocab;
    };

    ToyNmtAdapter() {
        base.hidden = 24;
        base.embedding = 12;
        base.batch_size = 8;
        base.max_epochs = 60;  // Adadelta warms up slowly; fewer updates underfit
        base.beam = 2;
    }

    Model train(const std::vector<Sentence>& sources, const std::vector<Sentence>& targets) const {
        if (sources.size() != targets.size()) throw DataError("misaligned fold corpus");
        if (sources.empty()) throw ConfigError("fold too small to train a system on");
        std::vector<Sentence> joint = sources;
        joint.insert(joint.end(), targets.begin(), targets.end());
        Vocabulary vocab = build_vocab(joint, base.tgt_vocab_limit);

        ModelConfig cfg = base;
        cfg.num_systems = 1;
        cfg.use_source = false;
        std::vector<CombinationExample> data;
        for (size_t i = 0; i < sources.size(); ++i) {
            if (sources[i].empty() || targets[i].empty()) {
                throw DataError("empty line in fold corpus at sentence " + std::to_string(i));
            }
            CombinationExample ex;
            ex.systems.push_back(vocab.encode(sources[i]));
            ex.reference = vocab.encode(targets[i]);
            data.push_back(std::move(ex));
        }
        auto result = nsc::train(init_params<float>(cfg, 0, vocab.size(), seed), data, {}, {});
        return {std::move(result.best), std::move(vocab)};
    }

    Sentence translate(const Model& m, const Sentence& source) const {
        CombinationExample ex;
        ex.systems.push_back(m.vocab.encode(source));
        DecodeConfig dcfg;
        dcfg.beam = base.beam;
        dcfg.length_norm = base.length_norm;
        Hypothesis h = translate_example(m.params, ex, dcfg);
        TokenSeq toks = h.tokens;
        if (h.complete) toks.pop_back();
        Sentence out;
        for (TokenId t : toks) out.push_back(m.vocab.token(size_t(t)));
        return out;
    }
};

// ---------------------------------------------------------------------------
// Combination corpora on disk: N+2 aligned files plus a provenance sidecar.

inline void write_combination_corpus(const std::string& dir, const CombinationCorpus& corpus) {
    write_sentences(dir + "/source.txt", corpus.source);
    for (size_t k = 0; k < corpus.systems.size(); ++k) {
        write_sentences(dir + "/system" + std::to_string(k + 1) + ".txt", corpus.systems[k]);
    }
    write_sentences(dir + "/reference.txt", corpus.reference);
    if (!corpus.provenance.empty()) {
        write_lines(dir + "/provenance.tsv", provenance_lines(corpus.provenance));
    }
}

inline CombinationCorpus read_combination_corpus(const std::string& dir, size_t num_systems) {
    CombinationCorpus corpus;
    corpus.source = read_sentences(dir + "/source.txt");
    for (size_t k = 0; k < num_systems; ++k) {
        corpus.systems.push_back(read_sentences(dir + "/system" + std::to_string(k + 1) + ".txt"));
        if (corpus.systems.back().size() != corpus.source.size()) {
            throw DataError("system" + std::to_string(k + 1) + ".txt has " +
                            std::to_string(corpus.systems.back().size()) + " lines, source.txt has " +
                            std::to_string(corpus.source.size()));
        }
    }
    corpus.reference = read_sentences(dir + "/reference.txt");
    if (corpus.reference.size() != corpus.source.size()) {
        throw DataError("reference.txt has " + std::to_string(corpus.reference.size()) +
                        " lines, source.txt has " + std::to_string(corpus.source.size()));
    }
    return corpus;
}

// Text -> model ids. Hypothesis sides read the target vocabulary (they live
// in the target language); unknown tokens become UNK.
inline std::vector<CombinationExample> encode_combination(const CombinationCorpus& corpus,
                                                          const Vocabulary& src_vocab,
                                                          const Vocabulary& tgt_vocab, bool use_source) {
    std::vector<CombinationExample> out;
    for (size_t i = 0; i < corpus.size(); ++i) {
        CombinationExample ex;
        if (use_source) ex.source = src_vocab.encode(corpus.source[i]);
        for (const auto& sys : corpus.systems) ex.systems.push_back(tgt_vocab.encode(sys[i]));
        ex.reference = tgt_vocab.encode(corpus.reference[i]);
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace nsc
