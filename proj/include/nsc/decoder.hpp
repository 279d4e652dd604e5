#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "nsc/error.hpp"
#include "nsc/model.hpp"
#include "nsc/tape.hpp"
#include "nsc/token.hpp"

namespace nsc {

struct DecodeConfig {
    size_t beam = 4;
    size_t max_len = 0;  // 0: derive 3x the longest input
    bool length_norm = true;

    void validate() const {
        if (beam < 1) throw ConfigError("beam size must be at least 1");
    }
};

struct Hypothesis {
    TokenSeq tokens;  // EOS last iff complete; BOS not included
    double score = 0;  // cumulative log-probability
    bool complete = false;
    bool truncated = false;  // stopped by the length cap

    double ranking_score(bool length_norm) const {
        return length_norm && !tokens.empty() ? score / double(tokens.size()) : score;
    }
};

// A Scorer drives beam search: `start()` yields the initial decoder state,
// `step(state, prev_token)` the next-token probability distribution plus the
// successor state. Scorer::State is copyable and cheap (models keep their
// graph on a shared tape and pass VarIds around).
template <typename Scorer>
Hypothesis beam_search(Scorer& scorer, const DecodeConfig& cfg) {
    cfg.validate();
    const size_t vocab = scorer.vocab();
    const size_t max_len = cfg.max_len;
    if (max_len == 0) throw ConfigError("decode length cap must be positive");

    struct Beam {
        TokenSeq tokens;
        double score;
        typename Scorer::State state;
    };
    std::vector<Beam> alive{{TokenSeq{}, 0.0, scorer.start()}};
    std::vector<Hypothesis> completed;

    for (size_t t = 0; t < max_len && !alive.empty() && completed.size() < cfg.beam; ++t) {
        struct Cand {
            size_t parent;
            TokenId token;
            double score;
        };
        std::vector<Cand> cands;
        cands.reserve(alive.size() * vocab);
        std::vector<std::vector<double>> dists(alive.size());
        std::vector<typename Scorer::State> next_states(alive.size());
        for (size_t p = 0; p < alive.size(); ++p) {
            TokenId prev = alive[p].tokens.empty() ? kBos : alive[p].tokens.back();
            dists[p] = scorer.step(alive[p].state, prev, next_states[p]);
            for (size_t v = 0; v < vocab; ++v) {
                cands.push_back({p, TokenId(v), alive[p].score + std::log(dists[p][v])});
            }
        }
        // stable order: ties resolve toward the earlier parent, lower token id
        std::stable_sort(cands.begin(), cands.end(),
                         [](const Cand& a, const Cand& b) { return a.score > b.score; });
        if (cands.size() > cfg.beam) cands.resize(cfg.beam);

        std::vector<Beam> next;
        for (const Cand& c : cands) {
            TokenSeq tokens = alive[c.parent].tokens;
            tokens.push_back(c.token);
            if (c.token == kEos) {
                completed.push_back({std::move(tokens), c.score, true, false});
            } else {
                next.push_back({std::move(tokens), c.score, next_states[c.parent]});
            }
        }
        alive = std::move(next);
    }

    auto better = [&](const Hypothesis& a, const Hypothesis& b) {
        return a.ranking_score(cfg.length_norm) > b.ranking_score(cfg.length_norm);
    };
    if (!completed.empty()) {
        return *std::max_element(completed.begin(), completed.end(),
                                 [&](const Hypothesis& a, const Hypothesis& b) { return better(b, a); });
    }
    // nothing finished: return the best live prefix, flagged
    Hypothesis best;
    bool first = true;
    for (const Beam& b : alive) {
        Hypothesis h{b.tokens, b.score, false, true};
        if (first || better(h, best)) best = std::move(h);
        first = false;
    }
    if (first) throw ContractError("beam search ended with no hypothesis at all");
    return best;
}

template <typename Scorer>
Hypothesis greedy_decode(Scorer& scorer, size_t max_len) {
    if (max_len == 0) throw ConfigError("decode length cap must be positive");
    Hypothesis h;
    typename Scorer::State state = scorer.start();
    TokenId prev = kBos;
    for (size_t t = 0; t < max_len; ++t) {
        typename Scorer::State next;
        std::vector<double> dist = scorer.step(state, prev, next);
        size_t arg = 0;
        for (size_t v = 1; v < dist.size(); ++v) {
            if (dist[v] > dist[arg]) arg = v;
        }
        h.tokens.push_back(TokenId(arg));
        h.score += std::log(dist[arg]);
        if (TokenId(arg) == kEos) {
            h.complete = true;
            return h;
        }
        state = next;
        prev = TokenId(arg);
    }
    h.truncated = true;
    return h;
}

// Single-model scorer over one example: encodes the inputs once on its tape,
// then each step runs the conditional decoder and softmaxes the logits.
template <typename Real>
class ModelScorer {
  public:
    using State = VarId;

    ModelScorer(Tape<Real>& tape, const BoundModel<Real>& model, const CombinationExample& ex)
        : tape_(tape), model_(model), enc_(encode_inputs(tape, model, ex)) {}

    size_t vocab() const { return model_.vocab(); }

    size_t longest_input() const { return enc_.longest_input; }

    State start() { return init_state(tape_, model_, enc_); }

    std::vector<double> step(const State& state, TokenId prev, State& next) {
        auto res = decoder_step(tape_, model_, enc_, state, prev);
        next = res.state;
        last_attn_ = res.attn;
        const Tensor<Real>& probs = tape_.value(tape_.softmax(res.logits));
        std::vector<double> out(probs.numel());
        for (size_t i = 0; i < probs.numel(); ++i) out[i] = double(probs[i]);
        return out;
    }

    // attention of the most recent step, for contract checks and inspection
    const AttentionOutput& last_attention() const { return last_attn_; }
    Tape<Real>& tape() { return tape_; }

  private:
    Tape<Real>& tape_;
    const BoundModel<Real>& model_;
    EncodedInputs enc_;
    AttentionOutput last_attn_;
};

// Ensemble scorer: every member advances its own state; the step distribution
// is the arithmetic mean of the member distributions.
template <typename Real>
class EnsembleScorer {
  public:
    using State = std::vector<VarId>;  // one decoder state per member

    explicit EnsembleScorer(std::vector<ModelScorer<Real>*> members) : members_(std::move(members)) {
        if (members_.empty()) throw ConfigError("ensemble needs at least one member");
        for (const auto* m : members_) {
            if (m->vocab() != members_[0]->vocab()) {
                throw ConfigError("ensemble members disagree on target vocabulary size");
            }
        }
    }

    size_t vocab() const { return members_[0]->vocab(); }

    State start() {
        State s;
        for (auto* m : members_) s.push_back(m->start());
        return s;
    }

    std::vector<double> step(const State& state, TokenId prev, State& next) {
        next.assign(members_.size(), VarId{});
        std::vector<double> mean(vocab(), 0.0);
        for (size_t i = 0; i < members_.size(); ++i) {
            std::vector<double> dist = members_[i]->step(state[i], prev, next[i]);
            for (size_t v = 0; v < mean.size(); ++v) mean[v] += dist[v];
        }
        for (double& v : mean) v /= double(members_.size());
        return mean;
    }

  private:
    std::vector<ModelScorer<Real>*> members_;
};

inline size_t default_max_len(size_t longest_input) { return 3 * std::max<size_t>(1, longest_input); }

// Convenience wrapper: one sentence through one model.
template <typename Real>
Hypothesis translate_example(const ModelParams<Real>& params, const CombinationExample& ex,
                             DecodeConfig cfg) {
    Tape<Real> tape;
    BoundModel<Real> bound = bind_model(tape, params, false);
    ModelScorer<Real> scorer(tape, bound, ex);
    if (cfg.max_len == 0) cfg.max_len = default_max_len(scorer.longest_input());
    return beam_search(scorer, cfg);
}

// One sentence through an ensemble; members may be the same object repeated.
template <typename Real>
Hypothesis ensemble_translate(const std::vector<const ModelParams<Real>*>& models,
                              const CombinationExample& ex, DecodeConfig cfg) {
    if (models.empty()) throw ConfigError("ensemble needs at least one member");
    std::vector<Tape<Real>> tapes(models.size());
    std::vector<BoundModel<Real>> bound;
    std::vector<ModelScorer<Real>> scorers;
    bound.reserve(models.size());
    scorers.reserve(models.size());
    for (size_t i = 0; i < models.size(); ++i) {
        bound.push_back(bind_model(tapes[i], *models[i], false));
        scorers.emplace_back(tapes[i], bound[i], ex);
    }
    std::vector<ModelScorer<Real>*> ptrs;
    for (auto& s : scorers) ptrs.push_back(&s);
    EnsembleScorer<Real> ens(std::move(ptrs));
    if (cfg.max_len == 0) {
        size_t longest = 0;
        for (auto& s : scorers) longest = std::max(longest, s.longest_input());
        cfg.max_len = default_max_len(longest);
    }
    return beam_search(ens, cfg);
}

}  // namespace nsc
