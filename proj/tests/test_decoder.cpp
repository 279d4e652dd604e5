#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstddef>
#include <vector>

#include "nsc/config.hpp"
#include "nsc/decoder.hpp"
#include "nsc/error.hpp"
#include "nsc/model.hpp"
#include "nsc/rng.hpp"
#include "nsc/tape.hpp"
#include "nsc/tensor.hpp"
#include "nsc/token.hpp"

using nsc::BoundModel;
using nsc::CombinationExample;
using nsc::DecodeConfig;
using nsc::EnsembleScorer;
using nsc::Hypothesis;
using nsc::ModelConfig;
using nsc::ModelParams;
using nsc::ModelScorer;
using nsc::Rng;
using nsc::Tape;
using nsc::Tensor;
using nsc::TokenId;
using nsc::TokenSeq;
using nsc::VarId;

namespace {

ModelConfig toy_config(size_t num_systems, bool use_source, size_t hidden = 5, size_t emb = 3) {
    ModelConfig cfg;
    cfg.num_systems = num_systems;
    cfg.use_source = use_source;
    cfg.hidden = hidden;
    cfg.embedding = emb;
    return cfg;
}

TokenSeq random_seq(Rng& rng, size_t vocab, size_t lo, size_t hi) {
    TokenSeq s(lo + rng.below(hi - lo + 1));
    for (auto& t : s) t = TokenId(rng.below(vocab));
    return s;
}

CombinationExample random_example(Rng& rng, const ModelConfig& cfg, size_t sv, size_t tv) {
    CombinationExample ex;
    if (cfg.use_source) ex.source = random_seq(rng, sv, 2, 4);
    for (size_t k = 0; k < cfg.num_systems; ++k) ex.systems.push_back(random_seq(rng, tv, 2, 4));
    return ex;
}

using Vec = std::vector<double>;

Vec matvec(const Tensor<double>& W, const Vec& x) {
    REQUIRE(W.cols() == x.size());
    Vec y(W.rows(), 0.0);
    for (size_t r = 0; r < W.rows(); ++r) {
        for (size_t c = 0; c < W.cols(); ++c) y[r] += W.at(r, c) * x[c];
    }
    return y;
}

Vec add(Vec a, const Vec& b) {
    for (size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

Vec tanh_vec(Vec v) {
    for (double& x : v) x = std::tanh(x);
    return v;
}

double dot(const Vec& a, const Vec& b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Vec softmax_oracle(Vec e) {
    double mx = e[0];
    for (double v : e) mx = std::max(mx, v);
    double sum = 0;
    for (double& v : e) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : e) v /= sum;
    return e;
}

Vec tensor_vec(const Tensor<double>& t) {
    Vec v(t.numel());
    for (size_t i = 0; i < v.size(); ++i) v[i] = t[i];
    return v;
}

Vec gru_oracle(const nsc::GruParams<double>& p, const Vec& x, const Vec& h) {
    auto gate = [&](const Tensor<double>& W, const Tensor<double>& U, const Tensor<double>& b) {
        return add(add(matvec(W, x), matvec(U, h)), tensor_vec(b));
    };
    Vec z = gate(p.W_z, p.U_z, p.b_z);
    Vec r = gate(p.W_r, p.U_r, p.b_r);
    for (double& v : z) v = 1.0 / (1.0 + std::exp(-v));
    for (double& v : r) v = 1.0 / (1.0 + std::exp(-v));
    Vec rh(h.size());
    for (size_t i = 0; i < h.size(); ++i) rh[i] = r[i] * h[i];
    Vec cand = tanh_vec(add(add(matvec(p.W_h, x), matvec(p.U_h, rh)), tensor_vec(p.b_h)));
    Vec out(h.size());
    for (size_t i = 0; i < h.size(); ++i) out[i] = (1.0 - z[i]) * h[i] + z[i] * cand[i];
    return out;
}

// Enumerates every EOS-terminated sequence of length <= max_len and returns
// the best one under the ranking rule; a wide-enough beam must agree with it.
template <typename Scorer>
Hypothesis exhaustive_best(Scorer& scorer, size_t max_len, bool length_norm) {
    struct Node {
        TokenSeq tokens;
        double score;
        typename Scorer::State state;
    };
    std::vector<Node> frontier{{TokenSeq{}, 0.0, scorer.start()}};
    Hypothesis best;
    bool found = false;
    for (size_t t = 0; t < max_len; ++t) {
        std::vector<Node> next;
        for (auto& node : frontier) {
            TokenId prev = node.tokens.empty() ? nsc::kBos : node.tokens.back();
            typename Scorer::State st;
            Vec dist = scorer.step(node.state, prev, st);
            for (size_t v = 0; v < dist.size(); ++v) {
                TokenSeq toks = node.tokens;
                toks.push_back(TokenId(v));
                double sc = node.score + std::log(dist[v]);
                if (TokenId(v) == nsc::kEos) {
                    Hypothesis h{toks, sc, true, false};
                    if (!found || h.ranking_score(length_norm) > best.ranking_score(length_norm)) {
                        best = h;
                        found = true;
                    }
                } else if (t + 1 < max_len) {
                    next.push_back({std::move(toks), sc, st});
                }
            }
        }
        frontier = std::move(next);
    }
    REQUIRE(found);  // EOS as the very first token is always a candidate
    return best;
}

}  // namespace

TEST_CASE("decoder step distributions") {
    const size_t sv = 9, tv = 8;
    ModelConfig cfg = toy_config(2, true);
    ModelParams<double> p = nsc::init_params<double>(cfg, sv, tv, 71);

    SECTION("valid probability distribution at every step") {
        Rng rng(401);
        for (int trial = 0; trial < 5; ++trial) {
            CombinationExample ex = random_example(rng, cfg, sv, tv);
            Tape<double> tape;
            BoundModel<double> b = nsc::bind_model(tape, p, false);
            ModelScorer<double> scorer(tape, b, ex);
            VarId state = scorer.start();
            TokenId prev = nsc::kBos;
            for (int step = 0; step < 4; ++step) {
                VarId next;
                Vec dist = scorer.step(state, prev, next);
                REQUIRE(dist.size() == tv);
                double sum = 0;
                for (double v : dist) {
                    REQUIRE(v > 0.0);
                    REQUIRE(v < 1.0);
                    sum += v;
                }
                REQUIRE(sum == Catch::Approx(1.0).margin(1e-6));
                state = next;
                prev = TokenId(rng.below(tv));
            }
        }
    }

    SECTION("all-zero readout gives the uniform distribution") {
        ModelParams<double> q = p;
        q.readout.W_o1.fill(0);
        q.readout.W_o2.fill(0);
        q.readout.W_o3.fill(0);
        q.readout.b_o.fill(0);
        q.readout.W_vocab.fill(0);
        q.readout.b_vocab.fill(0);
        Rng rng(402);
        CombinationExample ex = random_example(rng, cfg, sv, tv);
        Tape<double> tape;
        BoundModel<double> b = nsc::bind_model(tape, q, false);
        ModelScorer<double> scorer(tape, b, ex);
        VarId state = scorer.start();
        VarId next;
        Vec dist = scorer.step(state, nsc::kBos, next);
        for (double v : dist) REQUIRE(v == Catch::Approx(1.0 / double(tv)).margin(1e-12));
    }

    SECTION("invalid previous token is a vocabulary error") {
        Rng rng(403);
        CombinationExample ex = random_example(rng, cfg, sv, tv);
        Tape<double> tape;
        BoundModel<double> b = nsc::bind_model(tape, p, false);
        nsc::EncodedInputs enc = nsc::encode_inputs(tape, b, ex);
        VarId s0 = nsc::init_state(tape, b, enc);
        REQUIRE_THROWS_AS(nsc::decoder_step(tape, b, enc, s0, TokenId(tv)), nsc::VocabError);
        REQUIRE_THROWS_AS(nsc::decoder_step(tape, b, enc, s0, TokenId(-1)), nsc::VocabError);
    }
}

TEST_CASE("decoder step matches a scripted oracle") {
    // n=4, K=2, |V|=7: recompute intermediate state, two-level attention,
    // second transition, and the deep-output readout with plain loops.
    const size_t n = 4, emb = 3, sv = 6, tv = 7;
    ModelConfig cfg = toy_config(2, true, n, emb);
    ModelParams<double> p = nsc::init_params<double>(cfg, sv, tv, 88);

    Rng rng(404);
    CombinationExample ex = random_example(rng, cfg, sv, tv);

    Tape<double> tape;
    BoundModel<double> b = nsc::bind_model(tape, p, false);
    nsc::EncodedInputs enc = nsc::encode_inputs(tape, b, ex);

    // annotation matrices come from the tape: the encoder has its own oracle
    // tests, this one checks the composition on top of it
    std::vector<Tensor<double>> H;
    for (const auto& seq : enc.seqs) H.push_back(tape.value(seq.matrix));

    auto column = [](const Tensor<double>& m, size_t c) {
        Vec v(m.rows());
        for (size_t r = 0; r < m.rows(); ++r) v[r] = m.at(r, c);
        return v;
    };

    // s_0 = tanh(W_init . mean annotation of the first input)
    Vec mean(H[0].rows(), 0.0);
    for (size_t c = 0; c < H[0].cols(); ++c) mean = add(mean, column(H[0], c));
    for (double& v : mean) v /= double(H[0].cols());
    Vec s = tanh_vec(matvec(p.W_init, mean));

    VarId state = nsc::init_state(tape, b, enc);
    {
        const Tensor<double>& got = tape.value(state);
        for (size_t i = 0; i < n; ++i) REQUIRE(got[i] == Catch::Approx(s[i]).margin(1e-12));
    }

    TokenId prev_tokens[3] = {nsc::kBos, TokenId(4), TokenId(6)};
    for (TokenId y_prev : prev_tokens) {
        auto res = nsc::decoder_step(tape, b, enc, state, y_prev);

        Vec e_prev(emb);
        for (size_t i = 0; i < emb; ++i) e_prev[i] = p.tgt_emb.at(size_t(y_prev), i);
        Vec s_tilde = gru_oracle(p.dec1, e_prev, s);

        std::vector<Vec> contexts;
        for (size_t i = 0; i < enc.seqs.size(); ++i) {
            const auto& attn = i == 0 ? p.src_attn : p.sys_attn[i - 1];
            Vec scores(H[i].cols());
            for (size_t c = 0; c < H[i].cols(); ++c) {
                Vec pre = tanh_vec(add(matvec(attn.W_a, s_tilde), matvec(attn.U_a, column(H[i], c))));
                scores[c] = dot(tensor_vec(attn.v_a), pre);
            }
            Vec alpha = softmax_oracle(scores);
            Vec ctx(H[i].rows(), 0.0);
            for (size_t c = 0; c < H[i].cols(); ++c) {
                for (size_t r = 0; r < H[i].rows(); ++r) ctx[r] += alpha[c] * H[i].at(r, c);
            }
            contexts.push_back(ctx);
        }

        Vec sys_scores(contexts.size());
        for (size_t k = 0; k < contexts.size(); ++k) sys_scores[k] = dot(s_tilde, matvec(p.fuse.P, contexts[k]));
        Vec beta = softmax_oracle(sys_scores);
        Vec fused(2 * n, 0.0);
        for (size_t k = 0; k < contexts.size(); ++k) {
            for (size_t r = 0; r < fused.size(); ++r) fused[r] += beta[k] * contexts[k][r];
        }

        Vec s_next = gru_oracle(p.dec2, fused, s_tilde);
        Vec hidden = tanh_vec(add(add(matvec(p.readout.W_o1, s_next), matvec(p.readout.W_o2, e_prev)),
                                  add(matvec(p.readout.W_o3, fused), tensor_vec(p.readout.b_o))));
        Vec logits = add(matvec(p.readout.W_vocab, hidden), tensor_vec(p.readout.b_vocab));

        const Tensor<double>& got_logits = tape.value(res.logits);
        REQUIRE(got_logits.numel() == tv);
        for (size_t i = 0; i < tv; ++i) REQUIRE(got_logits[i] == Catch::Approx(logits[i]).margin(1e-12));
        const Tensor<double>& got_state = tape.value(res.state);
        for (size_t i = 0; i < n; ++i) REQUIRE(got_state[i] == Catch::Approx(s_next[i]).margin(1e-12));

        state = res.state;
        s = s_next;
    }
}

TEST_CASE("beam width one is greedy decoding") {
    Rng rng(405);
    for (int trial = 0; trial < 10; ++trial) {
        ModelConfig cfg = toy_config(1 + trial % 2, trial % 3 == 0);
        const size_t sv = 7, tv = 8;
        ModelParams<double> p = nsc::init_params<double>(cfg, sv, tv, 500 + trial);
        CombinationExample ex = random_example(rng, cfg, sv, tv);

        DecodeConfig dcfg;
        dcfg.beam = 1;
        dcfg.max_len = 12;
        dcfg.length_norm = trial % 2 == 0;
        Hypothesis beam = nsc::translate_example(p, ex, dcfg);

        Tape<double> tape;
        BoundModel<double> b = nsc::bind_model(tape, p, false);
        ModelScorer<double> scorer(tape, b, ex);
        Hypothesis greedy = nsc::greedy_decode(scorer, 12);

        REQUIRE(beam.tokens == greedy.tokens);
        REQUIRE(beam.complete == greedy.complete);
        REQUIRE(beam.score == Catch::Approx(greedy.score).margin(1e-12));
    }
}

TEST_CASE("wider beams never lose raw score") {
    // b=5 vs b=1 cumulative log-prob of the selected complete hypothesis,
    // over 50 toy inputs; EOS gets a small logit nudge so decodes finish.
    Rng rng(406);
    size_t completed = 0;
    for (int trial = 0; trial < 50; ++trial) {
        ModelConfig cfg = toy_config(1, false, 6, 4);
        const size_t tv = 8;
        ModelParams<double> p = nsc::init_params<double>(cfg, 0, tv, 600 + trial / 10);
        p.readout.b_vocab[nsc::kEos] += 1.0;
        CombinationExample ex = random_example(rng, cfg, 0, tv);

        DecodeConfig dcfg;
        dcfg.length_norm = false;
        dcfg.max_len = 24;
        dcfg.beam = 1;
        Hypothesis h1 = nsc::translate_example(p, ex, dcfg);
        dcfg.beam = 5;
        Hypothesis h5 = nsc::translate_example(p, ex, dcfg);

        REQUIRE(h1.complete);
        REQUIRE(h5.complete);
        completed += 1;
        REQUIRE(h5.score >= h1.score - 1e-9);
    }
    REQUIRE(completed == 50);
}

TEST_CASE("beam equals exhaustive enumeration on a three-token vocabulary") {
    // |V|=3, max length 4: b=81 can never prune, so it must return exactly
    // the argmax over all EOS-terminated sequences.
    for (int inst = 0; inst < 20; ++inst) {
        ModelConfig cfg = toy_config(1 + inst % 2, inst % 3 == 0);
        const size_t sv = 6, tv = 3;
        ModelParams<double> p = nsc::init_params<double>(cfg, sv, tv, 900 + inst);
        Rng rng(700 + inst);
        CombinationExample ex = random_example(rng, cfg, sv, tv);
        const bool lnorm = inst % 2 == 1;

        Tape<double> tape1;
        BoundModel<double> b1 = nsc::bind_model(tape1, p, false);
        ModelScorer<double> oracle_scorer(tape1, b1, ex);
        Hypothesis want = exhaustive_best(oracle_scorer, 4, lnorm);

        Tape<double> tape2;
        BoundModel<double> b2 = nsc::bind_model(tape2, p, false);
        ModelScorer<double> beam_scorer(tape2, b2, ex);
        DecodeConfig dcfg;
        dcfg.beam = 81;
        dcfg.max_len = 4;
        dcfg.length_norm = lnorm;
        Hypothesis got = nsc::beam_search(beam_scorer, dcfg);

        REQUIRE(got.complete);
        REQUIRE(got.tokens == want.tokens);
        REQUIRE(got.score == Catch::Approx(want.score).margin(1e-12));
    }
}

TEST_CASE("beam search bookkeeping") {
    ModelConfig cfg = toy_config(2, false, 5, 3);
    const size_t tv = 8;
    ModelParams<double> p = nsc::init_params<double>(cfg, 0, tv, 77);
    Rng rng(407);
    CombinationExample ex = random_example(rng, cfg, 0, tv);

    SECTION("rejects a zero beam and a zero length cap") {
        DecodeConfig dcfg;
        dcfg.beam = 0;
        REQUIRE_THROWS_AS(nsc::translate_example(p, ex, dcfg), nsc::ConfigError);
        Tape<double> tape;
        BoundModel<double> b = nsc::bind_model(tape, p, false);
        ModelScorer<double> scorer(tape, b, ex);
        DecodeConfig direct;
        direct.max_len = 0;
        REQUIRE_THROWS_AS(nsc::beam_search(scorer, direct), nsc::ConfigError);
        REQUIRE_THROWS_AS(nsc::greedy_decode(scorer, 0), nsc::ConfigError);
    }

    SECTION("length cap trips the truncation flag") {
        ModelParams<double> q = p;
        q.readout.b_vocab[nsc::kEos] = -50.0;  // EOS never competitive
        DecodeConfig dcfg;
        dcfg.beam = 3;
        dcfg.max_len = 6;
        Hypothesis h = nsc::translate_example(q, ex, dcfg);
        REQUIRE_FALSE(h.complete);
        REQUIRE(h.truncated);
        REQUIRE(h.tokens.size() == 6);
        for (TokenId t : h.tokens) REQUIRE(t != nsc::kEos);
    }

    SECTION("deterministic across repeated runs") {
        DecodeConfig dcfg;
        dcfg.beam = 4;
        Hypothesis a = nsc::translate_example(p, ex, dcfg);
        Hypothesis b = nsc::translate_example(p, ex, dcfg);
        REQUIRE(a.tokens == b.tokens);
        REQUIRE(a.score == b.score);
        REQUIRE(a.complete == b.complete);
    }

    SECTION("cumulative score is non-increasing along the hypothesis") {
        DecodeConfig dcfg;
        dcfg.beam = 4;
        dcfg.max_len = 16;
        Hypothesis h = nsc::translate_example(p, ex, dcfg);
        REQUIRE_FALSE(h.tokens.empty());

        Tape<double> tape;
        BoundModel<double> b = nsc::bind_model(tape, p, false);
        ModelScorer<double> scorer(tape, b, ex);
        VarId state = scorer.start();
        TokenId prev = nsc::kBos;
        double cum = 0;
        for (TokenId tok : h.tokens) {
            VarId next;
            Vec dist = scorer.step(state, prev, next);
            double lp = std::log(dist[size_t(tok)]);
            REQUIRE(lp <= 0.0);
            cum += lp;
            state = next;
            prev = tok;
        }
        REQUIRE(cum == Catch::Approx(h.score).margin(1e-9));
    }
}

TEST_CASE("ensemble decoding") {
    ModelConfig cfg = toy_config(2, true, 5, 3);
    const size_t sv = 7, tv = 8;
    ModelParams<double> p = nsc::init_params<double>(cfg, sv, tv, 31);
    Rng rng(408);
    CombinationExample ex = random_example(rng, cfg, sv, tv);
    DecodeConfig dcfg;
    dcfg.beam = 4;
    dcfg.max_len = 12;

    SECTION("ensemble of one equals the single model exactly") {
        Hypothesis single = nsc::translate_example(p, ex, dcfg);
        Hypothesis ens = nsc::ensemble_translate<double>({&p}, ex, dcfg);
        REQUIRE(ens.tokens == single.tokens);
        REQUIRE(ens.score == single.score);
    }

    SECTION("four identical members equal the single model token for token") {
        Hypothesis single = nsc::translate_example(p, ex, dcfg);
        Hypothesis ens = nsc::ensemble_translate<double>({&p, &p, &p, &p}, ex, dcfg);
        REQUIRE(ens.tokens == single.tokens);
        REQUIRE(ens.score == Catch::Approx(single.score).margin(1e-9));
    }

    SECTION("two members average their step distributions") {
        ModelParams<double> q = nsc::init_params<double>(cfg, sv, tv, 32);

        Tape<double> tp, tq, te1, te2;
        BoundModel<double> bp = nsc::bind_model(tp, p, false);
        BoundModel<double> bq = nsc::bind_model(tq, q, false);
        ModelScorer<double> sp(tp, bp, ex);
        ModelScorer<double> sq(tq, bq, ex);
        BoundModel<double> bp2 = nsc::bind_model(te1, p, false);
        BoundModel<double> bq2 = nsc::bind_model(te2, q, false);
        ModelScorer<double> ep(te1, bp2, ex);
        ModelScorer<double> eq(te2, bq2, ex);
        EnsembleScorer<double> ens({&ep, &eq});

        VarId a = sp.start(), b = sq.start();
        auto es = ens.start();
        TokenId path[4] = {nsc::kBos, TokenId(5), TokenId(3), TokenId(7)};
        for (TokenId prev : path) {
            VarId na, nb;
            Vec da = sp.step(a, prev, na);
            Vec db = sq.step(b, prev, nb);
            std::vector<VarId> ne;
            Vec de = ens.step(es, prev, ne);
            REQUIRE(de.size() == tv);
            for (size_t v = 0; v < tv; ++v) {
                REQUIRE(de[v] == Catch::Approx((da[v] + db[v]) / 2.0).margin(1e-6));
            }
            a = na;
            b = nb;
            es = ne;
        }
    }

    SECTION("vocabulary mismatch and empty ensembles are configuration errors") {
        ModelParams<double> other = nsc::init_params<double>(cfg, sv, tv + 1, 33);
        REQUIRE_THROWS_AS(nsc::ensemble_translate<double>({&p, &other}, ex, dcfg), nsc::ConfigError);
        REQUIRE_THROWS_AS(nsc::ensemble_translate<double>({}, ex, dcfg), nsc::ConfigError);
    }
}
