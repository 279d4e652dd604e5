#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "nsc/attention.hpp"
#include "nsc/config.hpp"
#include "nsc/error.hpp"
#include "nsc/gru.hpp"
#include "nsc/params.hpp"
#include "nsc/rng.hpp"
#include "nsc/tape.hpp"
#include "nsc/tensor.hpp"
#include "nsc/token.hpp"

namespace nsc {

// One source sentence, the K system hypotheses for it, and the reference.
struct CombinationExample {
    TokenSeq source;
    std::vector<TokenSeq> systems;
    TokenSeq reference;
};

template <typename Real>
struct EncoderParams {
    GruParams<Real> fwd, bwd;

    EncoderParams() = default;
    EncoderParams(size_t hidden, size_t input_dim) : fwd(hidden, input_dim), bwd(hidden, input_dim) {}

    void register_into(ParamRegistry<Real>& reg, const std::string& prefix) {
        fwd.register_into(reg, prefix + ".fwd");
        bwd.register_into(reg, prefix + ".bwd");
    }
};

// Deep-output readout: p = softmax(W_vocab tanh(W_o1 s + W_o2 e_prev + W_o3 c + b_o) + b_vocab).
// The readout width equals the embedding size.
template <typename Real>
struct ReadoutParams {
    Tensor<Real> W_o1;     // emb x n
    Tensor<Real> W_o2;     // emb x emb
    Tensor<Real> W_o3;     // emb x 2n
    Tensor<Real> b_o;      // emb
    Tensor<Real> W_vocab;  // |V| x emb
    Tensor<Real> b_vocab;  // |V|

    ReadoutParams() = default;
    ReadoutParams(size_t hidden, size_t emb, size_t vocab)
        : W_o1(Tensor<Real>::mat(emb, hidden)),
          W_o2(Tensor<Real>::mat(emb, emb)),
          W_o3(Tensor<Real>::mat(emb, 2 * hidden)),
          b_o(Tensor<Real>::vec(emb)),
          W_vocab(Tensor<Real>::mat(vocab, emb)),
          b_vocab(Tensor<Real>::vec(vocab)) {}

    void register_into(ParamRegistry<Real>& reg, const std::string& prefix) {
        reg.push_back({prefix + ".W_o1", &W_o1});
        reg.push_back({prefix + ".W_o2", &W_o2});
        reg.push_back({prefix + ".W_o3", &W_o3});
        reg.push_back({prefix + ".b_o", &b_o});
        reg.push_back({prefix + ".W_vocab", &W_vocab});
        reg.push_back({prefix + ".b_vocab", &b_vocab});
    }
};

// All learned tensors of one combination model. The attended inputs are
// ordered source first (when use_source), then systems 1..K; system inputs
// read the target embedding table, which is shared with the decoder.
template <typename Real>
struct ModelParams {
    ModelConfig cfg;
    size_t src_vocab_size = 0;
    size_t tgt_vocab_size = 0;

    Tensor<Real> src_emb;                             // |Vs| x emb, use_source only
    Tensor<Real> tgt_emb;                             // |Vt| x emb
    EncoderParams<Real> src_enc;                      // use_source only
    std::vector<EncoderParams<Real>> sys_enc;         // K, or 1 when shared
    WordAttentionParams<Real> src_attn;               // use_source only
    std::vector<WordAttentionParams<Real>> sys_attn;  // K, or 1 when shared
    SystemAttentionParams<Real> fuse;
    GruParams<Real> dec1;  // consumes emb(y_prev)
    GruParams<Real> dec2;  // consumes the fused context
    ReadoutParams<Real> readout;
    Tensor<Real> W_init;  // n x 2n

    ModelParams() = default;

    ModelParams(const ModelConfig& c, size_t src_vocab, size_t tgt_vocab) : cfg(c) {
        cfg.validate();
        if (tgt_vocab < 1) throw ConfigError("target vocabulary size must be at least 1");
        if (cfg.use_source && src_vocab < 1) {
            throw ConfigError("source vocabulary size must be at least 1 when use_source is on");
        }
        src_vocab_size = cfg.use_source ? src_vocab : 0;
        tgt_vocab_size = tgt_vocab;

        const size_t n = cfg.hidden, emb = cfg.embedding;
        tgt_emb = Tensor<Real>::mat(tgt_vocab_size, emb);
        if (cfg.use_source) {
            src_emb = Tensor<Real>::mat(src_vocab_size, emb);
            src_enc = EncoderParams<Real>(n, emb);
            src_attn = WordAttentionParams<Real>(n, n);
        }
        sys_enc.assign(cfg.share_system_encoders ? 1 : cfg.num_systems, EncoderParams<Real>(n, emb));
        sys_attn.assign(cfg.share_word_attention ? 1 : cfg.num_systems, WordAttentionParams<Real>(n, n));
        fuse = SystemAttentionParams<Real>(n);
        dec1 = GruParams<Real>(n, emb);
        dec2 = GruParams<Real>(n, 2 * n);
        readout = ReadoutParams<Real>(n, emb, tgt_vocab_size);
        W_init = Tensor<Real>::mat(n, 2 * n);
    }

    // Canonical ordering; also the checkpoint layout.
    ParamRegistry<Real> registry() {
        ParamRegistry<Real> reg;
        if (cfg.use_source) reg.push_back({"src_emb", &src_emb});
        reg.push_back({"tgt_emb", &tgt_emb});
        if (cfg.use_source) src_enc.register_into(reg, "src.enc");
        for (size_t i = 0; i < sys_enc.size(); ++i) {
            sys_enc[i].register_into(reg, sys_enc.size() == 1 && cfg.share_system_encoders
                                              ? "sys.enc"
                                              : "sys" + std::to_string(i + 1) + ".enc");
        }
        if (cfg.use_source) src_attn.register_into(reg, "src.attn");
        for (size_t i = 0; i < sys_attn.size(); ++i) {
            sys_attn[i].register_into(reg, sys_attn.size() == 1 && cfg.share_word_attention
                                               ? "sys.attn"
                                               : "sys" + std::to_string(i + 1) + ".attn");
        }
        fuse.register_into(reg, "fuse");
        dec1.register_into(reg, "dec.gru1");
        dec2.register_into(reg, "dec.gru2");
        readout.register_into(reg, "out");
        reg.push_back({"init.W", &W_init});
        return reg;
    }
};

namespace detail {

// Modified Gram-Schmidt in double precision; rows drawn uniform, redrawn on
// (vanishingly unlikely) degeneracy.
template <typename Real>
void orthogonalize(Tensor<Real>& m, Rng& rng) {
    const size_t n = m.rows();
    std::vector<std::vector<double>> rows(n, std::vector<double>(n));
    for (size_t i = 0; i < n; ++i) {
        for (;;) {
            for (size_t j = 0; j < n; ++j) rows[i][j] = rng.uniform(-1.0, 1.0);
            for (size_t k = 0; k < i; ++k) {
                double dot = 0;
                for (size_t j = 0; j < n; ++j) dot += rows[i][j] * rows[k][j];
                for (size_t j = 0; j < n; ++j) rows[i][j] -= dot * rows[k][j];
            }
            double norm = 0;
            for (size_t j = 0; j < n; ++j) norm += rows[i][j] * rows[i][j];
            norm = std::sqrt(norm);
            if (norm > 1e-8) {
                for (size_t j = 0; j < n; ++j) rows[i][j] /= norm;
                break;
            }
        }
    }
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) m.at(i, j) = Real(rows[i][j]);
    }
}

inline bool is_bias_name(const std::string& name) {
    auto dot = name.rfind('.');
    std::string last = dot == std::string::npos ? name : name.substr(dot + 1);
    return last.rfind("b_", 0) == 0;
}

inline bool is_recurrent_name(const std::string& name) {
    for (const char* suffix : {".U_z", ".U_r", ".U_h"}) {
        std::string s(suffix);
        if (name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0) return true;
    }
    return false;
}

}  // namespace detail

// Uniform(-0.08, 0.08) weights, orthonormal recurrent matrices, zero biases;
// one named substream of the run seed feeds everything in registry order.
template <typename Real>
ModelParams<Real> init_params(const ModelConfig& cfg, size_t src_vocab, size_t tgt_vocab, uint64_t seed) {
    ModelParams<Real> p(cfg, src_vocab, tgt_vocab);
    Rng rng = substream(seed, "init");
    for (auto& entry : p.registry()) {
        Tensor<Real>& t = *entry.tensor;
        if (detail::is_bias_name(entry.name)) {
            t.fill(Real(0));
        } else if (detail::is_recurrent_name(entry.name)) {
            detail::orthogonalize(t, rng);
        } else {
            for (size_t i = 0; i < t.numel(); ++i) t[i] = Real(rng.uniform(-0.08, 0.08));
        }
    }
    return p;
}

struct EncoderVars {
    GruVars fwd, bwd;
};

// Graph-side handles for one model on one tape. Shared parameter sets bind
// once and the same VarIds appear at every use site. `leaves` holds one
// VarId per registry entry, in registry order — the contract the optimizer
// and gradient checker rely on.
template <typename Real>
struct BoundModel {
    const ModelParams<Real>* params = nullptr;
    std::vector<VarId> leaves;
    VarId src_emb = 0, tgt_emb = 0;
    EncoderVars src_enc{};
    std::vector<EncoderVars> sys_enc;         // always K entries
    WordAttentionVars src_attn{};
    std::vector<WordAttentionVars> sys_attn;  // always K entries
    SystemAttentionVars fuse{};
    GruVars dec1{}, dec2{};
    VarId W_o1 = 0, W_o2 = 0, W_o3 = 0, b_o = 0, W_vocab = 0, b_vocab = 0;
    VarId W_init = 0;

    size_t num_inputs() const { return params->cfg.num_inputs(); }
    size_t vocab() const { return params->tgt_vocab_size; }
};

template <typename Real>
BoundModel<Real> bind_model(Tape<Real>& tape, const ModelParams<Real>& p, bool grad) {
    BoundModel<Real> b;
    b.params = &p;
    const ModelConfig& cfg = p.cfg;

    // one leaf per registry entry, bound in registry order
    std::unordered_map<std::string, VarId> by_name;
    for (const auto& entry : const_cast<ModelParams<Real>&>(p).registry()) {
        VarId id = tape.leaf(*entry.tensor, grad);
        b.leaves.push_back(id);
        by_name.emplace(entry.name, id);
    }
    auto var = [&](const std::string& name) { return by_name.at(name); };
    auto gru_vars = [&](const std::string& prefix) {
        return GruVars{var(prefix + ".W_z"), var(prefix + ".W_r"), var(prefix + ".W_h"),
                       var(prefix + ".U_z"), var(prefix + ".U_r"), var(prefix + ".U_h"),
                       var(prefix + ".b_z"), var(prefix + ".b_r"), var(prefix + ".b_h")};
    };
    auto attn_vars = [&](const std::string& prefix) {
        return WordAttentionVars{var(prefix + ".W_a"), var(prefix + ".U_a"), var(prefix + ".v_a")};
    };

    if (cfg.use_source) {
        b.src_emb = var("src_emb");
        b.src_enc = EncoderVars{gru_vars("src.enc.fwd"), gru_vars("src.enc.bwd")};
        b.src_attn = attn_vars("src.attn");
    }
    b.tgt_emb = var("tgt_emb");
    for (size_t k = 0; k < cfg.num_systems; ++k) {
        std::string enc_prefix = cfg.share_system_encoders ? "sys.enc" : "sys" + std::to_string(k + 1) + ".enc";
        std::string attn_prefix = cfg.share_word_attention ? "sys.attn" : "sys" + std::to_string(k + 1) + ".attn";
        b.sys_enc.push_back(EncoderVars{gru_vars(enc_prefix + ".fwd"), gru_vars(enc_prefix + ".bwd")});
        b.sys_attn.push_back(attn_vars(attn_prefix));
    }
    b.fuse = SystemAttentionVars{var("fuse.P")};
    b.dec1 = gru_vars("dec.gru1");
    b.dec2 = gru_vars("dec.gru2");
    b.W_o1 = var("out.W_o1");
    b.W_o2 = var("out.W_o2");
    b.W_o3 = var("out.W_o3");
    b.b_o = var("out.b_o");
    b.W_vocab = var("out.W_vocab");
    b.b_vocab = var("out.b_vocab");
    b.W_init = var("init.W");
    return b;
}

// Gradients of every registry entry after a backward pass, registry order.
template <typename Real>
std::vector<Tensor<Real>> collect_grads(const Tape<Real>& tape, const BoundModel<Real>& b) {
    std::vector<Tensor<Real>> out;
    out.reserve(b.leaves.size());
    for (VarId id : b.leaves) out.push_back(tape.grad(id));
    return out;
}

// The encoded, attention-ready form of one example's inputs.
struct EncodedInputs {
    std::vector<EncodedSequence> seqs;  // source first when present, then systems
    std::vector<VarId> projected;       // U_a H per input
    size_t longest_input = 0;
};

template <typename Real>
EncodedInputs encode_inputs(Tape<Real>& tape, const BoundModel<Real>& b, const CombinationExample& ex) {
    const ModelConfig& cfg = b.params->cfg;
    if (ex.systems.size() != cfg.num_systems) {
        throw DataError("example carries " + std::to_string(ex.systems.size()) +
                        " system outputs, configuration expects " + std::to_string(cfg.num_systems));
    }
    EncodedInputs enc;
    if (cfg.use_source) {
        enc.seqs.push_back(encode(tape, ex.source, b.src_emb, b.src_enc.fwd, b.src_enc.bwd));
        enc.projected.push_back(precompute_projected_annotations(tape, b.src_attn, enc.seqs.back()));
        enc.longest_input = ex.source.size();
    }
    for (size_t k = 0; k < cfg.num_systems; ++k) {
        enc.seqs.push_back(encode(tape, ex.systems[k], b.tgt_emb, b.sys_enc[k].fwd, b.sys_enc[k].bwd));
        enc.projected.push_back(precompute_projected_annotations(tape, b.sys_attn[k], enc.seqs.back()));
        enc.longest_input = std::max(enc.longest_input, ex.systems[k].size());
    }
    return enc;
}

// s_0 = tanh(W_init . mean annotation of the primary input) — the source when
// present, otherwise the first system.
template <typename Real>
VarId init_state(Tape<Real>& tape, const BoundModel<Real>& b, const EncodedInputs& enc) {
    if (enc.seqs.empty()) throw InputError("init_state needs at least one encoded input");
    return tape.tanh_(tape.matmul(b.W_init, tape.mean_cols(enc.seqs[0].matrix)));
}

template <typename Real>
struct StepResult {
    VarId logits = 0;  // |V|, pre-softmax
    VarId state = 0;   // n
    AttentionOutput attn;
};

// One conditional-GRU decoder step: intermediate state from the previous
// token, two-level attention on it, second transition on the fused context,
// then the deep-output readout.
template <typename Real>
StepResult<Real> decoder_step(Tape<Real>& tape, const BoundModel<Real>& b, const EncodedInputs& enc,
                              VarId s_prev, TokenId y_prev) {
    if (y_prev < 0 || size_t(y_prev) >= b.vocab()) {
        throw VocabError("previous token id " + std::to_string(y_prev) + " outside target vocabulary of " +
                         std::to_string(b.vocab()));
    }
    const ModelConfig& cfg = b.params->cfg;
    VarId e_prev = tape.row(b.tgt_emb, size_t(y_prev));
    VarId s_tilde = gru_step(tape, b.dec1, e_prev, s_prev);

    StepResult<Real> out;
    const size_t offset = cfg.use_source ? 1 : 0;
    for (size_t i = 0; i < enc.seqs.size(); ++i) {
        const WordAttentionVars& attn =
            i < offset ? b.src_attn : b.sys_attn[i - offset];
        auto word = word_attention(tape, s_tilde, enc.seqs[i], attn, enc.projected[i]);
        out.attn.contexts.push_back(word.context);
        out.attn.word_weights.push_back(word.weights);
    }
    auto fused = system_attention(tape, s_tilde, out.attn.contexts, b.fuse);
    out.attn.system_weights = fused.weights;
    out.attn.fused = fused.fused;

    out.state = gru_step(tape, b.dec2, fused.fused, s_tilde);
    VarId pre = tape.add(tape.add(tape.matmul(b.W_o1, out.state), tape.matmul(b.W_o2, e_prev)),
                         tape.add(tape.matmul(b.W_o3, fused.fused), b.b_o));
    out.logits = tape.add(tape.matmul(b.W_vocab, tape.tanh_(pre)), b.b_vocab);
    return out;
}

// Reference sans padding; PAD is only legal as a trailing run.
inline size_t reference_length(const TokenSeq& reference) {
    size_t len = reference.size();
    while (len > 0 && reference[len - 1] == kPad) --len;
    for (size_t i = 0; i < len; ++i) {
        if (reference[i] == kPad) throw DataError("reference contains PAD before position " + std::to_string(len));
    }
    if (len == 0) throw DataError("reference is empty");
    return len;
}

// Teacher-forced negative log-likelihood of one example, summed over the
// BOS-shifted target positions (reference tokens plus the closing EOS).
template <typename Real>
VarId forward_loss(Tape<Real>& tape, const BoundModel<Real>& b, const CombinationExample& ex) {
    const size_t len = reference_length(ex.reference);
    for (size_t i = 0; i < len; ++i) {
        if (ex.reference[i] < 0 || size_t(ex.reference[i]) >= b.vocab()) {
            throw VocabError("reference token id " + std::to_string(ex.reference[i]) +
                             " outside target vocabulary of " + std::to_string(b.vocab()));
        }
    }
    EncodedInputs enc = encode_inputs(tape, b, ex);
    VarId s = init_state(tape, b, enc);
    TokenId prev = kBos;
    VarId total = 0;
    bool first = true;
    for (size_t j = 0; j <= len; ++j) {
        TokenId target = j < len ? ex.reference[j] : kEos;
        auto step = decoder_step(tape, b, enc, s, prev);
        VarId nll = tape.pick(tape.log_softmax(step.logits), size_t(target));
        total = first ? nll : tape.add(total, nll);
        first = false;
        s = step.state;
        prev = target;
    }
    return tape.scale(total, Real(-1));
}

// Sum of per-sentence losses; one graph per batch.
template <typename Real>
VarId batch_loss(Tape<Real>& tape, const BoundModel<Real>& b, const std::vector<CombinationExample>& batch) {
    if (batch.empty()) throw InputError("batch_loss over an empty batch");
    VarId total = forward_loss(tape, b, batch[0]);
    for (size_t i = 1; i < batch.size(); ++i) total = tape.add(total, forward_loss(tape, b, batch[i]));
    return total;
}

// Target positions scored by forward_loss (reference tokens + EOS).
inline size_t target_positions(const CombinationExample& ex) { return reference_length(ex.reference) + 1; }

}  // namespace nsc
