#pragma once

#include <string>
#include <vector>

#include "nsc/error.hpp"
#include "nsc/gru.hpp"
#include "nsc/params.hpp"
#include "nsc/tape.hpp"

namespace nsc {

// Word-level attention parameters: scores position i of one input as
// v_a . tanh(W_a s~ + U_a h_i).
template <typename Real>
struct WordAttentionParams {
    Tensor<Real> W_a;  // attn x n
    Tensor<Real> U_a;  // attn x 2n
    Tensor<Real> v_a;  // attn

    WordAttentionParams() = default;
    WordAttentionParams(size_t attn_dim, size_t decoder_dim)
        : W_a(Tensor<Real>::mat(attn_dim, decoder_dim)),
          U_a(Tensor<Real>::mat(attn_dim, 2 * decoder_dim)),
          v_a(Tensor<Real>::vec(attn_dim)) {}

    void register_into(ParamRegistry<Real>& reg, const std::string& prefix) {
        reg.push_back({prefix + ".W_a", &W_a});
        reg.push_back({prefix + ".U_a", &U_a});
        reg.push_back({prefix + ".v_a", &v_a});
    }
};

// System-level attention: the annotation contexts have dimension 2n while
// the decoder intermediate state has dimension n, so each context is taken
// through a learned n x 2n projection before the dot product.
template <typename Real>
struct SystemAttentionParams {
    Tensor<Real> P;  // n x 2n

    SystemAttentionParams() = default;
    explicit SystemAttentionParams(size_t hidden) : P(Tensor<Real>::mat(hidden, 2 * hidden)) {}

    void register_into(ParamRegistry<Real>& reg, const std::string& prefix) {
        reg.push_back({prefix + ".P", &P});
    }
};

struct WordAttentionVars {
    VarId W_a, U_a, v_a;
};

struct SystemAttentionVars {
    VarId P;
};

template <typename Real>
WordAttentionVars bind_word_attention(Tape<Real>& tape, const WordAttentionParams<Real>& p, bool grad) {
    return WordAttentionVars{tape.leaf(p.W_a, grad), tape.leaf(p.U_a, grad), tape.leaf(p.v_a, grad)};
}

template <typename Real>
SystemAttentionVars bind_system_attention(Tape<Real>& tape, const SystemAttentionParams<Real>& p, bool grad) {
    return SystemAttentionVars{tape.leaf(p.P, grad)};
}

struct WordAttentionResult {
    VarId context;  // 2n
    VarId weights;  // one weight per unmasked position, sums to 1
};

// U_a H can be shared across decoder steps; compute it once per sentence.
template <typename Real>
VarId precompute_projected_annotations(Tape<Real>& tape, const WordAttentionVars& p,
                                       const EncodedSequence& seq) {
    return tape.matmul(p.U_a, seq.matrix);
}

// One word-level attention read: weights over the unmasked positions of one
// input, and their weighted annotation sum. Masked positions never enter the
// score vector, so they are excluded from the softmax by construction.
template <typename Real>
WordAttentionResult word_attention(Tape<Real>& tape, VarId s_tilde, const EncodedSequence& seq,
                                   const WordAttentionVars& p, VarId projected_annotations) {
    if (seq.valid_len == 0) throw InputError("word attention over a fully masked input");
    VarId shifted = tape.col_add_vec(projected_annotations, tape.matmul(p.W_a, s_tilde));
    VarId scores = tape.matvec_t(tape.tanh_(shifted), p.v_a);
    VarId alpha = tape.softmax(scores);
    return WordAttentionResult{tape.matmul(seq.matrix, alpha), alpha};
}

struct SystemAttentionResult {
    VarId fused;    // 2n
    VarId weights;  // K
};

// System-level fusion: beta_k = softmax_k(s~ . (P c_k)), fused = sum beta_k c_k.
template <typename Real>
SystemAttentionResult system_attention(Tape<Real>& tape, VarId s_tilde, const std::vector<VarId>& contexts,
                                       const SystemAttentionVars& p) {
    if (contexts.empty()) throw InputError("system attention needs at least one context");
    std::vector<VarId> scores;
    scores.reserve(contexts.size());
    for (VarId c : contexts) {
        scores.push_back(tape.dot(s_tilde, tape.matmul(p.P, c)));
    }
    VarId beta = tape.softmax(tape.concat(scores, 0));
    VarId stacked = tape.concat(contexts, 1);  // 2n x K
    return SystemAttentionResult{tape.matmul(stacked, beta), beta};
}

// Everything one decoder step's attention produced, for inspection and for
// the attention contract checks.
struct AttentionOutput {
    std::vector<VarId> contexts;      // c_k per attended input
    std::vector<VarId> word_weights;  // alpha per attended input
    VarId system_weights = 0;         // beta
    VarId fused = 0;                  // c
};

}  // namespace nsc
