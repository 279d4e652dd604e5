#pragma once

#include <string>
#include <vector>

#include "nsc/error.hpp"
#include "nsc/params.hpp"
#include "nsc/tape.hpp"
#include "nsc/tensor.hpp"
#include "nsc/token.hpp"

namespace nsc {

// Gate parameters of one GRU cell. W_* map the input, U_* the previous
// hidden state, b_* are biases.
template <typename Real>
struct GruParams {
    Tensor<Real> W_z, W_r, W_h;  // n x d_in
    Tensor<Real> U_z, U_r, U_h;  // n x n
    Tensor<Real> b_z, b_r, b_h;  // n

    GruParams() = default;
    GruParams(size_t hidden, size_t input_dim)
        : W_z(Tensor<Real>::mat(hidden, input_dim)),
          W_r(Tensor<Real>::mat(hidden, input_dim)),
          W_h(Tensor<Real>::mat(hidden, input_dim)),
          U_z(Tensor<Real>::mat(hidden, hidden)),
          U_r(Tensor<Real>::mat(hidden, hidden)),
          U_h(Tensor<Real>::mat(hidden, hidden)),
          b_z(Tensor<Real>::vec(hidden)),
          b_r(Tensor<Real>::vec(hidden)),
          b_h(Tensor<Real>::vec(hidden)) {}

    size_t hidden() const { return W_z.rows(); }
    size_t input_dim() const { return W_z.cols(); }

    void register_into(ParamRegistry<Real>& reg, const std::string& prefix) {
        reg.push_back({prefix + ".W_z", &W_z});
        reg.push_back({prefix + ".W_r", &W_r});
        reg.push_back({prefix + ".W_h", &W_h});
        reg.push_back({prefix + ".U_z", &U_z});
        reg.push_back({prefix + ".U_r", &U_r});
        reg.push_back({prefix + ".U_h", &U_h});
        reg.push_back({prefix + ".b_z", &b_z});
        reg.push_back({prefix + ".b_r", &b_r});
        reg.push_back({prefix + ".b_h", &b_h});
    }
};

// Graph-side handles of one GRU cell's parameters.
struct GruVars {
    VarId W_z, W_r, W_h, U_z, U_r, U_h, b_z, b_r, b_h;
};

template <typename Real>
GruVars bind_gru(Tape<Real>& tape, const GruParams<Real>& p, bool requires_grad) {
    return GruVars{tape.leaf(p.W_z, requires_grad), tape.leaf(p.W_r, requires_grad),
                   tape.leaf(p.W_h, requires_grad), tape.leaf(p.U_z, requires_grad),
                   tape.leaf(p.U_r, requires_grad), tape.leaf(p.U_h, requires_grad),
                   tape.leaf(p.b_z, requires_grad), tape.leaf(p.b_r, requires_grad),
                   tape.leaf(p.b_h, requires_grad)};
}

// One GRU transition:
//   z   = sigmoid(W_z x + U_z h + b_z)
//   r   = sigmoid(W_r x + U_r h + b_r)
//   cand = tanh(W_h x + U_h (r . h) + b_h)
//   h'  = (1 - z) . h + z . cand
// The update gate interpolates toward the candidate (z = 0 keeps the old
// state). Checkpoints record this convention under `gru_convention`.
template <typename Real>
VarId gru_step(Tape<Real>& tape, const GruVars& p, VarId x, VarId h_prev) {
    auto gate_pre = [&](VarId W, VarId U, VarId b, VarId hin) {
        return tape.add(tape.add(tape.matmul(W, x), tape.matmul(U, hin)), b);
    };
    VarId z = tape.sigmoid(gate_pre(p.W_z, p.U_z, p.b_z, h_prev));
    VarId r = tape.sigmoid(gate_pre(p.W_r, p.U_r, p.b_r, h_prev));
    VarId masked_prev = tape.mul(r, h_prev);
    VarId cand = tape.tanh_(gate_pre(p.W_h, p.U_h, p.b_h, masked_prev));
    return tape.lerp(h_prev, cand, z);
}

// Bidirectional encoding of one (possibly right-padded) token sequence.
// Annotation i concatenates the forward state after reading token i and the
// backward state after reading tokens m-1..i.
struct EncodedSequence {
    std::vector<VarId> annotations;  // one per valid position, each of dim 2n
    VarId matrix = 0;                // 2n x valid_len, annotations as columns
    std::vector<uint8_t> mask;       // validity bit per padded position
    size_t valid_len = 0;

    size_t padded_len() const { return mask.size(); }
};

template <typename Real>
EncodedSequence encode(Tape<Real>& tape, const TokenSeq& tokens, VarId emb_table, const GruVars& fwd,
                       const GruVars& bwd, size_t valid_len = SIZE_MAX) {
    const size_t m = tokens.size();
    if (valid_len == SIZE_MAX) valid_len = m;
    if (m == 0 || valid_len == 0) throw InputError("encode requires a nonempty token sequence");
    if (valid_len > m) throw InputError("valid length exceeds sequence length");

    const size_t vocab_rows = tape.value(emb_table).rows();
    for (size_t i = 0; i < valid_len; ++i) {
        if (tokens[i] < 0 || static_cast<size_t>(tokens[i]) >= vocab_rows) {
            throw VocabError("token id " + std::to_string(tokens[i]) + " outside embedding table of " +
                             std::to_string(vocab_rows) + " rows");
        }
    }

    const size_t hidden = tape.value(fwd.b_z).numel();
    std::vector<VarId> embedded(valid_len);
    for (size_t i = 0; i < valid_len; ++i) {
        embedded[i] = tape.row(emb_table, static_cast<size_t>(tokens[i]));
    }

    // Masked steps (pad positions) carry the state through unchanged, so a
    // right-padded sequence encodes identically to its unpadded form.
    std::vector<VarId> fwd_states(valid_len);
    VarId h = tape.constant(Tensor<Real>::vec(hidden));
    for (size_t i = 0; i < m; ++i) {
        if (i < valid_len) {
            h = gru_step(tape, fwd, embedded[i], h);
            fwd_states[i] = h;
        }
    }
    std::vector<VarId> bwd_states(valid_len);
    h = tape.constant(Tensor<Real>::vec(hidden));
    for (size_t i = m; i-- > 0;) {
        if (i < valid_len) {
            h = gru_step(tape, bwd, embedded[i], h);
            bwd_states[i] = h;
        }
    }

    EncodedSequence out;
    out.valid_len = valid_len;
    out.mask.assign(m, 0);
    for (size_t i = 0; i < valid_len; ++i) out.mask[i] = 1;
    out.annotations.resize(valid_len);
    for (size_t i = 0; i < valid_len; ++i) {
        out.annotations[i] = tape.concat({fwd_states[i], bwd_states[i]}, 0);
    }
    out.matrix = tape.concat(out.annotations, 1);
    return out;
}

}  // namespace nsc
