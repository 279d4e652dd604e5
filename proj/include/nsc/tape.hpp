#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nsc/error.hpp"
#include "nsc/tensor.hpp"

namespace nsc {

using VarId = uint32_t;

enum class Op : uint8_t {
    Leaf,
    MatMul,    // (m x k)(k x n) -> m x n ; (m x k)(k) -> m
    MatVecT,   // y_j = sum_i v_i M_ij  (row-vector times matrix)
    Dot,       // (n)(n) -> scalar
    Add,
    Sub,
    Mul,       // elementwise
    Lerp,      // (1 - t) * a + t * b, elementwise
    Scale,     // constant * x
    Tanh,
    Sigmoid,
    Softmax,     // vector, max-subtracted
    LogSoftmax,  // vector, max-subtracted
    Concat,      // axis 0: stack vectors; axis 1: columns side by side
    Row,         // table[i, :]
    ColAddVec,   // M + v broadcast over columns
    MeanCols,    // mean over columns -> vector
    SumVec,      // sum of entries -> scalar
    Pick,        // v[i] -> scalar
};

// Reverse-mode graph over the op set above. Creation order is a topological
// order, so backward() is a single reverse sweep. Values are immutable once a
// node is created; a Tape is single-threaded, independent Tapes may run
// concurrently.
template <typename Real>
class Tape {
public:
    // When set, the Tanh backward rule is deliberately wrong. Used by the
    // gradient-check fault-injection path to prove the checker can fail.
    bool inject_tanh_fault = false;

    size_t size() const { return nodes_.size(); }

    VarId leaf(Tensor<Real> value, bool requires_grad) {
        Node n;
        n.op = Op::Leaf;
        n.value = std::move(value);
        n.needs_grad = requires_grad;
        return push(std::move(n));
    }

    VarId constant(Tensor<Real> value) { return leaf(std::move(value), false); }
    VarId constant_scalar(Real v) { return constant(Tensor<Real>::scalar(v)); }

    const Tensor<Real>& value(VarId id) const { return nodes_[id].value; }
    const Tensor<Real>& grad(VarId id) const {
        if (!nodes_[id].needs_grad) throw ContractError("gradient requested for a non-grad node");
        return nodes_[id].grad;
    }

    VarId matmul(VarId a, VarId b) {
        const Tensor<Real>& A = val(a);
        const Tensor<Real>& B = val(b);
        if (A.rank() != 2) throw DimensionError("matmul lhs must be a matrix, got " + A.shape_str());
        if (A.cols() != B.rows()) {
            throw DimensionError("matmul inner dimensions disagree: " + A.shape_str() + " vs " + B.shape_str());
        }
        Tensor<Real> out = B.rank() == 1 ? Tensor<Real>::vec(A.rows()) : Tensor<Real>::mat(A.rows(), B.cols());
        matmul_kernel(A, B, out);
        return push_binary(Op::MatMul, a, b, std::move(out));
    }

    VarId matvec_t(VarId m, VarId v) {
        const Tensor<Real>& M = val(m);
        const Tensor<Real>& V = val(v);
        if (M.rank() != 2 || V.rank() != 1 || M.rows() != V.numel()) {
            throw DimensionError("matvec_t expects [r x c] and [r], got " + M.shape_str() + " and " + V.shape_str());
        }
        Tensor<Real> out = Tensor<Real>::vec(M.cols());
        for (size_t i = 0; i < M.rows(); ++i) {
            Real vi = V[i];
            const Real* row = M.data() + i * M.cols();
            for (size_t j = 0; j < M.cols(); ++j) out[j] += vi * row[j];
        }
        return push_binary(Op::MatVecT, m, v, std::move(out));
    }

    VarId dot(VarId a, VarId b) {
        const Tensor<Real>& A = val(a);
        const Tensor<Real>& B = val(b);
        if (A.rank() != 1 || !A.same_shape(B)) {
            throw DimensionError("dot expects equal-length vectors, got " + A.shape_str() + " and " + B.shape_str());
        }
        Real s = 0;
        for (size_t i = 0; i < A.numel(); ++i) s += A[i] * B[i];
        return push_binary(Op::Dot, a, b, Tensor<Real>::scalar(s));
    }

    VarId add(VarId a, VarId b) { return ew_binary(Op::Add, a, b); }
    VarId sub(VarId a, VarId b) { return ew_binary(Op::Sub, a, b); }
    VarId mul(VarId a, VarId b) { return ew_binary(Op::Mul, a, b); }

    // (1 - t) * a + t * b; the GRU state interpolation.
    VarId lerp(VarId a, VarId b, VarId t) {
        const Tensor<Real>& A = val(a);
        if (!A.same_shape(val(b)) || !A.same_shape(val(t))) {
            throw DimensionError("lerp operands must share shape: " + A.shape_str() + ", " + val(b).shape_str() +
                                 ", " + val(t).shape_str());
        }
        Tensor<Real> out(A.shape());
        for (size_t i = 0; i < A.numel(); ++i) {
            out[i] = (Real(1) - val(t)[i]) * A[i] + val(t)[i] * val(b)[i];
        }
        Node n;
        n.op = Op::Lerp;
        n.a = a;
        n.b = b;
        n.c = t;
        n.value = std::move(out);
        n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad || nodes_[t].needs_grad;
        return push(std::move(n));
    }

    VarId scale(VarId x, Real c) {
        Tensor<Real> out = val(x);
        for (size_t i = 0; i < out.numel(); ++i) out[i] *= c;
        Node n;
        n.op = Op::Scale;
        n.a = x;
        n.scalar = c;
        n.value = std::move(out);
        n.needs_grad = nodes_[x].needs_grad;
        return push(std::move(n));
    }

    VarId tanh_(VarId x) {
        Tensor<Real> out = val(x);
        for (size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
        return push_unary(Op::Tanh, x, std::move(out));
    }

    VarId sigmoid(VarId x) {
        Tensor<Real> out = val(x);
        for (size_t i = 0; i < out.numel(); ++i) {
            // evaluate through exp(-|z|) so neither branch overflows
            Real z = out[i];
            if (z >= 0) {
                Real e = std::exp(-z);
                out[i] = Real(1) / (Real(1) + e);
            } else {
                Real e = std::exp(z);
                out[i] = e / (Real(1) + e);
            }
        }
        return push_unary(Op::Sigmoid, x, std::move(out));
    }

    VarId softmax(VarId x) {
        Tensor<Real> out = softmax_value(val(x));
        return push_unary(Op::Softmax, x, std::move(out));
    }

    VarId log_softmax(VarId x) {
        const Tensor<Real>& v = val(x);
        if (v.rank() != 1) throw DimensionError("log_softmax expects a vector, got " + v.shape_str());
        Tensor<Real> out = v;
        Real mx = out[0];
        for (size_t i = 1; i < out.numel(); ++i) mx = std::max(mx, out[i]);
        Real sum = 0;
        for (size_t i = 0; i < out.numel(); ++i) sum += std::exp(out[i] - mx);
        Real lse = mx + std::log(sum);
        for (size_t i = 0; i < out.numel(); ++i) out[i] -= lse;
        return push_unary(Op::LogSoftmax, x, std::move(out));
    }

    // axis 0: vectors end to end; axis 1: equal-height columns side by side
    // (vector inputs count as single columns).
    VarId concat(const std::vector<VarId>& parts, int axis) {
        if (parts.empty()) throw DimensionError("concat of zero tensors");
        Tensor<Real> out;
        if (axis == 0) {
            size_t total = 0;
            for (VarId p : parts) {
                if (val(p).rank() != 1) throw DimensionError("concat axis 0 expects vectors");
                total += val(p).numel();
            }
            out = Tensor<Real>::vec(total);
            size_t off = 0;
            for (VarId p : parts) {
                const Tensor<Real>& t = val(p);
                for (size_t i = 0; i < t.numel(); ++i) out[off + i] = t[i];
                off += t.numel();
            }
        } else if (axis == 1) {
            size_t rows = val(parts[0]).rows();
            size_t total_cols = 0;
            for (VarId p : parts) {
                if (val(p).rows() != rows) {
                    throw DimensionError("concat axis 1 needs equal heights: " + val(parts[0]).shape_str() +
                                         " vs " + val(p).shape_str());
                }
                total_cols += val(p).cols();
            }
            out = Tensor<Real>::mat(rows, total_cols);
            size_t col_off = 0;
            for (VarId p : parts) {
                const Tensor<Real>& t = val(p);
                for (size_t r = 0; r < rows; ++r) {
                    for (size_t c = 0; c < t.cols(); ++c) out.at(r, col_off + c) = t.rank() == 1 ? t[r] : t.at(r, c);
                }
                col_off += t.cols();
            }
        } else {
            throw DimensionError("concat axis must be 0 or 1");
        }
        Node n;
        n.op = Op::Concat;
        n.aux = axis;
        n.extra = parts;
        n.value = std::move(out);
        for (VarId p : parts) n.needs_grad = n.needs_grad || nodes_[p].needs_grad;
        return push(std::move(n));
    }

    VarId row(VarId table, size_t index) {
        const Tensor<Real>& T = val(table);
        if (T.rank() != 2) throw DimensionError("row lookup expects a matrix, got " + T.shape_str());
        if (index >= T.rows()) {
            throw DimensionError("row index " + std::to_string(index) + " out of range for " + T.shape_str());
        }
        Tensor<Real> out = Tensor<Real>::vec(T.cols());
        for (size_t j = 0; j < T.cols(); ++j) out[j] = T.at(index, j);
        Node n;
        n.op = Op::Row;
        n.a = table;
        n.aux = static_cast<int64_t>(index);
        n.value = std::move(out);
        n.needs_grad = nodes_[table].needs_grad;
        return push(std::move(n));
    }

    VarId col_add_vec(VarId m, VarId v) {
        const Tensor<Real>& M = val(m);
        const Tensor<Real>& V = val(v);
        if (M.rank() != 2 || V.rank() != 1 || M.rows() != V.numel()) {
            throw DimensionError("col_add_vec expects [r x c] and [r], got " + M.shape_str() + " and " +
                                 V.shape_str());
        }
        Tensor<Real> out = M;
        for (size_t i = 0; i < M.rows(); ++i) {
            for (size_t j = 0; j < M.cols(); ++j) out.at(i, j) += V[i];
        }
        return push_binary(Op::ColAddVec, m, v, std::move(out));
    }

    VarId mean_cols(VarId m) {
        const Tensor<Real>& M = val(m);
        if (M.rank() != 2) throw DimensionError("mean_cols expects a matrix, got " + M.shape_str());
        Tensor<Real> out = Tensor<Real>::vec(M.rows());
        for (size_t i = 0; i < M.rows(); ++i) {
            Real s = 0;
            for (size_t j = 0; j < M.cols(); ++j) s += M.at(i, j);
            out[i] = s / Real(M.cols());
        }
        return push_unary(Op::MeanCols, m, std::move(out));
    }

    VarId sum(VarId x) {
        Real s = 0;
        for (size_t i = 0; i < val(x).numel(); ++i) s += val(x)[i];
        return push_unary(Op::SumVec, x, Tensor<Real>::scalar(s));
    }

    VarId pick(VarId v, size_t index) {
        const Tensor<Real>& V = val(v);
        if (V.rank() != 1 || index >= V.numel()) {
            throw DimensionError("pick index " + std::to_string(index) + " out of range for " + V.shape_str());
        }
        Node n;
        n.op = Op::Pick;
        n.a = v;
        n.aux = static_cast<int64_t>(index);
        n.value = Tensor<Real>::scalar(V[index]);
        n.needs_grad = nodes_[v].needs_grad;
        return push(std::move(n));
    }

    // d(loss)/d(node) for every grad-tracked node, reverse topological sweep.
    // Leaves that do not reach the loss keep exact zero gradients.
    void backward(VarId loss) {
        if (val(loss).numel() != 1) {
            throw ContractError("backward requires a scalar loss, got " + val(loss).shape_str());
        }
        for (Node& n : nodes_) {
            if (n.needs_grad) {
                n.grad = Tensor<Real>(n.value.shape());
            }
        }
        if (!nodes_[loss].needs_grad) return;  // loss does not depend on any parameter
        nodes_[loss].grad[0] = Real(1);
        for (size_t i = nodes_.size(); i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.needs_grad || n.op == Op::Leaf) continue;
            backprop_node(n);
        }
    }

private:
    struct Node {
        Op op = Op::Leaf;
        VarId a = 0, b = 0, c = 0;
        int64_t aux = 0;
        Real scalar = 0;
        std::vector<VarId> extra;
        Tensor<Real> value;
        Tensor<Real> grad;
        bool needs_grad = false;
    };

    std::vector<Node> nodes_;

    const Tensor<Real>& val(VarId id) const { return nodes_[id].value; }

    VarId push(Node&& n) {
        nodes_.push_back(std::move(n));
        return static_cast<VarId>(nodes_.size() - 1);
    }

    VarId push_unary(Op op, VarId a, Tensor<Real> out) {
        Node n;
        n.op = op;
        n.a = a;
        n.value = std::move(out);
        n.needs_grad = nodes_[a].needs_grad;
        return push(std::move(n));
    }

    VarId push_binary(Op op, VarId a, VarId b, Tensor<Real> out) {
        Node n;
        n.op = op;
        n.a = a;
        n.b = b;
        n.value = std::move(out);
        n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
        return push(std::move(n));
    }

    VarId ew_binary(Op op, VarId a, VarId b) {
        const Tensor<Real>& A = val(a);
        const Tensor<Real>& B = val(b);
        if (!A.same_shape(B)) {
            throw DimensionError("elementwise op on mismatched shapes " + A.shape_str() + " and " + B.shape_str());
        }
        Tensor<Real> out(A.shape());
        switch (op) {
            case Op::Add:
                for (size_t i = 0; i < A.numel(); ++i) out[i] = A[i] + B[i];
                break;
            case Op::Sub:
                for (size_t i = 0; i < A.numel(); ++i) out[i] = A[i] - B[i];
                break;
            case Op::Mul:
                for (size_t i = 0; i < A.numel(); ++i) out[i] = A[i] * B[i];
                break;
            default:
                throw ContractError("not an elementwise op");
        }
        return push_binary(op, a, b, std::move(out));
    }

    static Tensor<Real> softmax_value(const Tensor<Real>& v) {
        if (v.rank() != 1) throw DimensionError("softmax expects a vector, got " + v.shape_str());
        Tensor<Real> out = v;
        Real mx = out[0];
        for (size_t i = 1; i < out.numel(); ++i) mx = std::max(mx, out[i]);
        Real sum = 0;
        for (size_t i = 0; i < out.numel(); ++i) {
            out[i] = std::exp(out[i] - mx);
            sum += out[i];
        }
        for (size_t i = 0; i < out.numel(); ++i) out[i] /= sum;
        return out;
    }

    static void matmul_kernel(const Tensor<Real>& A, const Tensor<Real>& B, Tensor<Real>& C) {
        const size_t m = A.rows(), k = A.cols(), n = B.cols();
        const Real* a = A.data();
        const Real* b = B.data();
        Real* c = C.data();
        for (size_t i = 0; i < m; ++i) {
            Real* crow = c + i * n;
            const Real* arow = a + i * k;
            for (size_t p = 0; p < k; ++p) {
                const Real av = arow[p];
                const Real* brow = b + p * n;
                for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }

    Tensor<Real>* grad_ptr(VarId id) { return nodes_[id].needs_grad ? &nodes_[id].grad : nullptr; }

    void backprop_node(Node& n) {
        const Tensor<Real>& gy = n.grad;
        switch (n.op) {
            case Op::MatMul: {
                const Tensor<Real>& A = val(n.a);
                const Tensor<Real>& B = val(n.b);
                const size_t m = A.rows(), k = A.cols(), c = B.cols();
                if (Tensor<Real>* ga = grad_ptr(n.a)) {
                    // dA += gy . B^T
                    for (size_t i = 0; i < m; ++i) {
                        for (size_t p = 0; p < k; ++p) {
                            Real s = 0;
                            for (size_t j = 0; j < c; ++j) s += gy.data()[i * c + j] * B.data()[p * c + j];
                            ga->data()[i * k + p] += s;
                        }
                    }
                }
                if (Tensor<Real>* gb = grad_ptr(n.b)) {
                    // dB += A^T . gy
                    for (size_t p = 0; p < k; ++p) {
                        for (size_t i = 0; i < m; ++i) {
                            const Real av = A.data()[i * k + p];
                            for (size_t j = 0; j < c; ++j) gb->data()[p * c + j] += av * gy.data()[i * c + j];
                        }
                    }
                }
                break;
            }
            case Op::MatVecT: {
                const Tensor<Real>& M = val(n.a);
                const Tensor<Real>& V = val(n.b);
                if (Tensor<Real>* gm = grad_ptr(n.a)) {
                    for (size_t i = 0; i < M.rows(); ++i) {
                        for (size_t j = 0; j < M.cols(); ++j) gm->data()[i * M.cols() + j] += V[i] * gy[j];
                    }
                }
                if (Tensor<Real>* gv = grad_ptr(n.b)) {
                    for (size_t i = 0; i < M.rows(); ++i) {
                        Real s = 0;
                        for (size_t j = 0; j < M.cols(); ++j) s += M.data()[i * M.cols() + j] * gy[j];
                        (*gv)[i] += s;
                    }
                }
                break;
            }
            case Op::Dot: {
                const Real g = gy[0];
                if (Tensor<Real>* ga = grad_ptr(n.a)) {
                    for (size_t i = 0; i < ga->numel(); ++i) (*ga)[i] += g * val(n.b)[i];
                }
                if (Tensor<Real>* gb = grad_ptr(n.b)) {
                    for (size_t i = 0; i < gb->numel(); ++i) (*gb)[i] += g * val(n.a)[i];
                }
                break;
            }
            case Op::Add: {
                if (Tensor<Real>* ga = grad_ptr(n.a)) {
                    for (size_t i = 0; i < gy.numel(); ++i) (*ga)[i] += gy[i];
                }
                if (Tensor<Real>* gb = grad_ptr(n.b)) {
                    for (size_t i = 0; i < gy.numel(); ++i) (*gb)[i] += gy[i];
                }
                break;
            }
            case Op::Sub: {
                if (Tensor<Real>* ga = grad_ptr(n.a)) {
                    for (size_t i = 0; i < gy.numel(); ++i) (*ga)[i] += gy[i];
                }
                if (Tensor<Real>* gb = grad_ptr(n.b)) {
                    for (size_t i = 0; i < gy.numel(); ++i) (*gb)[i] -= gy[i];
                }
                break;
            }
            case Op::Mul: {
                if (Tensor<Real>* ga = grad_ptr(n.a)) {
                    for (size_t i = 0; i < gy.numel(); ++i) (*ga)[i] += gy[i] * val(n.b)[i];
                }
                if (Tensor<Real>* gb = grad_ptr(n.b)) {
                    for (size_t i = 0; i < gy.numel(); ++i) (*gb)[i] += gy[i] * val(n.a)[i];
                }
                break;
            }
            case Op::Lerp: {
                const Tensor<Real>& A = val(n.a);
                const Tensor<Real>& B = val(n.b);
                const Tensor<Real>& T = val(n.c);
                if (Tensor<Real>* ga = grad_ptr(n.a)) {
                    for (size_t i = 0; i < gy.numel(); ++i) (*ga)[i] += gy[i] * (Real(1) - T[i]);
                }
                if (Tensor<Real>* gb = grad_ptr(n.b)) {
                    for (size_t i = 0; i < gy.numel(); ++i) (*gb)[i] += gy[i] * T[i];
                }
                if (Tensor<Real>* gt = grad_ptr(n.c)) {
                    for (size_t i = 0; i < gy.numel(); ++i) (*gt)[i] += gy[i] * (B[i] - A[i]);
                }
                break;
            }
            case Op::Scale: {
                if (Tensor<Real>* ga = grad_ptr(n.a)) {
                    for (size_t i = 0; i < gy.numel(); ++i) (*ga)[i] += n.scalar * gy[i];
                }
                break;
            }
            case Op::Tanh: {
                if (Tensor<Real>* ga = grad_ptr(n.a)) {
                    if (inject_tanh_fault) {
                        for (size_t i = 0; i < gy.numel(); ++i) (*ga)[i] += gy[i];
                    } else {
                        for (size_t i = 0; i < gy.numel(); ++i) {
                            (*ga)[i] += gy[i] * (Real(1) - n.value[i] * n.value[i]);
                        }
                    }
                }
                break;
            }
            case Op::Sigmoid: {
                if (Tensor<Real>* ga = grad_ptr(n.a)) {
                    for (size_t i = 0; i < gy.numel(); ++i) {
                        (*ga)[i] += gy[i] * n.value[i] * (Real(1) - n.value[i]);
                    }
                }
                break;
            }
            case Op::Softmax: {
                if (Tensor<Real>* ga = grad_ptr(n.a)) {
                    Real inner = 0;
                    for (size_t i = 0; i < gy.numel(); ++i) inner += gy[i] * n.value[i];
                    for (size_t i = 0; i < gy.numel(); ++i) (*ga)[i] += n.value[i] * (gy[i] - inner);
                }
                break;
            }
            case Op::LogSoftmax: {
                if (Tensor<Real>* ga = grad_ptr(n.a)) {
                    Real gsum = 0;
                    for (size_t i = 0; i < gy.numel(); ++i) gsum += gy[i];
                    for (size_t i = 0; i < gy.numel(); ++i) {
                        (*ga)[i] += gy[i] - std::exp(n.value[i]) * gsum;
                    }
                }
                break;
            }
            case Op::Concat: {
                if (n.aux == 0) {
                    size_t off = 0;
                    for (VarId p : n.extra) {
                        size_t len = val(p).numel();
                        if (Tensor<Real>* gp = grad_ptr(p)) {
                            for (size_t i = 0; i < len; ++i) (*gp)[i] += gy[off + i];
                        }
                        off += len;
                    }
                } else {
                    size_t rows = n.value.rows();
                    size_t col_off = 0;
                    for (VarId p : n.extra) {
                        size_t pc = val(p).cols();
                        if (Tensor<Real>* gp = grad_ptr(p)) {
                            for (size_t r = 0; r < rows; ++r) {
                                for (size_t c2 = 0; c2 < pc; ++c2) {
                                    Real g = gy.at(r, col_off + c2);
                                    if (gp->rank() == 1) {
                                        (*gp)[r] += g;
                                    } else {
                                        gp->at(r, c2) += g;
                                    }
                                }
                            }
                        }
                        col_off += pc;
                    }
                }
                break;
            }
            case Op::Row: {
                if (Tensor<Real>* gt = grad_ptr(n.a)) {
                    size_t cols = gt->cols();
                    size_t base = static_cast<size_t>(n.aux) * cols;
                    for (size_t j = 0; j < cols; ++j) gt->data()[base + j] += gy[j];
                }
                break;
            }
            case Op::ColAddVec: {
                if (Tensor<Real>* gm = grad_ptr(n.a)) {
                    for (size_t i = 0; i < gy.numel(); ++i) gm->data()[i] += gy.data()[i];
                }
                if (Tensor<Real>* gv = grad_ptr(n.b)) {
                    for (size_t i = 0; i < gy.rows(); ++i) {
                        Real s = 0;
                        for (size_t j = 0; j < gy.cols(); ++j) s += gy.at(i, j);
                        (*gv)[i] += s;
                    }
                }
                break;
            }
            case Op::MeanCols: {
                if (Tensor<Real>* gm = grad_ptr(n.a)) {
                    size_t cols = gm->cols();
                    Real inv = Real(1) / Real(cols);
                    for (size_t i = 0; i < gm->rows(); ++i) {
                        Real g = gy[i] * inv;
                        for (size_t j = 0; j < cols; ++j) gm->at(i, j) += g;
                    }
                }
                break;
            }
            case Op::SumVec: {
                if (Tensor<Real>* ga = grad_ptr(n.a)) {
                    for (size_t i = 0; i < ga->numel(); ++i) (*ga)[i] += gy[0];
                }
                break;
            }
            case Op::Pick: {
                if (Tensor<Real>* ga = grad_ptr(n.a)) {
                    (*ga)[static_cast<size_t>(n.aux)] += gy[0];
                }
                break;
            }
            case Op::Leaf:
                break;
        }
    }
};

// Value-level softmax for code that is not building a graph (metrics, tests).
template <typename Real>
Tensor<Real> softmax_values(const Tensor<Real>& v) {
    Tape<Real> t;
    return t.value(t.softmax(t.constant(v)));
}

}  // namespace nsc
