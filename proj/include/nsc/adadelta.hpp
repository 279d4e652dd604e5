#pragma once

#include <cmath>
#include <vector>

#include "nsc/error.hpp"
#include "nsc/params.hpp"
#include "nsc/tensor.hpp"

namespace nsc {

// Per-parameter running averages for the Adadelta update. Both accumulators
// stay nonnegative by construction.
template <typename Real>
struct AdadeltaState {
    Real rho = Real(0.95);
    Real eps = Real(1e-6);
    std::vector<Tensor<Real>> acc_grad_sq;   // E[g^2]
    std::vector<Tensor<Real>> acc_delta_sq;  // E[dx^2]

    static AdadeltaState for_registry(const ParamRegistry<Real>& reg, Real rho = Real(0.95),
                                      Real eps = Real(1e-6)) {
        AdadeltaState s;
        s.rho = rho;
        s.eps = eps;
        for (const auto& p : reg) {
            s.acc_grad_sq.emplace_back(p.tensor->shape());
            s.acc_delta_sq.emplace_back(p.tensor->shape());
        }
        return s;
    }
};

// One Adadelta step:
//   E[g^2]  <- rho E[g^2] + (1-rho) g^2
//   dx       = -(sqrt(E[dx^2]+eps) / sqrt(E[g^2]+eps)) g
//   E[dx^2] <- rho E[dx^2] + (1-rho) dx^2
//   theta   <- theta + dx
template <typename Real>
void adadelta_update(const ParamRegistry<Real>& reg, const std::vector<Tensor<Real>>& grads,
                     AdadeltaState<Real>& state) {
    if (grads.size() != reg.size() || state.acc_grad_sq.size() != reg.size()) {
        throw DimensionError("adadelta: registry, gradients, and state sizes disagree");
    }
    for (size_t p = 0; p < reg.size(); ++p) {
        Tensor<Real>& theta = *reg[p].tensor;
        const Tensor<Real>& g = grads[p];
        if (!theta.same_shape(g)) {
            throw DimensionError("adadelta: gradient shape " + g.shape_str() + " does not match parameter " +
                                 reg[p].name + " " + theta.shape_str());
        }
        Tensor<Real>& eg = state.acc_grad_sq[p];
        Tensor<Real>& ed = state.acc_delta_sq[p];
        for (size_t i = 0; i < theta.numel(); ++i) {
            Real gi = g[i];
            if (!std::isfinite(static_cast<double>(gi))) {
                throw TrainingError("NaN gradient in parameter " + reg[p].name);
            }
            eg[i] = state.rho * eg[i] + (Real(1) - state.rho) * gi * gi;
            Real dx = -(std::sqrt(ed[i] + state.eps) / std::sqrt(eg[i] + state.eps)) * gi;
            ed[i] = state.rho * ed[i] + (Real(1) - state.rho) * dx * dx;
            theta[i] += dx;
        }
    }
}

}  // namespace nsc
