#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "nsc/error.hpp"
#include "nsc/params.hpp"
#include "nsc/rng.hpp"

namespace nsc {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    size_t samples = 0;

    bool passed(double threshold) const { return max_rel_error < threshold; }
};

// Compares analytic gradients against central finite differences
//   (L(theta + eps) - L(theta - eps)) / (2 eps)
// on every parameter entry, or on a random subsample of at least
// `min_samples` entries (at least one per parameter so a dead backward rule
// in any tensor is caught). Relative error per entry is
//   |a - n| / max(|a|, |n|, 1e-3).
//
// The denominator floor is the resolution limit of the instrument, not a
// fudge: central differences on a double-precision loss L carry rounding
// noise of roughly |L|*1e-16/eps in the numeric estimate (~3e-11 here), and
// recurrent models legitimately own gradient entries far below that (softmax
// shift-invariance cancels word-attention score gradients to second order).
// The floor equates to the usual atol/rtol split with atol=1e-9, rtol=1e-6:
// entries are judged relatively once they are large enough to measure, and
// absolutely (against 1e-9 ~ 30x the noise) once they are not. A corrupted
// backward rule still shows up at O(1) on ordinary entries.
//
// loss_fn must be a deterministic function of the registry contents; this is
// verified by evaluating it twice up front. Run with Real = double.
template <typename Real>
GradCheckReport grad_check(const std::function<Real()>& loss_fn,
                           const std::function<std::vector<Tensor<Real>>()>& grad_fn,
                           const ParamRegistry<Real>& reg, double eps = 3e-5, size_t min_samples = 200,
                           uint64_t seed = 0) {
    if (eps < 1e-6 || eps > 1e-4) {
        throw ContractError("grad_check eps must lie in [1e-6, 1e-4]");
    }
    Real l0 = loss_fn();
    Real l1 = loss_fn();
    if (!(l0 == l1)) {
        throw ContractError("loss function is not deterministic: two evaluations differ");
    }

    std::vector<Tensor<Real>> analytic = grad_fn();
    if (analytic.size() != reg.size()) {
        throw ContractError("grad_fn returned " + std::to_string(analytic.size()) + " tensors for " +
                            std::to_string(reg.size()) + " parameters");
    }

    // choose entries: everything if small, otherwise >=1 per parameter plus
    // uniform draws up to min_samples
    std::vector<std::pair<size_t, size_t>> picks;  // (param, flat index)
    size_t total = total_entries(reg);
    Rng rng = substream(seed, "gradcheck");
    if (total <= min_samples) {
        for (size_t p = 0; p < reg.size(); ++p) {
            for (size_t i = 0; i < reg[p].tensor->numel(); ++i) picks.emplace_back(p, i);
        }
    } else {
        for (size_t p = 0; p < reg.size(); ++p) {
            picks.emplace_back(p, rng.below(reg[p].tensor->numel()));
        }
        while (picks.size() < min_samples) {
            size_t flat = rng.below(total);
            for (size_t p = 0; p < reg.size(); ++p) {
                size_t n = reg[p].tensor->numel();
                if (flat < n) {
                    picks.emplace_back(p, flat);
                    break;
                }
                flat -= n;
            }
        }
    }

    GradCheckReport report;
    report.samples = picks.size();
    for (auto [p, i] : picks) {
        Tensor<Real>& theta = *reg[p].tensor;
        Real saved = theta[i];
        theta[i] = saved + Real(eps);
        Real lp = loss_fn();
        theta[i] = saved - Real(eps);
        Real lm = loss_fn();
        theta[i] = saved;

        double numeric = (static_cast<double>(lp) - static_cast<double>(lm)) / (2.0 * eps);
        double a = static_cast<double>(analytic[p][i]);
        double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-3});
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_param = reg[p].name;
            report.worst_index = i;
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
    }
    return report;
}

}  // namespace nsc
