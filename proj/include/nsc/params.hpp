#pragma once

#include <string>
#include <vector>

#include "nsc/tensor.hpp"

namespace nsc {

// A named view into one learned tensor. Registries list every parameter of a
// model in a fixed order; the optimizer, gradient checker, and checkpoint
// code all iterate the same list.
template <typename Real>
struct NamedParam {
    std::string name;
    Tensor<Real>* tensor;
};

template <typename Real>
using ParamRegistry = std::vector<NamedParam<Real>>;

template <typename Real>
size_t total_entries(const ParamRegistry<Real>& reg) {
    size_t n = 0;
    for (const auto& p : reg) n += p.tensor->numel();
    return n;
}

}  // namespace nsc
