#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "nsc/error.hpp"

namespace nsc {

// Dense row-major tensor of rank 1 (vector) or 2 (matrix). Training runs with
// Real = float; gradient checking instantiates Real = double.
template <typename Real>
class Tensor {
public:
    Tensor() = default;

    static Tensor vec(size_t n) { return Tensor({n}); }
    static Tensor mat(size_t rows, size_t cols) { return Tensor({rows, cols}); }

    explicit Tensor(std::vector<size_t> shape) : shape_(std::move(shape)) {
        if (shape_.empty() || shape_.size() > 2) {
            throw DimensionError("tensor rank must be 1 or 2, got " + std::to_string(shape_.size()));
        }
        size_t n = 1;
        for (size_t d : shape_) {
            if (d == 0) throw DimensionError("zero-sized dimension in " + shape_str());
            n *= d;
        }
        data_.assign(n, Real(0));
    }

    Tensor(std::vector<size_t> shape, std::vector<Real> data) : Tensor(std::move(shape)) {
        if (data.size() != data_.size()) {
            throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                                 shape_str());
        }
        data_ = std::move(data);
    }

    static Tensor from_vec(std::vector<Real> v) {
        size_t n = v.size();
        return Tensor({n}, std::move(v));
    }

    static Tensor scalar(Real v) { return Tensor({1}, {v}); }

    size_t rank() const { return shape_.size(); }
    const std::vector<size_t>& shape() const { return shape_; }
    size_t numel() const { return data_.size(); }
    size_t rows() const { return shape_[0]; }
    size_t cols() const { return rank() == 2 ? shape_[1] : 1; }
    size_t dim(size_t i) const { return shape_[i]; }

    Real* data() { return data_.data(); }
    const Real* data() const { return data_.data(); }
    std::vector<Real>& storage() { return data_; }
    const std::vector<Real>& storage() const { return data_; }

    Real& operator[](size_t i) { return data_[i]; }
    Real operator[](size_t i) const { return data_[i]; }
    Real& at(size_t r, size_t c) { return data_[r * cols() + c]; }
    Real at(size_t r, size_t c) const { return data_[r * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void fill(Real v) { data_.assign(data_.size(), v); }

    bool all_finite() const {
        for (Real v : data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
        os << "]";
        return os.str();
    }

    template <typename Other>
    Tensor<Other> cast() const {
        std::vector<Other> d(data_.size());
        for (size_t i = 0; i < data_.size(); ++i) d[i] = static_cast<Other>(data_[i]);
        return Tensor<Other>(shape_, std::move(d));
    }

private:
    std::vector<size_t> shape_;
    std::vector<Real> data_;
};

}  // namespace nsc
