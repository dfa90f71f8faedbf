#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "licsec/common.hpp"
#include "licsec/rng.hpp"

namespace licsec::nn {

// Dense row-major tensor of doubles. Training runs at 64-bit precision so
// finite-difference checks are clean; inference paths may downcast.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape)
        : shape_(std::move(shape)), data_(checked_size(shape_), 0.0) {}
    Tensor(std::vector<int> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (int64_t(data_.size()) != checked_size(shape_))
            raise(ErrorClass::Numeric, "tensor data length does not match shape");
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor uniform(std::vector<int> shape, double lo, double hi, Rng& rng) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = rng.uniform(lo, hi);
        return t;
    }
    static Tensor normal(std::vector<int> shape, double mean, double stddev, Rng& rng) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = mean + stddev * rng.normal();
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_[size_t(i)]; }
    int ndim() const { return int(shape_.size()); }
    int64_t size() const { return int64_t(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](int64_t i) { return data_[size_t(i)]; }
    double operator[](int64_t i) const { return data_[size_t(i)]; }

    // 4-d accessor (B,C,H,W) used by the conv kernels.
    double& at4(int b, int c, int h, int w) {
        return data_[size_t(((int64_t(b) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    double at4(int b, int c, int h, int w) const {
        return data_[size_t(((int64_t(b) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape_.size(); ++i)
            s += (i ? "x" : "") + std::to_string(shape_[i]);
        return s + "]";
    }

    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

private:
    static int64_t checked_size(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) {
            if (d <= 0) raise(ErrorClass::Numeric, "tensor extents must be positive");
            n *= d;
        }
        return n;
    }
    std::vector<int> shape_;
    std::vector<double> data_;
};

inline int64_t numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

// NaN/Inf are rejected at op boundaries; call sites name the op for diagnostics.
inline void require_finite(const Tensor& t, const char* op) {
    if (!t.all_finite())
        raise(ErrorClass::Numeric, std::string(op) + ": non-finite values in input tensor");
}

}  // namespace licsec::nn
