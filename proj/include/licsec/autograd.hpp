#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "licsec/tensor.hpp"

namespace licsec::nn {

struct Node;
using NodeRef = std::shared_ptr<Node>;

// One vertex of the reverse-mode graph. Values are immutable once built;
// only parameter-update ops (Adam) mutate `value` in place, between graphs.
struct Node {
    Tensor value;
    Tensor grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<NodeRef> parents;
    std::function<void(Node&)> backward_fn;  // reads this->grad, accumulates into parents
    int visit_mark = 0;

    void ensure_grad() {
        if (grad.size() == 0) grad = Tensor::zeros(value.shape());
    }
    void accumulate(const Tensor& g) {
        ensure_grad();
        double* dst = grad.data();
        const double* src = g.data();
        for (int64_t i = 0; i < grad.size(); ++i) dst[i] += src[i];
    }
};

// Value-semantic handle onto a graph node.
class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false) {
        n_ = std::make_shared<Node>();
        n_->value = std::move(value);
        n_->requires_grad = requires_grad;
    }
    static Var constant(Tensor v) { return Var(std::move(v), false); }
    static Var param(Tensor v) { return Var(std::move(v), true); }

    bool defined() const { return n_ != nullptr; }
    const Tensor& value() const { return n_->value; }
    Tensor& mutable_value() { return n_->value; }
    Tensor& grad() {
        n_->ensure_grad();
        return n_->grad;
    }
    bool requires_grad() const { return n_->requires_grad; }
    void zero_grad() {
        if (n_->grad.size() != 0)
            std::fill(n_->grad.raw().begin(), n_->grad.raw().end(), 0.0);
    }
    NodeRef node() const { return n_; }

private:
    NodeRef n_;
};

// Reverse-mode accumulation from a scalar loss into every reachable
// parameter's grad. Graph must be acyclic (guaranteed by construction).
void backward(const Var& loss);

// --- differentiable ops ------------------------------------------------

// Cross-correlation, weight [O,C,k,k], input [B,C,H,W].
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
// Adjoint of conv2d, weight [C,O,k,k]; output size (H-1)*stride - 2*pad + k.
Var conv2d_transposed(const Var& x, const Var& w, const Var& b, int stride, int pad);

Var relu(const Var& x);
Var clamp01(const Var& x);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var scale(const Var& a, double c);
Var sum(const Var& a);
Var mse(const Var& a, const Var& b);  // mean((a-b)^2)

// x + noise with identity gradient (noise is a fixed realization).
Var add_noise(const Var& x, Tensor noise);

// Symmetric fake quantization clip(round(t/s), -qmax, qmax)*s with a
// straight-through backward (identity inside the clip range, zero outside).
// `s` is a scalar Var; if it is trainable the backward also produces the
// LSQ-style scale gradient.
Var fake_quant_sym(const Var& t, const Var& s, int qmax);
// Unsigned variant (post-ReLU activations): clip(round(x/s), 0, qmax)*s.
Var fake_quant_unsigned(const Var& x, double s, int qmax);
// Grid rounding without clipping (biases): round(b/s)*s, identity backward.
Var fake_quant_grid(const Var& b, double s);

// Sum over elements of -log2(bin probability) of z_hat under a per-channel
// logistic prior; z_hat is [B,C,H,W], mu/log_b are [C]. Probabilities are
// floored at 2^-24 (the precision of the coder's CDF tables).
Var logistic_bits(const Var& z_hat, const Var& mu, const Var& log_b);

// Watermark regression error E = ||W - X^T vec(theta)||^2; X is [N,M],
// bits holds M entries in {0,1}.
Var wm_error(const Var& theta, const Tensor& X, const std::vector<uint8_t>& bits);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }

// --- tensor-level (non-graph) kernels shared with inference paths ------

namespace kernels {
void conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                    int pad, Tensor& y);
void conv2d_transposed_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                               int stride, int pad, Tensor& y);
std::vector<int> conv2d_out_shape(const std::vector<int>& x, const std::vector<int>& w,
                                  int stride, int pad);
std::vector<int> conv2d_transposed_out_shape(const std::vector<int>& x,
                                             const std::vector<int>& w, int stride,
                                             int pad);
}  // namespace kernels

}  // namespace licsec::nn
