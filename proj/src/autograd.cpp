#include "licsec/autograd.hpp"

#include <algorithm>
#include <cmath>

namespace licsec::nn {

namespace {

// ---- dense kernels -----------------------------------------------------
// Accumulation order is fixed (row-major, ascending k) so fixed-seed runs
// are bit-reproducible. Zero multiplicands are skipped: adding exact zeros
// never changes a finite sum, and it makes masked channels cost nothing.

// C[m,n] += A[m,p] * B[p,n]
void gemm_nn(const double* A, const double* B, double* C, int m, int p, int n) {
    for (int i = 0; i < m; ++i) {
        const double* Ai = A + int64_t(i) * p;
        double* Ci = C + int64_t(i) * n;
        for (int k = 0; k < p; ++k) {
            double a = Ai[k];
            if (a == 0.0) continue;
            const double* Bk = B + int64_t(k) * n;
            for (int j = 0; j < n; ++j) Ci[j] += a * Bk[j];
        }
    }
}

// C[m,n] += A[m,p] * B[n,p]^T
void gemm_nt(const double* A, const double* B, double* C, int m, int p, int n) {
    for (int i = 0; i < m; ++i) {
        const double* Ai = A + int64_t(i) * p;
        double* Ci = C + int64_t(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* Bj = B + int64_t(j) * p;
            double acc = 0.0;
            for (int k = 0; k < p; ++k) acc += Ai[k] * Bj[k];
            Ci[j] += acc;
        }
    }
}

// C[m,n] += A[p,m]^T * B[p,n]
void gemm_tn(const double* A, const double* B, double* C, int p, int m, int n) {
    for (int k = 0; k < p; ++k) {
        const double* Ak = A + int64_t(k) * m;
        const double* Bk = B + int64_t(k) * n;
        for (int i = 0; i < m; ++i) {
            double a = Ak[i];
            if (a == 0.0) continue;
            double* Ci = C + int64_t(i) * n;
            for (int j = 0; j < n; ++j) Ci[j] += a * Bk[j];
        }
    }
}

// col[(c*k+ki)*k+kj][ho*Wo+wo] = x[c][ho*s+ki-p][wo*s+kj-p]  (0 outside)
void im2col(const double* x, int C, int H, int W, int k, int stride, int pad,
            int Ho, int Wo, double* col) {
    for (int c = 0; c < C; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                double* dst = col + (int64_t((c * k + ki) * k + kj)) * Ho * Wo;
                for (int ho = 0; ho < Ho; ++ho) {
                    int hi = ho * stride + ki - pad;
                    if (hi < 0 || hi >= H) {
                        for (int wo = 0; wo < Wo; ++wo) dst[ho * Wo + wo] = 0.0;
                        continue;
                    }
                    const double* src = x + (int64_t(c) * H + hi) * W;
                    for (int wo = 0; wo < Wo; ++wo) {
                        int wi = wo * stride + kj - pad;
                        dst[ho * Wo + wo] = (wi < 0 || wi >= W) ? 0.0 : src[wi];
                    }
                }
            }
        }
    }
}

// Adjoint scatter-add of im2col.
void col2im(const double* col, int C, int H, int W, int k, int stride, int pad,
            int Ho, int Wo, double* x) {
    for (int c = 0; c < C; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const double* src = col + (int64_t((c * k + ki) * k + kj)) * Ho * Wo;
                for (int ho = 0; ho < Ho; ++ho) {
                    int hi = ho * stride + ki - pad;
                    if (hi < 0 || hi >= H) continue;
                    double* dst = x + (int64_t(c) * H + hi) * W;
                    for (int wo = 0; wo < Wo; ++wo) {
                        int wi = wo * stride + kj - pad;
                        if (wi >= 0 && wi < W) dst[wi] += src[ho * Wo + wo];
                    }
                }
            }
        }
    }
}

void check_conv_args(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                     int pad, bool transposed, const char* op) {
    if (x.ndim() != 4) raise(ErrorClass::Numeric, std::string(op) + ": input must be 4-d, got " + x.shape_str());
    if (w.ndim() != 4) raise(ErrorClass::Numeric, std::string(op) + ": weight must be 4-d, got " + w.shape_str());
    if (w.dim(2) != w.dim(3)) raise(ErrorClass::Numeric, std::string(op) + ": kernel must be square");
    if (stride < 1) raise(ErrorClass::Numeric, std::string(op) + ": stride must be >= 1");
    if (pad < 0) raise(ErrorClass::Numeric, std::string(op) + ": pad must be >= 0");
    int in_ch = transposed ? w.dim(0) : w.dim(1);
    int out_ch = transposed ? w.dim(1) : w.dim(0);
    if (x.dim(1) != in_ch)
        raise(ErrorClass::Numeric, std::string(op) + ": input has " + std::to_string(x.dim(1)) +
                                       " channels but weight expects " + std::to_string(in_ch));
    if (b.size() != out_ch)
        raise(ErrorClass::Numeric, std::string(op) + ": bias length " + std::to_string(b.size()) +
                                       " != output channels " + std::to_string(out_ch));
    if (!transposed) {
        int k = w.dim(2);
        if (k > x.dim(2) + 2 * pad || k > x.dim(3) + 2 * pad)
            raise(ErrorClass::Numeric, std::string(op) + ": kernel " + std::to_string(k) +
                                           " exceeds padded input " + x.shape_str());
    } else {
        int k = w.dim(2);
        if ((x.dim(2) - 1) * stride - 2 * pad + k <= 0 || (x.dim(3) - 1) * stride - 2 * pad + k <= 0)
            raise(ErrorClass::Numeric, std::string(op) + ": output size would be non-positive");
    }
    require_finite(x, op);
    require_finite(w, op);
    require_finite(b, op);
}

Var make_op(Tensor value, std::vector<NodeRef> parents,
            std::function<void(Node&)> backward_fn) {
    bool req = false;
    for (const auto& p : parents) req = req || p->requires_grad;
    Var out(std::move(value), req);
    if (req) {
        out.node()->parents = std::move(parents);
        out.node()->backward_fn = std::move(backward_fn);
    }
    return out;
}

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

constexpr double kMinBinProb = 0x1.0p-24;
constexpr double kInvLn2 = 1.4426950408889634074;

}  // namespace

// ---- inference-path kernels (shared with the graph ops) ----------------

namespace kernels {

std::vector<int> conv2d_out_shape(const std::vector<int>& x, const std::vector<int>& w,
                                  int stride, int pad) {
    int Ho = (x[2] + 2 * pad - w[2]) / stride + 1;
    int Wo = (x[3] + 2 * pad - w[3]) / stride + 1;
    return {x[0], w[0], Ho, Wo};
}

std::vector<int> conv2d_transposed_out_shape(const std::vector<int>& x,
                                             const std::vector<int>& w, int stride,
                                             int pad) {
    int Ho = (x[2] - 1) * stride - 2 * pad + w[2];
    int Wo = (x[3] - 1) * stride - 2 * pad + w[3];
    return {x[0], w[1], Ho, Wo};
}

void conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                    int pad, Tensor& y) {
    check_conv_args(x, w, b, stride, pad, false, "conv2d");
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int O = w.dim(0), k = w.dim(2);
    auto ys = conv2d_out_shape(x.shape(), w.shape(), stride, pad);
    const int Ho = ys[2], Wo = ys[3];
    y = Tensor(ys);
    std::vector<double> col(size_t(C) * k * k * Ho * Wo);
    for (int bi = 0; bi < B; ++bi) {
        im2col(x.data() + int64_t(bi) * C * H * W, C, H, W, k, stride, pad, Ho, Wo,
               col.data());
        double* yb = y.data() + int64_t(bi) * O * Ho * Wo;
        for (int o = 0; o < O; ++o)
            std::fill(yb + int64_t(o) * Ho * Wo, yb + int64_t(o + 1) * Ho * Wo, b[o]);
        gemm_nn(w.data(), col.data(), yb, O, C * k * k, Ho * Wo);
    }
}

void conv2d_transposed_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                               int stride, int pad, Tensor& y) {
    check_conv_args(x, w, b, stride, pad, true, "conv2d_transposed");
    const int B = x.dim(0), C = x.dim(1), Hi = x.dim(2), Wi = x.dim(3);
    const int O = w.dim(1), k = w.dim(2);
    auto ys = conv2d_transposed_out_shape(x.shape(), w.shape(), stride, pad);
    const int Ho = ys[2], Wo = ys[3];
    y = Tensor(ys);
    std::vector<double> cols(size_t(O) * k * k * Hi * Wi);
    for (int bi = 0; bi < B; ++bi) {
        std::fill(cols.begin(), cols.end(), 0.0);
        gemm_tn(w.data(), x.data() + int64_t(bi) * C * Hi * Wi, cols.data(), C,
                O * k * k, Hi * Wi);
        double* yb = y.data() + int64_t(bi) * O * Ho * Wo;
        for (int o = 0; o < O; ++o)
            std::fill(yb + int64_t(o) * Ho * Wo, yb + int64_t(o + 1) * Ho * Wo, b[o]);
        col2im(cols.data(), O, Ho, Wo, k, stride, pad, Hi, Wi, yb);
    }
}

}  // namespace kernels

// ---- graph ops ----------------------------------------------------------

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    Tensor y;
    kernels::conv2d_forward(x.value(), w.value(), b.value(), stride, pad, y);
    auto xn = x.node(), wn = w.node(), bn = b.node();
    return make_op(std::move(y), {xn, wn, bn}, [xn, wn, bn, stride, pad](Node& self) {
        const Tensor& xv = xn->value;
        const Tensor& wv = wn->value;
        const int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
        const int O = wv.dim(0), k = wv.dim(2);
        const int Ho = self.value.dim(2), Wo = self.value.dim(3);
        std::vector<double> col(size_t(C) * k * k * Ho * Wo);
        const bool need_x = xn->requires_grad, need_w = wn->requires_grad,
                   need_b = bn->requires_grad;
        if (need_x) xn->ensure_grad();
        if (need_w) wn->ensure_grad();
        if (need_b) bn->ensure_grad();
        std::vector<double> colgrad(need_x ? col.size() : 0);
        for (int bi = 0; bi < B; ++bi) {
            const double* gy = self.grad.data() + int64_t(bi) * O * Ho * Wo;
            if (need_w || need_x)
                im2col(xv.data() + int64_t(bi) * C * H * W, C, H, W, k, stride, pad, Ho,
                       Wo, col.data());
            if (need_w)
                gemm_nt(gy, col.data(), wn->grad.data(), O, Ho * Wo, C * k * k);
            if (need_x) {
                std::fill(colgrad.begin(), colgrad.end(), 0.0);
                gemm_tn(wv.data(), gy, colgrad.data(), O, C * k * k, Ho * Wo);
                col2im(colgrad.data(), C, H, W, k, stride, pad, Ho, Wo,
                       xn->grad.data() + int64_t(bi) * C * H * W);
            }
            if (need_b) {
                for (int o = 0; o < O; ++o) {
                    double acc = 0.0;
                    const double* go = gy + int64_t(o) * Ho * Wo;
                    for (int i = 0; i < Ho * Wo; ++i) acc += go[i];
                    bn->grad[o] += acc;
                }
            }
        }
    });
}

Var conv2d_transposed(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    Tensor y;
    kernels::conv2d_transposed_forward(x.value(), w.value(), b.value(), stride, pad, y);
    auto xn = x.node(), wn = w.node(), bn = b.node();
    return make_op(std::move(y), {xn, wn, bn}, [xn, wn, bn, stride, pad](Node& self) {
        const Tensor& xv = xn->value;
        const Tensor& wv = wn->value;
        const int B = xv.dim(0), C = xv.dim(1), Hi = xv.dim(2), Wi = xv.dim(3);
        const int O = wv.dim(1), k = wv.dim(2);
        const int Ho = self.value.dim(2), Wo = self.value.dim(3);
        const bool need_x = xn->requires_grad, need_w = wn->requires_grad,
                   need_b = bn->requires_grad;
        if (need_x) xn->ensure_grad();
        if (need_w) wn->ensure_grad();
        if (need_b) bn->ensure_grad();
        std::vector<double> dcols(size_t(O) * k * k * Hi * Wi);
        for (int bi = 0; bi < B; ++bi) {
            const double* gy = self.grad.data() + int64_t(bi) * O * Ho * Wo;
            if (need_x || need_w)
                im2col(gy, O, Ho, Wo, k, stride, pad, Hi, Wi, dcols.data());
            if (need_x)
                gemm_nn(wv.data(), dcols.data(), xn->grad.data() + int64_t(bi) * C * Hi * Wi,
                        C, O * k * k, Hi * Wi);
            if (need_w)
                gemm_nt(xv.data() + int64_t(bi) * C * Hi * Wi, dcols.data(),
                        wn->grad.data(), C, Hi * Wi, O * k * k);
            if (need_b) {
                for (int o = 0; o < O; ++o) {
                    double acc = 0.0;
                    const double* go = gy + int64_t(o) * Ho * Wo;
                    for (int i = 0; i < Ho * Wo; ++i) acc += go[i];
                    bn->grad[o] += acc;
                }
            }
        }
    });
}

Var relu(const Var& x) {
    require_finite(x.value(), "relu");
    Tensor y = x.value();
    for (int64_t i = 0; i < y.size(); ++i) y[i] = y[i] > 0.0 ? y[i] : 0.0;
    auto xn = x.node();
    return make_op(std::move(y), {xn}, [xn](Node& self) {
        xn->ensure_grad();
        const Tensor& xv = xn->value;
        // subgradient at exactly 0 is 0
        for (int64_t i = 0; i < xv.size(); ++i)
            if (xv[i] > 0.0) xn->grad[i] += self.grad[i];
    });
}

Var clamp01(const Var& x) {
    require_finite(x.value(), "clamp01");
    Tensor y = x.value();
    for (int64_t i = 0; i < y.size(); ++i) y[i] = std::min(1.0, std::max(0.0, y[i]));
    auto xn = x.node();
    return make_op(std::move(y), {xn}, [xn](Node& self) {
        xn->ensure_grad();
        const Tensor& xv = xn->value;
        for (int64_t i = 0; i < xv.size(); ++i)
            if (xv[i] >= 0.0 && xv[i] <= 1.0) xn->grad[i] += self.grad[i];
    });
}

Var add(const Var& a, const Var& b) {
    if (!a.value().same_shape(b.value()))
        raise(ErrorClass::Numeric, "add: shape mismatch " + a.value().shape_str() + " vs " +
                                       b.value().shape_str());
    Tensor y = a.value();
    for (int64_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
    auto an = a.node(), bn = b.node();
    return make_op(std::move(y), {an, bn}, [an, bn](Node& self) {
        if (an->requires_grad) an->accumulate(self.grad);
        if (bn->requires_grad) bn->accumulate(self.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    if (!a.value().same_shape(b.value()))
        raise(ErrorClass::Numeric, "sub: shape mismatch");
    Tensor y = a.value();
    for (int64_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
    auto an = a.node(), bn = b.node();
    return make_op(std::move(y), {an, bn}, [an, bn](Node& self) {
        if (an->requires_grad) an->accumulate(self.grad);
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int64_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    if (!a.value().same_shape(b.value()))
        raise(ErrorClass::Numeric, "mul: shape mismatch");
    Tensor y = a.value();
    for (int64_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
    auto an = a.node(), bn = b.node();
    return make_op(std::move(y), {an, bn}, [an, bn](Node& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (int64_t i = 0; i < self.grad.size(); ++i)
                an->grad[i] += self.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int64_t i = 0; i < self.grad.size(); ++i)
                bn->grad[i] += self.grad[i] * an->value[i];
        }
    });
}

Var scale(const Var& a, double c) {
    Tensor y = a.value();
    for (int64_t i = 0; i < y.size(); ++i) y[i] *= c;
    auto an = a.node();
    return make_op(std::move(y), {an}, [an, c](Node& self) {
        an->ensure_grad();
        for (int64_t i = 0; i < self.grad.size(); ++i) an->grad[i] += c * self.grad[i];
    });
}

Var sum(const Var& a) {
    double acc = 0.0;
    for (int64_t i = 0; i < a.value().size(); ++i) acc += a.value()[i];
    auto an = a.node();
    return make_op(Tensor::scalar(acc), {an}, [an](Node& self) {
        an->ensure_grad();
        double g = self.grad[0];
        for (int64_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g;
    });
}

Var mse(const Var& a, const Var& b) {
    if (!a.value().same_shape(b.value()))
        raise(ErrorClass::Numeric, "mse: shape mismatch " + a.value().shape_str() + " vs " +
                                       b.value().shape_str());
    const int64_t n = a.value().size();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double d = a.value()[i] - b.value()[i];
        acc += d * d;
    }
    auto an = a.node(), bn = b.node();
    return make_op(Tensor::scalar(acc / double(n)), {an, bn}, [an, bn, n](Node& self) {
        double g = self.grad[0] * 2.0 / double(n);
        if (an->requires_grad) an->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        for (int64_t i = 0; i < n; ++i) {
            double d = an->value[i] - bn->value[i];
            if (an->requires_grad) an->grad[i] += g * d;
            if (bn->requires_grad) bn->grad[i] -= g * d;
        }
    });
}

Var add_noise(const Var& x, Tensor noise) {
    if (!x.value().same_shape(noise))
        raise(ErrorClass::Numeric, "add_noise: shape mismatch");
    Tensor y = x.value();
    for (int64_t i = 0; i < y.size(); ++i) y[i] += noise[i];
    auto xn = x.node();
    return make_op(std::move(y), {xn}, [xn](Node& self) { xn->accumulate(self.grad); });
}

Var fake_quant_sym(const Var& t, const Var& s, int qmax) {
    if (s.value().size() != 1) raise(ErrorClass::Numeric, "fake_quant_sym: scale must be scalar");
    const double sv = s.value()[0];
    if (!(sv > 0.0)) raise(ErrorClass::Numeric, "fake_quant_sym: scale must be positive");
    Tensor y = t.value();
    for (int64_t i = 0; i < y.size(); ++i) {
        double q = y[i] / sv;
        double r = std::round(q);  // round-half-away-from-zero
        r = std::min(double(qmax), std::max(double(-qmax), r));
        y[i] = r * sv;
    }
    auto tn = t.node(), sn = s.node();
    return make_op(std::move(y), {tn, sn}, [tn, sn, qmax](Node& self) {
        const double sv = sn->value[0];
        if (tn->requires_grad) tn->ensure_grad();
        if (sn->requires_grad) sn->ensure_grad();
        double sgrad = 0.0;
        for (int64_t i = 0; i < tn->value.size(); ++i) {
            double q = tn->value[i] / sv;
            bool inside = std::abs(q) <= double(qmax);
            if (tn->requires_grad && inside) tn->grad[i] += self.grad[i];
            if (sn->requires_grad) {
                // LSQ-style scale gradient: round(q)-q inside, +-qmax at saturation
                double d = inside ? (std::round(q) - q) : (q > 0 ? double(qmax) : double(-qmax));
                sgrad += self.grad[i] * d;
            }
        }
        if (sn->requires_grad) sn->grad[0] += sgrad;
    });
}

Var fake_quant_unsigned(const Var& x, double s, int qmax) {
    if (!(s > 0.0)) raise(ErrorClass::Numeric, "fake_quant_unsigned: scale must be positive");
    Tensor y = x.value();
    for (int64_t i = 0; i < y.size(); ++i) {
        double r = std::round(y[i] / s);
        r = std::min(double(qmax), std::max(0.0, r));
        y[i] = r * s;
    }
    auto xn = x.node();
    return make_op(std::move(y), {xn}, [xn, s, qmax](Node& self) {
        xn->ensure_grad();
        for (int64_t i = 0; i < xn->value.size(); ++i) {
            double q = xn->value[i] / s;
            if (q >= 0.0 && q <= double(qmax)) xn->grad[i] += self.grad[i];
        }
    });
}

Var fake_quant_grid(const Var& b, double s) {
    if (!(s > 0.0)) raise(ErrorClass::Numeric, "fake_quant_grid: scale must be positive");
    Tensor y = b.value();
    for (int64_t i = 0; i < y.size(); ++i) y[i] = std::round(y[i] / s) * s;
    auto bn = b.node();
    return make_op(std::move(y), {bn}, [bn](Node& self) { bn->accumulate(self.grad); });
}

Var logistic_bits(const Var& z_hat, const Var& mu, const Var& log_b) {
    const Tensor& z = z_hat.value();
    if (z.ndim() != 4) raise(ErrorClass::Numeric, "logistic_bits: latent must be 4-d");
    const int C = z.dim(1);
    if (mu.value().size() != C || log_b.value().size() != C)
        raise(ErrorClass::Numeric, "logistic_bits: prior params must have one entry per channel");
    require_finite(z, "logistic_bits");

    const int B = z.dim(0), H = z.dim(2), W = z.dim(3);
    double total = 0.0;
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const double m = mu.value()[c];
            const double bb = std::exp(log_b.value()[c]);
            const double* zp = z.data() + (int64_t(b) * C + c) * H * W;
            for (int i = 0; i < H * W; ++i) {
                double p = sigmoid((zp[i] + 0.5 - m) / bb) - sigmoid((zp[i] - 0.5 - m) / bb);
                total -= std::log2(std::max(p, kMinBinProb));
            }
        }

    auto zn = z_hat.node(), mn = mu.node(), bn = log_b.node();
    return make_op(Tensor::scalar(total), {zn, mn, bn}, [zn, mn, bn](Node& self) {
        const Tensor& z = zn->value;
        const int B = z.dim(0), C = z.dim(1), H = z.dim(2), W = z.dim(3);
        const double g = self.grad[0];
        if (zn->requires_grad) zn->ensure_grad();
        if (mn->requires_grad) mn->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
                const double m = mn->value[c];
                const double bb = std::exp(bn->value[c]);
                const double* zp = z.data() + (int64_t(b) * C + c) * H * W;
                double gmu = 0.0, glogb = 0.0;
                for (int i = 0; i < H * W; ++i) {
                    double tp = (zp[i] + 0.5 - m) / bb;
                    double tm = (zp[i] - 0.5 - m) / bb;
                    double sp = sigmoid(tp), sm = sigmoid(tm);
                    double p = sp - sm;
                    if (p <= kMinBinProb) continue;  // clamped: constant cost
                    double dcost_dp = -kInvLn2 / p;
                    double dp = sp * (1 - sp), dm = sm * (1 - sm);
                    if (zn->requires_grad)
                        zn->grad[(int64_t(b) * C + c) * H * W + i] +=
                            g * dcost_dp * (dp - dm) / bb;
                    gmu += dcost_dp * (-(dp - dm) / bb);
                    glogb += dcost_dp * (-(dp * tp - dm * tm));
                }
                if (mn->requires_grad) mn->grad[c] += g * gmu;
                if (bn->requires_grad) bn->grad[c] += g * glogb;
            }
    });
}

Var wm_error(const Var& theta, const Tensor& X, const std::vector<uint8_t>& bits) {
    const int64_t N = theta.value().size();
    if (X.ndim() != 2 || X.dim(0) != N)
        raise(ErrorClass::Numeric, "wm_error: key matrix rows (" + X.shape_str() +
                                       ") must match flattened weight count " + std::to_string(N));
    const int M = X.dim(1);
    if (int64_t(bits.size()) != M)
        raise(ErrorClass::Numeric, "wm_error: watermark length != key matrix columns");
    std::vector<double> resid(size_t(M), 0.0);
    for (int j = 0; j < M; ++j) {
        double proj = 0.0;
        for (int64_t i = 0; i < N; ++i) proj += X[i * M + j] * theta.value()[i];
        resid[size_t(j)] = double(bits[size_t(j)]) - proj;
    }
    double e = 0.0;
    for (double r : resid) e += r * r;
    auto tn = theta.node();
    return make_op(Tensor::scalar(e), {tn}, [tn, X, resid](Node& self) {
        const int64_t N = tn->value.size();
        const int M = X.dim(1);
        tn->ensure_grad();
        const double g = self.grad[0];
        for (int64_t i = 0; i < N; ++i) {
            double acc = 0.0;
            for (int j = 0; j < M; ++j) acc += X[i * M + j] * resid[size_t(j)];
            tn->grad[i] += g * (-2.0) * acc;
        }
    });
}

void backward(const Var& loss) {
    if (loss.value().size() != 1)
        raise(ErrorClass::Numeric, "backward: loss must be a scalar");
    if (!loss.requires_grad()) return;

    static int epoch = 0;
    const int mark = ++epoch;

    // Iterative post-order DFS over grad-requiring ancestors.
    std::vector<Node*> order;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.push_back({loss.node().get(), 0});
    loss.node()->visit_mark = mark;
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && p->visit_mark != mark) {
                p->visit_mark = mark;
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad();
    loss.node()->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
    }
}

}  // namespace licsec::nn
