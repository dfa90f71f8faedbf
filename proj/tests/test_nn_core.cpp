#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "licsec/nn.hpp"

using namespace licsec;
using nn::Tensor;
using nn::Var;

namespace {

// Independent direct 6-loop convolution oracle (never touches the im2col path).
Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int O = w.dim(0), k = w.dim(2);
    const int Ho = (H + 2 * pad - k) / stride + 1;
    const int Wo = (W + 2 * pad - k) / stride + 1;
    Tensor y({B, O, Ho, Wo});
    for (int bi = 0; bi < B; ++bi)
        for (int o = 0; o < O; ++o)
            for (int ho = 0; ho < Ho; ++ho)
                for (int wo = 0; wo < Wo; ++wo) {
                    double acc = b[o];
                    for (int c = 0; c < C; ++c)
                        for (int ki = 0; ki < k; ++ki)
                            for (int kj = 0; kj < k; ++kj) {
                                int hi = ho * stride + ki - pad;
                                int wi = wo * stride + kj - pad;
                                if (hi < 0 || hi >= H || wi < 0 || wi >= W) continue;
                                acc += x.at4(bi, c, hi, wi) *
                                       w[((int64_t(o) * C + c) * k + ki) * k + kj];
                            }
                    y.at4(bi, o, ho, wo) = acc;
                }
    return y;
}

// Scatter-based transposed-conv oracle straight from the definition.
Tensor tconv_oracle(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    const int B = x.dim(0), C = x.dim(1), Hi = x.dim(2), Wi = x.dim(3);
    const int O = w.dim(1), k = w.dim(2);
    const int Ho = (Hi - 1) * stride - 2 * pad + k;
    const int Wo = (Wi - 1) * stride - 2 * pad + k;
    Tensor y({B, O, Ho, Wo});
    for (int bi = 0; bi < B; ++bi) {
        for (int o = 0; o < O; ++o)
            for (int i = 0; i < Ho * Wo; ++i)
                y.data()[(int64_t(bi) * O + o) * Ho * Wo + i] = b[o];
        for (int c = 0; c < C; ++c)
            for (int hi = 0; hi < Hi; ++hi)
                for (int wi = 0; wi < Wi; ++wi)
                    for (int o = 0; o < O; ++o)
                        for (int ki = 0; ki < k; ++ki)
                            for (int kj = 0; kj < k; ++kj) {
                                int ho = hi * stride + ki - pad;
                                int wo = wi * stride + kj - pad;
                                if (ho < 0 || ho >= Ho || wo < 0 || wo >= Wo) continue;
                                y.at4(bi, o, ho, wo) +=
                                    x.at4(bi, c, hi, wi) *
                                    w[((int64_t(c) * O + o) * k + ki) * k + kj];
                            }
    }
    return y;
}

// Central finite differences of `loss()` wrt every element of p's value.
double max_fd_rel_err(nn::Parameter& p, const Tensor& analytic,
                      const std::function<double()>& loss, double h = 1e-5) {
    double worst = 0.0;
    Tensor& v = p.value();
    for (int64_t i = 0; i < v.size(); ++i) {
        double keep = v[i];
        v[i] = keep + h;
        double lp = loss();
        v[i] = keep - h;
        double lm = loss();
        v[i] = keep;
        double fd = (lp - lm) / (2 * h);
        double err = std::abs(fd - analytic[i]) /
                     std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
        worst = std::max(worst, err);
    }
    return worst;
}

double dot(const Tensor& a, const Tensor& b) {
    double acc = 0;
    for (int64_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

}  // namespace

TEST_CASE("conv2d: all-ones 3x3 kernel on all-ones input sums to 9") {
    Var x(Tensor::full({1, 1, 3, 3}, 1.0));
    Var w(Tensor::full({1, 1, 3, 3}, 1.0));
    Var b(Tensor::zeros({1}));
    Var y = nn::conv2d(x, w, b, 1, 0);
    REQUIRE(y.value().shape() == std::vector<int>{1, 1, 1, 1});
    CHECK(y.value()[0] == doctest::Approx(9.0));
}

TEST_CASE("conv2d: 1x1 identity kernel reproduces the input") {
    Rng rng(7);
    Var x(Tensor::uniform({2, 3, 5, 4}, -1, 1, rng));
    Tensor w({3, 3, 1, 1});
    for (int o = 0; o < 3; ++o) w[o * 3 + o] = 1.0;
    Var y = nn::conv2d(x, Var(std::move(w)), Var(Tensor::zeros({3})), 1, 0);
    for (int64_t i = 0; i < x.value().size(); ++i) CHECK(y.value()[i] == x.value()[i]);
}

TEST_CASE("conv2d matches the direct 6-loop oracle elementwise") {
    Rng rng(11);
    Tensor x = Tensor::uniform({1, 2, 5, 5}, -1, 1, rng);
    Tensor w = Tensor::uniform({3, 2, 3, 3}, -1, 1, rng);
    Tensor b = Tensor::uniform({3}, -1, 1, rng);
    Tensor want = conv_oracle(x, w, b, 2, 1);
    Var y = nn::conv2d(Var(x), Var(w), Var(b), 2, 1);
    REQUIRE(y.value().shape() == want.shape());
    for (int64_t i = 0; i < want.size(); ++i)
        CHECK(y.value()[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("conv2d rejects shape mismatches with a descriptive error") {
    Var x(Tensor::zeros({1, 2, 4, 4}));
    Var w(Tensor::zeros({3, 5, 3, 3}));
    Var b(Tensor::zeros({3}));
    CHECK_THROWS_WITH_AS(nn::conv2d(x, w, b, 1, 1),
                         doctest::Contains("channels"), Error);
    Var wbig(Tensor::zeros({3, 2, 7, 7}));
    CHECK_THROWS_AS(nn::conv2d(x, wbig, b, 1, 0), Error);
}

TEST_CASE("conv2d does not mutate its inputs") {
    Rng rng(3);
    Tensor x = Tensor::uniform({1, 2, 4, 4}, -1, 1, rng);
    Tensor xcopy = x;
    Var xv(x);
    nn::conv2d(xv, Var(Tensor::uniform({2, 2, 3, 3}, -1, 1, rng)),
               Var(Tensor::zeros({2})), 1, 1);
    for (int64_t i = 0; i < x.size(); ++i) CHECK(xv.value()[i] == xcopy[i]);
}

TEST_CASE("conv2d_transposed: stride 1, k=1, unit weight is identity") {
    Rng rng(5);
    Tensor x = Tensor::uniform({1, 1, 4, 4}, -1, 1, rng);
    Var y = nn::conv2d_transposed(Var(x), Var(Tensor::full({1, 1, 1, 1}, 1.0)),
                                  Var(Tensor::zeros({1})), 1, 0);
    for (int64_t i = 0; i < x.size(); ++i) CHECK(y.value()[i] == x[i]);
}

TEST_CASE("conv2d_transposed: stride 2, k=2 ones input gives 4x4 of ones") {
    Var x(Tensor::full({1, 1, 2, 2}, 1.0));
    Var w(Tensor::full({1, 1, 2, 2}, 1.0));
    Var y = nn::conv2d_transposed(x, w, Var(Tensor::zeros({1})), 2, 0);
    REQUIRE(y.value().shape() == std::vector<int>{1, 1, 4, 4});
    for (int64_t i = 0; i < 16; ++i) CHECK(y.value()[i] == doctest::Approx(1.0));
}

TEST_CASE("conv2d_transposed matches the scatter oracle") {
    Rng rng(13);
    Tensor x = Tensor::uniform({2, 3, 4, 5}, -1, 1, rng);
    Tensor w = Tensor::uniform({3, 2, 4, 4}, -1, 1, rng);
    Tensor b = Tensor::uniform({2}, -1, 1, rng);
    Tensor want = tconv_oracle(x, w, b, 2, 1);
    Var y = nn::conv2d_transposed(Var(x), Var(w), Var(b), 2, 1);
    REQUIRE(y.value().shape() == want.shape());
    for (int64_t i = 0; i < want.size(); ++i)
        CHECK(y.value()[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("conv2d / conv2d_transposed adjoint identity on random 4x4 inputs") {
    // <conv2d(a), b> == <a, conv2d_transposed(b)> with a shared weight.
    // Geometry must mirror exactly (k - 2*pad == stride) so the two ops
    // connect the same shapes.
    Rng rng(17);
    struct Geo {
        int k, stride, pad;
    };
    for (Geo g : {Geo{4, 2, 1}, Geo{3, 1, 1}, Geo{2, 2, 0}}) {
        for (int trial = 0; trial < 5; ++trial) {
            Tensor w = Tensor::uniform({4, 3, g.k, g.k}, -1, 1, rng);  // [O,C,k,k]
            Tensor a = Tensor::uniform({1, 3, 4, 4}, -1, 1, rng);
            Var fwd = nn::conv2d(Var(a), Var(w), Var(Tensor::zeros({4})), g.stride, g.pad);
            Tensor bt = Tensor::uniform(fwd.value().shape(), -1, 1, rng);
            // the conv weight [O,C,k,k] reads directly as the transposed
            // layout [in=O, out=C, k, k]; the adjoint shares the buffer
            Tensor wt({4, 3, g.k, g.k}, w.raw());
            Var back =
                nn::conv2d_transposed(Var(bt), Var(wt), Var(Tensor::zeros({3})), g.stride, g.pad);
            REQUIRE(back.value().shape() == a.shape());
            CHECK(dot(fwd.value(), bt) == doctest::Approx(dot(a, back.value())).epsilon(1e-9));
        }
    }
}

TEST_CASE("relu examples") {
    Var x(Tensor({3}, {-1, 0, 2}));
    Var y = nn::relu(x);
    CHECK(y.value()[0] == 0.0);
    CHECK(y.value()[1] == 0.0);
    CHECK(y.value()[2] == 2.0);

    Var allneg(Tensor::full({2, 2}, -3.0));
    Var z = nn::relu(allneg);
    for (int64_t i = 0; i < 4; ++i) CHECK(z.value()[i] == 0.0);

    // gradient of sum(relu(x)) at [-1, 2] is the positivity indicator
    Var p = Var::param(Tensor({2}, {-1, 2}));
    Var loss = nn::sum(nn::relu(p));
    nn::backward(loss);
    CHECK(p.grad()[0] == 0.0);
    CHECK(p.grad()[1] == 1.0);
}

TEST_CASE("backward: loss = sum(w * x) gives grad(w) = x") {
    Rng rng(23);
    Tensor xval = Tensor::uniform({7}, -2, 2, rng);
    Var w = Var::param(Tensor::uniform({7}, -1, 1, rng));
    Var loss = nn::sum(nn::mul(w, Var::constant(xval)));
    nn::backward(loss);
    for (int64_t i = 0; i < 7; ++i) CHECK(w.grad()[i] == doctest::Approx(xval[i]));
}

TEST_CASE("backward rejects non-scalar losses") {
    Var w = Var::param(Tensor::zeros({3}));
    CHECK_THROWS_AS(nn::backward(nn::relu(w)), Error);
}

TEST_CASE("backward: grads of summed losses add (linearity)") {
    Rng rng(29);
    Tensor x1 = Tensor::uniform({5}, -1, 1, rng);
    Tensor x2 = Tensor::uniform({5}, -1, 1, rng);

    auto grad_of = [&](const Tensor* a, const Tensor* b) {
        Var w = Var::param(Tensor::full({5}, 0.3));
        Var loss = a ? nn::sum(nn::mul(w, Var::constant(*a))) : Var();
        if (b) {
            Var l2 = nn::sum(nn::mul(w, Var::constant(*b)));
            loss = loss.defined() ? loss + l2 : l2;
        }
        nn::backward(loss);
        return w.grad();
    };
    Tensor g1 = grad_of(&x1, nullptr);
    Tensor g2 = grad_of(nullptr, &x2);
    Tensor g12 = grad_of(&x1, &x2);
    for (int64_t i = 0; i < 5; ++i)
        CHECK(g12[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-12));
}

TEST_CASE("gradient check: MSE(conv2d(x), target) against central differences") {
    Rng rng(31);
    nn::Parameter w("w", Tensor::uniform({2, 2, 3, 3}, -1, 1, rng));
    nn::Parameter b("b", Tensor::uniform({2}, -0.5, 0.5, rng));
    nn::Parameter xin("x", Tensor::uniform({1, 2, 6, 6}, -1, 1, rng));
    Tensor target = Tensor::uniform({1, 2, 3, 3}, 0, 1, rng);

    auto loss_value = [&] {
        Var y = nn::conv2d(xin.var, w.var, b.var, 2, 1);
        return nn::mse(y, Var::constant(target)).value()[0];
    };
    Var loss = nn::mse(nn::conv2d(xin.var, w.var, b.var, 2, 1), Var::constant(target));
    nn::backward(loss);

    CHECK(max_fd_rel_err(w, w.var.grad(), loss_value) < 1e-4);
    CHECK(max_fd_rel_err(b, b.var.grad(), loss_value) < 1e-4);
    CHECK(max_fd_rel_err(xin, xin.var.grad(), loss_value) < 1e-4);
}

TEST_CASE("gradient check: transposed conv chain against central differences") {
    Rng rng(37);
    nn::Parameter w("w", Tensor::uniform({3, 2, 4, 4}, -1, 1, rng));
    nn::Parameter b("b", Tensor::uniform({2}, -0.5, 0.5, rng));
    nn::Parameter xin("x", Tensor::uniform({1, 3, 3, 3}, -1, 1, rng));
    Tensor target = Tensor::uniform({1, 2, 6, 6}, 0, 1, rng);

    auto loss_value = [&] {
        Var y = nn::conv2d_transposed(xin.var, w.var, b.var, 2, 1);
        return nn::mse(y, Var::constant(target)).value()[0];
    };
    Var loss = nn::mse(nn::conv2d_transposed(xin.var, w.var, b.var, 2, 1),
                       Var::constant(target));
    nn::backward(loss);
    CHECK(max_fd_rel_err(w, w.var.grad(), loss_value) < 1e-4);
    CHECK(max_fd_rel_err(b, b.var.grad(), loss_value) < 1e-4);
    CHECK(max_fd_rel_err(xin, xin.var.grad(), loss_value) < 1e-4);
}

TEST_CASE("gradient check: logistic rate term") {
    Rng rng(41);
    nn::Parameter z("z", Tensor::uniform({1, 2, 3, 3}, -3, 3, rng));
    nn::Parameter mu("mu", Tensor::uniform({2}, -1, 1, rng));
    nn::Parameter lb("lb", Tensor::uniform({2}, -0.5, 0.5, rng));

    auto loss_value = [&] {
        return nn::logistic_bits(z.var, mu.var, lb.var).value()[0];
    };
    Var loss = nn::logistic_bits(z.var, mu.var, lb.var);
    nn::backward(loss);
    CHECK(max_fd_rel_err(z, z.var.grad(), loss_value) < 1e-4);
    CHECK(max_fd_rel_err(mu, mu.var.grad(), loss_value) < 1e-4);
    CHECK(max_fd_rel_err(lb, lb.var.grad(), loss_value) < 1e-4);
}

TEST_CASE("gradient check: watermark regression error") {
    Rng rng(43);
    const int N = 40, M = 8;
    nn::Parameter theta("t", Tensor::uniform({N}, -1, 1, rng));
    Tensor X = Tensor::normal({N, M}, 0, 1, rng);
    std::vector<uint8_t> bits(M);
    for (auto& bb : bits) bb = rng.coin() ? 1 : 0;

    auto loss_value = [&] { return nn::wm_error(theta.var, X, bits).value()[0]; };
    Var loss = nn::wm_error(theta.var, X, bits);
    nn::backward(loss);
    CHECK(max_fd_rel_err(theta, theta.var.grad(), loss_value) < 1e-4);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    nn::Parameter p("p", Tensor({3}, {1.0, -2.0, 0.5}));
    nn::Adam opt({&p});
    opt.zero_grad();
    opt.step();
    CHECK(p.value()[0] == 1.0);
    CHECK(p.value()[1] == -2.0);
    CHECK(p.value()[2] == 0.5);
}

TEST_CASE("adam: first step with unit gradient moves by about -lr") {
    // bias-corrected first step: -lr * g / (|g| + eps) ~= -lr
    nn::Parameter p("p", Tensor({1}, {0.0}));
    nn::Adam opt({&p}, {.lr = 0.1});
    p.grad()[0] = 1.0;
    opt.step();
    CHECK(p.value()[0] == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("adam: identical runs are bit-identical") {
    auto run = [] {
        Rng rng(99);
        nn::Parameter p("p", Tensor::uniform({6}, -1, 1, rng));
        nn::Adam opt({&p}, {.lr = 0.05});
        for (int i = 0; i < 25; ++i) {
            Var loss = nn::mse(p.var, Var::constant(Tensor::zeros({6})));
            opt.zero_grad();
            nn::backward(loss);
            opt.step();
        }
        return p.value();
    };
    Tensor a = run(), b = run();
    for (int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("fake_quant_sym: STE passes gradients unchanged inside the range") {
    Rng rng(53);
    nn::Parameter theta("t", Tensor::uniform({20}, -0.9, 0.9, rng));
    Var s = Var::constant(Tensor::scalar(0.01));
    Tensor coeff = Tensor::uniform({20}, -1, 1, rng);

    Var q = nn::fake_quant_sym(theta.var, s, 127);
    Var loss = nn::sum(nn::mul(q, Var::constant(coeff)));
    nn::backward(loss);
    // dL/dtheta must equal dL/dq = coeff (identity pass-through)
    for (int64_t i = 0; i < 20; ++i)
        CHECK(theta.var.grad()[i] == doctest::Approx(coeff[i]));
}

TEST_CASE("fake_quant_sym: gradient blocked outside the clip range") {
    nn::Parameter theta("t", Tensor({2}, {5.0, 0.5}));  // 5.0/0.01 = 500 > 127
    Var s = Var::constant(Tensor::scalar(0.01));
    Var loss = nn::sum(nn::fake_quant_sym(theta.var, s, 127));
    nn::backward(loss);
    CHECK(theta.var.grad()[0] == 0.0);
    CHECK(theta.var.grad()[1] == 1.0);
}
