#include "licsec/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "licsec/common.hpp"

namespace licsec::metrics {

namespace {

double mse_raw(const double* a, const double* b, size_t n) {
    double acc = 0;
    for (size_t i = 0; i < n; ++i) {
        double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / double(n);
}

double mse_to_db(double mse) {
    if (mse <= 0.0) return kDbCap;
    return std::min(kDbCap, 10.0 * std::log10(1.0 / mse));
}

}  // namespace

double psnr(const nn::Tensor& a, const nn::Tensor& b) {
    if (!a.same_shape(b))
        raise(ErrorClass::Numeric, "psnr: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    return mse_to_db(mse_raw(a.data(), b.data(), size_t(a.size())));
}

double psnr(const Image& a, const Image& b) {
    if (a.height != b.height || a.width != b.width)
        raise(ErrorClass::Numeric, "psnr: image size mismatch");
    return mse_to_db(mse_raw(a.rgb.data(), b.rgb.data(), a.rgb.size()));
}

// ---- MS-SSIM -------------------------------------------------------------

namespace {

struct Plane {
    int h = 0, w = 0;
    std::vector<double> v;
    double at(int y, int x) const { return v[size_t(y) * w + x]; }
};

std::vector<double> gaussian_kernel(int win, double sigma) {
    std::vector<double> k(size_t(win));
    double sum = 0;
    for (int i = 0; i < win; ++i) {
        double d = i - (win - 1) / 2.0;
        k[size_t(i)] = std::exp(-d * d / (2 * sigma * sigma));
        sum += k[size_t(i)];
    }
    for (auto& x : k) x /= sum;
    return k;
}

// separable 'valid' Gaussian filter
Plane blur_valid(const Plane& p, const std::vector<double>& k) {
    int win = int(k.size());
    Plane tmp;
    tmp.h = p.h;
    tmp.w = p.w - win + 1;
    tmp.v.resize(size_t(tmp.h) * tmp.w);
    for (int y = 0; y < tmp.h; ++y)
        for (int x = 0; x < tmp.w; ++x) {
            double acc = 0;
            for (int i = 0; i < win; ++i) acc += k[size_t(i)] * p.at(y, x + i);
            tmp.v[size_t(y) * tmp.w + x] = acc;
        }
    Plane out;
    out.h = p.h - win + 1;
    out.w = tmp.w;
    out.v.resize(size_t(out.h) * out.w);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) {
            double acc = 0;
            for (int i = 0; i < win; ++i) acc += k[size_t(i)] * tmp.at(y + i, x);
            out.v[size_t(y) * out.w + x] = acc;
        }
    return out;
}

Plane downsample2(const Plane& p) {
    Plane out;
    out.h = p.h / 2;
    out.w = p.w / 2;
    out.v.resize(size_t(out.h) * out.w);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x)
            out.v[size_t(y) * out.w + x] =
                0.25 * (p.at(2 * y, 2 * x) + p.at(2 * y, 2 * x + 1) +
                        p.at(2 * y + 1, 2 * x) + p.at(2 * y + 1, 2 * x + 1));
    return out;
}

void ssim_terms(const Plane& a, const Plane& b, double& cs, double& lum) {
    constexpr double C1 = 0.01 * 0.01;  // (K1*L)^2, L=1
    constexpr double C2 = 0.03 * 0.03;
    int win = std::min({11, a.h, a.w});
    if (win % 2 == 0) --win;
    auto k = gaussian_kernel(win, 1.5 * win / 11.0);

    Plane mua = blur_valid(a, k), mub = blur_valid(b, k);
    Plane a2 = a, b2 = b, ab = a;
    for (size_t i = 0; i < a.v.size(); ++i) {
        a2.v[i] = a.v[i] * a.v[i];
        b2.v[i] = b.v[i] * b.v[i];
        ab.v[i] = a.v[i] * b.v[i];
    }
    Plane saa = blur_valid(a2, k), sbb = blur_valid(b2, k), sab = blur_valid(ab, k);

    double cs_sum = 0, l_sum = 0;
    size_t n = mua.v.size();
    for (size_t i = 0; i < n; ++i) {
        double ma = mua.v[i], mb = mub.v[i];
        double va = saa.v[i] - ma * ma;
        double vb = sbb.v[i] - mb * mb;
        double vab = sab.v[i] - ma * mb;
        cs_sum += (2 * vab + C2) / (va + vb + C2);
        l_sum += (2 * ma * mb + C1) / (ma * ma + mb * mb + C1);
    }
    cs = cs_sum / double(n);
    lum = l_sum / double(n);
}

}  // namespace

double ms_ssim(const Image& a, const Image& b) {
    if (a.height != b.height || a.width != b.width)
        raise(ErrorClass::Numeric, "ms_ssim: image size mismatch");
    if (std::min(a.height, a.width) < 32)
        raise(ErrorClass::Numeric, "ms_ssim: minimum dimension is 32 (5 dyadic scales)");

    static const double weights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    double score_rgb = 0;
    for (int c = 0; c < 3; ++c) {
        Plane pa{a.height, a.width, {}}, pb{b.height, b.width, {}};
        pa.v.assign(a.rgb.begin() + size_t(c) * a.height * a.width,
                    a.rgb.begin() + size_t(c + 1) * a.height * a.width);
        pb.v.assign(b.rgb.begin() + size_t(c) * b.height * b.width,
                    b.rgb.begin() + size_t(c + 1) * b.height * b.width);
        double score = 1.0;
        for (int s = 0; s < 5; ++s) {
            double cs, lum;
            ssim_terms(pa, pb, cs, lum);
            if (s < 4) {
                score *= std::pow(std::max(cs, 0.0), weights[s]);
                pa = downsample2(pa);
                pb = downsample2(pb);
            } else {
                score *= std::pow(std::max(cs, 0.0), weights[s]) *
                         std::pow(std::max(lum, 0.0), weights[s]);
            }
        }
        score_rgb += score;
    }
    return score_rgb / 3.0;
}

double msssim_db(double score) {
    if (score >= 1.0) return kDbCap;
    return std::min(kDbCap, -10.0 * std::log10(1.0 - score));
}

// ---- Bjontegaard deltas ----------------------------------------------------

void RDCurve::validate(size_t min_points) const {
    if (points.size() < min_points)
        raise(ErrorClass::Numeric, "rd curve needs at least " + std::to_string(min_points) + " points");
    for (size_t i = 0; i < points.size(); ++i) {
        if (!(points[i].bpp > 0)) raise(ErrorClass::Numeric, "rd curve: bpp must be positive");
        if (i && !(points[i].bpp > points[i - 1].bpp))
            raise(ErrorClass::Numeric, "rd curve: bpp must be strictly increasing");
    }
}

namespace {

// least-squares cubic through (x,y), x centered for conditioning
struct Cubic {
    double x0 = 0;
    double c[4] = {0, 0, 0, 0};
    double eval(double x) const {
        double t = x - x0;
        return ((c[3] * t + c[2]) * t + c[1]) * t + c[0];
    }
    // antiderivative evaluated at x
    double integral(double x) const {
        double t = x - x0;
        return ((c[3] * t / 4 + c[2] / 3) * t + c[1] / 2) * t * t + c[0] * t;
    }
};

Cubic fit_cubic(const std::vector<double>& xs, const std::vector<double>& ys) {
    const size_t n = xs.size();
    Cubic f;
    for (double x : xs) f.x0 += x;
    f.x0 /= double(n);

    double A[4][4] = {};
    double rhs[4] = {};
    for (size_t i = 0; i < n; ++i) {
        double t = xs[i] - f.x0;
        double pw[4] = {1, t, t * t, t * t * t};
        for (int r = 0; r < 4; ++r) {
            rhs[r] += pw[r] * ys[i];
            for (int c = 0; c < 4; ++c) A[r][c] += pw[r] * pw[c];
        }
    }
    // Gaussian elimination with partial pivoting
    int idx[4] = {0, 1, 2, 3};
    for (int col = 0; col < 4; ++col) {
        int piv = col;
        for (int r = col + 1; r < 4; ++r)
            if (std::abs(A[idx[r]][col]) > std::abs(A[idx[piv]][col])) piv = r;
        std::swap(idx[col], idx[piv]);
        double d = A[idx[col]][col];
        if (std::abs(d) < 1e-30) raise(ErrorClass::Numeric, "bd fit: singular system");
        for (int r = col + 1; r < 4; ++r) {
            double m = A[idx[r]][col] / d;
            for (int c2 = col; c2 < 4; ++c2) A[idx[r]][c2] -= m * A[idx[col]][c2];
            rhs[idx[r]] -= m * rhs[idx[col]];
        }
    }
    for (int col = 3; col >= 0; --col) {
        double acc = rhs[idx[col]];
        for (int c2 = col + 1; c2 < 4; ++c2) acc -= A[idx[col]][c2] * f.c[c2];
        f.c[col] = acc / A[idx[col]][col];
    }
    return f;
}

// monotone-x piecewise cubic Hermite (Fritsch-Carlson slopes)
struct Pchip {
    std::vector<double> x, y, m;
    double eval(double xv) const {
        size_t i = seg(xv);
        double h = x[i + 1] - x[i], t = (xv - x[i]) / h;
        double h00 = (1 + 2 * t) * (1 - t) * (1 - t), h10 = t * (1 - t) * (1 - t);
        double h01 = t * t * (3 - 2 * t), h11 = t * t * (t - 1);
        return h00 * y[i] + h * h10 * m[i] + h01 * y[i + 1] + h * h11 * m[i + 1];
    }
    double integrate(double lo, double hi, int grid) const {
        // exact per-segment polynomial integration
        double total = 0;
        (void)grid;
        for (size_t i = 0; i + 1 < x.size(); ++i) {
            double a = std::max(lo, x[i]), b = std::min(hi, x[i + 1]);
            if (b <= a) continue;
            // integrate the Hermite cubic on [a,b] with 2-point Gauss (exact
            // for cubics)
            double c1 = (a + b) / 2 - (b - a) / (2 * std::sqrt(3.0));
            double c2 = (a + b) / 2 + (b - a) / (2 * std::sqrt(3.0));
            total += (b - a) / 2 * (eval(c1) + eval(c2));
        }
        return total;
    }

private:
    size_t seg(double xv) const {
        size_t i = 0;
        while (i + 2 < x.size() && xv > x[i + 1]) ++i;
        return i;
    }
};

Pchip fit_pchip(std::vector<double> xs, std::vector<double> ys) {
    const size_t n = xs.size();
    Pchip p;
    p.x = std::move(xs);
    p.y = std::move(ys);
    p.m.resize(n);
    std::vector<double> d(n - 1), h(n - 1);
    for (size_t i = 0; i + 1 < n; ++i) {
        h[i] = p.x[i + 1] - p.x[i];
        d[i] = (p.y[i + 1] - p.y[i]) / h[i];
    }
    p.m[0] = d[0];
    p.m[n - 1] = d[n - 2];
    for (size_t i = 1; i + 1 < n; ++i) {
        if (d[i - 1] * d[i] <= 0)
            p.m[i] = 0;
        else {
            double w1 = 2 * h[i] + h[i - 1], w2 = h[i] + 2 * h[i - 1];
            p.m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
        }
    }
    return p;
}

struct PreparedCurves {
    std::vector<double> xa, ya, xb, yb;
    double lo, hi;
};

// x := log10(bpp) (or quality for bd-rate); validated for overlap
PreparedCurves prepare(const std::vector<double>& x_a, const std::vector<double>& y_a,
                       const std::vector<double>& x_b, const std::vector<double>& y_b) {
    if (x_a.size() < 4 || x_b.size() < 4)
        raise(ErrorClass::Numeric, "bd: each curve needs >= 4 points");
    if (x_a.size() != y_a.size() || x_b.size() != y_b.size())
        raise(ErrorClass::Numeric, "bd: x/y size mismatch");
    PreparedCurves p{x_a, y_a, x_b, y_b, 0, 0};
    p.lo = std::max(*std::min_element(p.xa.begin(), p.xa.end()),
                    *std::min_element(p.xb.begin(), p.xb.end()));
    p.hi = std::min(*std::max_element(p.xa.begin(), p.xa.end()),
                    *std::max_element(p.xb.begin(), p.xb.end()));
    if (!(p.hi > p.lo))
        raise(ErrorClass::Numeric, "bd: curves do not overlap in the shared axis range");
    return p;
}

std::vector<double> log10_of(const std::vector<double>& v) {
    std::vector<double> out;
    out.reserve(v.size());
    for (double x : v) {
        if (!(x > 0)) raise(ErrorClass::Numeric, "bd: rates must be positive");
        out.push_back(std::log10(x));
    }
    return out;
}

double avg_gap(const PreparedCurves& p, BdFit fit, bool trapezoid, int grid) {
    if (fit == BdFit::Cubic) {
        Cubic fa = fit_cubic(p.xa, p.ya), fb = fit_cubic(p.xb, p.yb);
        if (!trapezoid)
            return ((fb.integral(p.hi) - fb.integral(p.lo)) -
                    (fa.integral(p.hi) - fa.integral(p.lo))) /
                   (p.hi - p.lo);
        double acc = 0;
        for (int i = 0; i < grid; ++i) {
            double x0 = p.lo + (p.hi - p.lo) * i / grid;
            double x1 = p.lo + (p.hi - p.lo) * (i + 1) / grid;
            double d0 = fb.eval(x0) - fa.eval(x0);
            double d1 = fb.eval(x1) - fa.eval(x1);
            acc += (x1 - x0) * (d0 + d1) / 2;
        }
        return acc / (p.hi - p.lo);
    }
    // piecewise-cubic variant: x must be ascending
    auto sorted_pair = [](std::vector<double> x, std::vector<double> y) {
        std::vector<size_t> idx(x.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](size_t i, size_t j) { return x[i] < x[j]; });
        std::vector<double> xs, ys;
        for (size_t i : idx) {
            xs.push_back(x[i]);
            ys.push_back(y[i]);
        }
        return std::pair{xs, ys};
    };
    auto [xa, ya] = sorted_pair(p.xa, p.ya);
    auto [xb, yb] = sorted_pair(p.xb, p.yb);
    Pchip fa = fit_pchip(xa, ya), fb = fit_pchip(xb, yb);
    return (fb.integrate(p.lo, p.hi, grid) - fa.integrate(p.lo, p.hi, grid)) / (p.hi - p.lo);
}

}  // namespace

double bd_quality(const std::vector<double>& bpp_a, const std::vector<double>& q_a,
                  const std::vector<double>& bpp_b, const std::vector<double>& q_b,
                  BdFit fit) {
    PreparedCurves p = prepare(log10_of(bpp_a), q_a, log10_of(bpp_b), q_b);
    return avg_gap(p, fit, false, 0);
}

double bd_quality_trapezoid(const std::vector<double>& bpp_a, const std::vector<double>& q_a,
                            const std::vector<double>& bpp_b, const std::vector<double>& q_b,
                            int grid_points, BdFit fit) {
    PreparedCurves p = prepare(log10_of(bpp_a), q_a, log10_of(bpp_b), q_b);
    return avg_gap(p, fit, true, grid_points);
}

double bd_rate(const std::vector<double>& bpp_a, const std::vector<double>& q_a,
               const std::vector<double>& bpp_b, const std::vector<double>& q_b,
               BdFit fit) {
    // axes swapped: fit log10(rate) as a function of quality
    PreparedCurves p = prepare(q_a, log10_of(bpp_a), q_b, log10_of(bpp_b));
    double d = avg_gap(p, fit, false, 0);
    return (std::pow(10.0, d) - 1.0) * 100.0;
}

namespace {
void split_curve(const RDCurve& c, std::vector<double>& bpp, std::vector<double>& q) {
    c.validate();
    for (const auto& pt : c.points) {
        bpp.push_back(pt.bpp);
        q.push_back(pt.psnr);
    }
}
}  // namespace

double bd_psnr(const RDCurve& a, const RDCurve& b, BdFit fit) {
    std::vector<double> ba, qa, bb, qb;
    split_curve(a, ba, qa);
    split_curve(b, bb, qb);
    return bd_quality(ba, qa, bb, qb, fit);
}

double bd_rate(const RDCurve& a, const RDCurve& b, BdFit fit) {
    std::vector<double> ba, qa, bb, qb;
    split_curve(a, ba, qa);
    split_curve(b, bb, qb);
    return bd_rate(ba, qa, bb, qb, fit);
}

}  // namespace licsec::metrics
