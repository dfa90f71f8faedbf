#include "licsec/int_engine.hpp"

#include <cmath>

namespace licsec::engine {

FixedPointMul quantize_multiplier(double m) {
    if (!(m > 0))
        raise(ErrorClass::Numeric, "requant multiplier must be positive");
    FixedPointMul f;
    int exp = 0;
    double frac = std::frexp(m, &exp);  // m = frac * 2^exp, frac in [0.5, 1)
    int64_t q = llround(frac * (int64_t(1) << 31));
    if (q == (int64_t(1) << 31)) {  // frac rounded up to 1.0
        q >>= 1;
        ++exp;
    }
    f.mult = int32_t(q);
    f.shift = 31 - exp;
    if (f.shift < 1 || f.shift > 62)
        raise(ErrorClass::Numeric, "requant multiplier out of fixed-point range");
    return f;
}

int32_t requant_apply(int64_t acc, FixedPointMul m) {
    // |acc| <= 2^31-1 and mult < 2^31: the product fits int64
    int64_t p = acc * int64_t(m.mult);
    int64_t half = int64_t(1) << (m.shift - 1);
    int64_t r = p >= 0 ? ((p + half) >> m.shift) : -(((-p) + half) >> m.shift);
    return int32_t(r);
}

IntTensor image_to_int(const Image& img) {
    IntTensor t({3, img.height, img.width});
    for (size_t i = 0; i < img.rgb.size(); ++i) {
        double v = std::round(img.rgb[i] * 255.0);
        t.v[i] = int32_t(std::min(255.0, std::max(0.0, v)));
    }
    return t;
}

Image int_to_image(const IntTensor& t) {
    if (t.shape.c != 3) raise(ErrorClass::Numeric, "int_to_image: need 3 channels");
    Image img(t.shape.h, t.shape.w);
    for (size_t i = 0; i < img.rgb.size(); ++i)
        img.rgb[i] = double(std::min(255, std::max(0, t.v[i]))) / 255.0;
    return img;
}

namespace {

// direct integer cross-correlation; accumulator range is proven at load
IntTensor conv_core(const IntLayer& l, const IntTensor& x, int O, int C, int k,
                    int stride, int pad, bool flipped_swapped) {
    const int H = x.shape.h, W = x.shape.w;
    const int Ho = (H + 2 * pad - k) / stride + 1;
    const int Wo = (W + 2 * pad - k) / stride + 1;
    IntTensor y({O, Ho, Wo});
    for (int o = 0; o < O; ++o)
        for (int ho = 0; ho < Ho; ++ho)
            for (int wo = 0; wo < Wo; ++wo) {
                int64_t acc = l.b[size_t(o)];
                for (int c = 0; c < C; ++c)
                    for (int ki = 0; ki < k; ++ki) {
                        int hi = ho * stride + ki - pad;
                        if (hi < 0 || hi >= H) continue;
                        for (int kj = 0; kj < k; ++kj) {
                            int wi = wo * stride + kj - pad;
                            if (wi < 0 || wi >= W) continue;
                            int widx;
                            if (!flipped_swapped) {
                                widx = ((o * C + c) * k + ki) * k + kj;
                            } else {
                                // transposed weights [C_in=c -> O] with
                                // spatially flipped taps
                                widx = ((c * O + o) * k + (k - 1 - ki)) * k + (k - 1 - kj);
                            }
                            acc += int64_t(l.w[size_t(widx)]) *
                                   int64_t(x.v[size_t((c * H + hi) * W + wi)]);
                        }
                    }
                if (acc > 2147483647LL || acc < -2147483648LL)
                    raise(ErrorClass::Numeric,
                          "int32 accumulator overflow in layer " + l.id);
                int32_t r = requant_apply(acc, l.requant);
                r = std::min(l.clip_hi, std::max(l.clip_lo, r));
                y.v[size_t((o * Ho + ho) * Wo + wo)] = r;
            }
    return y;
}

// zero-insertion lowering of the transposed conv onto the conv core
IntTensor zero_insert(const IntTensor& x, int stride, int pad_extra) {
    const int C = x.shape.c, H = x.shape.h, W = x.shape.w;
    const int He = (H - 1) * stride + 1 + 2 * pad_extra;
    const int We = (W - 1) * stride + 1 + 2 * pad_extra;
    IntTensor e({C, He, We});
    for (int c = 0; c < C; ++c)
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w)
                e.v[size_t((c * He + (h * stride + pad_extra)) * We +
                           (w * stride + pad_extra))] = x.v[size_t((c * H + h) * W + w)];
    return e;
}

}  // namespace

IntTensor int_conv(const IntLayer& l, const IntTensor& x) {
    if (x.shape.c != l.spec.in_ch)
        raise(ErrorClass::Numeric, "int_conv: channel mismatch in layer " + l.id);
    if (!l.spec.transposed)
        return conv_core(l, x, l.spec.out_ch, l.spec.in_ch, l.spec.kernel, l.spec.stride,
                         l.spec.pad, false);
    // transposed: y = conv(zero_insert(x), flip/swap(w)), stride 1
    int k = l.spec.kernel;
    IntTensor e = zero_insert(x, l.spec.stride, k - 1 - l.spec.pad);
    IntLayer tmp = l;
    tmp.spec.pad = 0;
    tmp.spec.stride = 1;
    return conv_core(tmp, e, l.spec.out_ch, l.spec.in_ch, k, 1, 0, true);
}

IntModel IntModel::load(const quant::QuantizedModel& qm) {
    IntModel m;
    m.prior_mu = qm.prior_mu;
    m.prior_b = qm.prior_b;
    m.cdf = qm.cdf;
    m.latent_min = qm.latent_min;
    m.latent_max = qm.latent_max;
    m.total_stride = qm.total_stride;
    m.channels = qm.channels;

    auto convert = [](const quant::QuantizedLayer& q, int32_t in_bound,
                      const std::string& id) {
        IntLayer l;
        l.spec = q.spec;
        l.w = q.weights;
        l.b = q.bias;
        l.requant = quantize_multiplier(q.s_in * q.s_w / q.s_out);
        l.clip_lo = q.clip_lo;
        l.clip_hi = q.clip_hi;
        l.in_abs_bound = in_bound;
        l.id = id;

        // headroom proof: worst-case |acc| given declared input bounds
        int64_t worst = 0;
        int O = q.spec.out_ch;
        int64_t per_out = int64_t(q.weights.size()) / O;
        for (int o = 0; o < O; ++o) {
            int64_t s = std::abs(int64_t(q.bias[size_t(o)]));
            for (int64_t i = 0; i < per_out; ++i) {
                size_t idx = q.spec.transposed
                                 ? 0  // handled below
                                 : size_t(o * per_out + i);
                if (!q.spec.transposed) s += std::abs(int64_t(q.weights[idx])) * in_bound;
            }
            if (q.spec.transposed) {
                // weights laid out [C][O][k][k]; gather |w| for this output
                int C = q.spec.in_ch, k = q.spec.kernel;
                for (int c = 0; c < C; ++c)
                    for (int t = 0; t < k * k; ++t)
                        s += std::abs(int64_t(q.weights[size_t((c * O + o) * k * k + t)])) *
                             in_bound;
            }
            worst = std::max(worst, s);
        }
        if (worst > 2147483647LL)
            raise(ErrorClass::Numeric,
                  "layer " + id + ": accumulator headroom violated (worst |acc| = " +
                      std::to_string(worst) + ")");
        return l;
    };

    int32_t bound = 255;
    for (size_t i = 0; i < qm.enc.size(); ++i) {
        m.enc.push_back(convert(qm.enc[i], bound, codec::LicModel::layer_id(false, int(i) + 1)));
        bound = std::max(std::abs(qm.enc[i].clip_lo), std::abs(qm.enc[i].clip_hi));
    }
    bound = std::max(std::abs(qm.latent_min), std::abs(qm.latent_max));
    // escape-decoded latents may exceed the coder range; the engine accepts
    // anything within its declared latent clip
    bound = std::max(bound, std::max(std::abs(qm.enc.back().clip_lo),
                                     std::abs(qm.enc.back().clip_hi)));
    for (size_t i = 0; i < qm.dec.size(); ++i) {
        m.dec.push_back(convert(qm.dec[i], bound, codec::LicModel::layer_id(true, int(i) + 1)));
        bound = std::max(std::abs(qm.dec[i].clip_lo), std::abs(qm.dec[i].clip_hi));
    }
    return m;
}

IntTensor IntModel::forward_layers(const std::vector<IntLayer>& layers,
                                   const IntTensor& in) const {
    IntTensor h = in;
    for (const auto& l : layers) {
        for (int32_t v : h.v)
            if (std::abs(v) > l.in_abs_bound)
                raise(ErrorClass::Numeric, "layer " + l.id + ": input " + std::to_string(v) +
                                               " outside declared bound " +
                                               std::to_string(l.in_abs_bound));
        h = int_conv(l, h);
    }
    return h;
}

IntTensor IntModel::encode_ints(const IntTensor& img255) const {
    return forward_layers(enc, img255);
}

IntTensor IntModel::decode_ints(const IntTensor& latents) const {
    return forward_layers(dec, latents);
}

}  // namespace licsec::engine
