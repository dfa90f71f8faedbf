#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "licsec/quantizer.hpp"

namespace licsec::engine {

// Requantization multiplier as 32-bit fixed point: M ~ mult * 2^-shift,
// mult in [2^30, 2^31).
struct FixedPointMul {
    int32_t mult = 0;
    int shift = 0;
};
FixedPointMul quantize_multiplier(double m);
// round-half-away-from-zero of acc * mult * 2^-shift
int32_t requant_apply(int64_t acc, FixedPointMul m);

struct IntShape {
    int c = 0, h = 0, w = 0;
    int64_t size() const { return int64_t(c) * h * w; }
};

struct IntTensor {
    IntShape shape;
    std::vector<int32_t> v;
    explicit IntTensor(IntShape s = {}) : shape(s), v(size_t(s.size()), 0) {}
};

struct IntLayer {
    codec::ConvSpec spec;
    std::vector<int8_t> w;
    std::vector<int32_t> b;
    FixedPointMul requant;
    int32_t clip_lo = 0, clip_hi = 0;
    int32_t in_abs_bound = 0;  // declared |input| bound used by the headroom proof
    std::string id;
};

class IntModel {
public:
    std::vector<IntLayer> enc, dec;
    std::vector<double> prior_mu, prior_b;
    ec::CdfTable cdf;
    int32_t latent_min = 0, latent_max = 0;
    uint32_t total_stride = 1;
    uint32_t channels = 0;
    Bytes model_hash;  // SHA-256 of the source LICQ bytes

    // Headroom is proven at load: max |acc| over each layer given the
    // declared input bounds must fit an int32 accumulator.
    static IntModel load(const quant::QuantizedModel& qm);

    // 8-bit image [0,255] -> integer latents
    IntTensor encode_ints(const IntTensor& img255) const;
    // integer latents -> 8-bit image values [0,255]
    IntTensor decode_ints(const IntTensor& latents) const;

    IntTensor forward_layers(const std::vector<IntLayer>& layers, const IntTensor& in) const;
};

IntTensor image_to_int(const Image& img);
Image int_to_image(const IntTensor& t);

// int convolution with int32 accumulators (int64 carrier, overflow checked)
IntTensor int_conv(const IntLayer& l, const IntTensor& x);

}  // namespace licsec::engine
