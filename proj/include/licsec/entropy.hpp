#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "licsec/serialize.hpp"

namespace licsec::ec {

inline double logistic_cdf(double x, double mu, double b) {
    return 1.0 / (1.0 + std::exp(-(x - mu) / b));
}

// Fixed-point CDF for one latent channel. Slot layout: symbols smin..smax
// followed by one escape slot; cumulative frequencies sum to exactly 2^16
// and every slot has mass >= 1.
struct ChannelCdf {
    int32_t smin = 0;
    int32_t smax = 0;
    bool has_escape = true;
    std::vector<uint32_t> cum;  // size = slot_count()+1, cum.front()==0, cum.back()==65536

    int slot_count() const { return int(smax - smin + 1) + (has_escape ? 1 : 0); }
    int escape_slot() const { return int(smax - smin + 1); }
    bool in_range(int32_t v) const { return v >= smin && v <= smax; }
    uint32_t freq(int slot) const { return cum[size_t(slot) + 1] - cum[size_t(slot)]; }
    uint32_t cumfreq(int slot) const { return cum[size_t(slot)]; }
    void validate() const;
};

struct CdfTable {
    std::vector<ChannelCdf> channels;
};

constexpr uint32_t kCdfTotal = 1u << 16;

// Renormalize raw non-negative weights to integers summing to kCdfTotal
// with every slot >= 1. Deterministic.
std::vector<uint32_t> renormalize_freqs(const std::vector<double>& weights);

// Table from explicit bin probabilities (no prior involved).
ChannelCdf freeze_cdf_probs(const std::vector<double>& probs, int32_t smin,
                            bool with_escape);

// Table from a logistic prior over [smin, smax]; out-of-range tail mass is
// assigned to the escape slot.
ChannelCdf freeze_cdf_logistic(double mu, double b, int32_t smin, int32_t smax);

// Per-channel tables for a factorized prior (one (mu,b) pair per channel).
CdfTable freeze_cdf(const std::vector<double>& mu, const std::vector<double>& b,
                    int32_t smin, int32_t smax);

// ---- carry-less range coder (32-bit state, 16-bit probabilities) -------

class RangeEncoder {
public:
    void encode(uint32_t cumfreq, uint32_t freq, uint32_t totfreq = kCdfTotal);
    void flush();
    Bytes take() { return std::move(out_); }
    size_t size() const { return out_.size(); }

private:
    void normalize();
    uint32_t low_ = 0;
    uint32_t range_ = 0xFFFFFFFFu;
    Bytes out_;
    bool flushed_ = false;
};

class RangeDecoder {
public:
    RangeDecoder(const uint8_t* data, size_t n);
    explicit RangeDecoder(const Bytes& b) : RangeDecoder(b.data(), b.size()) {}
    uint32_t decode_freq(uint32_t totfreq = kCdfTotal);
    void decode_update(uint32_t cumfreq, uint32_t freq);

private:
    uint8_t next_byte();
    uint32_t low_ = 0;
    uint32_t range_ = 0xFFFFFFFFu;
    uint32_t code_ = 0;
    const uint8_t* p_;
    const uint8_t* end_;
};

// Symbol-level API. Out-of-range symbols are escape-coded at a fixed rate
// (escape slot, then the 32-bit two's-complement value as four
// byte-uniform symbols).
void encode_symbols(RangeEncoder& enc, const int32_t* sym, size_t n,
                    const ChannelCdf& table);
void decode_symbols(RangeDecoder& dec, int32_t* out, size_t n,
                    const ChannelCdf& table);

Bytes ac_encode(const std::vector<int32_t>& symbols, const ChannelCdf& table);
std::vector<int32_t> ac_decode(const Bytes& bytes, const ChannelCdf& table,
                               size_t count);

// Ideal (Shannon) code length in bits for symbols under a table, escape
// costs included; oracle for the coder-overhead bound.
double ideal_code_bits(const std::vector<int32_t>& symbols, const ChannelCdf& table);

// ---- bitstream container ("LICB") ---------------------------------------

struct BitstreamHeader {
    uint32_t version = 1;
    Bytes model_hash;  // 32 bytes; all-zero = unchecked (float-model path)
    uint32_t image_h = 0, image_w = 0;  // original image size
    uint32_t patch = 0, overlap = 0;    // 0 patch = single shot
    uint32_t total_stride = 1;
    uint32_t channels = 0;
    int32_t clip_min = 0, clip_max = 0;  // symbol range for table derivation
    // grid is derived: see patch_starts()
};

struct LatentBitstream {
    BitstreamHeader header;
    std::vector<Bytes> payloads;  // one per patch (single entry when unpatched)

    Bytes serialize() const;
    static LatentBitstream deserialize(const Bytes& data);
};

// Patch start offsets covering `extent` with size `patch` and the given
// overlap; the final start is clamped so every patch fits.
std::vector<int> patch_starts(int extent, int patch, int overlap);

}  // namespace licsec::ec
