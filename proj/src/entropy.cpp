#include "licsec/entropy.hpp"

#include <algorithm>
#include <cmath>

namespace licsec::ec {

namespace {
constexpr uint32_t kTop = 1u << 24;
constexpr uint32_t kBot = 1u << 16;
constexpr uint32_t kLicbVersion = 1;
}  // namespace

void ChannelCdf::validate() const {
    if (smax < smin) raise(ErrorClass::Format, "cdf: empty symbol range");
    if (int(cum.size()) != slot_count() + 1)
        raise(ErrorClass::Format, "cdf: cumulative array size mismatch");
    if (cum.front() != 0 || cum.back() != kCdfTotal)
        raise(ErrorClass::Format, "cdf: cumulative bounds must be 0 and 65536");
    for (size_t i = 1; i < cum.size(); ++i)
        if (cum[i] <= cum[i - 1])
            raise(ErrorClass::Format, "cdf: cumulative values must be strictly increasing");
}

std::vector<uint32_t> renormalize_freqs(const std::vector<double>& weights) {
    const size_t n = weights.size();
    if (n == 0) raise(ErrorClass::Numeric, "renormalize: no slots");
    if (n > kCdfTotal) raise(ErrorClass::Numeric, "renormalize: more slots than total mass");
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) raise(ErrorClass::Numeric, "renormalize: negative weight");
        total += w;
    }
    std::vector<uint32_t> f(n);
    if (total <= 0.0) {
        // degenerate: uniform
        uint32_t base = kCdfTotal / uint32_t(n), extra = kCdfTotal % uint32_t(n);
        for (size_t i = 0; i < n; ++i) f[i] = base + (i < extra ? 1 : 0);
        return f;
    }
    int64_t sum = 0;
    for (size_t i = 0; i < n; ++i) {
        f[i] = uint32_t(std::max<int64_t>(1, llround(weights[i] / total * kCdfTotal)));
        sum += f[i];
    }
    // settle to exactly 2^16: push the difference onto the largest slots,
    // never dropping any slot below 1
    while (sum != kCdfTotal) {
        if (sum < int64_t(kCdfTotal)) {
            size_t arg = size_t(std::max_element(f.begin(), f.end()) - f.begin());
            uint32_t add = uint32_t(int64_t(kCdfTotal) - sum);
            f[arg] += add;
            sum += add;
        } else {
            size_t arg = size_t(std::max_element(f.begin(), f.end()) - f.begin());
            uint32_t cut = uint32_t(std::min<int64_t>(sum - kCdfTotal, f[arg] - 1));
            if (cut == 0)
                raise(ErrorClass::Numeric, "renormalize: cannot settle frequencies");
            f[arg] -= cut;
            sum -= cut;
        }
    }
    return f;
}

namespace {
ChannelCdf build_from_freqs(std::vector<uint32_t> freqs, int32_t smin, int32_t smax,
                            bool with_escape) {
    ChannelCdf t;
    t.smin = smin;
    t.smax = smax;
    t.has_escape = with_escape;
    t.cum.resize(freqs.size() + 1);
    t.cum[0] = 0;
    for (size_t i = 0; i < freqs.size(); ++i) t.cum[i + 1] = t.cum[i] + freqs[i];
    t.validate();
    return t;
}
}  // namespace

ChannelCdf freeze_cdf_probs(const std::vector<double>& probs, int32_t smin,
                            bool with_escape) {
    if (probs.empty()) raise(ErrorClass::Numeric, "freeze_cdf: no symbols");
    std::vector<double> w = probs;
    if (with_escape) w.push_back(0.0);
    int32_t smax = smin + int32_t(probs.size()) - 1;
    return build_from_freqs(renormalize_freqs(w), smin, smax, with_escape);
}

ChannelCdf freeze_cdf_logistic(double mu, double b, int32_t smin, int32_t smax) {
    if (!(b > 0.0)) raise(ErrorClass::Numeric, "freeze_cdf: prior scale must be positive");
    if (smax < smin) raise(ErrorClass::Numeric, "freeze_cdf: empty clip range");
    std::vector<double> w;
    w.reserve(size_t(smax - smin + 2));
    for (int32_t v = smin; v <= smax; ++v)
        w.push_back(logistic_cdf(v + 0.5, mu, b) - logistic_cdf(v - 0.5, mu, b));
    double tail = logistic_cdf(smin - 0.5, mu, b) + (1.0 - logistic_cdf(smax + 0.5, mu, b));
    w.push_back(std::max(tail, 0.0));
    return build_from_freqs(renormalize_freqs(w), smin, smax, true);
}

CdfTable freeze_cdf(const std::vector<double>& mu, const std::vector<double>& b,
                    int32_t smin, int32_t smax) {
    if (mu.size() != b.size()) raise(ErrorClass::Numeric, "freeze_cdf: mu/b size mismatch");
    CdfTable t;
    t.channels.reserve(mu.size());
    for (size_t c = 0; c < mu.size(); ++c)
        t.channels.push_back(freeze_cdf_logistic(mu[c], b[c], smin, smax));
    return t;
}

// ---- range coder --------------------------------------------------------

void RangeEncoder::encode(uint32_t cumfreq, uint32_t freq, uint32_t totfreq) {
    low_ += cumfreq * (range_ /= totfreq);
    range_ *= freq;
    normalize();
}

void RangeEncoder::normalize() {
    while ((low_ ^ (low_ + range_)) < kTop ||
           (range_ < kBot && ((range_ = (0 - low_) & (kBot - 1)), true))) {
        out_.push_back(uint8_t(low_ >> 24));
        low_ <<= 8;
        range_ <<= 8;
    }
}

void RangeEncoder::flush() {
    if (flushed_) return;
    for (int i = 0; i < 4; ++i) {
        out_.push_back(uint8_t(low_ >> 24));
        low_ <<= 8;
    }
    flushed_ = true;
}

RangeDecoder::RangeDecoder(const uint8_t* data, size_t n) : p_(data), end_(data + n) {
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

uint8_t RangeDecoder::next_byte() {
    if (p_ == end_) raise(ErrorClass::Format, "bitstream truncated during decode");
    return *p_++;
}

uint32_t RangeDecoder::decode_freq(uint32_t totfreq) {
    uint32_t v = (code_ - low_) / (range_ /= totfreq);
    return std::min(v, totfreq - 1);
}

void RangeDecoder::decode_update(uint32_t cumfreq, uint32_t freq) {
    low_ += cumfreq * range_;
    range_ *= freq;
    while ((low_ ^ (low_ + range_)) < kTop ||
           (range_ < kBot && ((range_ = (0 - low_) & (kBot - 1)), true))) {
        code_ = (code_ << 8) | next_byte();
        low_ <<= 8;
        range_ <<= 8;
    }
}

// ---- symbol layer --------------------------------------------------------

namespace {
int find_slot(const ChannelCdf& t, uint32_t f) {
    // binary search: largest slot with cumfreq <= f
    int lo = 0, hi = t.slot_count() - 1;
    while (lo < hi) {
        int mid = (lo + hi + 1) / 2;
        if (t.cumfreq(mid) <= f)
            lo = mid;
        else
            hi = mid - 1;
    }
    return lo;
}
}  // namespace

void encode_symbols(RangeEncoder& enc, const int32_t* sym, size_t n,
                    const ChannelCdf& table) {
    for (size_t i = 0; i < n; ++i) {
        int32_t v = sym[i];
        if (table.in_range(v)) {
            int slot = int(v - table.smin);
            enc.encode(table.cumfreq(slot), table.freq(slot));
        } else {
            if (!table.has_escape)
                raise(ErrorClass::Numeric,
                      "encode: symbol " + std::to_string(v) + " outside table range and no escape slot");
            int esc = table.escape_slot();
            enc.encode(table.cumfreq(esc), table.freq(esc));
            uint32_t u = uint32_t(v);
            for (int byte = 0; byte < 4; ++byte) {
                uint32_t bv = (u >> (8 * byte)) & 0xFF;
                enc.encode(bv * 256, 256);  // byte-uniform: fixed 8 bits
            }
        }
    }
}

void decode_symbols(RangeDecoder& dec, int32_t* out, size_t n, const ChannelCdf& table) {
    for (size_t i = 0; i < n; ++i) {
        uint32_t f = dec.decode_freq();
        int slot = find_slot(table, f);
        dec.decode_update(table.cumfreq(slot), table.freq(slot));
        if (table.has_escape && slot == table.escape_slot()) {
            uint32_t u = 0;
            for (int byte = 0; byte < 4; ++byte) {
                uint32_t bv = dec.decode_freq() / 256;
                dec.decode_update(bv * 256, 256);
                u |= bv << (8 * byte);
            }
            out[i] = int32_t(u);
        } else {
            out[i] = table.smin + slot;
        }
    }
}

Bytes ac_encode(const std::vector<int32_t>& symbols, const ChannelCdf& table) {
    table.validate();
    RangeEncoder enc;
    encode_symbols(enc, symbols.data(), symbols.size(), table);
    enc.flush();
    return enc.take();
}

std::vector<int32_t> ac_decode(const Bytes& bytes, const ChannelCdf& table, size_t count) {
    table.validate();
    std::vector<int32_t> out(count);
    if (count == 0) return out;
    RangeDecoder dec(bytes);
    decode_symbols(dec, out.data(), count, table);
    return out;
}

double ideal_code_bits(const std::vector<int32_t>& symbols, const ChannelCdf& table) {
    double bits = 0.0;
    for (int32_t v : symbols) {
        if (table.in_range(v)) {
            bits -= std::log2(double(table.freq(int(v - table.smin))) / kCdfTotal);
        } else {
            bits -= std::log2(double(table.freq(table.escape_slot())) / kCdfTotal);
            bits += 32.0;
        }
    }
    return bits;
}

// ---- bitstream container --------------------------------------------------

Bytes LatentBitstream::serialize() const {
    ByteWriter w;
    w.magic("LICB");
    w.u32(header.version);
    if (header.model_hash.size() != 32)
        raise(ErrorClass::Format, "bitstream: model hash must be 32 bytes");
    w.bytes(header.model_hash);
    w.u32(header.image_h);
    w.u32(header.image_w);
    w.u32(header.patch);
    w.u32(header.overlap);
    w.u32(header.total_stride);
    w.u32(header.channels);
    w.i32(header.clip_min);
    w.i32(header.clip_max);
    w.u32(uint32_t(payloads.size()));
    for (const auto& p : payloads) w.u32(uint32_t(p.size()));
    for (const auto& p : payloads) w.bytes(p);
    return w.take();
}

LatentBitstream LatentBitstream::deserialize(const Bytes& data) {
    ByteReader r(data);
    r.expect_magic("LICB", "bitstream");
    LatentBitstream s;
    s.header.version = r.u32();
    if (s.header.version != kLicbVersion)
        raise(ErrorClass::Format,
              "bitstream: unsupported version " + std::to_string(s.header.version));
    s.header.model_hash = r.bytes(32);
    s.header.image_h = r.u32();
    s.header.image_w = r.u32();
    s.header.patch = r.u32();
    s.header.overlap = r.u32();
    s.header.total_stride = r.u32();
    s.header.channels = r.u32();
    s.header.clip_min = r.i32();
    s.header.clip_max = r.i32();
    if (s.header.image_h == 0 || s.header.image_w == 0 ||
        s.header.image_h > (1u << 20) || s.header.image_w > (1u << 20) ||
        s.header.channels == 0 || s.header.channels > (1u << 12))
        raise(ErrorClass::Format, "bitstream: implausible header dimensions");
    uint32_t n = r.u32();
    if (n == 0 || n > (1u << 20)) raise(ErrorClass::Format, "bitstream: bad patch count");
    std::vector<uint32_t> sizes(n);
    uint64_t total = 0;
    for (auto& sz : sizes) {
        sz = r.u32();
        total += sz;
    }
    if (total > r.remaining())
        raise(ErrorClass::Format, "bitstream: payload sizes exceed file size");
    for (uint32_t i = 0; i < n; ++i) s.payloads.push_back(r.bytes(sizes[i]));
    if (!r.done()) raise(ErrorClass::Format, "bitstream: trailing bytes");
    return s;
}

std::vector<int> patch_starts(int extent, int patch, int overlap) {
    if (patch <= 0 || extent <= patch) return {0};
    if (overlap >= patch) raise(ErrorClass::Usage, "patch overlap must be smaller than patch");
    std::vector<int> starts;
    int step = patch - overlap;
    for (int s = 0;; s += step) {
        if (s + patch >= extent) {
            starts.push_back(extent - patch);
            break;
        }
        starts.push_back(s);
    }
    return starts;
}

}  // namespace licsec::ec
