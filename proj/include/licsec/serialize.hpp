#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "licsec/common.hpp"

namespace licsec {

// Little-endian byte writer. All on-disk formats go through this so the
// layouts are platform-independent.
class ByteWriter {
public:
    void u8(uint8_t v) { buf_.push_back(v); }
    void u16(uint16_t v) {
        for (int i = 0; i < 2; ++i) buf_.push_back(uint8_t(v >> (8 * i)));
    }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(uint8_t(v >> (8 * i)));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(uint8_t(v >> (8 * i)));
    }
    void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
    void i64(int64_t v) { u64(static_cast<uint64_t>(v)); }
    void f64(double v) {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void magic(const char m[4]) { bytes(reinterpret_cast<const uint8_t*>(m), 4); }
    void bytes(const uint8_t* p, size_t n) { buf_.insert(buf_.end(), p, p + n); }
    void bytes(const Bytes& b) { bytes(b.data(), b.size()); }
    void str(const std::string& s) {
        u32(uint32_t(s.size()));
        bytes(reinterpret_cast<const uint8_t*>(s.data()), s.size());
    }
    void blob(const Bytes& b) {
        u64(b.size());
        bytes(b);
    }

    const Bytes& data() const { return buf_; }
    Bytes take() { return std::move(buf_); }
    size_t size() const { return buf_.size(); }

private:
    Bytes buf_;
};

// Bounds-checked little-endian reader; every length field is validated
// against the remaining buffer before use.
class ByteReader {
public:
    ByteReader(const uint8_t* p, size_t n) : p_(p), n_(n) {}
    explicit ByteReader(const Bytes& b) : ByteReader(b.data(), b.size()) {}

    uint8_t u8() { return take(1)[0]; }
    uint16_t u16() {
        const uint8_t* p = take(2);
        return uint16_t(p[0]) | uint16_t(p[1]) << 8;
    }
    uint32_t u32() {
        const uint8_t* p = take(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(p[i]) << (8 * i);
        return v;
    }
    uint64_t u64() {
        const uint8_t* p = take(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(p[i]) << (8 * i);
        return v;
    }
    int32_t i32() { return static_cast<int32_t>(u32()); }
    int64_t i64() { return static_cast<int64_t>(u64()); }
    double f64() {
        uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    void expect_magic(const char m[4], const std::string& what) {
        const uint8_t* p = take(4);
        if (std::memcmp(p, m, 4) != 0)
            raise(ErrorClass::Format, what + ": bad magic bytes");
    }
    Bytes bytes(size_t n) {
        const uint8_t* p = take(n);
        return Bytes(p, p + n);
    }
    std::string str() {
        uint32_t n = u32();
        const uint8_t* p = take(n);
        return std::string(reinterpret_cast<const char*>(p), n);
    }
    Bytes blob() {
        uint64_t n = u64();
        if (n > remaining())
            raise(ErrorClass::Format, "truncated blob (length exceeds buffer)");
        return bytes(size_t(n));
    }

    size_t remaining() const { return n_ - off_; }
    bool done() const { return off_ == n_; }

private:
    const uint8_t* take(size_t n) {
        if (n > n_ - off_) raise(ErrorClass::Format, "truncated input");
        const uint8_t* p = p_ + off_;
        off_ += n;
        return p;
    }
    const uint8_t* p_;
    size_t n_;
    size_t off_ = 0;
};

Bytes read_file(const std::string& path);
void write_file(const std::string& path, const Bytes& data);
bool file_exists(const std::string& path);

}  // namespace licsec
