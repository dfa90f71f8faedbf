#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace licsec {

// Error classes map 1:1 onto CLI exit codes.
enum class ErrorClass : int {
    Usage = 2,       // bad arguments / config
    Format = 3,      // file I/O, magic/version/parse failures
    Crypto = 4,      // authentication, decryption, key mismatch
    Stage = 5,       // pipeline stage-order or validation violations
    Numeric = 6,     // NaN/Inf, overflow, dimension mismatch
};

class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, const std::string& msg)
        : std::runtime_error(msg), cls_(cls) {}
    ErrorClass cls() const { return cls_; }
    int exit_code() const { return static_cast<int>(cls_); }

private:
    ErrorClass cls_;
};

[[noreturn]] inline void raise(ErrorClass cls, const std::string& msg) {
    throw Error(cls, msg);
}

using Bytes = std::vector<uint8_t>;

std::string to_hex(const uint8_t* data, size_t n);
inline std::string to_hex(const Bytes& b) { return to_hex(b.data(), b.size()); }
Bytes from_hex(const std::string& hex);

}  // namespace licsec
