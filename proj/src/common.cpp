#include "licsec/common.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "licsec/serialize.hpp"

namespace licsec {

std::string to_hex(const uint8_t* data, size_t n) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(n * 2);
    for (size_t i = 0; i < n; ++i) {
        out.push_back(digits[data[i] >> 4]);
        out.push_back(digits[data[i] & 0xf]);
    }
    return out;
}

Bytes from_hex(const std::string& hex) {
    if (hex.size() % 2 != 0) raise(ErrorClass::Format, "hex string has odd length");
    auto nib = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        raise(ErrorClass::Format, "invalid hex digit");
    };
    Bytes out(hex.size() / 2);
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = uint8_t(nib(hex[2 * i]) << 4 | nib(hex[2 * i + 1]));
    return out;
}

Bytes read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) raise(ErrorClass::Format, "cannot open file: " + path);
    f.seekg(0, std::ios::end);
    auto n = f.tellg();
    f.seekg(0);
    Bytes buf(static_cast<size_t>(n), 0);
    f.read(reinterpret_cast<char*>(buf.data()), n);
    if (!f) raise(ErrorClass::Format, "failed to read file: " + path);
    return buf;
}

void write_file(const std::string& path, const Bytes& data) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) raise(ErrorClass::Format, "cannot write file: " + path);
    f.write(reinterpret_cast<const char*>(data.data()),
            std::streamsize(data.size()));
    if (!f) raise(ErrorClass::Format, "failed to write file: " + path);
}

bool file_exists(const std::string& path) {
    std::error_code ec;
    return std::filesystem::exists(path, ec);
}

}  // namespace licsec
