#include "licsec/crypto.hpp"

#include <openssl/evp.h>
#include <openssl/kdf.h>
#include <openssl/rand.h>
#include <openssl/sha.h>

#include <memory>

namespace licsec::crypto {

namespace {
[[noreturn]] void fail(const std::string& what) {
    raise(ErrorClass::Crypto, "crypto: " + what);
}

struct EvpCtx {
    EVP_CIPHER_CTX* p = EVP_CIPHER_CTX_new();
    ~EvpCtx() { EVP_CIPHER_CTX_free(p); }
};
struct PkeyCtx {
    EVP_PKEY_CTX* p = nullptr;
    explicit PkeyCtx(EVP_PKEY_CTX* c) : p(c) {}
    ~PkeyCtx() { EVP_PKEY_CTX_free(p); }
};
struct Pkey {
    EVP_PKEY* p = nullptr;
    explicit Pkey(EVP_PKEY* k) : p(k) {}
    ~Pkey() { EVP_PKEY_free(p); }
};
}  // namespace

Bytes sha256(const uint8_t* data, size_t n) {
    Bytes out(32);
    SHA256(data, n, out.data());
    return out;
}
Bytes sha256(const Bytes& data) { return sha256(data.data(), data.size()); }

Bytes random_bytes(size_t n) {
    Bytes out(n);
    if (RAND_bytes(out.data(), int(n)) != 1) fail("RAND_bytes failed");
    return out;
}

X25519KeyPair x25519_generate() {
    PkeyCtx ctx(EVP_PKEY_CTX_new_id(EVP_PKEY_X25519, nullptr));
    if (!ctx.p || EVP_PKEY_keygen_init(ctx.p) != 1) fail("x25519 keygen init");
    EVP_PKEY* raw = nullptr;
    if (EVP_PKEY_keygen(ctx.p, &raw) != 1) fail("x25519 keygen");
    Pkey key(raw);
    X25519KeyPair kp;
    size_t len = 32;
    kp.priv.resize(32);
    kp.pub.resize(32);
    if (EVP_PKEY_get_raw_private_key(key.p, kp.priv.data(), &len) != 1 || len != 32)
        fail("x25519 private export");
    len = 32;
    if (EVP_PKEY_get_raw_public_key(key.p, kp.pub.data(), &len) != 1 || len != 32)
        fail("x25519 public export");
    return kp;
}

Bytes x25519_public_from_private(const Bytes& priv) {
    if (priv.size() != 32) fail("x25519 private key must be 32 bytes");
    Pkey key(EVP_PKEY_new_raw_private_key(EVP_PKEY_X25519, nullptr, priv.data(), 32));
    if (!key.p) fail("x25519 private import");
    Bytes pub(32);
    size_t len = 32;
    if (EVP_PKEY_get_raw_public_key(key.p, pub.data(), &len) != 1 || len != 32)
        fail("x25519 public derive");
    return pub;
}

Bytes x25519_shared(const Bytes& priv, const Bytes& peer_pub) {
    if (priv.size() != 32 || peer_pub.size() != 32) fail("x25519 keys must be 32 bytes");
    Pkey me(EVP_PKEY_new_raw_private_key(EVP_PKEY_X25519, nullptr, priv.data(), 32));
    Pkey peer(EVP_PKEY_new_raw_public_key(EVP_PKEY_X25519, nullptr, peer_pub.data(), 32));
    if (!me.p || !peer.p) fail("x25519 key import");
    PkeyCtx ctx(EVP_PKEY_CTX_new(me.p, nullptr));
    if (!ctx.p || EVP_PKEY_derive_init(ctx.p) != 1 ||
        EVP_PKEY_derive_set_peer(ctx.p, peer.p) != 1)
        fail("x25519 derive init");
    size_t len = 0;
    if (EVP_PKEY_derive(ctx.p, nullptr, &len) != 1) fail("x25519 derive size");
    Bytes out(len);
    if (EVP_PKEY_derive(ctx.p, out.data(), &len) != 1) fail("x25519 derive");
    out.resize(len);
    return out;
}

Bytes hkdf_sha256(const Bytes& ikm, const Bytes& salt, const Bytes& info, size_t out_len) {
    PkeyCtx ctx(EVP_PKEY_CTX_new_id(EVP_PKEY_HKDF, nullptr));
    if (!ctx.p || EVP_PKEY_derive_init(ctx.p) != 1) fail("hkdf init");
    if (EVP_PKEY_CTX_set_hkdf_md(ctx.p, EVP_sha256()) != 1 ||
        EVP_PKEY_CTX_set1_hkdf_salt(ctx.p, salt.data(), int(salt.size())) != 1 ||
        EVP_PKEY_CTX_set1_hkdf_key(ctx.p, ikm.data(), int(ikm.size())) != 1 ||
        EVP_PKEY_CTX_add1_hkdf_info(ctx.p, info.data(), int(info.size())) != 1)
        fail("hkdf params");
    Bytes out(out_len);
    size_t len = out_len;
    if (EVP_PKEY_derive(ctx.p, out.data(), &len) != 1 || len != out_len) fail("hkdf derive");
    return out;
}

Bytes pbkdf2_sha256(const std::string& passphrase, const Bytes& salt, int iters,
                    size_t out_len) {
    Bytes out(out_len);
    if (PKCS5_PBKDF2_HMAC(passphrase.data(), int(passphrase.size()), salt.data(),
                          int(salt.size()), iters, EVP_sha256(), int(out_len),
                          out.data()) != 1)
        fail("pbkdf2");
    return out;
}

Bytes aes256gcm_encrypt(const Bytes& key, const Bytes& nonce, const Bytes& aad,
                        const Bytes& plaintext, Bytes& tag_out) {
    if (key.size() != 32 || nonce.size() != 12) fail("aes-gcm: bad key/nonce size");
    EvpCtx ctx;
    if (!ctx.p || EVP_EncryptInit_ex(ctx.p, EVP_aes_256_gcm(), nullptr, nullptr, nullptr) != 1)
        fail("gcm init");
    if (EVP_CIPHER_CTX_ctrl(ctx.p, EVP_CTRL_GCM_SET_IVLEN, 12, nullptr) != 1 ||
        EVP_EncryptInit_ex(ctx.p, nullptr, nullptr, key.data(), nonce.data()) != 1)
        fail("gcm key/iv");
    int len = 0;
    if (!aad.empty() && EVP_EncryptUpdate(ctx.p, nullptr, &len, aad.data(), int(aad.size())) != 1)
        fail("gcm aad");
    Bytes ct(plaintext.size());
    if (!plaintext.empty() &&
        EVP_EncryptUpdate(ctx.p, ct.data(), &len, plaintext.data(), int(plaintext.size())) != 1)
        fail("gcm encrypt");
    int fin = 0;
    if (EVP_EncryptFinal_ex(ctx.p, ct.data() + len, &fin) != 1) fail("gcm final");
    tag_out.resize(16);
    if (EVP_CIPHER_CTX_ctrl(ctx.p, EVP_CTRL_GCM_GET_TAG, 16, tag_out.data()) != 1)
        fail("gcm tag");
    return ct;
}

bool aes256gcm_decrypt(const Bytes& key, const Bytes& nonce, const Bytes& aad,
                       const Bytes& ciphertext, const Bytes& tag, Bytes& plaintext_out) {
    if (key.size() != 32 || nonce.size() != 12 || tag.size() != 16) return false;
    EvpCtx ctx;
    if (!ctx.p || EVP_DecryptInit_ex(ctx.p, EVP_aes_256_gcm(), nullptr, nullptr, nullptr) != 1)
        return false;
    if (EVP_CIPHER_CTX_ctrl(ctx.p, EVP_CTRL_GCM_SET_IVLEN, 12, nullptr) != 1 ||
        EVP_DecryptInit_ex(ctx.p, nullptr, nullptr, key.data(), nonce.data()) != 1)
        return false;
    int len = 0;
    if (!aad.empty() && EVP_DecryptUpdate(ctx.p, nullptr, &len, aad.data(), int(aad.size())) != 1)
        return false;
    Bytes pt(ciphertext.size());
    if (!ciphertext.empty() &&
        EVP_DecryptUpdate(ctx.p, pt.data(), &len, ciphertext.data(), int(ciphertext.size())) != 1)
        return false;
    Bytes tag_copy = tag;
    if (EVP_CIPHER_CTX_ctrl(ctx.p, EVP_CTRL_GCM_SET_TAG, 16, tag_copy.data()) != 1)
        return false;
    int fin = 0;
    if (EVP_DecryptFinal_ex(ctx.p, pt.data() + len, &fin) != 1) return false;  // auth failure
    plaintext_out = std::move(pt);
    return true;
}

std::string base64_encode(const Bytes& data) {
    static const char* tbl = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((data.size() + 2) / 3 * 4);
    for (size_t i = 0; i < data.size(); i += 3) {
        uint32_t v = uint32_t(data[i]) << 16;
        int n = 1;
        if (i + 1 < data.size()) {
            v |= uint32_t(data[i + 1]) << 8;
            ++n;
        }
        if (i + 2 < data.size()) {
            v |= uint32_t(data[i + 2]);
            ++n;
        }
        out.push_back(tbl[(v >> 18) & 63]);
        out.push_back(tbl[(v >> 12) & 63]);
        out.push_back(n > 1 ? tbl[(v >> 6) & 63] : '=');
        out.push_back(n > 2 ? tbl[v & 63] : '=');
    }
    return out;
}

Bytes base64_decode(const std::string& text) {
    auto val = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    Bytes out;
    uint32_t acc = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=' || c == '\n' || c == '\r' || c == ' ') continue;
        int v = val(c);
        if (v < 0) raise(ErrorClass::Format, "invalid base64 character");
        acc = (acc << 6) | uint32_t(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(uint8_t(acc >> bits));
        }
    }
    return out;
}

}  // namespace licsec::crypto
