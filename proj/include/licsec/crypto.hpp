#pragma once

#include <string>

#include "licsec/common.hpp"

namespace licsec::crypto {

Bytes sha256(const Bytes& data);
Bytes sha256(const uint8_t* data, size_t n);
Bytes random_bytes(size_t n);

struct X25519KeyPair {
    Bytes pub;   // 32 bytes
    Bytes priv;  // 32 bytes
};
X25519KeyPair x25519_generate();
Bytes x25519_public_from_private(const Bytes& priv);
Bytes x25519_shared(const Bytes& priv, const Bytes& peer_pub);

Bytes hkdf_sha256(const Bytes& ikm, const Bytes& salt, const Bytes& info, size_t out_len);
Bytes pbkdf2_sha256(const std::string& passphrase, const Bytes& salt, int iters,
                    size_t out_len);

// AES-256-GCM, 12-byte nonce, 16-byte tag.
Bytes aes256gcm_encrypt(const Bytes& key, const Bytes& nonce, const Bytes& aad,
                        const Bytes& plaintext, Bytes& tag_out);
// Returns false on any authentication failure (no plaintext released).
bool aes256gcm_decrypt(const Bytes& key, const Bytes& nonce, const Bytes& aad,
                       const Bytes& ciphertext, const Bytes& tag, Bytes& plaintext_out);

std::string base64_encode(const Bytes& data);
Bytes base64_decode(const std::string& text);

}  // namespace licsec::crypto
