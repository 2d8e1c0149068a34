#pragma once

// Keys, addresses, digests, signatures and payload encryption.
//
// Schemes (fixed for the whole repository):
//   digest      SHA-256
//   signature   Ed25519 (detached, 64 bytes)
//   encryption  XChaCha20-Poly1305 IETF, 32-byte DataKey, 24-byte nonce
//   key wrap    X25519 sealed box (ephemeral public key || crypto_box)
//
// Every container that carries scheme output is length-prefixed when
// serialized, so sizes never leak into the wire formats.

#include <chainmart/bytes.hpp>

#include <array>
#include <cstdint>
#include <memory>
#include <utility>

namespace chainmart {

using Address = FixedBytes<20>;
using Digest32 = FixedBytes<32>;

Address address_from_hex(std::string_view hex);
Digest32 digest_from_hex(std::string_view hex);

struct Signature {
    Bytes bytes;
    bool operator==(const Signature&) const = default;
};

struct DataKey {
    std::array<std::uint8_t, 32> bytes{};
    ByteView view() const { return {bytes.data(), bytes.size()}; }
    bool operator==(const DataKey&) const = default;
};

struct Ciphertext {
    Bytes nonce;
    Bytes body;
    Bytes auth_tag;

    Bytes encode() const;
    static Ciphertext decode(ByteView data);
    bool operator==(const Ciphertext&) const = default;
};

struct WrappedKey {
    Address recipient;
    Bytes blob;

    Bytes encode() const;
    static WrappedKey decode(ByteView data);
    bool operator==(const WrappedKey&) const = default;
};

struct Identity {
    std::array<std::uint8_t, 32> seed{};
    Bytes sign_secret;
    Bytes sign_public;
    Bytes enc_secret;
    Bytes enc_public;
    Address address;

    bool operator==(const Identity&) const = default;
};

/// Source of randomness for keys, nonces and sealing. Simulations inject a
/// seeded source so whole runs replay byte-identically.
class RandomSource {
public:
    virtual ~RandomSource() = default;
    virtual void fill(std::span<std::uint8_t> out) = 0;

    std::uint64_t next_u64();
};

class SystemRandom final : public RandomSource {
public:
    void fill(std::span<std::uint8_t> out) override;
};

// Deterministic stream: call i draws from ChaCha20 keyed by
// SHA-256(seed || be64(i)).
class SeededRandom final : public RandomSource {
public:
    explicit SeededRandom(std::uint64_t seed);
    void fill(std::span<std::uint8_t> out) override;

private:
    std::array<std::uint8_t, 32> seed_{};
    std::uint64_t counter_ = 0;
};

RandomSource& system_random();

Identity generate_identity(ByteView seed);
/// Deterministic identity for fixtures: seed = SHA-256(label).
Identity identity_from_label(std::string_view label);

Address derive_address(ByteView sign_public);
Digest32 hash_payload(ByteView data);
inline Digest32 hash_payload(std::string_view s) { return hash_payload(as_bytes(s)); }

Signature sign(const Identity& id, ByteView msg);
bool verify(ByteView sign_public, ByteView msg, const Signature& sig);

std::pair<DataKey, Ciphertext> encrypt_record(ByteView plaintext,
                                              RandomSource& rng = system_random());
Bytes decrypt_record(const DataKey& key, const Ciphertext& ct);

WrappedKey wrap_key(const DataKey& key, ByteView recipient_enc_public, const Address& recipient,
                    RandomSource& rng = system_random());
DataKey unwrap_key(const WrappedKey& wk, ByteView enc_secret);

} // namespace chainmart
