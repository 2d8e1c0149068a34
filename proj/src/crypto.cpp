#include <chainmart/crypto.hpp>
#include <chainmart/error.hpp>

#include <sodium.h>

#include <algorithm>
#include <cstring>

namespace chainmart {

namespace {

struct SodiumInit {
    SodiumInit()
    {
        if (sodium_init() < 0)
            throw std::runtime_error("libsodium initialisation failed");
    }
};

void ensure_sodium()
{
    static const SodiumInit init;
}

template <std::size_t N>
FixedBytes<N> fixed_from_hex(std::string_view hex, const char* what)
{
    auto raw = from_hex(hex);
    if (raw.size() != N)
        fail(Errc::BadRequest, std::string(what) + " must be " + std::to_string(N * 2) + " hex chars");
    FixedBytes<N> out;
    std::copy(raw.begin(), raw.end(), out.bytes.begin());
    return out;
}

constexpr std::size_t kNonceBytes = crypto_aead_xchacha20poly1305_ietf_NPUBBYTES;
constexpr std::size_t kTagBytes = crypto_aead_xchacha20poly1305_ietf_ABYTES;

} // namespace

Address address_from_hex(std::string_view hex)
{
    return fixed_from_hex<20>(hex, "address");
}

Digest32 digest_from_hex(std::string_view hex)
{
    return fixed_from_hex<32>(hex, "digest");
}

Bytes Ciphertext::encode() const
{
    return ByteWriter{}.blob(nonce).blob(body).blob(auth_tag).take();
}

Ciphertext Ciphertext::decode(ByteView data)
{
    ByteReader r(data);
    Ciphertext ct;
    ct.nonce = r.blob();
    ct.body = r.blob();
    ct.auth_tag = r.blob();
    r.expect_done();
    return ct;
}

Bytes WrappedKey::encode() const
{
    return ByteWriter{}.fixed(recipient).blob(blob).take();
}

WrappedKey WrappedKey::decode(ByteView data)
{
    ByteReader r(data);
    WrappedKey wk;
    wk.recipient = r.fixed<20>();
    wk.blob = r.blob();
    r.expect_done();
    return wk;
}

std::uint64_t RandomSource::next_u64()
{
    std::array<std::uint8_t, 8> b{};
    fill(b);
    std::uint64_t v = 0;
    for (auto x : b)
        v = (v << 8) | x;
    return v;
}

void SystemRandom::fill(std::span<std::uint8_t> out)
{
    ensure_sodium();
    randombytes_buf(out.data(), out.size());
}

SeededRandom::SeededRandom(std::uint64_t seed)
{
    auto d = hash_payload(ByteWriter{}.str("chainmart.rng").u64(seed).data());
    seed_ = d.bytes;
}

void SeededRandom::fill(std::span<std::uint8_t> out)
{
    ensure_sodium();
    auto call_seed = hash_payload(ByteWriter{}.raw(seed_).u64(counter_++).data());
    randombytes_buf_deterministic(out.data(), out.size(), call_seed.bytes.data());
}

RandomSource& system_random()
{
    static SystemRandom rng;
    return rng;
}

Identity generate_identity(ByteView seed)
{
    ensure_sodium();
    if (seed.size() != 32)
        fail(Errc::SeedLength, "identity seed must be 32 bytes, got " + std::to_string(seed.size()));

    Identity id;
    std::copy(seed.begin(), seed.end(), id.seed.begin());

    id.sign_public.resize(crypto_sign_PUBLICKEYBYTES);
    id.sign_secret.resize(crypto_sign_SECRETKEYBYTES);
    crypto_sign_seed_keypair(id.sign_public.data(), id.sign_secret.data(), seed.data());

    // The encryption keypair uses a domain-separated seed so the two
    // keypairs are unrelated.
    auto enc_seed = hash_payload(ByteWriter{}.str("chainmart.enc").raw(seed).data());
    id.enc_public.resize(crypto_box_PUBLICKEYBYTES);
    id.enc_secret.resize(crypto_box_SECRETKEYBYTES);
    crypto_box_seed_keypair(id.enc_public.data(), id.enc_secret.data(), enc_seed.bytes.data());
    sodium_memzero(enc_seed.bytes.data(), enc_seed.bytes.size());

    id.address = derive_address(id.sign_public);
    return id;
}

Identity identity_from_label(std::string_view label)
{
    auto seed = hash_payload(label);
    return generate_identity(seed.view());
}

Address derive_address(ByteView sign_public)
{
    if (sign_public.empty())
        fail(Errc::EmptyKey, "cannot derive an address from an empty key");
    auto d = hash_payload(sign_public);
    Address a;
    std::copy_n(d.bytes.begin(), a.bytes.size(), a.bytes.begin());
    return a;
}

Digest32 hash_payload(ByteView data)
{
    ensure_sodium();
    Digest32 d;
    crypto_hash_sha256(d.bytes.data(), data.data(), data.size());
    return d;
}

Signature sign(const Identity& id, ByteView msg)
{
    ensure_sodium();
    Signature sig;
    sig.bytes.resize(crypto_sign_BYTES);
    crypto_sign_detached(sig.bytes.data(), nullptr, msg.data(), msg.size(), id.sign_secret.data());
    return sig;
}

bool verify(ByteView sign_public, ByteView msg, const Signature& sig)
{
    ensure_sodium();
    if (sign_public.size() != crypto_sign_PUBLICKEYBYTES || sig.bytes.size() != crypto_sign_BYTES)
        return false;
    return crypto_sign_verify_detached(sig.bytes.data(), msg.data(), msg.size(), sign_public.data()) == 0;
}

std::pair<DataKey, Ciphertext> encrypt_record(ByteView plaintext, RandomSource& rng)
{
    ensure_sodium();
    DataKey key;
    rng.fill(key.bytes);

    Ciphertext ct;
    ct.nonce.resize(kNonceBytes);
    rng.fill(ct.nonce);
    ct.body.resize(plaintext.size());
    ct.auth_tag.resize(kTagBytes);
    unsigned long long tag_len = 0;
    crypto_aead_xchacha20poly1305_ietf_encrypt_detached(
        ct.body.data(), ct.auth_tag.data(), &tag_len, plaintext.data(), plaintext.size(), nullptr, 0,
        nullptr, ct.nonce.data(), key.bytes.data());
    return {key, std::move(ct)};
}

Bytes decrypt_record(const DataKey& key, const Ciphertext& ct)
{
    ensure_sodium();
    if (ct.nonce.size() != kNonceBytes || ct.auth_tag.size() != kTagBytes)
        fail(Errc::AuthFailure, "ciphertext has malformed nonce or tag");
    Bytes out(ct.body.size());
    if (crypto_aead_xchacha20poly1305_ietf_decrypt_detached(out.data(), nullptr, ct.body.data(),
                                                           ct.body.size(), ct.auth_tag.data(), nullptr,
                                                           0, ct.nonce.data(), key.bytes.data()) != 0)
        fail(Errc::AuthFailure, "authenticated decryption failed");
    return out;
}

// Sealed box with an injectable ephemeral key: blob = epk || crypto_box(key)
// under nonce = BLAKE2b-24(epk || recipient_pk). Byte-compatible with
// crypto_box_seal, which is what unwrap_key uses to open it.
WrappedKey wrap_key(const DataKey& key, ByteView recipient_enc_public, const Address& recipient,
                    RandomSource& rng)
{
    ensure_sodium();
    if (recipient_enc_public.size() != crypto_box_PUBLICKEYBYTES)
        fail(Errc::BadPublicKey, "recipient encryption key has wrong length");

    std::array<std::uint8_t, crypto_box_SEEDBYTES> eph_seed{};
    rng.fill(eph_seed);
    std::array<std::uint8_t, crypto_box_PUBLICKEYBYTES> epk{};
    std::array<std::uint8_t, crypto_box_SECRETKEYBYTES> esk{};
    crypto_box_seed_keypair(epk.data(), esk.data(), eph_seed.data());

    std::array<std::uint8_t, crypto_box_NONCEBYTES> nonce{};
    crypto_generichash_state st;
    crypto_generichash_init(&st, nullptr, 0, nonce.size());
    crypto_generichash_update(&st, epk.data(), epk.size());
    crypto_generichash_update(&st, recipient_enc_public.data(), recipient_enc_public.size());
    crypto_generichash_final(&st, nonce.data(), nonce.size());

    WrappedKey wk;
    wk.recipient = recipient;
    wk.blob.resize(crypto_box_SEALBYTES + key.bytes.size());
    std::copy(epk.begin(), epk.end(), wk.blob.begin());
    int rc = crypto_box_easy(wk.blob.data() + epk.size(), key.bytes.data(), key.bytes.size(),
                             nonce.data(), recipient_enc_public.data(), esk.data());
    sodium_memzero(esk.data(), esk.size());
    sodium_memzero(eph_seed.data(), eph_seed.size());
    if (rc != 0)
        fail(Errc::BadPublicKey, "recipient encryption key rejected");
    return wk;
}

DataKey unwrap_key(const WrappedKey& wk, ByteView enc_secret)
{
    ensure_sodium();
    if (enc_secret.size() != crypto_box_SECRETKEYBYTES)
        fail(Errc::UnwrapFailure, "encryption secret has wrong length");
    DataKey key;
    if (wk.blob.size() != crypto_box_SEALBYTES + key.bytes.size())
        fail(Errc::UnwrapFailure, "wrapped key blob has wrong length");
    std::array<std::uint8_t, crypto_box_PUBLICKEYBYTES> pk{};
    crypto_scalarmult_base(pk.data(), enc_secret.data());
    if (crypto_box_seal_open(key.bytes.data(), wk.blob.data(), wk.blob.size(), pk.data(),
                             enc_secret.data()) != 0)
        fail(Errc::UnwrapFailure, "wrapped key could not be opened");
    return key;
}

} // namespace chainmart
