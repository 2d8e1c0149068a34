#pragma once

// Shared test helpers. The oracles here deliberately avoid the library's
// own hashing so digests are checked against an independent implementation.

#include <chainmart/demo.hpp>
#include <chainmart/error.hpp>

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <cstdio>
#include <cstring>
#include <string>

namespace testing {

using namespace chainmart;

inline std::string oracle_sha256_hex(const void* data, std::size_t n)
{
    unsigned char md[SHA256_DIGEST_LENGTH];
    unsigned int len = 0;
    EVP_Digest(data, n, md, &len, EVP_sha256(), nullptr);
    std::string out;
    char buf[3];
    for (unsigned i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        out += buf;
    }
    return out;
}

inline std::string oracle_sha256_hex(const Bytes& b) { return oracle_sha256_hex(b.data(), b.size()); }
inline std::string oracle_sha256_hex(std::string_view s) { return oracle_sha256_hex(s.data(), s.size()); }

inline Bytes oracle_sha256(const Bytes& b)
{
    Bytes out(SHA256_DIGEST_LENGTH);
    unsigned int len = 0;
    EVP_Digest(b.data(), b.size(), out.data(), &len, EVP_sha256(), nullptr);
    return out;
}

// Big-endian canonical encoders written out by hand, independent of
// ByteWriter.
inline void put_be(Bytes& out, std::uint64_t v, int width)
{
    for (int i = width - 1; i >= 0; --i)
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_raw(Bytes& out, ByteView v) { out.insert(out.end(), v.begin(), v.end()); }

// Counts ledger mutations and every one that broke conservation.
struct ConservationWatch {
    std::size_t checks = 0;
    std::size_t violations = 0;

    void attach(Consortium& w)
    {
        w.set_invariant_hook([this](const AccountLedger& l) {
            ++checks;
            if (!l.conserved())
                ++violations;
        });
    }
    void attach(AccountLedger& l)
    {
        l.set_invariant_hook([this](const AccountLedger& led) {
            ++checks;
            if (!led.conserved())
                ++violations;
        });
    }
};

template <typename F>
Errc error_of(F&& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return static_cast<Errc>(-1);
}

inline ProfileRecord sample_record(const Address& owner, std::string category = "purchase-history")
{
    ProfileRecord r;
    r.owner = owner;
    r.category = std::move(category);
    r.fields["favourite_sku"] = std::string("sku-005");
    r.fields["order_count"] = std::int64_t{7};
    r.fields["newsletter"] = true;
    return r;
}

} // namespace testing
