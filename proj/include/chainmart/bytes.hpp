#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace chainmart {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

std::string to_hex(ByteView data);

// Throws Error(BadRequest) on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);

inline Bytes to_bytes(std::string_view s)
{
    return Bytes(s.begin(), s.end());
}

inline ByteView as_bytes(std::string_view s)
{
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

/// Fixed-width byte string with value semantics, used for digests and addresses.
template <std::size_t N>
struct FixedBytes {
    std::array<std::uint8_t, N> bytes{};

    static constexpr std::size_t size() { return N; }

    ByteView view() const { return {bytes.data(), N}; }
    std::string hex() const { return to_hex(view()); }
    bool is_zero() const
    {
        for (auto b : bytes)
            if (b != 0)
                return false;
        return true;
    }

    auto operator<=>(const FixedBytes&) const = default;
};

// Canonical binary encoding: big-endian fixed-width integers and u32
// length-prefixed byte strings. Fields are written in declaration order.
class ByteWriter {
public:
    ByteWriter& u8(std::uint8_t v);
    ByteWriter& u32(std::uint32_t v);
    ByteWriter& u64(std::uint64_t v);
    ByteWriter& i64(std::int64_t v) { return u64(static_cast<std::uint64_t>(v)); }
    ByteWriter& raw(ByteView data);
    ByteWriter& blob(ByteView data);
    ByteWriter& str(std::string_view s) { return blob(as_bytes(s)); }
    template <std::size_t N>
    ByteWriter& fixed(const FixedBytes<N>& f) { return raw(f.view()); }

    const Bytes& data() const { return buf_; }
    Bytes take() { return std::move(buf_); }

private:
    Bytes buf_;
};

// Reader counterpart; every accessor throws Error(MalformedExport) on
// truncated input.
class ByteReader {
public:
    explicit ByteReader(ByteView data) : data_(data) {}

    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    Bytes raw(std::size_t n);
    Bytes blob();
    std::string str();
    template <std::size_t N>
    FixedBytes<N> fixed()
    {
        FixedBytes<N> out;
        auto b = raw(N);
        std::copy(b.begin(), b.end(), out.bytes.begin());
        return out;
    }

    bool done() const { return pos_ == data_.size(); }
    void expect_done() const;

private:
    void need(std::size_t n) const;

    ByteView data_;
    std::size_t pos_ = 0;
};

} // namespace chainmart
