#include "support.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace testing;

namespace {

const Address kOwner = identity_from_label("owner").address;
const Address kOther = identity_from_label("other").address;

} // namespace

TEST_CASE("put / get / idempotence")
{
    OffchainStore s;
    auto x = to_bytes("ciphertext bytes");
    auto ref = s.put(x, "purchase-history", kOwner, 5);
    CHECK(ref.digest.hex() == oracle_sha256_hex(x));
    CHECK(s.get(ref) == x);
    CHECK(s.size() == 1);
    CHECK(s.put(x, "purchase-history", kOwner, 6) == ref);
    CHECK(s.size() == 1);
    CHECK(s.total_bytes() == x.size());
    CHECK(error_of([&] { s.put(Bytes{}, "c", kOwner, 0); }) == Errc::EmptyPayload);
    auto e = s.entry(ref);
    REQUIRE(e);
    CHECK(e->category == "purchase-history");
    CHECK(e->owner == kOwner);
}

TEST_CASE("get unknown and deleted refs")
{
    OffchainStore s;
    StoreRef missing{hash_payload(std::string_view("nothing"))};
    CHECK(error_of([&] { s.get(missing); }) == Errc::NotFound);
    CHECK(error_of([&] { s.erase(missing); }) == Errc::NotFound);
    CHECK(error_of([&] { s.verify(missing); }) == Errc::NotFound);

    auto ref = s.put(to_bytes("a"), "c", kOwner, 0);
    CHECK(s.erase(ref) == 1);
    CHECK(error_of([&] { s.get(ref); }) == Errc::NotFound);
}

TEST_CASE("category delete removes all and only that owner's category")
{
    OffchainStore s;
    auto a1 = s.put(to_bytes("a1"), "purchase-history", kOwner, 0);
    auto a2 = s.put(to_bytes("a22"), "purchase-history", kOwner, 0);
    auto b = s.put(to_bytes("b"), "demographics", kOwner, 0);
    auto c = s.put(to_bytes("c"), "purchase-history", kOther, 0);
    auto before = s.total_bytes();
    CHECK(s.erase("purchase-history", kOwner) == 2);
    CHECK(s.total_bytes() == before - 2 - 3);
    CHECK_FALSE(s.contains(a1));
    CHECK_FALSE(s.contains(a2));
    CHECK(s.contains(b));
    CHECK(s.contains(c));
    CHECK(s.erase("purchase-history", kOwner) == 0);
}

TEST_CASE("verify detects corruption")
{
    OffchainStore s;
    auto ref = s.put(to_bytes("payload"), "c", kOwner, 0);
    CHECK(s.verify(ref));
    s.corrupt_for_testing(ref, 2);
    CHECK_FALSE(s.verify(ref));
}

TEST_CASE("directory persistence")
{
    auto dir = std::filesystem::temp_directory_path() / "chainmart-store-test";
    std::filesystem::remove_all(dir);
    StoreRef keep, gone;
    {
        OffchainStore s(dir);
        keep = s.put(to_bytes("kept bytes"), "purchase-history", kOwner, 7);
        gone = s.put(to_bytes("gone bytes"), "demographics", kOwner, 8);
        s.erase("demographics", kOwner);
    }
    CHECK(std::filesystem::exists(dir / keep.digest.hex()));
    CHECK_FALSE(std::filesystem::exists(dir / gone.digest.hex()));
    CHECK(std::filesystem::exists(dir / "index.json"));

    std::ifstream f(dir / keep.digest.hex(), std::ios::binary);
    std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    CHECK(oracle_sha256_hex(raw) == keep.digest.hex());

    OffchainStore reopened(dir);
    CHECK(reopened.get(keep) == to_bytes("kept bytes"));
    CHECK(reopened.entry(keep)->created_ms == 7);
    CHECK_FALSE(reopened.contains(gone));
    std::filesystem::remove_all(dir);
}
