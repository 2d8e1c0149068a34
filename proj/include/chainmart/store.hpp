#pragma once

// Content-addressed store for encrypted payloads kept off-chain.
//
// With a store_dir the store mirrors every entry to
//   <store_dir>/<hex-digest>   raw ciphertext bytes
//   <store_dir>/index.json     {"<hex-digest>": {"category", "owner", "created_ms"}}
// and reloads both on construction.

#include <chainmart/crypto.hpp>

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace chainmart {

struct StoreRef {
    Digest32 digest;
    auto operator<=>(const StoreRef&) const = default;
};

struct StoreEntry {
    StoreRef ref;
    Bytes bytes;
    std::string category;
    Address owner;
    std::int64_t created_ms = 0;
};

class OffchainStore {
public:
    OffchainStore() = default;
    explicit OffchainStore(std::filesystem::path dir);

    OffchainStore(const OffchainStore&) = delete;
    OffchainStore& operator=(const OffchainStore&) = delete;

    /// Idempotent for identical bytes. Throws Error(EmptyPayload).
    StoreRef put(ByteView ct_bytes, const std::string& category, const Address& owner,
                 std::int64_t created_ms = 0);
    /// Throws Error(NotFound).
    Bytes get(const StoreRef& ref) const;
    bool contains(const StoreRef& ref) const;
    std::optional<StoreEntry> entry(const StoreRef& ref) const;

    /// Throws Error(NotFound) when the ref is absent. Returns 1.
    std::size_t erase(const StoreRef& ref);
    /// Removes every entry of (category, owner); zero matches is not an error.
    std::size_t erase(const std::string& category, const Address& owner);

    /// Throws Error(NotFound).
    bool verify(const StoreRef& ref) const;

    std::size_t size() const;
    std::size_t total_bytes() const;
    std::vector<StoreRef> refs(const std::string& category, const Address& owner) const;

    // Test hook: flips one bit of a stored payload in place.
    void corrupt_for_testing(const StoreRef& ref, std::size_t byte_index);

private:
    void persist_entry(const StoreEntry& e) const;
    void remove_file(const StoreRef& ref) const;
    void write_index() const;
    void load();

    mutable std::mutex mu_;
    std::map<StoreRef, StoreEntry> entries_;
    std::size_t total_bytes_ = 0;
    std::optional<std::filesystem::path> dir_;
};

} // namespace chainmart
