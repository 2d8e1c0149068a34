#pragma once

// Open data format for shared profile records, listing metadata, consent
// policies and audit rows.
//
// Canonical encoding: UTF-8 JSON with bytewise-sorted object keys, no
// whitespace, integer and boolean literals, and standard string escaping.
// A record canonicalizes to
//   {"category":"...","fields":{...},"owner":"<hex>","schema_version":N}
// where every field value is a string, an integer or a boolean.

#include <chainmart/crypto.hpp>

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace chainmart {

using FieldValue = std::variant<std::string, std::int64_t, bool>;

struct ProfileRecord {
    Address owner;
    std::string category;
    std::map<std::string, FieldValue> fields;
    std::int64_t schema_version = 1;

    bool operator==(const ProfileRecord&) const = default;
};

/// Throws Error(UnsupportedValue) for an empty category or invalid UTF-8.
std::string canonicalize_record(const ProfileRecord& record);

/// Parses a record from JSON. Floats, nulls, arrays and nested objects
/// inside "fields" raise Error(UnsupportedValue).
ProfileRecord record_from_json(const nlohmann::json& j);
ProfileRecord parse_record(std::string_view canonical);

/// Canonical dump of an arbitrary JSON value; rejects floats.
std::string canonical_json(const nlohmann::json& j);

struct ListingMetadata {
    std::string category;
    std::set<std::string> purposes;
    std::uint64_t price = 0;
    std::uint64_t size_bytes = 0;
    std::optional<std::int64_t> expiry_ms;
    std::int64_t schema_version = 1;

    std::string encode() const;
    static ListingMetadata decode(std::string_view canonical);
};

struct ConsentPolicy {
    Address owner;
    std::string category;
    std::set<std::string> allowed_purposes;
    std::uint64_t price = 0;
    std::optional<std::int64_t> expiry_ms;
    bool revoked = false;

    bool expired(std::int64_t now_ms) const { return expiry_ms && now_ms >= *expiry_ms; }
    bool permits(std::string_view purpose, std::int64_t now_ms) const
    {
        return !revoked && allowed_purposes.contains(std::string(purpose)) && !expired(now_ms);
    }
};

enum class AuditOutcome { Delivered, Denied, Slashed };
std::string_view audit_outcome_name(AuditOutcome o);

struct AuditMeans {
    std::string stream;
    Digest32 txid;
};

struct AuditEntry {
    Address who;   // consumer
    Digest32 what; // item payload digest
    Address whom;  // owner
    std::int64_t when_ms = 0;
    AuditMeans means;
    std::string purpose;
    AuditOutcome outcome = AuditOutcome::Denied;
    std::string category;
    Digest32 contract_id;
    std::string reason;

    bool complete() const;
    nlohmann::json to_json() const;
    std::string canonical() const { return canonical_json(to_json()); }
};

} // namespace chainmart
