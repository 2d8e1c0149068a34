#include <chainmart/error.hpp>
#include <chainmart/record.hpp>

namespace chainmart {

using json = nlohmann::json;

namespace {

void reject_floats(const json& j)
{
    if (j.is_number_float())
        fail(Errc::UnsupportedValue, "floating-point values are not part of the open data format");
    if (j.is_structured())
        for (const auto& v : j)
            reject_floats(v);
}

json field_to_json(const FieldValue& v)
{
    return std::visit([](const auto& x) { return json(x); }, v);
}

} // namespace

std::string canonical_json(const json& j)
{
    reject_floats(j);
    try {
        return j.dump(-1, ' ', false, json::error_handler_t::strict);
    } catch (const json::type_error& e) {
        fail(Errc::UnsupportedValue, std::string("value is not valid UTF-8: ") + e.what());
    }
}

std::string canonicalize_record(const ProfileRecord& record)
{
    if (record.category.empty())
        fail(Errc::UnsupportedValue, "record category must be non-empty");
    json fields = json::object();
    for (const auto& [k, v] : record.fields)
        fields[k] = field_to_json(v);
    json j = {
        {"category", record.category},
        {"fields", std::move(fields)},
        {"owner", record.owner.hex()},
        {"schema_version", record.schema_version},
    };
    return canonical_json(j);
}

ProfileRecord record_from_json(const json& j)
{
    if (!j.is_object())
        fail(Errc::UnsupportedValue, "record must be a JSON object");
    ProfileRecord r;
    try {
        r.category = j.at("category").get<std::string>();
        if (j.contains("owner"))
            r.owner = address_from_hex(j.at("owner").get<std::string>());
        if (j.contains("schema_version")) {
            const auto& sv = j.at("schema_version");
            if (!sv.is_number_integer())
                fail(Errc::UnsupportedValue, "schema_version must be an integer");
            r.schema_version = sv.get<std::int64_t>();
        }
    } catch (const json::exception& e) {
        fail(Errc::UnsupportedValue, std::string("malformed record: ") + e.what());
    } catch (const Error& e) {
        fail(Errc::UnsupportedValue, e.what());
    }
    if (r.category.empty())
        fail(Errc::UnsupportedValue, "record category must be non-empty");
    const auto& fields = j.contains("fields") ? j.at("fields") : json::object();
    if (!fields.is_object())
        fail(Errc::UnsupportedValue, "fields must be a flat object");
    for (const auto& [k, v] : fields.items()) {
        if (v.is_string())
            r.fields[k] = v.get<std::string>();
        else if (v.is_boolean())
            r.fields[k] = v.get<bool>();
        else if (v.is_number_integer() && !v.is_number_unsigned())
            r.fields[k] = v.get<std::int64_t>();
        else if (v.is_number_unsigned() && v.get<std::uint64_t>() <= INT64_MAX)
            r.fields[k] = static_cast<std::int64_t>(v.get<std::uint64_t>());
        else
            fail(Errc::UnsupportedValue, "field '" + k + "' has an unsupported value type");
    }
    return r;
}

ProfileRecord parse_record(std::string_view canonical)
{
    json j;
    try {
        j = json::parse(canonical);
    } catch (const json::exception& e) {
        fail(Errc::UnsupportedValue, std::string("record is not JSON: ") + e.what());
    }
    return record_from_json(j);
}

std::string ListingMetadata::encode() const
{
    json j = {
        {"action", "list"},
        {"category", category},
        {"purposes", purposes},
        {"price", price},
        {"size_bytes", size_bytes},
        {"schema_version", schema_version},
    };
    if (expiry_ms)
        j["expiry_ms"] = *expiry_ms;
    return canonical_json(j);
}

ListingMetadata ListingMetadata::decode(std::string_view canonical)
{
    try {
        auto j = json::parse(canonical);
        ListingMetadata m;
        m.category = j.at("category").get<std::string>();
        m.purposes = j.at("purposes").get<std::set<std::string>>();
        m.price = j.at("price").get<std::uint64_t>();
        m.size_bytes = j.at("size_bytes").get<std::uint64_t>();
        m.schema_version = j.at("schema_version").get<std::int64_t>();
        if (j.contains("expiry_ms"))
            m.expiry_ms = j.at("expiry_ms").get<std::int64_t>();
        return m;
    } catch (const json::exception& e) {
        fail(Errc::BadItem, std::string("malformed listing metadata: ") + e.what());
    }
}

std::string_view audit_outcome_name(AuditOutcome o)
{
    switch (o) {
    case AuditOutcome::Delivered: return "Delivered";
    case AuditOutcome::Denied: return "Denied";
    case AuditOutcome::Slashed: return "Slashed";
    }
    return "Unknown";
}

bool AuditEntry::complete() const
{
    return !who.is_zero() && !what.is_zero() && !whom.is_zero() && when_ms >= 0 && !means.stream.empty() &&
           !means.txid.is_zero() && !purpose.empty();
}

json AuditEntry::to_json() const
{
    return {
        {"who", who.hex()},
        {"what", what.hex()},
        {"whom", whom.hex()},
        {"when_ms", when_ms},
        {"means", {{"stream", means.stream}, {"txid", means.txid.hex()}}},
        {"purpose", purpose},
        {"outcome", audit_outcome_name(outcome)},
        {"category", category},
        {"contract_id", contract_id.hex()},
        {"reason", reason},
    };
}

} // namespace chainmart
