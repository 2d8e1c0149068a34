#include <chainmart/error.hpp>
#include <chainmart/store.hpp>

#include <json.hpp>

#include <fstream>
#include <iterator>

namespace chainmart {

namespace fs = std::filesystem;
using json = nlohmann::json;

OffchainStore::OffchainStore(fs::path dir) : dir_(std::move(dir))
{
    std::error_code ec;
    fs::create_directories(*dir_, ec);
    if (ec)
        fail(Errc::IoError, "cannot create store directory " + dir_->string() + ": " + ec.message());
    load();
}

StoreRef OffchainStore::put(ByteView ct_bytes, const std::string& category, const Address& owner,
                            std::int64_t created_ms)
{
    if (ct_bytes.empty())
        fail(Errc::EmptyPayload, "refusing to store an empty payload");
    StoreRef ref{hash_payload(ct_bytes)};
    std::lock_guard lock(mu_);
    if (entries_.contains(ref))
        return ref;
    StoreEntry e{ref, Bytes(ct_bytes.begin(), ct_bytes.end()), category, owner, created_ms};
    persist_entry(e);
    total_bytes_ += e.bytes.size();
    entries_.emplace(ref, std::move(e));
    if (dir_)
        write_index();
    return ref;
}

Bytes OffchainStore::get(const StoreRef& ref) const
{
    std::lock_guard lock(mu_);
    auto it = entries_.find(ref);
    if (it == entries_.end())
        fail(Errc::NotFound, "no stored payload for " + ref.digest.hex());
    return it->second.bytes;
}

bool OffchainStore::contains(const StoreRef& ref) const
{
    std::lock_guard lock(mu_);
    return entries_.contains(ref);
}

std::optional<StoreEntry> OffchainStore::entry(const StoreRef& ref) const
{
    std::lock_guard lock(mu_);
    auto it = entries_.find(ref);
    if (it == entries_.end())
        return std::nullopt;
    return it->second;
}

std::size_t OffchainStore::erase(const StoreRef& ref)
{
    std::lock_guard lock(mu_);
    auto it = entries_.find(ref);
    if (it == entries_.end())
        fail(Errc::NotFound, "no stored payload for " + ref.digest.hex());
    total_bytes_ -= it->second.bytes.size();
    entries_.erase(it);
    remove_file(ref);
    if (dir_)
        write_index();
    return 1;
}

std::size_t OffchainStore::erase(const std::string& category, const Address& owner)
{
    std::lock_guard lock(mu_);
    std::size_t removed = 0;
    for (auto it = entries_.begin(); it != entries_.end();) {
        if (it->second.category == category && it->second.owner == owner) {
            total_bytes_ -= it->second.bytes.size();
            remove_file(it->first);
            it = entries_.erase(it);
            ++removed;
        } else {
            ++it;
        }
    }
    if (dir_ && removed > 0)
        write_index();
    return removed;
}

bool OffchainStore::verify(const StoreRef& ref) const
{
    std::lock_guard lock(mu_);
    auto it = entries_.find(ref);
    if (it == entries_.end())
        fail(Errc::NotFound, "no stored payload for " + ref.digest.hex());
    return hash_payload(it->second.bytes) == ref.digest;
}

std::size_t OffchainStore::size() const
{
    std::lock_guard lock(mu_);
    return entries_.size();
}

std::size_t OffchainStore::total_bytes() const
{
    std::lock_guard lock(mu_);
    return total_bytes_;
}

std::vector<StoreRef> OffchainStore::refs(const std::string& category, const Address& owner) const
{
    std::lock_guard lock(mu_);
    std::vector<StoreRef> out;
    for (const auto& [ref, e] : entries_)
        if (e.category == category && e.owner == owner)
            out.push_back(ref);
    return out;
}

void OffchainStore::corrupt_for_testing(const StoreRef& ref, std::size_t byte_index)
{
    std::lock_guard lock(mu_);
    auto it = entries_.find(ref);
    if (it == entries_.end())
        fail(Errc::NotFound, "no stored payload for " + ref.digest.hex());
    auto& bytes = it->second.bytes;
    bytes[byte_index % bytes.size()] ^= 0x01;
    persist_entry(it->second);
}

void OffchainStore::persist_entry(const StoreEntry& e) const
{
    if (!dir_)
        return;
    auto path = *dir_ / e.ref.digest.hex();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(e.bytes.data()), static_cast<std::streamsize>(e.bytes.size()));
    if (!out)
        fail(Errc::IoError, "cannot write " + path.string());
}

void OffchainStore::remove_file(const StoreRef& ref) const
{
    if (!dir_)
        return;
    std::error_code ec;
    fs::remove(*dir_ / ref.digest.hex(), ec);
}

void OffchainStore::write_index() const
{
    json index = json::object();
    for (const auto& [ref, e] : entries_)
        index[ref.digest.hex()] = {
            {"category", e.category}, {"owner", e.owner.hex()}, {"created_ms", e.created_ms}};
    auto path = *dir_ / "index.json";
    auto tmp = *dir_ / "index.json.tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << index.dump(2) << '\n';
        if (!out)
            fail(Errc::IoError, "cannot write " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec)
        fail(Errc::IoError, "cannot replace " + path.string() + ": " + ec.message());
}

void OffchainStore::load()
{
    auto path = *dir_ / "index.json";
    if (!fs::exists(path))
        return;
    json index;
    try {
        std::ifstream in(path);
        index = json::parse(in);
    } catch (const json::exception& e) {
        fail(Errc::IoError, "corrupt store index " + path.string() + ": " + e.what());
    }
    for (const auto& [hex, meta] : index.items()) {
        StoreEntry e;
        e.ref.digest = digest_from_hex(hex);
        e.category = meta.at("category").get<std::string>();
        e.owner = address_from_hex(meta.at("owner").get<std::string>());
        e.created_ms = meta.at("created_ms").get<std::int64_t>();
        std::ifstream in(*dir_ / hex, std::ios::binary);
        if (!in)
            continue;
        e.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        total_bytes_ += e.bytes.size();
        entries_.emplace(e.ref, std::move(e));
    }
}

} // namespace chainmart
