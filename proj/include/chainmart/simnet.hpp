#pragma once

// In-process discrete-event network: per-link one-way latency and drop
// rate, deterministic under a fixed seed. Messages are delivered in
// (deliver_ms, send sequence) order.

#include <chainmart/crypto.hpp>
#include <chainmart/escrow.hpp>

#include <map>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace chainmart {

struct LinkParams {
    std::int64_t one_way_latency_ms = 0;
    double drop_rate = 0.0;
};

struct QueryData {
    ContractId contract_id;
    Digest32 digest;
    std::string category;
    std::string purpose;
    Bytes consumer_enc_public;
    std::uint32_t attempt = 1;
};

struct DataResponse {
    ContractId contract_id;
    Bytes ciphertext; // Ciphertext::encode() bytes as delivered
    WrappedKey wrapped_key;
    DeliveryReceipt receipt;
};

struct Denied {
    ContractId contract_id;
    Digest32 digest;
    std::string reason;
};

struct NetworkMessage {
    std::variant<QueryData, DataResponse, Denied> body;
    Address from;
    Address to;
    std::int64_t sent_ms = 0;
    std::int64_t deliver_ms = 0;
    std::uint64_t seq = 0;

    std::string_view kind() const;
    template <class T>
    const T* as() const { return std::get_if<T>(&body); }
};

class SimNet {
public:
    explicit SimNet(std::uint64_t seed = 1, LinkParams default_link = {});

    void set_default_link(LinkParams p) { default_link_ = p; }
    /// Sets both directions.
    void set_link(const Address& a, const Address& b, LinkParams p);
    LinkParams link(const Address& from, const Address& to) const;

    /// Schedules delivery at now + latency unless the link drops it.
    /// Returns false when dropped.
    bool send(NetworkMessage msg, std::int64_t now_ms);

    std::optional<std::int64_t> next_delivery_ms() const;
    /// Pops the earliest message if it is due at or before now_ms.
    std::optional<NetworkMessage> pop_due(std::int64_t now_ms);

    std::size_t in_flight() const { return queue_.size(); }
    std::uint64_t sent() const { return sent_; }
    std::uint64_t dropped() const { return dropped_; }

private:
    struct Later {
        bool operator()(const NetworkMessage& a, const NetworkMessage& b) const
        {
            return a.deliver_ms != b.deliver_ms ? a.deliver_ms > b.deliver_ms : a.seq > b.seq;
        }
    };

    std::mt19937_64 rng_;
    LinkParams default_link_;
    std::map<std::pair<Address, Address>, LinkParams> links_;
    std::priority_queue<NetworkMessage, std::vector<NetworkMessage>, Later> queue_;
    std::uint64_t seq_ = 0;
    std::uint64_t sent_ = 0;
    std::uint64_t dropped_ = 0;
};

} // namespace chainmart
