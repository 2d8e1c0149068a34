#pragma once

// The e-commerce enterprise node: catalog, carts, token checkout with
// proof-of-existence receipts, profile opt-in, rewards and audit views.
//
// Not internally synchronized; the HTTP layer serializes every call.

#include <chainmart/sharing.hpp>

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace chainmart {

struct Product {
    std::string sku;
    std::string name;
    Amount price = 0;
    std::uint64_t stock = 0;
};

struct Cart {
    std::string session_id;
    Address customer;
    std::map<std::string, std::uint64_t> lines; // sku -> qty > 0
    Amount total = 0;
};

struct Receipt {
    Digest32 order_id;
    Address customer;
    Address merchant;
    Amount total = 0;
    Digest32 txid;
    InclusionProof proof;
    std::int64_t created_ms = 0;
    // Canonical order body; order_id == SHA-256(order_body).
    std::string order_body;

    nlohmann::json to_json() const;
    /// Throws Error(BadRequest) on malformed input.
    static Receipt from_json(const nlohmann::json& j);
};

struct RewardEntry {
    Address customer;
    Amount amount = 0;
    ContractId contract_id;
    std::int64_t when_ms = 0;
    std::string category;
};

struct Rewards {
    Amount balance_delta = 0;
    std::vector<RewardEntry> entries;
};

struct Wallet {
    Address address;
    Amount balance = 0;
};

/// The fixture catalog: eight products, sorted by sku.
std::vector<Product> demo_catalog();

class ShopCart {
public:
    /// `node` must manage the merchant and every customer identity.
    ShopCart(Consortium& world, SharingNode& node, Address merchant, std::vector<Address> customers,
             std::vector<Product> catalog);

    std::vector<Product> list_catalog() const;

    void open_session(const std::string& session_id, const Address& customer);
    bool has_session(const std::string& session_id) const { return carts_.contains(session_id); }
    /// qty == 0 removes the line. Throws Error(UnknownSku) or Error(UnknownSession).
    Cart cart_update(const std::string& session_id, const std::string& sku, std::uint64_t qty);
    const Cart& cart(const std::string& session_id) const;

    /// Pays the merchant, anchors the order and waits for the next block so
    /// the receipt ships with an inclusion proof. All-or-nothing.
    Receipt checkout(const std::string& session_id, std::int64_t now_ms);
    bool verify_receipt(const Receipt& receipt) const;
    const Receipt& receipt(const Digest32& order_id) const;

    /// Builds a record from this shop's repository: "purchase-history" from
    /// the customer's orders, anything else from `fields`.
    ProfileRecord repository_record(const Address& customer, const std::string& category,
                                    const std::optional<nlohmann::json>& fields = std::nullopt) const;
    StreamItem opt_in_sharing(const Address& customer, const ProfileRecord& record,
                              const std::set<std::string>& purposes, Amount price, std::int64_t now_ms);
    PurgeResult withdraw_consent(const Address& customer, const std::string& category, bool purge,
                                 std::int64_t now_ms);

    Rewards rewards(const Address& customer) const;
    std::vector<AuditEntry> audit_trail(const Address& customer, const AuditFilter& extra = {}) const;
    Wallet wallet(const Address& who) const;

    const Address& merchant() const { return merchant_; }
    const std::vector<Address>& customers() const { return customers_; }
    bool is_customer(const Address& a) const;
    Consortium& world() { return world_; }
    SharingNode& node() { return node_; }

private:
    Product& product(const std::string& sku);
    void require_customer(const Address& a) const;

    struct Order {
        Digest32 order_id;
        std::vector<std::pair<std::string, std::uint64_t>> lines;
        Amount total = 0;
        std::int64_t created_ms = 0;
    };

    Consortium& world_;
    SharingNode& node_;
    Address merchant_;
    std::vector<Address> customers_;
    std::map<std::string, Product> catalog_;
    std::map<std::string, Cart> carts_;
    std::map<Digest32, Receipt> receipts_;
    std::map<Address, std::vector<Order>> orders_;
};

} // namespace chainmart
