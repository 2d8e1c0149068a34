#pragma once

// Fixture world shared by the HTTP service, the CLI demo and the tests:
// validators, one shop node (merchant + customers) and the data-consumer
// enterprises, all funded at genesis.

#include <chainmart/shopcart.hpp>

#include <filesystem>
#include <memory>

namespace chainmart {

struct AppConfig {
    std::uint32_t validators = 4;
    std::uint64_t block_interval_ms = 1000;
    CollateralPolicy collateral_policy;
    std::int64_t dispute_window_ms = 60'000;
    std::int64_t retry_timeout_ms = 0;
    std::uint32_t max_attempts = 3;
    std::optional<std::filesystem::path> store_dir;

    /// Missing fields keep their defaults. Throws Error(BadConfig).
    static AppConfig from_json(const nlohmann::json& j);
    static AppConfig load(const std::filesystem::path& path);
    ConsortiumConfig consortium(std::uint64_t seed, LinkParams link = {}) const;
};

inline constexpr Amount kDemoGrant = 1000;

struct AccessResult {
    // "Delivered", "Denied", "Failed" or "NoListing".
    std::string outcome;
    std::string reason;
    std::optional<ContractId> contract_id;
    std::optional<Digest32> digest;
    std::optional<Bytes> plaintext;
    std::optional<ContractState> escrow_state;

    nlohmann::json to_json() const;
};

class DemoWorld {
public:
    explicit DemoWorld(const AppConfig& cfg = {}, std::uint64_t seed = 1, LinkParams link = {});

    Consortium& world() { return *world_; }
    ShopCart& shop() { return *shop_; }
    SharingNode& shop_node() { return *shop_node_; }
    SharingNode& enterprise(std::size_t i) { return *enterprise_nodes_.at(i); }
    std::size_t enterprise_count() const { return enterprise_nodes_.size(); }

    const std::vector<Identity>& validators() const { return validators_; }
    const Identity& merchant() const { return merchant_; }
    const std::vector<Identity>& customers() const { return customers_; }
    const std::vector<Identity>& enterprises() const { return enterprises_; }

    /// An enterprise tries to buy the customer's newest listing of the
    /// category from its cached stream view (which may be revoked), then the
    /// world runs until the retrieval and its escrow are resolved.
    AccessResult demo_access(std::size_t enterprise, const Address& customer, const std::string& category,
                             const std::string& purpose, std::int64_t now_ms);

private:
    std::vector<Identity> validators_;
    Identity merchant_;
    std::vector<Identity> customers_;
    std::vector<Identity> enterprises_;
    std::unique_ptr<Consortium> world_;
    SharingNode* shop_node_ = nullptr;
    std::vector<SharingNode*> enterprise_nodes_;
    std::unique_ptr<ShopCart> shop_;
};

struct E2EResult {
    std::unique_ptr<DemoWorld> demo;
    Receipt receipt;
    bool receipt_verified = false;
    std::string canonical_record;
    AccessResult access;
    AccessResult denied_access;
    Amount owner_balance_before = 0;
    Amount owner_balance_after = 0;
    std::string chain_export;
    std::string audit_log;
    // Human-readable audit trail of the data owner.
    std::vector<std::string> trail;
};

/// The full happy path: checkout, opt-in, discover, request, serve, verify,
/// settle, plus one access for a purpose the owner did not allow. A hook,
/// when given, replaces the default conservation check for the whole run.
E2EResult run_e2e_demo(std::uint64_t seed, AccountLedger::Hook invariant_hook = {});

} // namespace chainmart
