#include <chainmart/demo.hpp>
#include <chainmart/error.hpp>

#include <fstream>
#include <sstream>

namespace chainmart {

using json = nlohmann::json;

AppConfig AppConfig::from_json(const json& j)
{
    if (!j.is_object())
        fail(Errc::BadConfig, "config must be a JSON object");
    AppConfig c;
    try {
        if (j.contains("validators"))
            c.validators = j.at("validators").get<std::uint32_t>();
        if (j.contains("block_interval_ms"))
            c.block_interval_ms = j.at("block_interval_ms").get<std::uint64_t>();
        if (j.contains("collateral_policy"))
            c.collateral_policy = CollateralPolicy::parse(j.at("collateral_policy").get<std::string>());
        if (j.contains("dispute_window_ms"))
            c.dispute_window_ms = j.at("dispute_window_ms").get<std::int64_t>();
        if (j.contains("retry_timeout_ms"))
            c.retry_timeout_ms = j.at("retry_timeout_ms").get<std::int64_t>();
        if (j.contains("max_attempts"))
            c.max_attempts = j.at("max_attempts").get<std::uint32_t>();
        if (j.contains("store_dir") && !j.at("store_dir").is_null())
            c.store_dir = j.at("store_dir").get<std::string>();
    } catch (const json::exception& e) {
        fail(Errc::BadConfig, std::string("bad config value: ") + e.what());
    }
    if (c.validators == 0)
        fail(Errc::BadConfig, "validators must be at least 1");
    if (c.block_interval_ms == 0)
        fail(Errc::BadConfig, "block_interval_ms must be positive");
    if (c.max_attempts == 0)
        fail(Errc::BadConfig, "max_attempts must be at least 1");
    if (c.dispute_window_ms < 0 || c.retry_timeout_ms < 0)
        fail(Errc::BadConfig, "time windows must be non-negative");
    return c;
}

AppConfig AppConfig::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        fail(Errc::BadConfig, "cannot read config " + path.string());
    try {
        return from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        fail(Errc::BadConfig, std::string("config is not JSON: ") + e.what());
    }
}

ConsortiumConfig AppConfig::consortium(std::uint64_t seed, LinkParams link) const
{
    ConsortiumConfig c;
    c.block_interval_ms = block_interval_ms;
    c.collateral_policy = collateral_policy;
    c.dispute_window_ms = dispute_window_ms;
    c.retry_timeout_ms = retry_timeout_ms;
    c.max_attempts = max_attempts;
    c.seed = seed;
    c.default_link = link;
    c.store_dir = store_dir;
    return c;
}

json AccessResult::to_json() const
{
    json j = {{"outcome", outcome}, {"reason", reason}};
    if (contract_id)
        j["contract_id"] = contract_id->hex();
    if (digest)
        j["digest"] = digest->hex();
    if (escrow_state)
        j["escrow_state"] = contract_state_name(*escrow_state);
    if (plaintext)
        j["plaintext"] = std::string(plaintext->begin(), plaintext->end());
    return j;
}

DemoWorld::DemoWorld(const AppConfig& cfg, std::uint64_t seed, LinkParams link)
    : merchant_(identity_from_label("merchant"))
{
    for (std::uint32_t i = 0; i < cfg.validators; ++i)
        validators_.push_back(identity_from_label("validator-" + std::to_string(i + 1)));
    for (int i = 1; i <= 3; ++i)
        customers_.push_back(identity_from_label("customer-" + std::to_string(i)));
    for (int i = 1; i <= 2; ++i)
        enterprises_.push_back(identity_from_label("enterprise-" + std::to_string(i)));

    GenesisSpec g;
    g.validators = validators_;
    g.members.emplace_back(merchant_, kDemoGrant);
    for (const auto& c : customers_)
        g.members.emplace_back(c, kDemoGrant);
    for (const auto& e : enterprises_)
        g.members.emplace_back(e, kDemoGrant);
    world_ = std::make_unique<Consortium>(cfg.consortium(seed, link), g);

    std::vector<Identity> shop_ids{merchant_};
    shop_ids.insert(shop_ids.end(), customers_.begin(), customers_.end());
    shop_node_ = &world_->add_node("shop", shop_ids);
    for (std::size_t i = 0; i < enterprises_.size(); ++i)
        enterprise_nodes_.push_back(&world_->add_node("enterprise-" + std::to_string(i + 1), {enterprises_[i]}));

    std::vector<Address> customer_addrs;
    for (const auto& c : customers_)
        customer_addrs.push_back(c.address);
    shop_ = std::make_unique<ShopCart>(*world_, *shop_node_, merchant_.address, customer_addrs, demo_catalog());
}

AccessResult DemoWorld::demo_access(std::size_t enterprise, const Address& customer, const std::string& category,
                                    const std::string& purpose, std::int64_t now_ms)
{
    auto& node = *enterprise_nodes_.at(enterprise);
    auto& w = *world_;
    now_ms = std::max(now_ms, w.clock_ms());
    w.commit(now_ms);

    AccessResult r;
    std::optional<Listing> target;
    for (auto& l : node.listings(category, true))
        if (l.owner() == customer)
            target = std::move(l);
    if (!target) {
        r.outcome = "NoListing";
        r.reason = "no listing of '" + category + "' for " + customer.hex();
        return r;
    }

    auto entry = node.request_data(*target, purpose, now_ms);
    r.contract_id = entry.contract_id;
    r.digest = entry.digest;
    auto t = w.run_until_idle(now_ms, entry.deadline_ms + 1);

    // Drive any outstanding escrow timeout so the consumer is made whole
    // before returning.
    const auto& c = w.escrow().contract(entry.contract_id);
    if (!is_terminal(c.state) && c.state != ContractState::Delivered) {
        auto due = std::max(c.terms.deadlines.funding_deadline_ms, c.terms.deadlines.delivery_deadline_ms) + 1;
        t = std::max(t, due);
        w.tick(t);
    }
    w.commit(std::max(t, w.clock_ms()));

    const auto* done = node.retrieval(entry.digest);
    r.escrow_state = w.escrow().contract(entry.contract_id).state;
    if (done && done->state == RetrievalState::Verified) {
        r.outcome = "Delivered";
        if (auto it = node.received().find(entry.digest); it != node.received().end())
            r.plaintext = it->second;
    } else if (done && done->fault.rfind("denied:", 0) == 0) {
        r.outcome = "Denied";
        r.reason = done->fault.substr(7);
    } else {
        r.outcome = "Failed";
        r.reason = done ? done->fault : "lost";
    }
    return r;
}

E2EResult run_e2e_demo(std::uint64_t seed, AccountLedger::Hook invariant_hook)
{
    E2EResult out;
    out.demo = std::make_unique<DemoWorld>(AppConfig{}, seed);
    auto& demo = *out.demo;
    auto& shop = demo.shop();
    auto& w = demo.world();
    if (invariant_hook)
        w.set_invariant_hook(std::move(invariant_hook));
    const auto& owner = demo.customers().front();

    std::int64_t t = 1000;
    shop.open_session("s-1", owner.address);
    shop.cart_update("s-1", "sku-001", 1);
    shop.cart_update("s-1", "sku-002", 2);
    out.receipt = shop.checkout("s-1", t);
    out.receipt_verified = shop.verify_receipt(out.receipt);

    t += 1000;
    auto record = shop.repository_record(owner.address, "purchase-history");
    out.canonical_record = canonicalize_record(record);
    shop.opt_in_sharing(owner.address, record, {"analytics", "marketing"}, 10, t);
    w.commit(t);

    t += 1000;
    out.owner_balance_before = w.escrow().ledger().balance(owner.address);
    auto found = demo.enterprise(0).discover("purchase-history", 50, "analytics", t);
    if (found.empty())
        fail(Errc::NotFound, "published listing not discoverable");
    out.access = demo.demo_access(0, owner.address, "purchase-history", "analytics", t);
    out.owner_balance_after = w.escrow().ledger().balance(owner.address);

    t = std::max(w.clock_ms(), t) + 1000;
    out.denied_access = demo.demo_access(1, owner.address, "purchase-history", "advertising", t);

    // Let every dispute window close so all claims have fired.
    t = w.clock_ms() + w.config().dispute_window_ms + 2;
    w.tick(t);
    w.commit(t);

    out.chain_export = w.chain().export_jsonl();
    out.audit_log = w.audit_log_jsonl();
    for (const auto& a : shop.audit_trail(owner.address)) {
        out.trail.push_back("t=" + std::to_string(a.when_ms) + " " + std::string(audit_outcome_name(a.outcome)) +
                            " who=" + a.who.hex() + " what=" + a.what.hex() + " whom=" + a.whom.hex() +
                            " purpose=" + a.purpose + " means=" + a.means.stream + ":" + a.means.txid.hex() +
                            (a.reason.empty() ? "" : " reason=" + a.reason));
    }
    return out;
}

} // namespace chainmart
