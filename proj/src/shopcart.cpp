#include <chainmart/error.hpp>
#include <chainmart/shopcart.hpp>

#include <algorithm>

namespace chainmart {

using json = nlohmann::json;

namespace {

json step_to_json(const MerkleStep& s)
{
    return {{"sibling", s.sibling.hex()}, {"side", s.side == MerkleStep::Side::Left ? "left" : "right"}};
}

MerkleStep step_from_json(const json& j)
{
    MerkleStep s;
    s.sibling = digest_from_hex(j.at("sibling").get<std::string>());
    auto side = j.at("side").get<std::string>();
    if (side == "left")
        s.side = MerkleStep::Side::Left;
    else if (side == "right")
        s.side = MerkleStep::Side::Right;
    else
        fail(Errc::BadRequest, "merkle step side must be 'left' or 'right'");
    return s;
}

} // namespace

json Receipt::to_json() const
{
    json path = json::array();
    for (const auto& s : proof.merkle_path)
        path.push_back(step_to_json(s));
    return {
        {"order_id", order_id.hex()},
        {"customer", customer.hex()},
        {"merchant", merchant.hex()},
        {"total", total},
        {"txid", txid.hex()},
        {"created_ms", created_ms},
        {"order_body", order_body},
        {"proof",
         {{"txid", proof.txid.hex()},
          {"height", proof.height},
          {"merkle_path", std::move(path)},
          {"header_digest", proof.header_digest.hex()}}},
    };
}

Receipt Receipt::from_json(const json& j)
{
    try {
        Receipt r;
        r.order_id = digest_from_hex(j.at("order_id").get<std::string>());
        r.customer = address_from_hex(j.at("customer").get<std::string>());
        r.merchant = address_from_hex(j.at("merchant").get<std::string>());
        r.total = j.at("total").get<Amount>();
        r.txid = digest_from_hex(j.at("txid").get<std::string>());
        r.created_ms = j.at("created_ms").get<std::int64_t>();
        r.order_body = j.at("order_body").get<std::string>();
        const auto& p = j.at("proof");
        r.proof.txid = digest_from_hex(p.at("txid").get<std::string>());
        r.proof.height = p.at("height").get<std::uint64_t>();
        r.proof.header_digest = digest_from_hex(p.at("header_digest").get<std::string>());
        for (const auto& s : p.at("merkle_path"))
            r.proof.merkle_path.push_back(step_from_json(s));
        return r;
    } catch (const json::exception& e) {
        fail(Errc::BadRequest, std::string("malformed receipt: ") + e.what());
    }
}

std::vector<Product> demo_catalog()
{
    return {
        {"sku-001", "Espresso beans 1kg", 30, 50},
        {"sku-002", "Ceramic mug", 5, 200},
        {"sku-003", "Pour-over kettle", 45, 20},
        {"sku-004", "Paper filters x100", 4, 500},
        {"sku-005", "Hand grinder", 60, 15},
        {"sku-006", "Milk frother", 25, 40},
        {"sku-007", "Travel tumbler", 18, 80},
        {"sku-008", "Tasting notebook", 7, 120},
    };
}

ShopCart::ShopCart(Consortium& world, SharingNode& node, Address merchant, std::vector<Address> customers,
                   std::vector<Product> catalog)
    : world_(world), node_(node), merchant_(merchant), customers_(std::move(customers))
{
    if (!node_.manages(merchant_))
        fail(Errc::BadConfig, "shop node does not manage the merchant identity");
    for (const auto& c : customers_)
        if (!node_.manages(c))
            fail(Errc::BadConfig, "shop node does not manage customer " + c.hex());
    for (auto& p : catalog) {
        if (p.price == 0)
            fail(Errc::BadConfig, "product " + p.sku + " needs a positive price");
        if (!catalog_.emplace(p.sku, p).second)
            fail(Errc::BadConfig, "duplicate sku " + p.sku);
    }
}

std::vector<Product> ShopCart::list_catalog() const
{
    std::vector<Product> out;
    out.reserve(catalog_.size());
    for (const auto& [sku, p] : catalog_)
        out.push_back(p);
    return out;
}

Product& ShopCart::product(const std::string& sku)
{
    auto it = catalog_.find(sku);
    if (it == catalog_.end())
        fail(Errc::UnknownSku, "unknown sku '" + sku + "'");
    return it->second;
}

bool ShopCart::is_customer(const Address& a) const
{
    return std::find(customers_.begin(), customers_.end(), a) != customers_.end();
}

void ShopCart::require_customer(const Address& a) const
{
    if (!is_customer(a))
        fail(Errc::UnknownCustomer, "unknown customer " + a.hex());
}

void ShopCart::open_session(const std::string& session_id, const Address& customer)
{
    require_customer(customer);
    auto& c = carts_[session_id];
    c.session_id = session_id;
    c.customer = customer;
}

Cart ShopCart::cart_update(const std::string& session_id, const std::string& sku, std::uint64_t qty)
{
    auto it = carts_.find(session_id);
    if (it == carts_.end())
        fail(Errc::UnknownSession, "unknown session '" + session_id + "'");
    product(sku);
    auto& c = it->second;
    if (qty == 0)
        c.lines.erase(sku);
    else
        c.lines[sku] = qty;
    c.total = 0;
    for (const auto& [s, q] : c.lines)
        c.total += catalog_.at(s).price * q;
    return c;
}

const Cart& ShopCart::cart(const std::string& session_id) const
{
    auto it = carts_.find(session_id);
    if (it == carts_.end())
        fail(Errc::UnknownSession, "unknown session '" + session_id + "'");
    return it->second;
}

Receipt ShopCart::checkout(const std::string& session_id, std::int64_t now_ms)
{
    auto it = carts_.find(session_id);
    if (it == carts_.end())
        fail(Errc::UnknownSession, "unknown session '" + session_id + "'");
    auto& c = it->second;
    if (c.lines.empty())
        fail(Errc::EmptyCart, "cart is empty");
    for (const auto& [sku, qty] : c.lines)
        if (product(sku).stock < qty)
            fail(Errc::OutOfStock, "not enough stock for " + sku);
    const auto& ledger = world_.escrow().ledger();
    if (ledger.balance(c.customer) < c.total)
        fail(Errc::InsufficientFunds, "balance " + std::to_string(ledger.balance(c.customer)) + " < total " +
                                          std::to_string(c.total));

    json lines = json::object();
    for (const auto& [sku, qty] : c.lines)
        lines[sku] = qty;
    auto body = canonical_json({
        {"created_ms", now_ms},
        {"customer", c.customer.hex()},
        {"lines", std::move(lines)},
        {"merchant", merchant_.hex()},
        {"session", session_id},
        {"total", c.total},
    });
    auto order_id = hash_payload(body);

    const auto& customer = node_.identity(c.customer);
    const auto& merchant = node_.identity(merchant_);
    world_.transfer(customer, merchant_, c.total, "order:" + order_id.hex());
    auto txid = world_.anchor(merchant, "order", order_id, to_bytes(body));
    world_.commit(now_ms);

    Receipt r;
    r.order_id = order_id;
    r.customer = c.customer;
    r.merchant = merchant_;
    r.total = c.total;
    r.txid = txid;
    r.proof = world_.chain().inclusion_proof(txid);
    r.created_ms = now_ms;
    r.order_body = body;

    Order o{order_id, {}, c.total, now_ms};
    for (const auto& [sku, qty] : c.lines) {
        product(sku).stock -= qty;
        o.lines.emplace_back(sku, qty);
    }
    orders_[c.customer].push_back(std::move(o));
    c.lines.clear();
    c.total = 0;
    receipts_[order_id] = r;
    world_.log("t=" + std::to_string(now_ms) + " checkout " + session_id + " order=" + order_id.hex() +
               " total=" + std::to_string(r.total));
    return r;
}

bool ShopCart::verify_receipt(const Receipt& r) const
{
    try {
        if (hash_payload(r.order_body) != r.order_id)
            return false;
        auto body = json::parse(r.order_body);
        if (body.at("customer").get<std::string>() != r.customer.hex() ||
            body.at("merchant").get<std::string>() != r.merchant.hex() ||
            body.at("total").get<Amount>() != r.total || body.at("created_ms").get<std::int64_t>() != r.created_ms)
            return false;
        if (r.proof.txid != r.txid)
            return false;
        const auto& chain = world_.chain();
        if (!verify_inclusion(r.proof, chain.headers()))
            return false;
        const auto* tx = chain.committed_tx(r.txid);
        if (!tx || tx->kind != TxKind::Anchor || tx->sender != r.merchant)
            return false;
        auto anchor = AnchorBody::decode(tx->payload);
        return anchor.label == "order" && anchor.digest == r.order_id;
    } catch (const std::exception&) {
        return false;
    }
}

const Receipt& ShopCart::receipt(const Digest32& order_id) const
{
    auto it = receipts_.find(order_id);
    if (it == receipts_.end())
        fail(Errc::UnknownOrder, "unknown order " + order_id.hex());
    return it->second;
}

ProfileRecord ShopCart::repository_record(const Address& customer, const std::string& category,
                                          const std::optional<json>& fields) const
{
    require_customer(customer);
    if (fields) {
        auto r = record_from_json({{"category", category}, {"fields", *fields}});
        r.owner = customer;
        return r;
    }
    if (category != "purchase-history")
        fail(Errc::UnsupportedValue, "category '" + category + "' needs explicit fields");

    ProfileRecord r;
    r.owner = customer;
    r.category = category;
    std::int64_t count = 0, spent = 0, last = 0;
    std::set<std::string> skus;
    if (auto it = orders_.find(customer); it != orders_.end()) {
        for (const auto& o : it->second) {
            ++count;
            spent += static_cast<std::int64_t>(o.total);
            last = std::max(last, o.created_ms);
            for (const auto& [sku, qty] : o.lines)
                skus.insert(sku);
        }
    }
    std::string joined;
    for (const auto& s : skus)
        joined += (joined.empty() ? "" : ",") + s;
    r.fields["order_count"] = count;
    r.fields["total_spent"] = spent;
    r.fields["last_order_ms"] = last;
    r.fields["skus"] = joined;
    return r;
}

StreamItem ShopCart::opt_in_sharing(const Address& customer, const ProfileRecord& record,
                                    const std::set<std::string>& purposes, Amount price, std::int64_t now_ms)
{
    require_customer(customer);
    if (record.owner != customer)
        fail(Errc::BadRequest, "record owner does not match the customer");
    return node_.publish_profile(record, purposes, price, now_ms);
}

PurgeResult ShopCart::withdraw_consent(const Address& customer, const std::string& category, bool purge,
                                       std::int64_t now_ms)
{
    require_customer(customer);
    if (purge)
        return node_.purge_data(customer, category, now_ms);
    return {node_.revoke_consent(customer, category, now_ms), 0};
}

Rewards ShopCart::rewards(const Address& customer) const
{
    Rewards out;
    for (const auto& [id, c] : world_.escrow().contracts()) {
        if (c.provider() != customer || c.state != ContractState::Settled)
            continue;
        RewardEntry e;
        e.customer = customer;
        e.amount = c.price();
        e.contract_id = id;
        e.when_ms = c.closed_ms.value_or(0);
        e.category = node_.category_of(c.terms.item_digest).value_or("");
        out.balance_delta += e.amount;
        out.entries.push_back(std::move(e));
    }
    std::stable_sort(out.entries.begin(), out.entries.end(),
                     [](const RewardEntry& a, const RewardEntry& b) { return a.when_ms < b.when_ms; });
    return out;
}

std::vector<AuditEntry> ShopCart::audit_trail(const Address& customer, const AuditFilter& extra) const
{
    // Delivered and Denied rows are written by this node as provider; Slashed
    // rows are written by the consumer's node.
    AuditFilter f = extra;
    f.whom = customer;
    std::vector<AuditEntry> out;
    for (const auto& n : world_.nodes())
        for (auto& e : n->audit_query(f))
            out.push_back(std::move(e));
    std::stable_sort(out.begin(), out.end(),
                     [](const AuditEntry& a, const AuditEntry& b) { return a.when_ms < b.when_ms; });
    return out;
}

Wallet ShopCart::wallet(const Address& who) const
{
    if (who != merchant_ && !is_customer(who))
        fail(Errc::UnknownCustomer, "unknown customer " + who.hex());
    return {who, world_.escrow().ledger().balance(who)};
}

} // namespace chainmart
