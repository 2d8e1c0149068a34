#include <chainmart/error.hpp>
#include <chainmart/sharing.hpp>

#include <algorithm>
#include <chrono>
#include <limits>
#include <stdexcept>

namespace chainmart {

using json = nlohmann::json;

namespace {

constexpr std::string_view kProfiles = "profiles";
constexpr std::string_view kAudit = "audit";
constexpr std::string_view kRevoked = "revoked";

Digest32 key_commitment_of(const DataKey& key)
{
    return hash_payload(key.view());
}

double elapsed_ms(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

} // namespace

std::string_view retrieval_state_name(RetrievalState s)
{
    switch (s) {
    case RetrievalState::Pending: return "Pending";
    case RetrievalState::Requested: return "Requested";
    case RetrievalState::Delivered: return "Delivered";
    case RetrievalState::Verified: return "Verified";
    case RetrievalState::Failed: return "Failed";
    }
    return "Unknown";
}

// --- SharingNode --------------------------------------------------------------

SharingNode::SharingNode(Consortium& world, std::string name, std::vector<Identity> identities)
    : world_(world), name_(std::move(name)), identities_(std::move(identities))
{
    if (identities_.empty())
        fail(Errc::BadConfig, "node '" + name_ + "' needs at least one identity");
    for (std::size_t i = 0; i < identities_.size(); ++i)
        by_address_[identities_[i].address] = i;
    if (world_.config().store_dir)
        store_ = std::make_unique<OffchainStore>(*world_.config().store_dir / name_);
    else
        store_ = std::make_unique<OffchainStore>();
}

const Identity& SharingNode::identity(const Address& addr) const
{
    auto it = by_address_.find(addr);
    if (it == by_address_.end())
        fail(Errc::UnknownIdentity, "node '" + name_ + "' does not manage " + addr.hex());
    return identities_[it->second];
}

std::vector<Address> SharingNode::addresses() const
{
    std::vector<Address> out;
    for (const auto& id : identities_)
        out.push_back(id.address);
    return out;
}

StreamItem SharingNode::publish_profile(const ProfileRecord& record, const std::set<std::string>& purposes,
                                        Amount price, std::int64_t now_ms, std::optional<std::int64_t> expiry_ms)
{
    const auto& owner = identity(record.owner);
    if (price == 0)
        fail(Errc::BadItem, "listing price must be positive");
    if (purposes.empty())
        fail(Errc::BadItem, "listing needs at least one allowed purpose");
    auto canonical = canonicalize_record(record);

    auto policy_key = std::make_pair(record.owner, record.category);
    if (policies_.contains(policy_key))
        revoke_listings(owner, record.category, now_ms);

    auto [key, ct] = encrypt_record(as_bytes(canonical), world_.rng());
    auto ct_bytes = ct.encode();
    auto ref = store_->put(ct_bytes, record.category, record.owner, now_ms);
    auto commitment = key_commitment_of(key);

    ListingMetadata meta;
    meta.category = record.category;
    meta.purposes = purposes;
    meta.price = price;
    meta.size_bytes = ct_bytes.size();
    meta.expiry_ms = expiry_ms;
    meta.schema_version = record.schema_version;

    StreamItemBody body;
    body.stream = std::string(kProfiles);
    body.keys = {record.category};
    body.payload_digest = ref.digest;
    body.key_commitment = commitment;
    body.offchain_ref = ref.digest;
    body.metadata = to_bytes(meta.encode());
    auto txid = publish_stream_item(world_.chain(), body, owner);

    publications_[ref.digest] = {ref.digest, commitment, ref, key, record.owner, record.category, txid, false};
    policies_[policy_key] = {record.owner, record.category, purposes, price, expiry_ms, false};
    world_.log("t=" + std::to_string(now_ms) + " publish " + name_ + " " + record.category + " " +
               ref.digest.hex() + " tx=" + txid.hex());

    StreamItem item;
    item.body = std::move(body);
    item.publisher = record.owner;
    item.txid = txid;
    return item;
}

std::size_t SharingNode::revoke_listings(const Identity& owner, const std::string& category, std::int64_t now_ms)
{
    std::size_t n = 0;
    for (auto& [digest, pub] : publications_) {
        if (pub.owner != owner.address || pub.category != category || pub.superseded)
            continue;
        StreamItemBody body;
        body.stream = std::string(kProfiles);
        body.keys = {std::string(kRevoked), category};
        body.payload_digest = digest;
        body.metadata = to_bytes(canonical_json({{"action", "revoke"}, {"category", category}}));
        publish_stream_item(world_.chain(), body, owner);
        pub.superseded = true;
        ++n;
        world_.log("t=" + std::to_string(now_ms) + " revoke " + name_ + " " + category + " " + digest.hex());
    }
    return n;
}

std::size_t SharingNode::revoke_consent(const Address& owner, const std::string& category, std::int64_t now_ms)
{
    auto it = policies_.find({owner, category});
    if (it == policies_.end())
        fail(Errc::UnknownCategory, "no consent policy for category '" + category + "'");
    it->second.revoked = true;
    return revoke_listings(identity(owner), category, now_ms);
}

PurgeResult SharingNode::purge_data(const Address& owner, const std::string& category, std::int64_t now_ms)
{
    PurgeResult r;
    r.revoked = revoke_consent(owner, category, now_ms);
    r.deleted = store_->erase(category, owner);
    for (auto& [digest, pub] : publications_)
        if (pub.owner == owner && pub.category == category)
            pub.key = DataKey{};
    world_.log("t=" + std::to_string(now_ms) + " purge " + name_ + " " + category + " deleted=" +
               std::to_string(r.deleted));
    return r;
}

const ConsentPolicy* SharingNode::policy(const Address& owner, const std::string& category) const
{
    auto it = policies_.find({owner, category});
    return it == policies_.end() ? nullptr : &it->second;
}

std::vector<ConsentPolicy> SharingNode::policies(const Address& owner) const
{
    std::vector<ConsentPolicy> out;
    for (const auto& [key, p] : policies_)
        if (key.first == owner)
            out.push_back(p);
    return out;
}

void SharingNode::record_audit(AuditEntry entry, const Identity& publisher)
{
    auto canonical = entry.canonical();
    StreamItemBody body;
    body.stream = std::string(kAudit);
    body.keys = {entry.who.hex(), entry.whom.hex(), std::string(audit_outcome_name(entry.outcome))};
    if (!entry.category.empty())
        body.keys.push_back(entry.category);
    body.payload_digest = hash_payload(canonical);
    body.metadata = to_bytes(canonical);
    publish_stream_item(world_.chain(), body, publisher);
    audit_.push_back(std::move(entry));
}

NetworkMessage SharingNode::deny(const QueryData& q, const Address& consumer, const Address& owner,
                                 std::int64_t now_ms, std::string reason)
{
    NetworkMessage msg{Denied{q.contract_id, q.digest, reason}, owner, consumer};
    world_.net().send(msg, now_ms);
    ++counters_.denied_sent;

    AuditEntry a;
    a.who = consumer;
    a.what = q.digest;
    a.whom = owner;
    a.when_ms = now_ms;
    a.means.stream = std::string(kProfiles);
    if (world_.escrow().find(q.contract_id) && !world_.contract_anchors(q.contract_id).empty())
        a.means.txid = world_.contract_anchors(q.contract_id).back();
    else if (auto it = publications_.find(q.digest); it != publications_.end())
        a.means.txid = it->second.txid;
    a.purpose = q.purpose;
    a.outcome = AuditOutcome::Denied;
    a.category = q.category;
    a.contract_id = q.contract_id;
    a.reason = reason;
    record_audit(std::move(a), identity(owner));
    world_.log("t=" + std::to_string(now_ms) + " deny " + name_ + " " + q.digest.hex() + " " + reason);
    return msg;
}

std::optional<NetworkMessage> SharingNode::serve_request(const QueryData& q, const Address& consumer,
                                                         std::int64_t now_ms)
{
    auto pub_it = publications_.find(q.digest);
    if (pub_it == publications_.end())
        return deny(q, consumer, primary().address, now_ms, "unknown-item");
    auto& pub = pub_it->second;

    if (withheld_.contains(q.contract_id))
        return std::nullopt;
    if (auto cached = delivered_.find(q.contract_id); cached != delivered_.end()) {
        world_.net().send(cached->second, now_ms);
        ++counters_.responses_resent;
        return cached->second;
    }

    const auto& owner = identity(pub.owner);
    if (!store_->contains(pub.ref))
        return deny(q, consumer, owner.address, now_ms, "data-deleted");
    const auto& pol = policies_.at({pub.owner, pub.category});
    if (pub.superseded || pol.revoked)
        return deny(q, consumer, owner.address, now_ms, "consent-revoked");
    if (!pol.allowed_purposes.contains(q.purpose))
        return deny(q, consumer, owner.address, now_ms, "purpose-not-allowed");
    if (pol.expired(now_ms))
        return deny(q, consumer, owner.address, now_ms, "consent-expired");

    const auto* c = world_.escrow().find(q.contract_id);
    if (!c || c->consumer() != consumer || c->provider() != owner.address || c->terms.item_digest != pub.payload_digest ||
        c->terms.key_commitment != pub.key_commitment || c->price() < pol.price ||
        c->state != ContractState::PartiallyFunded || c->funded_consumer == 0)
        return deny(q, consumer, owner.address, now_ms, "bad-contract");
    if (q.consumer_enc_public.size() != 32)
        return deny(q, consumer, owner.address, now_ms, "bad-public-key");

    auto ct_bytes = store_->get(pub.ref);
    DataKey key = pub.key;
    if (behavior_ == ProviderBehavior::CorruptCiphertext)
        ct_bytes.back() ^= 0x01;
    if (behavior_ == ProviderBehavior::WrongKey)
        world_.rng().fill(key.bytes);

    WrappedKey wk;
    try {
        wk = wrap_key(key, q.consumer_enc_public, consumer, world_.rng());
    } catch (const Error&) {
        return deny(q, consumer, owner.address, now_ms, "bad-public-key");
    }

    try {
        world_.fund(owner, q.contract_id, now_ms);
    } catch (const Error& e) {
        return deny(q, consumer, owner.address, now_ms,
                    e.code() == Errc::InsufficientFunds ? "provider-insufficient-funds" : "bad-contract");
    }
    if (behavior_ == ProviderBehavior::Withhold) {
        world_.log("t=" + std::to_string(now_ms) + " withhold " + name_ + " " + q.digest.hex());
        withheld_.insert(q.contract_id);
        return std::nullopt;
    }

    auto receipt = DeliveryReceipt::make(owner, q.contract_id, hash_payload(ct_bytes), key_commitment_of(key), now_ms);
    auto delivery_tx = world_.mark_delivered(owner, q.contract_id, receipt);

    NetworkMessage msg{DataResponse{q.contract_id, std::move(ct_bytes), std::move(wk), receipt}, owner.address,
                       consumer};
    world_.net().send(msg, now_ms);
    ++counters_.responses_sent;
    delivered_.emplace(q.contract_id, msg);
    claims_.push_back({q.contract_id, now_ms + c->terms.deadlines.dispute_window_ms + 1});

    AuditEntry a;
    a.who = consumer;
    a.what = pub.payload_digest;
    a.whom = owner.address;
    a.when_ms = now_ms;
    a.means = {std::string(kProfiles), delivery_tx};
    a.purpose = q.purpose;
    a.outcome = AuditOutcome::Delivered;
    a.category = pub.category;
    a.contract_id = q.contract_id;
    record_audit(std::move(a), owner);
    world_.log("t=" + std::to_string(now_ms) + " serve " + name_ + " " + q.digest.hex() + " to " + consumer.hex());
    return msg;
}

std::vector<Listing> SharingNode::listings(const std::string& category, bool include_revoked) const
{
    auto items = world_.chain().list_stream_items(kProfiles, category);
    std::set<std::pair<Address, Digest32>> revoked;
    for (const auto& it : items)
        if (it.has_key(kRevoked))
            revoked.insert({it.publisher, it.body.payload_digest});

    std::vector<Listing> out;
    for (auto& it : items) {
        if (it.has_key(kRevoked))
            continue;
        if (!include_revoked && revoked.contains({it.publisher, it.body.payload_digest}))
            continue;
        ListingMetadata meta;
        try {
            meta = ListingMetadata::decode(std::string(it.body.metadata.begin(), it.body.metadata.end()));
        } catch (const Error&) {
            continue;
        }
        if (meta.category != category)
            continue;
        out.push_back({std::move(it), std::move(meta)});
    }
    return out;
}

std::vector<Listing> SharingNode::discover(const std::string& category, std::optional<Amount> max_price,
                                           const std::string& purpose, std::int64_t now_ms) const
{
    std::vector<Listing> out;
    for (auto& l : listings(category, false)) {
        if (!l.meta.purposes.contains(purpose))
            continue;
        if (l.meta.expiry_ms && now_ms >= *l.meta.expiry_ms)
            continue;
        if (max_price && l.meta.price > *max_price)
            continue;
        out.push_back(std::move(l));
    }
    return out;
}

std::optional<std::string> SharingNode::category_of(const Digest32& digest) const
{
    auto it = publications_.find(digest);
    if (it == publications_.end())
        return std::nullopt;
    return it->second.category;
}

RetrievalEntry SharingNode::request_data(const Listing& listing, const std::string& purpose, std::int64_t now_ms)
{
    auto wall_start = std::chrono::steady_clock::now();
    const auto& consumer = primary();
    for (const auto& e : queue_)
        if (e.digest == listing.digest() && !e.terminal())
            fail(Errc::DuplicateRequest, "retrieval of " + e.digest.hex() + " already in progress");

    auto price = listing.meta.price;
    auto collateral = world_.escrow().policy().collateral_for(price);
    auto need = price + collateral;
    auto have = world_.escrow().ledger().balance(consumer.address);
    if (have < need)
        fail(Errc::InsufficientFunds, "request needs " + std::to_string(need) + " tokens, balance is " +
                                          std::to_string(have));

    auto retry = world_.retry_timeout_for(consumer.address, listing.owner());
    auto deadline = now_ms + static_cast<std::int64_t>(world_.config().max_attempts) * retry;

    ContractTerms terms;
    terms.provider = listing.owner();
    terms.consumer = consumer.address;
    terms.item_digest = listing.digest();
    terms.key_commitment = listing.key_commitment();
    terms.price = price;
    terms.collateral = collateral;
    terms.deadlines = {deadline, deadline, world_.config().dispute_window_ms};
    terms.salt = world_.rng().next_u64();
    auto [id, create_tx] = world_.create_contract(consumer, terms);
    world_.fund(consumer, id, now_ms);

    RetrievalEntry e;
    e.digest = listing.digest();
    e.state = RetrievalState::Requested;
    e.contract_id = id;
    e.enqueued_ms = now_ms;
    e.deadline_ms = deadline;
    e.retry_timeout_ms = retry;
    e.owner = listing.owner();
    e.category = listing.meta.category;
    e.purpose = purpose;
    send_query(e, now_ms);
    e.wall_ms = elapsed_ms(wall_start);
    queue_.push_back(e);
    return e;
}

void SharingNode::send_query(RetrievalEntry& e, std::int64_t now_ms)
{
    ++e.attempts;
    e.last_sent_ms = now_ms;
    QueryData q{e.contract_id, e.digest, e.category, e.purpose, primary().enc_public, e.attempts};
    world_.net().send(NetworkMessage{std::move(q), primary().address, e.owner}, now_ms);
    ++counters_.queries_sent;
    world_.log("t=" + std::to_string(now_ms) + " query " + name_ + " " + e.digest.hex() + " attempt=" +
               std::to_string(e.attempts));
}

RetrievalEntry* SharingNode::find_entry(const ContractId& id)
{
    for (auto& e : queue_)
        if (e.contract_id == id)
            return &e;
    return nullptr;
}

const RetrievalEntry* SharingNode::retrieval(const Digest32& digest) const
{
    const RetrievalEntry* found = nullptr;
    for (const auto& e : queue_)
        if (e.digest == digest)
            found = &e;
    return found;
}

VerifyOutcome SharingNode::receive_and_verify(const DataResponse& resp, std::int64_t now_ms)
{
    auto* e = find_entry(resp.contract_id);
    if (!e || e->state != RetrievalState::Requested)
        fail(Errc::UnexpectedResponse, "no open retrieval for contract " + resp.contract_id.hex());
    auto wall_start = std::chrono::steady_clock::now();
    e->state = RetrievalState::Delivered;
    const auto& consumer = primary();
    const auto& c = world_.escrow().contract(resp.contract_id);

    VerifyOutcome out;
    auto delivered_digest = hash_payload(resp.ciphertext);
    std::optional<DataKey> key;
    try {
        key = unwrap_key(resp.wrapped_key, consumer.enc_secret);
    } catch (const Error&) {
    }

    std::string fault;
    if (delivered_digest != c.terms.item_digest)
        fault = "digest-mismatch";
    else if (!key || key_commitment_of(*key) != c.terms.key_commitment)
        fault = "key-commitment-mismatch";

    if (fault.empty()) {
        try {
            out.plaintext = decrypt_record(*key, Ciphertext::decode(resp.ciphertext));
        } catch (const Error&) {
            fault = "decrypt-failed";
        }
    }

    if (fault.empty()) {
        auto settle_start = std::chrono::steady_clock::now();
        world_.confirm(consumer, c.id, now_ms);
        e->settle_wall_ms = elapsed_ms(settle_start);
        e->state = RetrievalState::Verified;
        e->completed_ms = now_ms;
        received_[e->digest] = *out.plaintext;
        store_->put(resp.ciphertext, e->category, e->owner, now_ms);
        out.state = RetrievalState::Verified;
        out.escrow_state = ContractState::Settled;
        e->wall_ms += elapsed_ms(wall_start);
        world_.log("t=" + std::to_string(now_ms) + " verified " + name_ + " " + e->digest.hex());
        return out;
    }

    out.plaintext.reset();
    try {
        auto tx = world_.raise_mismatch(consumer, c.id, now_ms);
        AuditEntry a;
        a.who = consumer.address;
        a.what = e->digest;
        a.whom = e->owner;
        a.when_ms = now_ms;
        a.means = {std::string(kProfiles), tx};
        a.purpose = e->purpose;
        a.outcome = AuditOutcome::Slashed;
        a.category = e->category;
        a.contract_id = c.id;
        a.reason = fault;
        record_audit(std::move(a), consumer);
    } catch (const Error& err) {
        // The signed receipt does not prove the fault; the provider keeps
        // the timeout path and the loss stays with the consumer.
        fault += "/unprovable:" + std::string(errc_name(err.code()));
    }
    e->state = RetrievalState::Failed;
    e->completed_ms = now_ms;
    e->fault = fault;
    out.state = RetrievalState::Failed;
    out.escrow_state = world_.escrow().contract(c.id).state;
    out.fault = fault;
    world_.log("t=" + std::to_string(now_ms) + " fault " + name_ + " " + e->digest.hex() + " " + fault);
    return out;
}

void SharingNode::receive_denied(const Denied& denied, std::int64_t now_ms)
{
    auto* e = find_entry(denied.contract_id);
    if (!e || e->terminal())
        return;
    fail_entry(*e, now_ms, "denied:" + denied.reason);
}

void SharingNode::fail_entry(RetrievalEntry& e, std::int64_t now_ms, std::string fault)
{
    e.state = RetrievalState::Failed;
    e.completed_ms = now_ms;
    e.fault = std::move(fault);
    const auto* c = world_.escrow().find(e.contract_id);
    if (c) {
        if (c->state == ContractState::Created || c->state == ContractState::PartiallyFunded)
            claims_.push_back({c->id, c->terms.deadlines.funding_deadline_ms + 1});
        else if (c->state == ContractState::Funded)
            claims_.push_back({c->id, c->terms.deadlines.delivery_deadline_ms + 1});
    }
    world_.log("t=" + std::to_string(now_ms) + " failed " + name_ + " " + e.digest.hex() + " " + e.fault);
}

std::optional<std::int64_t> SharingNode::next_timer_ms() const
{
    std::optional<std::int64_t> next;
    auto consider = [&](std::int64_t t) {
        if (!next || t < *next)
            next = t;
    };
    for (const auto& e : queue_) {
        if (e.state != RetrievalState::Requested)
            continue;
        consider(e.deadline_ms + 1);
        if (e.attempts < world_.config().max_attempts)
            consider(e.last_sent_ms + e.retry_timeout_ms);
    }
    for (const auto& c : claims_)
        consider(c.due_ms);
    return next;
}

std::size_t SharingNode::tick(std::int64_t now_ms)
{
    std::size_t events = 0;
    for (auto& e : queue_) {
        if (e.state != RetrievalState::Requested)
            continue;
        if (now_ms > e.deadline_ms) {
            fail_entry(e, now_ms, "timeout");
            ++events;
        } else if (e.attempts < world_.config().max_attempts && now_ms >= e.last_sent_ms + e.retry_timeout_ms) {
            send_query(e, now_ms);
            ++events;
        }
    }

    std::vector<PendingClaim> keep;
    auto due = std::move(claims_);
    claims_.clear();
    for (auto& claim : due) {
        if (claim.due_ms > now_ms) {
            keep.push_back(claim);
            continue;
        }
        ++events;
        const auto* c = world_.escrow().find(claim.id);
        if (!c || is_terminal(c->state))
            continue;
        const Address& party = manages(c->consumer()) ? c->consumer() : c->provider();
        try {
            world_.claim_timeout(identity(party), claim.id, now_ms);
        } catch (const Error& err) {
            if (err.code() == Errc::NotYetTimedOut)
                keep.push_back({claim.id, now_ms + 1});
            else
                world_.log("t=" + std::to_string(now_ms) + " claim-skipped " + name_ + " " + claim.id.hex() + " " +
                           std::string(errc_name(err.code())));
        }
    }
    keep.insert(keep.end(), claims_.begin(), claims_.end());
    claims_ = std::move(keep);
    return events;
}

void SharingNode::handle(const NetworkMessage& msg, std::int64_t now_ms)
{
    if (const auto* q = msg.as<QueryData>()) {
        serve_request(*q, msg.from, now_ms);
    } else if (const auto* r = msg.as<DataResponse>()) {
        try {
            receive_and_verify(*r, now_ms);
        } catch (const Error& e) {
            if (e.code() != Errc::UnexpectedResponse)
                throw;
            world_.log("t=" + std::to_string(now_ms) + " ignored-response " + name_ + " " + r->contract_id.hex());
        }
    } else if (const auto* d = msg.as<Denied>()) {
        receive_denied(*d, now_ms);
    }
}

std::vector<AuditEntry> SharingNode::audit_query(const AuditFilter& f) const
{
    std::vector<AuditEntry> out;
    for (const auto& a : audit_) {
        if (f.who && a.who != *f.who)
            continue;
        if (f.whom && a.whom != *f.whom)
            continue;
        if (f.category && a.category != *f.category)
            continue;
        if (f.since_ms && a.when_ms < *f.since_ms)
            continue;
        out.push_back(a);
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const AuditEntry& a, const AuditEntry& b) { return a.when_ms < b.when_ms; });
    return out;
}

// --- Consortium ---------------------------------------------------------------

namespace {

ChainConfig make_chain_config(const ConsortiumConfig& cfg, const GenesisSpec& g)
{
    ChainConfig cc;
    cc.chain_id = cfg.chain_id;
    cc.block_interval_ms = cfg.block_interval_ms;
    std::set<Address> seen;
    for (const auto& v : g.validators) {
        cc.validators.push_back(v.address);
        if (seen.insert(v.address).second)
            cc.members.push_back(v.sign_public);
    }
    for (const auto& [id, amount] : g.members) {
        if (seen.insert(id.address).second)
            cc.members.push_back(id.sign_public);
        if (amount > 0)
            cc.genesis_allocations[id.address] += amount;
    }
    return cc;
}

} // namespace

Consortium::Consortium(ConsortiumConfig config, const GenesisSpec& genesis)
    : config_(std::move(config)),
      validators_(genesis.validators),
      chain_(Chain::init(make_chain_config(config_, genesis))),
      escrow_(AccountLedger(chain_.config().genesis_allocations), config_.collateral_policy),
      net_(config_.seed, config_.default_link),
      rng_(config_.seed)
{
    if (config_.max_attempts == 0)
        fail(Errc::BadConfig, "max_attempts must be at least 1");
    if (config_.dispute_window_ms < 0 || config_.retry_timeout_ms < 0)
        fail(Errc::BadConfig, "time windows must be non-negative");
    for (const auto& v : genesis.validators)
        escrow_.register_key(v.address, v.sign_public);
    for (const auto& [id, amount] : genesis.members)
        escrow_.register_key(id.address, id.sign_public);
    set_invariant_hook({});
    next_block_ms_ = chain_.config().genesis_time_ms + static_cast<std::int64_t>(config_.block_interval_ms);
}

void Consortium::set_invariant_hook(AccountLedger::Hook hook)
{
    if (!hook) {
        hook = [](const AccountLedger& l) {
            if (!l.conserved())
                throw std::logic_error("token conservation violated");
        };
    }
    escrow_.ledger().set_invariant_hook(std::move(hook));
}

SharingNode& Consortium::add_node(std::string name, std::vector<Identity> identities)
{
    for (const auto& id : identities)
        if (routes_.contains(id.address))
            fail(Errc::BadConfig, "address " + id.address.hex() + " already belongs to a node");
    nodes_.push_back(std::make_unique<SharingNode>(*this, std::move(name), std::move(identities)));
    auto* node = nodes_.back().get();
    for (const auto& addr : node->addresses())
        routes_[addr] = node;
    return *node;
}

SharingNode* Consortium::node_for(const Address& addr)
{
    auto it = routes_.find(addr);
    return it == routes_.end() ? nullptr : it->second;
}

void Consortium::log(std::string line)
{
    trace_.push_back(std::move(line));
}

std::int64_t Consortium::retry_timeout_for(const Address& from, const Address& to) const
{
    if (config_.retry_timeout_ms > 0)
        return config_.retry_timeout_ms;
    return std::max<std::int64_t>(1, 4 * net_.link(from, to).one_way_latency_ms);
}

Digest32 Consortium::transfer(const Identity& from, const Address& to, Amount amount, std::string memo)
{
    escrow_.transfer(from.address, to, amount);
    return submit_signed(chain_, from, TxKind::Token,
                         TokenBody{TokenBody::Op::Transfer, to, amount, std::move(memo)}.encode());
}

Digest32 Consortium::anchor(const Identity& signer, std::string label, const Digest32& digest, Bytes data)
{
    return submit_signed(chain_, signer, TxKind::Anchor, AnchorBody{std::move(label), digest, std::move(data)}.encode());
}

namespace {

Bytes contract_event(std::string_view op, const EscrowContract& c, ByteView data)
{
    return ByteWriter{}.str(op).fixed(c.id).str(contract_state_name(c.state)).blob(data).take();
}

} // namespace

std::pair<ContractId, Digest32> Consortium::create_contract(const Identity& caller, const ContractTerms& terms)
{
    auto id = escrow_.create_contract(terms);
    const auto& c = escrow_.contract(id);
    auto tx = submit_signed(chain_, caller, TxKind::Contract, contract_event("create", c, c.terms.canonical_bytes()));
    anchors_[id].push_back(tx);
    return {id, tx};
}

Digest32 Consortium::fund(const Identity& party, const ContractId& id, std::int64_t now_ms)
{
    escrow_.fund(id, party.address, now_ms);
    const auto& c = escrow_.contract(id);
    auto tx = submit_signed(chain_, party, TxKind::Contract, contract_event("fund", c, party.address.view()));
    anchors_[id].push_back(tx);
    return tx;
}

Digest32 Consortium::mark_delivered(const Identity& provider, const ContractId& id, const DeliveryReceipt& r)
{
    escrow_.mark_delivered(id, r);
    const auto& c = escrow_.contract(id);
    auto tx = submit_signed(chain_, provider, TxKind::Contract, contract_event("deliver", c, r.encode()));
    anchors_[id].push_back(tx);
    return tx;
}

Digest32 Consortium::confirm(const Identity& consumer, const ContractId& id, std::int64_t now_ms)
{
    escrow_.confirm(id, consumer.address, now_ms);
    const auto& c = escrow_.contract(id);
    auto tx = submit_signed(chain_, consumer, TxKind::Contract, contract_event("confirm", c, {}));
    anchors_[id].push_back(tx);
    return tx;
}

Digest32 Consortium::raise_mismatch(const Identity& consumer, const ContractId& id, std::int64_t now_ms)
{
    escrow_.raise_mismatch(id, consumer.address, now_ms);
    const auto& c = escrow_.contract(id);
    auto tx = submit_signed(chain_, consumer, TxKind::Contract, contract_event("mismatch", c, {}));
    anchors_[id].push_back(tx);
    return tx;
}

Digest32 Consortium::claim_timeout(const Identity& caller, const ContractId& id, std::int64_t now_ms)
{
    escrow_.claim_timeout(id, now_ms);
    const auto& c = escrow_.contract(id);
    auto tx = submit_signed(chain_, caller, TxKind::Contract,
                            contract_event("timeout", c, ByteWriter{}.i64(now_ms).data()));
    anchors_[id].push_back(tx);
    log("t=" + std::to_string(now_ms) + " timeout " + id.hex() + " -> " + std::string(contract_state_name(c.state)));
    return tx;
}

const std::vector<Digest32>& Consortium::contract_anchors(const ContractId& id) const
{
    static const std::vector<Digest32> none;
    auto it = anchors_.find(id);
    return it == anchors_.end() ? none : it->second;
}

const Identity& Consortium::turn_validator(std::uint64_t height) const
{
    const auto& addr = chain_.turn_validator(height);
    for (const auto& v : validators_)
        if (v.address == addr)
            return v;
    fail(Errc::UnknownValidator, "no identity for validator " + addr.hex());
}

const Block* Consortium::commit(std::int64_t now_ms, bool force)
{
    if (chain_.mempool().empty() && !force)
        return nullptr;
    const auto& v = turn_validator(chain_.height() + 1);
    const auto& b = chain_.produce_block(v, now_ms);
    next_block_ms_ = b.header.timestamp_ms + static_cast<std::int64_t>(config_.block_interval_ms);
    clock_ms_ = std::max(clock_ms_, now_ms);
    log("t=" + std::to_string(b.header.timestamp_ms) + " block " + std::to_string(b.header.height) + " txs=" +
        std::to_string(b.txs.size()) + " " + b.header.digest().hex());
    return &chain_.tip();
}

std::size_t Consortium::tick(std::int64_t now_ms)
{
    std::size_t events = 0;
    for (;;) {
        // Candidate events; ties resolve block < message < timer.
        std::optional<std::pair<std::int64_t, int>> next;
        auto consider = [&](std::int64_t t, int cls) {
            if (t <= now_ms && (!next || std::make_pair(t, cls) < *next))
                next = std::make_pair(t, cls);
        };
        if (!chain_.mempool().empty())
            consider(std::max(next_block_ms_, clock_ms_), 0);
        if (auto t = net_.next_delivery_ms())
            consider(*t, 1);
        for (const auto& n : nodes_)
            if (auto t = n->next_timer_ms())
                consider(*t, 2);
        if (!next)
            break;

        auto [t, cls] = *next;
        clock_ms_ = std::max(clock_ms_, t);
        if (cls == 0) {
            commit(clock_ms_);
            ++events;
        } else if (cls == 1) {
            auto msg = net_.pop_due(t);
            if (auto* node = node_for(msg->to)) {
                log("t=" + std::to_string(t) + " deliver " + std::string(msg->kind()) + " " + msg->from.hex() + "->" +
                    msg->to.hex());
                node->handle(*msg, clock_ms_);
            }
            ++events;
        } else {
            for (const auto& n : nodes_)
                if (auto nt = n->next_timer_ms(); nt && *nt <= t)
                    events += n->tick(clock_ms_);
        }
    }
    clock_ms_ = std::max(clock_ms_, now_ms);
    return events;
}

std::int64_t Consortium::run_until_idle(std::int64_t now_ms, std::int64_t limit_ms)
{
    auto open = [&] {
        if (net_.in_flight() > 0)
            return true;
        for (const auto& n : nodes_)
            for (const auto& e : n->retrieval_queue())
                if (!e.terminal())
                    return true;
        return false;
    };
    auto t = std::max(now_ms, clock_ms_);
    tick(t);
    while (open()) {
        auto next = next_event_ms();
        if (!next || *next > limit_ms)
            break;
        t = std::max(t, *next);
        tick(t);
    }
    if (!chain_.mempool().empty()) {
        t = std::max(t, std::max(next_block_ms_, clock_ms_));
        tick(t);
    }
    return t;
}

std::optional<std::int64_t> Consortium::next_event_ms() const
{
    std::optional<std::int64_t> next = net_.next_delivery_ms();
    auto consider = [&](std::int64_t t) {
        if (!next || t < *next)
            next = t;
    };
    for (const auto& n : nodes_)
        if (auto nt = n->next_timer_ms())
            consider(*nt);
    if (!chain_.mempool().empty())
        consider(std::max(next_block_ms_, clock_ms_));
    return next;
}

std::string Consortium::audit_log_jsonl() const
{
    std::string out;
    for (const auto& n : nodes_) {
        for (const auto& a : n->audit_log()) {
            auto j = a.to_json();
            j["node"] = n->name();
            out += canonical_json(j);
            out += '\n';
        }
    }
    return out;
}

} // namespace chainmart
