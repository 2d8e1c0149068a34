#include <chainmart/error.hpp>
#include <chainmart/escrow.hpp>

#include <charconv>
#include <numeric>

namespace chainmart {

// --- AccountLedger ----------------------------------------------------------

AccountLedger::AccountLedger(const std::map<Address, Amount>& genesis) : balances_(genesis)
{
    for (const auto& [addr, amount] : genesis)
        minted_ += amount;
}

Amount AccountLedger::balance(const Address& who) const
{
    auto it = balances_.find(who);
    return it == balances_.end() ? 0 : it->second;
}

void AccountLedger::transfer(const Address& from, const Address& to, Amount amount)
{
    if (amount == 0)
        fail(Errc::ZeroAmount, "transfer amount must be positive");
    auto have = balance(from);
    if (have < amount)
        fail(Errc::InsufficientFunds, from.hex() + " holds " + std::to_string(have) + ", needs " +
                                          std::to_string(amount));
    balances_[from] -= amount;
    balances_[to] += amount;
    notify();
}

Amount AccountLedger::total_balances() const
{
    Amount total = 0;
    for (const auto& [addr, amount] : balances_)
        total += amount;
    return total;
}

Amount AccountLedger::total_locked() const
{
    Amount total = 0;
    for (const auto& [id, parties] : locked_)
        for (const auto& [addr, amount] : parties)
            total += amount;
    return total;
}

Amount AccountLedger::locked(const ContractId& id) const
{
    auto it = locked_.find(id);
    if (it == locked_.end())
        return 0;
    Amount total = 0;
    for (const auto& [addr, amount] : it->second)
        total += amount;
    return total;
}

Amount AccountLedger::locked(const ContractId& id, const Address& party) const
{
    auto it = locked_.find(id);
    if (it == locked_.end())
        return 0;
    auto p = it->second.find(party);
    return p == it->second.end() ? 0 : p->second;
}

bool AccountLedger::conserved() const
{
    return total_balances() + total_locked() + burned_ == minted_;
}

void AccountLedger::lock(const ContractId& id, const Address& party, Amount amount)
{
    if (balance(party) < amount)
        fail(Errc::InsufficientFunds, party.hex() + " cannot lock " + std::to_string(amount));
    balances_[party] -= amount;
    locked_[id][party] += amount;
    notify();
}

void AccountLedger::release(const ContractId& id, const Address& party, const Address& to, Amount amount)
{
    auto& slot = locked_.at(id).at(party);
    slot -= amount;
    balances_[to] += amount;
    notify();
}

void AccountLedger::burn(const ContractId& id, const Address& party, Amount amount)
{
    auto& slot = locked_.at(id).at(party);
    slot -= amount;
    burned_ += amount;
    notify();
}

void AccountLedger::notify() const
{
    if (hook_)
        hook_(*this);
}

// --- contract types -----------------------------------------------------------

std::string_view contract_state_name(ContractState s)
{
    switch (s) {
    case ContractState::Created: return "Created";
    case ContractState::PartiallyFunded: return "PartiallyFunded";
    case ContractState::Funded: return "Funded";
    case ContractState::Delivered: return "Delivered";
    case ContractState::Settled: return "Settled";
    case ContractState::Refunded: return "Refunded";
    case ContractState::Slashed: return "Slashed";
    }
    return "Unknown";
}

Bytes ContractTerms::canonical_bytes() const
{
    return ByteWriter{}
        .str("chainmart.escrow.terms")
        .fixed(provider)
        .fixed(consumer)
        .fixed(item_digest)
        .fixed(key_commitment)
        .u64(price)
        .u64(collateral)
        .i64(deadlines.funding_deadline_ms)
        .i64(deadlines.delivery_deadline_ms)
        .i64(deadlines.dispute_window_ms)
        .u64(salt)
        .take();
}

Bytes DeliveryReceipt::canonical_bytes() const
{
    return ByteWriter{}
        .str("chainmart.escrow.receipt")
        .fixed(contract_id)
        .fixed(delivered_digest)
        .fixed(delivered_key_commitment)
        .i64(delivered_ms)
        .take();
}

Bytes DeliveryReceipt::encode() const
{
    return ByteWriter{}
        .fixed(contract_id)
        .fixed(delivered_digest)
        .fixed(delivered_key_commitment)
        .blob(provider_sig.bytes)
        .i64(delivered_ms)
        .take();
}

DeliveryReceipt DeliveryReceipt::decode(ByteView data)
{
    ByteReader r(data);
    DeliveryReceipt d;
    d.contract_id = r.fixed<32>();
    d.delivered_digest = r.fixed<32>();
    d.delivered_key_commitment = r.fixed<32>();
    d.provider_sig.bytes = r.blob();
    d.delivered_ms = r.i64();
    r.expect_done();
    return d;
}

DeliveryReceipt DeliveryReceipt::make(const Identity& provider, const ContractId& id, const Digest32& digest,
                                      const Digest32& key_commitment, std::int64_t delivered_ms)
{
    DeliveryReceipt d{id, digest, key_commitment, {}, delivered_ms};
    d.provider_sig = sign(provider, d.canonical_bytes());
    return d;
}

bool EscrowContract::receipt_matches() const
{
    return receipt && receipt->delivered_digest == terms.item_digest &&
           receipt->delivered_key_commitment == terms.key_commitment;
}

Amount CollateralPolicy::collateral_for(Amount price) const
{
    switch (kind) {
    case Kind::MatchPrice: return price;
    case Kind::Percent: return price * value / 100;
    case Kind::Fixed: return value;
    }
    return price;
}

CollateralPolicy CollateralPolicy::parse(std::string_view text)
{
    if (text == "match-price")
        return {};
    auto colon = text.find(':');
    if (colon != std::string_view::npos) {
        auto head = text.substr(0, colon);
        auto tail = text.substr(colon + 1);
        Amount v = 0;
        auto [p, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), v);
        if (ec == std::errc{} && p == tail.data() + tail.size()) {
            if (head == "percent")
                return {Kind::Percent, v};
            if (head == "fixed")
                return {Kind::Fixed, v};
        }
    }
    fail(Errc::BadConfig, "unknown collateral policy '" + std::string(text) + "'");
}

std::string CollateralPolicy::to_string() const
{
    switch (kind) {
    case Kind::MatchPrice: return "match-price";
    case Kind::Percent: return "percent:" + std::to_string(value);
    case Kind::Fixed: return "fixed:" + std::to_string(value);
    }
    return "match-price";
}

// --- EscrowEngine -------------------------------------------------------------

EscrowEngine::EscrowEngine(AccountLedger ledger, CollateralPolicy policy)
    : ledger_(std::move(ledger)), policy_(policy)
{
}

void EscrowEngine::register_key(const Address& who, Bytes sign_public)
{
    keys_[who] = std::move(sign_public);
}

EscrowContract& EscrowEngine::get(const ContractId& id)
{
    auto it = contracts_.find(id);
    if (it == contracts_.end())
        fail(Errc::UnknownContract, "unknown contract " + id.hex());
    return it->second;
}

const EscrowContract& EscrowEngine::contract(const ContractId& id) const
{
    auto* c = find(id);
    if (!c)
        fail(Errc::UnknownContract, "unknown contract " + id.hex());
    return *c;
}

const EscrowContract* EscrowEngine::find(const ContractId& id) const
{
    auto it = contracts_.find(id);
    return it == contracts_.end() ? nullptr : &it->second;
}

ContractId EscrowEngine::create_contract(ContractTerms terms)
{
    if (terms.price == 0)
        fail(Errc::BadTerms, "price must be positive");
    if (terms.collateral == 0)
        terms.collateral = policy_.collateral_for(terms.price);
    if (terms.collateral == 0)
        fail(Errc::BadTerms, "collateral must be positive");
    if (terms.provider == terms.consumer)
        fail(Errc::BadTerms, "provider and consumer must differ");
    if (terms.deadlines.dispute_window_ms < 0)
        fail(Errc::BadTerms, "dispute window must be non-negative");
    auto id = terms.id();
    if (contracts_.contains(id))
        fail(Errc::BadTerms, "contract " + id.hex() + " already exists");
    EscrowContract c;
    c.id = id;
    c.terms = terms;
    contracts_.emplace(id, std::move(c));
    return id;
}

ContractState EscrowEngine::fund(const ContractId& id, const Address& party, std::int64_t now_ms)
{
    auto& c = get(id);
    if (c.state != ContractState::Created && c.state != ContractState::PartiallyFunded)
        fail(Errc::WrongState, "cannot fund a contract in state " + std::string(contract_state_name(c.state)));
    bool is_consumer = party == c.consumer();
    if (!is_consumer && party != c.provider())
        fail(Errc::NotParty, party.hex() + " is not a party to " + id.hex());
    if (is_consumer ? c.funded_consumer > 0 : c.funded_provider > 0)
        fail(Errc::AlreadyFunded, party.hex() + " already funded " + id.hex());
    if (now_ms > c.terms.deadlines.funding_deadline_ms)
        fail(Errc::PastDeadline, "funding deadline has passed");

    Amount required = is_consumer ? c.consumer_required() : c.provider_required();
    ledger_.lock(id, party, required);
    (is_consumer ? c.funded_consumer : c.funded_provider) = required;
    c.state = (c.funded_consumer > 0 && c.funded_provider > 0) ? ContractState::Funded
                                                                : ContractState::PartiallyFunded;
    return c.state;
}

ContractState EscrowEngine::mark_delivered(const ContractId& id, const DeliveryReceipt& receipt)
{
    auto& c = get(id);
    if (c.state != ContractState::Funded)
        fail(Errc::WrongState, "delivery requires Funded, contract is " +
                                   std::string(contract_state_name(c.state)));
    auto key = keys_.find(c.provider());
    if (receipt.contract_id != id || key == keys_.end() ||
        !verify(key->second, receipt.canonical_bytes(), receipt.provider_sig))
        fail(Errc::BadReceiptSignature, "receipt is not signed by the provider");
    if (receipt.delivered_ms > c.terms.deadlines.delivery_deadline_ms)
        fail(Errc::PastDeadline, "delivery deadline has passed");
    c.receipt = receipt;
    c.state = ContractState::Delivered;
    return c.state;
}

void EscrowEngine::settle(EscrowContract& c, std::int64_t now_ms)
{
    ledger_.release(c.id, c.consumer(), c.provider(), c.price());
    ledger_.release(c.id, c.consumer(), c.consumer(), c.collateral());
    ledger_.release(c.id, c.provider(), c.provider(), c.collateral());
    c.state = ContractState::Settled;
    c.closed_ms = now_ms;
}

void EscrowEngine::slash(EscrowContract& c, std::int64_t now_ms)
{
    ledger_.release(c.id, c.consumer(), c.consumer(), c.consumer_required());
    ledger_.burn(c.id, c.provider(), c.collateral());
    c.state = ContractState::Slashed;
    c.closed_ms = now_ms;
}

ContractState EscrowEngine::confirm(const ContractId& id, const Address& caller, std::int64_t now_ms)
{
    auto& c = get(id);
    if (caller != c.consumer())
        fail(Errc::NotParty, "only the consumer may confirm");
    if (c.state != ContractState::Delivered)
        fail(Errc::WrongState, "confirm requires Delivered, contract is " +
                                   std::string(contract_state_name(c.state)));
    if (!c.receipt_matches())
        fail(Errc::DigestMismatch, "receipt does not match the on-chain commitments; use raise_mismatch");
    settle(c, now_ms);
    return c.state;
}

ContractState EscrowEngine::raise_mismatch(const ContractId& id, const Address& caller, std::int64_t now_ms)
{
    auto& c = get(id);
    if (caller != c.consumer())
        fail(Errc::NotParty, "only the consumer may raise a mismatch");
    if (c.state != ContractState::Delivered)
        fail(Errc::WrongState, "raise_mismatch requires Delivered, contract is " +
                                   std::string(contract_state_name(c.state)));
    if (c.receipt_matches())
        fail(Errc::NoMismatch, "the signed receipt matches both commitments");
    slash(c, now_ms);
    return c.state;
}

ContractState EscrowEngine::claim_timeout(const ContractId& id, std::int64_t now_ms)
{
    auto& c = get(id);
    const auto& d = c.terms.deadlines;
    switch (c.state) {
    case ContractState::Created:
    case ContractState::PartiallyFunded:
        if (now_ms <= d.funding_deadline_ms)
            fail(Errc::NotYetTimedOut, "funding deadline not reached");
        if (c.funded_consumer > 0)
            ledger_.release(id, c.consumer(), c.consumer(), c.funded_consumer);
        if (c.funded_provider > 0)
            ledger_.release(id, c.provider(), c.provider(), c.funded_provider);
        c.state = ContractState::Refunded;
        c.closed_ms = now_ms;
        return c.state;
    case ContractState::Funded:
        if (now_ms <= d.delivery_deadline_ms)
            fail(Errc::NotYetTimedOut, "delivery deadline not reached");
        slash(c, now_ms);
        return c.state;
    case ContractState::Delivered:
        if (now_ms <= c.receipt->delivered_ms + d.dispute_window_ms)
            fail(Errc::NotYetTimedOut, "dispute window still open");
        if (!c.receipt_matches())
            fail(Errc::DigestMismatch, "receipt does not match; the consumer keeps the mismatch remedy");
        settle(c, now_ms);
        return c.state;
    default:
        fail(Errc::WrongState, "contract already closed as " + std::string(contract_state_name(c.state)));
    }
}

} // namespace chainmart
