#pragma once

// Account-based token ledger and the double-deposit escrow state machine.
//
//   Created -> PartiallyFunded -> Funded -> Delivered -> Settled | Slashed
//   timeouts: {Created, PartiallyFunded} -> Refunded
//             Funded -> Slashed (non-delivery)
//             Delivered -> Settled (silent consumer, receipt matches)
//
// The consumer locks price + collateral, the provider locks collateral.

#include <chainmart/crypto.hpp>

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace chainmart {

using Amount = std::uint64_t;
using ContractId = Digest32;

class AccountLedger {
public:
    using Hook = std::function<void(const AccountLedger&)>;

    AccountLedger() = default;
    explicit AccountLedger(const std::map<Address, Amount>& genesis);

    Amount balance(const Address& who) const;
    const std::map<Address, Amount>& balances() const { return balances_; }

    /// Throws Error(ZeroAmount) or Error(InsufficientFunds); all-or-nothing.
    void transfer(const Address& from, const Address& to, Amount amount);

    Amount total_minted() const { return minted_; }
    Amount burned() const { return burned_; }
    Amount total_balances() const;
    Amount total_locked() const;
    Amount locked(const ContractId& id) const;
    Amount locked(const ContractId& id, const Address& party) const;

    /// Σ balances + Σ locked + burned == total minted.
    bool conserved() const;

    /// Called after every mutation.
    void set_invariant_hook(Hook hook) { hook_ = std::move(hook); }

private:
    friend class EscrowEngine;

    void lock(const ContractId& id, const Address& party, Amount amount);
    void release(const ContractId& id, const Address& party, const Address& to, Amount amount);
    void burn(const ContractId& id, const Address& party, Amount amount);
    void notify() const;

    std::map<Address, Amount> balances_;
    std::map<ContractId, std::map<Address, Amount>> locked_;
    Amount burned_ = 0;
    Amount minted_ = 0;
    Hook hook_;
};

enum class ContractState {
    Created,
    PartiallyFunded,
    Funded,
    Delivered,
    Settled,
    Refunded,
    Slashed,
};

std::string_view contract_state_name(ContractState s);
inline bool is_terminal(ContractState s)
{
    return s == ContractState::Settled || s == ContractState::Refunded || s == ContractState::Slashed;
}

struct Deadlines {
    std::int64_t funding_deadline_ms = 0;
    std::int64_t delivery_deadline_ms = 0;
    std::int64_t dispute_window_ms = 0;
};

struct ContractTerms {
    Address provider;
    Address consumer;
    Digest32 item_digest;
    Digest32 key_commitment;
    Amount price = 0;
    // Zero selects the engine's collateral policy.
    Amount collateral = 0;
    Deadlines deadlines;
    std::uint64_t salt = 0;

    Bytes canonical_bytes() const;
    ContractId id() const { return hash_payload(canonical_bytes()); }
};

struct DeliveryReceipt {
    ContractId contract_id;
    Digest32 delivered_digest;
    Digest32 delivered_key_commitment;
    Signature provider_sig;
    std::int64_t delivered_ms = 0;

    // Signed bytes: everything except provider_sig.
    Bytes canonical_bytes() const;
    Bytes encode() const;
    static DeliveryReceipt decode(ByteView data);
    static DeliveryReceipt make(const Identity& provider, const ContractId& id, const Digest32& digest,
                                const Digest32& key_commitment, std::int64_t delivered_ms);

    bool operator==(const DeliveryReceipt&) const = default;
};

struct EscrowContract {
    ContractId id;
    ContractTerms terms;
    ContractState state = ContractState::Created;
    Amount funded_consumer = 0;
    Amount funded_provider = 0;
    std::optional<DeliveryReceipt> receipt;
    std::optional<std::int64_t> closed_ms;

    const Address& provider() const { return terms.provider; }
    const Address& consumer() const { return terms.consumer; }
    Amount price() const { return terms.price; }
    Amount collateral() const { return terms.collateral; }
    Amount consumer_required() const { return terms.price + terms.collateral; }
    Amount provider_required() const { return terms.collateral; }
    bool receipt_matches() const;
};

struct CollateralPolicy {
    enum class Kind { MatchPrice, Percent, Fixed };
    Kind kind = Kind::MatchPrice;
    Amount value = 0;

    Amount collateral_for(Amount price) const;
    /// "match-price", "percent:<n>" or "fixed:<n>". Throws Error(BadConfig).
    static CollateralPolicy parse(std::string_view text);
    std::string to_string() const;
};

class EscrowEngine {
public:
    explicit EscrowEngine(AccountLedger ledger = {}, CollateralPolicy policy = {});

    void register_key(const Address& who, Bytes sign_public);
    const CollateralPolicy& policy() const { return policy_; }

    void transfer(const Address& from, const Address& to, Amount amount) { ledger_.transfer(from, to, amount); }

    ContractId create_contract(ContractTerms terms);
    ContractState fund(const ContractId& id, const Address& party, std::int64_t now_ms);
    ContractState mark_delivered(const ContractId& id, const DeliveryReceipt& receipt);
    ContractState confirm(const ContractId& id, const Address& caller, std::int64_t now_ms);
    ContractState raise_mismatch(const ContractId& id, const Address& caller, std::int64_t now_ms);
    ContractState claim_timeout(const ContractId& id, std::int64_t now_ms);

    const EscrowContract& contract(const ContractId& id) const;
    const EscrowContract* find(const ContractId& id) const;
    const std::map<ContractId, EscrowContract>& contracts() const { return contracts_; }

    const AccountLedger& ledger() const { return ledger_; }
    AccountLedger& ledger() { return ledger_; }

private:
    EscrowContract& get(const ContractId& id);
    void settle(EscrowContract& c, std::int64_t now_ms);
    void slash(EscrowContract& c, std::int64_t now_ms);

    AccountLedger ledger_;
    CollateralPolicy policy_;
    std::map<Address, Bytes> keys_;
    std::map<ContractId, EscrowContract> contracts_;
};

} // namespace chainmart
