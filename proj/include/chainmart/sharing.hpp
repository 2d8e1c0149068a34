#pragma once

// Data-sharing protocol: owners publish encrypted profile records anchored
// on the "profiles" stream, consumers discover listings, escrow the price,
// query the owner over the simulated network, verify the delivery against
// the on-chain commitments and settle. Every serve decision leaves an audit
// row, kept locally and published to the "audit" stream.
//
// A Consortium owns the shared state (chain, escrow engine, network) and the
// nodes. Everything runs on the caller's thread; the event loop in tick()
// processes deliveries, node timers and block production in time order.

#include <chainmart/escrow.hpp>
#include <chainmart/ledger.hpp>
#include <chainmart/record.hpp>
#include <chainmart/simnet.hpp>
#include <chainmart/store.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace chainmart {

class Consortium;

struct Listing {
    StreamItem item;
    ListingMetadata meta;

    const Address& owner() const { return item.publisher; }
    const Digest32& digest() const { return item.body.payload_digest; }
    const Digest32& key_commitment() const { return item.body.key_commitment; }
};

enum class RetrievalState { Pending, Requested, Delivered, Verified, Failed };
std::string_view retrieval_state_name(RetrievalState s);

struct RetrievalEntry {
    Digest32 digest;
    RetrievalState state = RetrievalState::Pending;
    std::uint32_t attempts = 0;
    ContractId contract_id;
    std::int64_t enqueued_ms = 0;
    std::int64_t last_sent_ms = 0;
    std::int64_t deadline_ms = 0;
    std::int64_t retry_timeout_ms = 0;
    std::optional<std::int64_t> completed_ms;
    Address owner;
    std::string category;
    std::string purpose;
    std::string fault;
    // Wall-clock time spent on this retrieval by the consumer node.
    double wall_ms = 0;
    double settle_wall_ms = 0;

    bool terminal() const { return state == RetrievalState::Verified || state == RetrievalState::Failed; }
};

struct VerifyOutcome {
    RetrievalState state = RetrievalState::Failed;
    std::optional<Bytes> plaintext;
    std::optional<ContractState> escrow_state;
    std::string fault;
};

struct AuditFilter {
    std::optional<Address> who;
    std::optional<Address> whom;
    std::optional<std::string> category;
    std::optional<std::int64_t> since_ms;
};

struct PurgeResult {
    std::size_t revoked = 0;
    std::size_t deleted = 0;
};

// How a provider answers queries; everything except Honest exists to
// exercise the escrow's fault paths.
enum class ProviderBehavior { Honest, CorruptCiphertext, WrongKey, Withhold };

class SharingNode {
public:
    SharingNode(Consortium& world, std::string name, std::vector<Identity> identities);

    SharingNode(const SharingNode&) = delete;
    SharingNode& operator=(const SharingNode&) = delete;

    const std::string& name() const { return name_; }
    const Identity& primary() const { return identities_.front(); }
    const Identity& identity(const Address& addr) const;
    bool manages(const Address& addr) const { return by_address_.contains(addr); }
    std::vector<Address> addresses() const;

    OffchainStore& store() { return *store_; }
    const OffchainStore& store() const { return *store_; }

    // --- owner side ---------------------------------------------------------
    /// Canonicalizes, encrypts, stores off-chain and lists the record on the
    /// "profiles" stream. A second publish for the same (owner, category)
    /// replaces the policy and revokes the prior listing.
    StreamItem publish_profile(const ProfileRecord& record, const std::set<std::string>& purposes,
                               Amount price, std::int64_t now_ms,
                               std::optional<std::int64_t> expiry_ms = std::nullopt);
    /// Throws Error(UnknownCategory). Returns the number of listings revoked.
    std::size_t revoke_consent(const Address& owner, const std::string& category, std::int64_t now_ms);
    PurgeResult purge_data(const Address& owner, const std::string& category, std::int64_t now_ms);
    const ConsentPolicy* policy(const Address& owner, const std::string& category) const;
    std::vector<ConsentPolicy> policies(const Address& owner) const;

    /// Decides a query, sends the answer and records the audit row. Returns
    /// the message sent; nullopt only for a withholding provider.
    std::optional<NetworkMessage> serve_request(const QueryData& query, const Address& consumer,
                                                std::int64_t now_ms);

    void set_behavior(ProviderBehavior b) { behavior_ = b; }

    std::optional<std::string> category_of(const Digest32& payload_digest) const;

    // --- consumer side ------------------------------------------------------
    /// Every listing of the category on the "profiles" stream; revoked ones
    /// only when include_revoked is set (a consumer's cached view).
    std::vector<Listing> listings(const std::string& category, bool include_revoked) const;
    std::vector<Listing> discover(const std::string& category, std::optional<Amount> max_price,
                                  const std::string& purpose, std::int64_t now_ms) const;
    /// Escrows price + collateral and sends QueryData. Throws
    /// Error(InsufficientFunds) or Error(DuplicateRequest).
    RetrievalEntry request_data(const Listing& listing, const std::string& purpose, std::int64_t now_ms);
    VerifyOutcome receive_and_verify(const DataResponse& resp, std::int64_t now_ms);
    void receive_denied(const Denied& denied, std::int64_t now_ms);

    const std::vector<RetrievalEntry>& retrieval_queue() const { return queue_; }
    const RetrievalEntry* retrieval(const Digest32& digest) const;
    const std::map<Digest32, Bytes>& received() const { return received_; }

    // --- both ---------------------------------------------------------------
    std::vector<AuditEntry> audit_query(const AuditFilter& filter = {}) const;
    const std::vector<AuditEntry>& audit_log() const { return audit_; }

    /// Retries, retrieval deadlines and escrow timeout claims due at or
    /// before now_ms. Returns the number of events processed.
    std::size_t tick(std::int64_t now_ms);
    std::optional<std::int64_t> next_timer_ms() const;

    void handle(const NetworkMessage& msg, std::int64_t now_ms);

    struct Counters {
        std::uint64_t responses_sent = 0;
        std::uint64_t responses_resent = 0;
        std::uint64_t denied_sent = 0;
        std::uint64_t queries_sent = 0;
    };
    const Counters& counters() const { return counters_; }

private:
    struct Publication {
        Digest32 payload_digest;
        Digest32 key_commitment;
        StoreRef ref;
        DataKey key;
        Address owner;
        std::string category;
        Digest32 txid;
        bool superseded = false;
    };

    struct PendingClaim {
        ContractId id;
        std::int64_t due_ms = 0;
    };

    RetrievalEntry* find_entry(const ContractId& id);
    NetworkMessage deny(const QueryData& q, const Address& consumer, const Address& owner,
                        std::int64_t now_ms, std::string reason);
    void record_audit(AuditEntry entry, const Identity& owner);
    void fail_entry(RetrievalEntry& e, std::int64_t now_ms, std::string fault);
    void send_query(RetrievalEntry& e, std::int64_t now_ms);
    std::size_t revoke_listings(const Identity& owner, const std::string& category, std::int64_t now_ms);

    Consortium& world_;
    std::string name_;
    std::vector<Identity> identities_;
    std::map<Address, std::size_t> by_address_;
    std::unique_ptr<OffchainStore> store_;
    ProviderBehavior behavior_ = ProviderBehavior::Honest;

    std::map<Digest32, Publication> publications_;
    std::map<std::pair<Address, std::string>, ConsentPolicy> policies_;
    std::map<ContractId, NetworkMessage> delivered_;
    std::set<ContractId> withheld_;
    std::vector<PendingClaim> claims_;

    std::vector<RetrievalEntry> queue_;
    std::map<Digest32, Bytes> received_;
    std::vector<AuditEntry> audit_;
    Counters counters_;
};

struct ConsortiumConfig {
    std::string chain_id = "chainmart";
    std::uint64_t block_interval_ms = 1000;
    CollateralPolicy collateral_policy;
    std::int64_t dispute_window_ms = 60'000;
    // Zero derives 4 x the link's one-way latency (at least 1 ms).
    std::int64_t retry_timeout_ms = 0;
    std::uint32_t max_attempts = 3;
    std::uint64_t seed = 1;
    LinkParams default_link;
    std::optional<std::filesystem::path> store_dir;
};

struct GenesisSpec {
    std::vector<Identity> validators;
    // Every participant that will sign transactions, with its token grant.
    std::vector<std::pair<Identity, Amount>> members;
};

class Consortium {
public:
    Consortium(ConsortiumConfig config, const GenesisSpec& genesis);

    Consortium(const Consortium&) = delete;
    Consortium& operator=(const Consortium&) = delete;

    const ConsortiumConfig& config() const { return config_; }
    Chain& chain() { return chain_; }
    const Chain& chain() const { return chain_; }
    EscrowEngine& escrow() { return escrow_; }
    const EscrowEngine& escrow() const { return escrow_; }
    SimNet& net() { return net_; }
    RandomSource& rng() { return rng_; }

    SharingNode& add_node(std::string name, std::vector<Identity> identities);
    SharingNode* node_for(const Address& addr);
    const std::vector<std::unique_ptr<SharingNode>>& nodes() const { return nodes_; }

    // Ledger-backed operations; each one is anchored on chain and returns
    // the anchoring txid.
    Digest32 transfer(const Identity& from, const Address& to, Amount amount, std::string memo = {});
    Digest32 anchor(const Identity& signer, std::string label, const Digest32& digest, Bytes data = {});
    std::pair<ContractId, Digest32> create_contract(const Identity& caller, const ContractTerms& terms);
    Digest32 fund(const Identity& party, const ContractId& id, std::int64_t now_ms);
    Digest32 mark_delivered(const Identity& provider, const ContractId& id, const DeliveryReceipt& r);
    Digest32 confirm(const Identity& consumer, const ContractId& id, std::int64_t now_ms);
    Digest32 raise_mismatch(const Identity& consumer, const ContractId& id, std::int64_t now_ms);
    Digest32 claim_timeout(const Identity& caller, const ContractId& id, std::int64_t now_ms);
    const std::vector<Digest32>& contract_anchors(const ContractId& id) const;

    /// Produces a block now if the mempool is non-empty (or force is set).
    const Block* commit(std::int64_t now_ms, bool force = false);

    /// Runs every event due at or before now_ms in time order.
    std::size_t tick(std::int64_t now_ms);
    /// Keeps ticking until the network is quiet and no retrieval is open.
    /// Returns the simulated time reached.
    std::int64_t run_until_idle(std::int64_t now_ms, std::int64_t limit_ms);
    std::int64_t retry_timeout_for(const Address& from, const Address& to) const;
    std::optional<std::int64_t> next_event_ms() const;
    std::int64_t clock_ms() const { return clock_ms_; }

    const std::vector<std::string>& trace() const { return trace_; }
    void log(std::string line);
    std::string audit_log_jsonl() const;

    /// Checks token conservation after every ledger mutation; the default
    /// hook throws std::logic_error on violation.
    void set_invariant_hook(AccountLedger::Hook hook);

private:
    const Identity& turn_validator(std::uint64_t height) const;

    ConsortiumConfig config_;
    std::vector<Identity> validators_;
    Chain chain_;
    EscrowEngine escrow_;
    SimNet net_;
    SeededRandom rng_;
    std::vector<std::unique_ptr<SharingNode>> nodes_;
    std::map<Address, SharingNode*> routes_;
    std::map<ContractId, std::vector<Digest32>> anchors_;
    std::int64_t next_block_ms_ = 0;
    std::int64_t clock_ms_ = 0;
    std::vector<std::string> trace_;
};

} // namespace chainmart
