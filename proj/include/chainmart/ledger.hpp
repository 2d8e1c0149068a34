#pragma once

// Permissioned, hash-chained block ledger with named streams, round-robin
// validators and Merkle inclusion proofs.
//
// Canonical transaction bytes (input to the txid and the signature):
//   u8 kind | sender[20] | u32 len | payload | u64 nonce      (big-endian)
// Canonical header bytes (input to the header digest and validator_sig):
//   u64 height | prev_hash[32] | merkle_root[32] | i64 timestamp_ms | validator[20]
// Merkle tree: leaves are txids, parent = SHA-256(left || right), an odd
// node at the end of a level is promoted unchanged, and the root of an
// empty block is SHA-256 of the empty string.
//
// Chain is not internally synchronized; the owning service serializes
// writers and hands out snapshots to readers.

#include <chainmart/crypto.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace chainmart {

enum class TxKind : std::uint8_t {
    StreamItem = 1,
    Token = 2,
    Contract = 3,
    Anchor = 4,
};

std::string_view tx_kind_name(TxKind kind);
std::optional<TxKind> tx_kind_from_name(std::string_view name);

inline const std::vector<std::string>& default_streams()
{
    static const std::vector<std::string> streams{"profiles", "anchors", "audit"};
    return streams;
}

struct ChainConfig {
    std::string chain_id = "chainmart";
    std::vector<Address> validators;
    std::uint64_t block_interval_ms = 1000;
    std::map<Address, std::uint64_t> genesis_allocations;
    // Signing keys of every permissioned participant, validators included.
    std::vector<Bytes> members;
    std::vector<std::string> streams = default_streams();
    std::int64_t genesis_time_ms = 0;

    Digest32 digest() const;
};

struct Transaction {
    Digest32 txid;
    TxKind kind = TxKind::Anchor;
    Address sender;
    Bytes payload;
    Signature signature;
    std::uint64_t nonce = 0;

    Bytes canonical_bytes() const;
    Digest32 compute_txid() const { return hash_payload(canonical_bytes()); }

    static Transaction make(const Identity& signer, TxKind kind, Bytes payload, std::uint64_t nonce);

    bool operator==(const Transaction&) const = default;
};

struct BlockHeader {
    std::uint64_t height = 0;
    Digest32 prev_hash;
    Digest32 merkle_root;
    std::int64_t timestamp_ms = 0;
    Address validator;
    Signature validator_sig;

    Bytes canonical_bytes() const;
    Digest32 digest() const { return hash_payload(canonical_bytes()); }

    bool operator==(const BlockHeader&) const = default;
};

struct Block {
    BlockHeader header;
    std::vector<Transaction> txs;

    bool operator==(const Block&) const = default;
};

// Payload bodies, one per transaction kind.

struct TokenBody {
    enum class Op : std::uint8_t { Mint = 1, Transfer = 2 };
    Op op = Op::Transfer;
    Address to;
    std::uint64_t amount = 0;
    std::string memo;

    Bytes encode() const;
    static TokenBody decode(ByteView data);
};

struct AnchorBody {
    std::string label;
    Digest32 digest;
    Bytes data;

    Bytes encode() const;
    static AnchorBody decode(ByteView data);
};

struct StreamItemBody {
    std::string stream;
    std::vector<std::string> keys;
    Digest32 payload_digest;
    Digest32 key_commitment;
    Digest32 offchain_ref;
    Bytes metadata;

    Bytes encode() const;
    static StreamItemBody decode(ByteView data);
};

struct StreamItem {
    StreamItemBody body;
    Address publisher;
    Digest32 txid;
    std::uint64_t height = 0;
    std::uint32_t index_in_block = 0;

    const std::string& stream() const { return body.stream; }
    const std::vector<std::string>& keys() const { return body.keys; }
    bool has_key(std::string_view key) const;
};

struct MerkleStep {
    enum class Side : std::uint8_t { Left = 0, Right = 1 };
    Digest32 sibling;
    Side side = Side::Left; // where the sibling sits relative to the running hash

    bool operator==(const MerkleStep&) const = default;
};

Digest32 merkle_root(std::span<const Digest32> leaves);
std::vector<MerkleStep> merkle_path(std::span<const Digest32> leaves, std::size_t index);
Digest32 fold_merkle_path(const Digest32& leaf, std::span<const MerkleStep> path);

struct InclusionProof {
    Digest32 txid;
    std::uint64_t height = 0;
    std::vector<MerkleStep> merkle_path;
    Digest32 header_digest;

    bool operator==(const InclusionProof&) const = default;
};

bool verify_inclusion(const InclusionProof& proof, std::span<const BlockHeader> headers);

struct Violation {
    std::uint64_t height = 0;
    std::string reason;
};

struct TxLocation {
    std::uint64_t height = 0;
    std::uint32_t index = 0;
};

class Chain {
public:
    /// Builds the genesis block (config anchor plus one mint per allocation).
    /// Throws Error(BadConfig).
    static Chain init(ChainConfig config);

    /// Wraps existing blocks without checking them; call validate() to audit.
    static Chain from_blocks(ChainConfig config, std::vector<Block> blocks);

    static Chain import_jsonl(ChainConfig config, std::string_view text);
    std::string export_jsonl() const;
    static std::string export_block_line(const Block& block);
    static Block parse_block_line(std::string_view line);
    std::size_t export_size() const { return export_bytes_; }

    Digest32 submit_tx(Transaction tx);
    const Block& produce_block(const Identity& validator, std::int64_t now_ms);

    std::optional<Violation> validate() const;

    std::vector<StreamItem> list_stream_items(std::string_view stream,
                                              std::optional<std::string_view> key_filter = {},
                                              std::optional<std::uint64_t> since_height = {}) const;
    InclusionProof inclusion_proof(const Digest32& txid) const;

    const ChainConfig& config() const { return config_; }
    const std::vector<Block>& blocks() const { return blocks_; }
    const Block& tip() const { return blocks_.back(); }
    std::uint64_t height() const { return blocks_.back().header.height; }
    std::vector<BlockHeader> headers() const;
    const std::vector<Transaction>& mempool() const { return mempool_; }
    std::size_t committed_tx_count() const { return located_.size(); }

    std::optional<TxLocation> locate(const Digest32& txid) const;
    const Transaction* committed_tx(const Digest32& txid) const;
    bool is_pending(const Digest32& txid) const;

    std::uint64_t next_nonce(const Address& sender) const;
    const Bytes* member_key(const Address& addr) const;
    const Address& turn_validator(std::uint64_t height) const;
    bool has_stream(std::string_view name) const;

private:
    Chain() = default;
    void index_block(const Block& block);
    void check_payload(const Transaction& tx) const;

    ChainConfig config_;
    std::map<Address, Bytes> keys_;
    std::vector<Block> blocks_;
    std::vector<Transaction> mempool_;
    std::set<Digest32> pending_;
    std::map<Digest32, TxLocation> located_;
    std::map<Address, std::uint64_t> last_nonce_;
    std::size_t export_bytes_ = 0;
};

/// Builds, signs and submits a StreamItemTx for `publisher`.
/// Throws Error(UnknownStream) or Error(BadItem).
Digest32 publish_stream_item(Chain& chain, StreamItemBody body, const Identity& publisher);

/// Builds, signs and submits a transaction of any kind with the next nonce.
Digest32 submit_signed(Chain& chain, const Identity& signer, TxKind kind, Bytes payload);

} // namespace chainmart
