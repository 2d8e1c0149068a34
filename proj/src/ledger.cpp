#include <chainmart/error.hpp>
#include <chainmart/ledger.hpp>

#include <json.hpp>

#include <algorithm>
#include <sstream>

namespace chainmart {

using json = nlohmann::json;

std::string_view tx_kind_name(TxKind kind)
{
    switch (kind) {
    case TxKind::StreamItem: return "StreamItemTx";
    case TxKind::Token: return "TokenTx";
    case TxKind::Contract: return "ContractTx";
    case TxKind::Anchor: return "AnchorTx";
    }
    return "Unknown";
}

std::optional<TxKind> tx_kind_from_name(std::string_view name)
{
    for (auto k : {TxKind::StreamItem, TxKind::Token, TxKind::Contract, TxKind::Anchor})
        if (tx_kind_name(k) == name)
            return k;
    return std::nullopt;
}

Digest32 ChainConfig::digest() const
{
    ByteWriter w;
    w.str("chainmart.config").str(chain_id);
    w.u32(static_cast<std::uint32_t>(validators.size()));
    for (const auto& v : validators)
        w.fixed(v);
    w.u64(block_interval_ms);
    w.u32(static_cast<std::uint32_t>(genesis_allocations.size()));
    for (const auto& [addr, amount] : genesis_allocations)
        w.fixed(addr).u64(amount);
    w.u32(static_cast<std::uint32_t>(members.size()));
    for (const auto& m : members)
        w.blob(m);
    w.u32(static_cast<std::uint32_t>(streams.size()));
    for (const auto& s : streams)
        w.str(s);
    w.i64(genesis_time_ms);
    return hash_payload(w.data());
}

Bytes Transaction::canonical_bytes() const
{
    return ByteWriter{}.u8(static_cast<std::uint8_t>(kind)).fixed(sender).blob(payload).u64(nonce).take();
}

Transaction Transaction::make(const Identity& signer, TxKind kind, Bytes payload, std::uint64_t nonce)
{
    Transaction tx;
    tx.kind = kind;
    tx.sender = signer.address;
    tx.payload = std::move(payload);
    tx.nonce = nonce;
    auto bytes = tx.canonical_bytes();
    tx.txid = hash_payload(bytes);
    tx.signature = sign(signer, bytes);
    return tx;
}

Bytes BlockHeader::canonical_bytes() const
{
    return ByteWriter{}
        .u64(height)
        .fixed(prev_hash)
        .fixed(merkle_root)
        .i64(timestamp_ms)
        .fixed(validator)
        .take();
}

Bytes TokenBody::encode() const
{
    return ByteWriter{}.u8(static_cast<std::uint8_t>(op)).fixed(to).u64(amount).str(memo).take();
}

TokenBody TokenBody::decode(ByteView data)
{
    ByteReader r(data);
    TokenBody b;
    auto op = r.u8();
    if (op != 1 && op != 2)
        fail(Errc::MalformedExport, "unknown token op");
    b.op = static_cast<Op>(op);
    b.to = r.fixed<20>();
    b.amount = r.u64();
    b.memo = r.str();
    r.expect_done();
    return b;
}

Bytes AnchorBody::encode() const
{
    return ByteWriter{}.str(label).fixed(digest).blob(data).take();
}

AnchorBody AnchorBody::decode(ByteView bytes)
{
    ByteReader r(bytes);
    AnchorBody b;
    b.label = r.str();
    b.digest = r.fixed<32>();
    b.data = r.blob();
    r.expect_done();
    return b;
}

Bytes StreamItemBody::encode() const
{
    ByteWriter w;
    w.str(stream).u32(static_cast<std::uint32_t>(keys.size()));
    for (const auto& k : keys)
        w.str(k);
    w.fixed(payload_digest).fixed(key_commitment).fixed(offchain_ref).blob(metadata);
    return w.take();
}

StreamItemBody StreamItemBody::decode(ByteView data)
{
    ByteReader r(data);
    StreamItemBody b;
    b.stream = r.str();
    auto n = r.u32();
    if (n > 1024)
        fail(Errc::MalformedExport, "too many stream keys");
    for (std::uint32_t i = 0; i < n; ++i)
        b.keys.push_back(r.str());
    b.payload_digest = r.fixed<32>();
    b.key_commitment = r.fixed<32>();
    b.offchain_ref = r.fixed<32>();
    b.metadata = r.blob();
    r.expect_done();
    return b;
}

bool StreamItem::has_key(std::string_view key) const
{
    return std::find(body.keys.begin(), body.keys.end(), key) != body.keys.end();
}

// --- Merkle ---------------------------------------------------------------

namespace {

Digest32 hash_pair(const Digest32& left, const Digest32& right)
{
    return hash_payload(ByteWriter{}.fixed(left).fixed(right).data());
}

std::vector<Digest32> next_level(const std::vector<Digest32>& level)
{
    std::vector<Digest32> up;
    up.reserve((level.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < level.size(); i += 2)
        up.push_back(hash_pair(level[i], level[i + 1]));
    if (level.size() % 2 == 1)
        up.push_back(level.back());
    return up;
}

} // namespace

Digest32 merkle_root(std::span<const Digest32> leaves)
{
    if (leaves.empty())
        return hash_payload(ByteView{});
    std::vector<Digest32> level(leaves.begin(), leaves.end());
    while (level.size() > 1)
        level = next_level(level);
    return level.front();
}

std::vector<MerkleStep> merkle_path(std::span<const Digest32> leaves, std::size_t index)
{
    std::vector<MerkleStep> path;
    std::vector<Digest32> level(leaves.begin(), leaves.end());
    while (level.size() > 1) {
        std::size_t sibling = index ^ 1U;
        if (sibling < level.size()) {
            path.push_back({level[sibling],
                            sibling < index ? MerkleStep::Side::Left : MerkleStep::Side::Right});
        }
        level = next_level(level);
        index /= 2;
    }
    return path;
}

Digest32 fold_merkle_path(const Digest32& leaf, std::span<const MerkleStep> path)
{
    Digest32 acc = leaf;
    for (const auto& step : path)
        acc = step.side == MerkleStep::Side::Left ? hash_pair(step.sibling, acc)
                                                  : hash_pair(acc, step.sibling);
    return acc;
}

bool verify_inclusion(const InclusionProof& proof, std::span<const BlockHeader> headers)
{
    auto it = std::find_if(headers.begin(), headers.end(),
                           [&](const BlockHeader& h) { return h.height == proof.height; });
    if (it == headers.end())
        return false;
    if (it->digest() != proof.header_digest)
        return false;
    return fold_merkle_path(proof.txid, proof.merkle_path) == it->merkle_root;
}

// --- Chain ----------------------------------------------------------------

namespace {

void check_config(const ChainConfig& config, std::map<Address, Bytes>& keys)
{
    if (config.validators.empty())
        fail(Errc::BadConfig, "validator list is empty");
    if (config.block_interval_ms == 0)
        fail(Errc::BadConfig, "block_interval_ms must be positive");
    std::set<Address> seen;
    for (const auto& v : config.validators)
        if (!seen.insert(v).second)
            fail(Errc::BadConfig, "duplicate validator " + v.hex());
    for (const auto& m : config.members) {
        if (m.empty())
            fail(Errc::BadConfig, "empty member key");
        keys[derive_address(m)] = m;
    }
    for (const auto& v : config.validators)
        if (!keys.contains(v))
            fail(Errc::BadConfig, "validator " + v.hex() + " has no registered key");
    std::set<std::string> streams;
    for (const auto& s : config.streams)
        if (s.empty() || !streams.insert(s).second)
            fail(Errc::BadConfig, "stream names must be unique and non-empty");
}

Transaction genesis_tx(TxKind kind, Bytes payload, std::uint64_t nonce)
{
    Transaction tx;
    tx.kind = kind;
    tx.payload = std::move(payload);
    tx.nonce = nonce;
    tx.txid = tx.compute_txid();
    return tx;
}

Block build_genesis(const ChainConfig& config)
{
    Block g;
    std::uint64_t nonce = 1;
    g.txs.push_back(genesis_tx(TxKind::Anchor,
                               AnchorBody{"genesis", config.digest(), to_bytes(config.chain_id)}.encode(),
                               nonce++));
    for (const auto& [addr, amount] : config.genesis_allocations)
        g.txs.push_back(genesis_tx(TxKind::Token,
                                   TokenBody{TokenBody::Op::Mint, addr, amount, "genesis"}.encode(),
                                   nonce++));
    std::vector<Digest32> ids;
    for (const auto& tx : g.txs)
        ids.push_back(tx.txid);
    g.header.height = 0;
    g.header.merkle_root = merkle_root(ids);
    g.header.timestamp_ms = config.genesis_time_ms;
    g.header.validator = config.validators.front();
    return g;
}

std::string hex_of(const Signature& s)
{
    return to_hex(s.bytes);
}

} // namespace

Chain Chain::init(ChainConfig config)
{
    Chain c;
    check_config(config, c.keys_);
    c.config_ = std::move(config);
    c.blocks_.push_back(build_genesis(c.config_));
    c.index_block(c.blocks_.back());
    return c;
}

Chain Chain::from_blocks(ChainConfig config, std::vector<Block> blocks)
{
    Chain c;
    check_config(config, c.keys_);
    if (blocks.empty())
        fail(Errc::MalformedExport, "chain has no blocks");
    c.config_ = std::move(config);
    c.blocks_ = std::move(blocks);
    for (const auto& b : c.blocks_)
        c.index_block(b);
    return c;
}

void Chain::index_block(const Block& block)
{
    for (std::uint32_t i = 0; i < block.txs.size(); ++i) {
        const auto& tx = block.txs[i];
        located_[tx.txid] = {block.header.height, i};
        auto& last = last_nonce_[tx.sender];
        last = std::max(last, tx.nonce);
    }
    export_bytes_ += export_block_line(block).size() + 1;
}

std::string Chain::export_block_line(const Block& block)
{
    json txs = json::array();
    for (const auto& tx : block.txs) {
        txs.push_back({
            {"txid", tx.txid.hex()},
            {"kind", tx_kind_name(tx.kind)},
            {"sender", tx.sender.hex()},
            {"nonce", tx.nonce},
            {"payload", to_hex(tx.payload)},
            {"signature", hex_of(tx.signature)},
        });
    }
    const auto& h = block.header;
    json line = {
        {"height", h.height},
        {"prev_hash", h.prev_hash.hex()},
        {"merkle_root", h.merkle_root.hex()},
        {"timestamp_ms", h.timestamp_ms},
        {"validator", h.validator.hex()},
        {"validator_sig", hex_of(h.validator_sig)},
        {"txs", std::move(txs)},
    };
    return line.dump();
}

Block Chain::parse_block_line(std::string_view line)
{
    try {
        auto j = json::parse(line);
        Block b;
        b.header.height = j.at("height").get<std::uint64_t>();
        b.header.prev_hash = digest_from_hex(j.at("prev_hash").get<std::string>());
        b.header.merkle_root = digest_from_hex(j.at("merkle_root").get<std::string>());
        b.header.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
        b.header.validator = address_from_hex(j.at("validator").get<std::string>());
        b.header.validator_sig.bytes = from_hex(j.at("validator_sig").get<std::string>());
        for (const auto& t : j.at("txs")) {
            Transaction tx;
            tx.txid = digest_from_hex(t.at("txid").get<std::string>());
            auto kind = tx_kind_from_name(t.at("kind").get<std::string>());
            if (!kind)
                fail(Errc::MalformedExport, "unknown tx kind");
            tx.kind = *kind;
            tx.sender = address_from_hex(t.at("sender").get<std::string>());
            tx.nonce = t.at("nonce").get<std::uint64_t>();
            tx.payload = from_hex(t.at("payload").get<std::string>());
            tx.signature.bytes = from_hex(t.at("signature").get<std::string>());
            b.txs.push_back(std::move(tx));
        }
        return b;
    } catch (const json::exception& e) {
        fail(Errc::MalformedExport, std::string("bad block line: ") + e.what());
    } catch (const Error& e) {
        fail(Errc::MalformedExport, std::string("bad block line: ") + e.what());
    }
}

Chain Chain::import_jsonl(ChainConfig config, std::string_view text)
{
    std::vector<Block> blocks;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos)
            end = text.size();
        auto line = text.substr(start, end - start);
        if (!line.empty())
            blocks.push_back(parse_block_line(line));
        start = end + 1;
    }
    return from_blocks(std::move(config), std::move(blocks));
}

std::string Chain::export_jsonl() const
{
    std::string out;
    out.reserve(export_bytes_);
    for (const auto& b : blocks_) {
        out += export_block_line(b);
        out += '\n';
    }
    return out;
}

void Chain::check_payload(const Transaction& tx) const
{
    try {
        switch (tx.kind) {
        case TxKind::StreamItem: {
            auto body = StreamItemBody::decode(tx.payload);
            if (!has_stream(body.stream))
                fail(Errc::UnknownStream, "unknown stream '" + body.stream + "'");
            for (const auto& k : body.keys)
                if (k.empty())
                    fail(Errc::BadItem, "stream item keys must be non-empty");
            break;
        }
        case TxKind::Token: TokenBody::decode(tx.payload); break;
        case TxKind::Anchor: AnchorBody::decode(tx.payload); break;
        case TxKind::Contract:
            if (tx.payload.empty())
                fail(Errc::BadItem, "empty contract payload");
            break;
        default: fail(Errc::BadItem, "unknown transaction kind");
        }
    } catch (const Error& e) {
        if (e.code() == Errc::MalformedExport)
            fail(Errc::BadItem, e.what());
        throw;
    }
}

Digest32 Chain::submit_tx(Transaction tx)
{
    if (tx.compute_txid() != tx.txid)
        fail(Errc::BadSignature, "txid does not match canonical bytes");
    if (pending_.contains(tx.txid) || located_.contains(tx.txid))
        fail(Errc::DuplicateTx, "transaction " + tx.txid.hex() + " already known");
    const Bytes* key = member_key(tx.sender);
    if (!key)
        fail(Errc::UnknownSender, "sender " + tx.sender.hex() + " is not a member");
    if (!verify(*key, tx.canonical_bytes(), tx.signature))
        fail(Errc::BadSignature, "signature does not verify for sender " + tx.sender.hex());
    auto expected = next_nonce(tx.sender);
    if (tx.nonce != expected)
        fail(Errc::BadNonce, "expected nonce " + std::to_string(expected) + ", got " +
                                 std::to_string(tx.nonce));
    check_payload(tx);

    auto id = tx.txid;
    last_nonce_[tx.sender] = tx.nonce;
    pending_.insert(id);
    mempool_.push_back(std::move(tx));
    return id;
}

const Block& Chain::produce_block(const Identity& validator, std::int64_t now_ms)
{
    const auto& vs = config_.validators;
    if (std::find(vs.begin(), vs.end(), validator.address) == vs.end())
        fail(Errc::UnknownValidator, validator.address.hex() + " is not a validator");
    auto height = this->height() + 1;
    if (turn_validator(height) != validator.address)
        fail(Errc::NotYourTurn, "height " + std::to_string(height) + " belongs to " +
                                    turn_validator(height).hex());

    Block b;
    b.txs = std::move(mempool_);
    mempool_.clear();
    pending_.clear();
    std::vector<Digest32> ids;
    ids.reserve(b.txs.size());
    for (const auto& tx : b.txs)
        ids.push_back(tx.txid);
    b.header.height = height;
    b.header.prev_hash = tip().header.digest();
    b.header.merkle_root = merkle_root(ids);
    b.header.timestamp_ms = std::max(now_ms, tip().header.timestamp_ms);
    b.header.validator = validator.address;
    b.header.validator_sig = sign(validator, b.header.canonical_bytes());
    blocks_.push_back(std::move(b));
    index_block(blocks_.back());
    return blocks_.back();
}

std::optional<Violation> Chain::validate() const
{
    if (blocks_.empty())
        return Violation{0, "no genesis block"};
    auto genesis = build_genesis(config_);
    if (blocks_.front() != genesis)
        return Violation{0, "genesis block does not match config"};

    std::map<Address, std::uint64_t> nonces;
    for (const auto& tx : genesis.txs)
        nonces[tx.sender] = tx.nonce;
    std::set<Digest32> seen;
    for (const auto& tx : genesis.txs)
        seen.insert(tx.txid);

    for (std::size_t h = 1; h < blocks_.size(); ++h) {
        const auto& b = blocks_[h];
        const auto& prev = blocks_[h - 1].header;
        const auto& hdr = b.header;
        if (hdr.height != h)
            return Violation{h, "height field mismatch"};
        if (hdr.prev_hash != prev.digest())
            return Violation{h, "prev_hash does not link to previous header"};
        if (hdr.validator != turn_validator(h))
            return Violation{h, "validator out of turn"};
        const Bytes* vkey = member_key(hdr.validator);
        if (!vkey || !verify(*vkey, hdr.canonical_bytes(), hdr.validator_sig))
            return Violation{h, "bad validator signature"};
        if (hdr.timestamp_ms < prev.timestamp_ms)
            return Violation{h, "timestamp decreased"};

        std::vector<Digest32> ids;
        ids.reserve(b.txs.size());
        for (const auto& tx : b.txs)
            ids.push_back(tx.compute_txid());
        if (merkle_root(ids) != hdr.merkle_root)
            return Violation{h, "merkle mismatch"};

        for (std::size_t i = 0; i < b.txs.size(); ++i) {
            const auto& tx = b.txs[i];
            if (tx.txid != ids[i])
                return Violation{h, "txid mismatch"};
            if (!seen.insert(tx.txid).second)
                return Violation{h, "duplicate transaction"};
            const Bytes* key = member_key(tx.sender);
            if (!key || !verify(*key, tx.canonical_bytes(), tx.signature))
                return Violation{h, "bad transaction signature"};
            auto& last = nonces[tx.sender];
            if (tx.nonce != last + 1)
                return Violation{h, "nonce out of sequence"};
            last = tx.nonce;
            try {
                check_payload(tx);
            } catch (const Error& e) {
                return Violation{h, std::string("bad payload: ") + e.what()};
            }
        }
    }
    return std::nullopt;
}

std::vector<StreamItem> Chain::list_stream_items(std::string_view stream,
                                                 std::optional<std::string_view> key_filter,
                                                 std::optional<std::uint64_t> since_height) const
{
    if (!has_stream(stream))
        fail(Errc::UnknownStream, "unknown stream '" + std::string(stream) + "'");
    std::vector<StreamItem> out;
    std::size_t first = since_height ? static_cast<std::size_t>(*since_height) : 0;
    for (std::size_t h = first; h < blocks_.size(); ++h) {
        const auto& b = blocks_[h];
        for (std::uint32_t i = 0; i < b.txs.size(); ++i) {
            const auto& tx = b.txs[i];
            if (tx.kind != TxKind::StreamItem)
                continue;
            StreamItem item;
            item.body = StreamItemBody::decode(tx.payload);
            if (item.body.stream != stream)
                continue;
            if (key_filter && !item.has_key(*key_filter))
                continue;
            item.publisher = tx.sender;
            item.txid = tx.txid;
            item.height = b.header.height;
            item.index_in_block = i;
            out.push_back(std::move(item));
        }
    }
    return out;
}

InclusionProof Chain::inclusion_proof(const Digest32& txid) const
{
    if (pending_.contains(txid))
        fail(Errc::PendingTx, "transaction " + txid.hex() + " is not yet committed");
    auto loc = locate(txid);
    if (!loc)
        fail(Errc::UnknownTx, "unknown transaction " + txid.hex());
    const auto& b = blocks_[loc->height];
    std::vector<Digest32> ids;
    for (const auto& tx : b.txs)
        ids.push_back(tx.txid);
    return {txid, loc->height, merkle_path(ids, loc->index), b.header.digest()};
}

std::vector<BlockHeader> Chain::headers() const
{
    std::vector<BlockHeader> out;
    out.reserve(blocks_.size());
    for (const auto& b : blocks_)
        out.push_back(b.header);
    return out;
}

std::optional<TxLocation> Chain::locate(const Digest32& txid) const
{
    auto it = located_.find(txid);
    if (it == located_.end())
        return std::nullopt;
    return it->second;
}

const Transaction* Chain::committed_tx(const Digest32& txid) const
{
    auto loc = locate(txid);
    if (!loc)
        return nullptr;
    return &blocks_[loc->height].txs[loc->index];
}

bool Chain::is_pending(const Digest32& txid) const
{
    return pending_.contains(txid);
}

std::uint64_t Chain::next_nonce(const Address& sender) const
{
    auto it = last_nonce_.find(sender);
    return it == last_nonce_.end() ? 1 : it->second + 1;
}

const Bytes* Chain::member_key(const Address& addr) const
{
    auto it = keys_.find(addr);
    return it == keys_.end() ? nullptr : &it->second;
}

const Address& Chain::turn_validator(std::uint64_t height) const
{
    return config_.validators[height % config_.validators.size()];
}

bool Chain::has_stream(std::string_view name) const
{
    return std::find(config_.streams.begin(), config_.streams.end(), name) != config_.streams.end();
}

Digest32 submit_signed(Chain& chain, const Identity& signer, TxKind kind, Bytes payload)
{
    return chain.submit_tx(Transaction::make(signer, kind, std::move(payload), chain.next_nonce(signer.address)));
}

Digest32 publish_stream_item(Chain& chain, StreamItemBody body, const Identity& publisher)
{
    if (!chain.has_stream(body.stream))
        fail(Errc::UnknownStream, "unknown stream '" + body.stream + "'");
    if (body.payload_digest.is_zero())
        fail(Errc::BadItem, "stream item needs a payload digest");
    for (const auto& k : body.keys)
        if (k.empty())
            fail(Errc::BadItem, "stream item keys must be non-empty");
    return submit_signed(chain, publisher, TxKind::StreamItem, body.encode());
}

} // namespace chainmart
