// Randomized checks of the module invariants. Every run is seeded so a
// failure reproduces.

#include "support.hpp"

#include <doctest.h>

#include <random>
#include <set>

using namespace testing;

namespace {

Bytes random_bytes(std::mt19937_64& rng, std::size_t n)
{
    Bytes b(n);
    for (auto& x : b)
        x = static_cast<std::uint8_t>(rng());
    return b;
}

std::string random_word(std::mt19937_64& rng, std::size_t n)
{
    static constexpr char alphabet[] = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
    std::string s;
    for (std::size_t i = 0; i < n; ++i)
        s += alphabet[rng() % (sizeof alphabet - 1)];
    return s;
}

} // namespace

TEST_CASE("digests are stable, distinct and match the oracle")
{
    std::mt19937_64 rng(101);
    std::set<Digest32> seen;
    std::set<Bytes> inputs;
    for (int i = 0; i < 10000; ++i) {
        auto p = random_bytes(rng, rng() % 200);
        auto d = hash_payload(p);
        CHECK(d == hash_payload(p));
        if (i % 10 == 0)
            CHECK(d.hex() == oracle_sha256_hex(p));
        if (inputs.insert(p).second)
            CHECK(seen.insert(d).second);
    }
    CHECK(seen.size() == inputs.size());
}

TEST_CASE("encrypt and decrypt roundtrip for random plaintexts")
{
    std::mt19937_64 rng(102);
    SeededRandom keys(9);
    for (int i = 0; i < 500; ++i) {
        auto p = random_bytes(rng, rng() % 2048);
        auto [k, ct] = encrypt_record(p, keys);
        CHECK(decrypt_record(k, ct) == p);
        CHECK(Ciphertext::decode(ct.encode()) == ct);
    }
}

TEST_CASE("signatures verify only under the signing key")
{
    std::vector<Identity> ids;
    for (int i = 0; i < 100; ++i)
        ids.push_back(identity_from_label("grid-" + std::to_string(i)));
    std::vector<Bytes> msgs;
    for (int m = 0; m < 10; ++m)
        msgs.push_back(to_bytes("message number " + std::to_string(m)));

    std::size_t wrong_accepts = 0, right_rejects = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::size_t m = 0; m < msgs.size(); ++m) {
            auto sig = sign(ids[i], msgs[m]);
            for (std::size_t j = 0; j < ids.size(); ++j) {
                bool ok = verify(ids[j].sign_public, msgs[m], sig);
                if (j == i && !ok)
                    ++right_rejects;
                if (j != i && ok)
                    ++wrong_accepts;
            }
            for (std::size_t n = 0; n < msgs.size(); ++n)
                if (n != m && verify(ids[i].sign_public, msgs[n], sig))
                    ++wrong_accepts;
        }
    }
    CHECK(right_rejects == 0);
    CHECK(wrong_accepts == 0);
}

TEST_CASE("wrapped keys open only for the recipient")
{
    SeededRandom rng(5);
    std::vector<Identity> ids;
    for (int i = 0; i < 20; ++i)
        ids.push_back(identity_from_label("wrap-" + std::to_string(i)));
    for (int k = 0; k < 25; ++k) {
        DataKey key;
        rng.fill(key.bytes);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            auto wk = wrap_key(key, ids[i].enc_public, ids[i].address, rng);
            CHECK(unwrap_key(WrappedKey::decode(wk.encode()), ids[i].enc_secret) == key);
            const auto& other = ids[(i + 1 + static_cast<std::size_t>(k) % (ids.size() - 1)) % ids.size()];
            CHECK(error_of([&] { unwrap_key(wk, other.enc_secret); }) == Errc::UnwrapFailure);
        }
    }
}

TEST_CASE("store content addressing and deletion completeness")
{
    std::mt19937_64 rng(103);
    OffchainStore store;
    std::vector<Address> owners;
    for (int i = 0; i < 5; ++i)
        owners.push_back(identity_from_label("store-owner-" + std::to_string(i)).address);
    std::map<std::pair<std::string, Address>, std::set<StoreRef>> groups;
    std::map<StoreRef, std::size_t> sizes;

    for (int i = 0; i < 400; ++i) {
        auto bytes = random_bytes(rng, 1 + rng() % 300);
        auto category = "c" + std::to_string(rng() % 4);
        const auto& owner = owners[rng() % owners.size()];
        auto ref = store.put(bytes, category, owner, i);
        CHECK(ref.digest == hash_payload(bytes));
        CHECK(hash_payload(store.get(ref)) == ref.digest);
        if (!sizes.contains(ref)) {
            sizes[ref] = bytes.size();
            groups[{category, owner}].insert(ref);
        }
    }

    for (auto& [key, refs] : groups) {
        if (rng() % 2)
            continue;
        std::size_t expected = 0;
        for (const auto& r : refs)
            expected += sizes[r];
        auto before = store.total_bytes();
        CHECK(store.erase(key.first, key.second) == refs.size());
        CHECK(store.total_bytes() == before - expected);
        for (const auto& r : refs)
            CHECK(error_of([&] { store.get(r); }) == Errc::NotFound);
        CHECK(store.erase(key.first, key.second) == 0);
    }
}

TEST_CASE("random transaction streams: proofs, rotation, prefix and replay")
{
    std::vector<Identity> validators;
    for (int i = 0; i < 4; ++i)
        validators.push_back(identity_from_label("prop-v" + std::to_string(i)));
    std::vector<Identity> members;
    for (int i = 0; i < 6; ++i)
        members.push_back(identity_from_label("prop-m" + std::to_string(i)));

    auto run = [&](std::uint64_t seed, std::vector<std::string>* exports) {
        ChainConfig cfg;
        cfg.chain_id = "prop";
        for (const auto& v : validators)
            cfg.validators.push_back(v.address);
        for (const auto& m : members)
            cfg.members.push_back(m.sign_public);
        for (const auto& v : validators)
            cfg.members.push_back(v.sign_public);
        Chain chain = Chain::init(cfg);
        std::mt19937_64 rng(seed);
        std::vector<Digest32> txids;
        std::int64_t t = 0;
        for (int round = 0; round < 30; ++round) {
            auto n = rng() % 9;
            for (std::uint64_t k = 0; k < n; ++k) {
                const auto& m = members[rng() % members.size()];
                AnchorBody body{"note", hash_payload(random_bytes(rng, 8)), random_bytes(rng, rng() % 40)};
                txids.push_back(submit_signed(chain, m, TxKind::Anchor, body.encode()));
            }
            t += 1 + static_cast<std::int64_t>(rng() % 50);
            auto h = chain.height() + 1;
            const auto& block = chain.produce_block(validators[h % validators.size()], t);
            CHECK(block.header.validator == validators[h % validators.size()].address);
            if (exports) {
                auto now = chain.export_jsonl();
                if (!exports->empty())
                    CHECK(now.compare(0, exports->back().size(), exports->back()) == 0);
                exports->push_back(now);
            }
        }
        CHECK(chain.validate() == std::nullopt);
        auto headers = chain.headers();
        for (std::size_t i = 0; i < txids.size(); ++i) {
            auto proof = chain.inclusion_proof(txids[i]);
            CHECK(verify_inclusion(proof, headers));
            if (i % 7 == 0) {
                auto bad = proof;
                bad.txid.bytes[rng() % 32] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
                CHECK_FALSE(verify_inclusion(bad, headers));
                if (!proof.merkle_path.empty()) {
                    bad = proof;
                    bad.merkle_path[rng() % bad.merkle_path.size()].sibling.bytes[rng() % 32] ^= 0x80;
                    CHECK_FALSE(verify_inclusion(bad, headers));
                }
            }
        }
        return chain.export_jsonl();
    };

    std::vector<std::string> exports;
    auto a = run(77, &exports);
    auto b = run(77, nullptr);
    CHECK(a == b);
    CHECK(run(78, nullptr) != a);
}

TEST_CASE("privacy: no plaintext field value reaches the chain")
{
    DemoWorld d(AppConfig{}, 17);
    ConservationWatch watch;
    watch.attach(d.world());
    std::mt19937_64 rng(104);
    std::vector<std::string> secrets;
    std::int64_t t = 100;
    for (int i = 0; i < 120; ++i) {
        const auto& owner = d.customers()[static_cast<std::size_t>(i) % d.customers().size()];
        ProfileRecord r;
        r.owner = owner.address;
        r.category = "cat-" + std::to_string(i);
        auto a = "v" + random_word(rng, 15);
        auto b = "w" + random_word(rng, 15);
        r.fields["alpha"] = a;
        r.fields["beta"] = b;
        r.fields["n"] = static_cast<std::int64_t>(rng() % 1000);
        secrets.push_back(a);
        secrets.push_back(b);
        d.shop_node().publish_profile(r, {"analytics"}, 3, t);
        t += 5;
    }
    d.world().commit(t);
    // A few sales so delivery transactions are on chain too.
    for (int i = 0; i < 10; ++i) {
        auto customer = d.customers()[static_cast<std::size_t>(i) % d.customers().size()].address;
        auto r = d.demo_access(static_cast<std::size_t>(i) % 2, customer, "cat-" + std::to_string(i), "analytics",
                               d.world().clock_ms() + 10);
        CHECK(r.outcome == "Delivered");
    }

    auto exported = d.world().chain().export_jsonl();
    std::string profiles;
    for (const auto& item : d.world().chain().list_stream_items("profiles"))
    {
        profiles += std::string(item.body.metadata.begin(), item.body.metadata.end());
        for (const auto& k : item.keys())
            profiles += k;
    }
    std::size_t leaks = 0;
    for (const auto& s : secrets) {
        auto hex = to_hex(as_bytes(s));
        if (exported.find(s) != std::string::npos || exported.find(hex) != std::string::npos ||
            profiles.find(s) != std::string::npos)
            ++leaks;
    }
    CHECK(leaks == 0);
    CHECK(watch.violations == 0);
}

TEST_CASE("multi-node runs: fidelity, audit completeness, reward linkage, conservation")
{
    for (std::uint64_t seed : {21u, 22u, 23u}) {
        CAPTURE(seed);
        DemoWorld d(AppConfig{}, seed, {15, 0.2});
        ConservationWatch watch;
        watch.attach(d.world());
        std::mt19937_64 rng(seed);
        std::map<Digest32, std::string> canonical;
        std::vector<std::pair<Address, std::string>> published;
        std::int64_t t = 100;

        for (int i = 0; i < 12; ++i) {
            const auto& owner = d.customers()[rng() % d.customers().size()];
            ProfileRecord r;
            r.owner = owner.address;
            r.category = "cat-" + std::to_string(rng() % 4);
            r.fields["v"] = random_word(rng, 10);
            r.fields["k"] = static_cast<std::int64_t>(rng() % 50);
            auto item = d.shop_node().publish_profile(r, {"analytics", "research"},
                                                      1 + static_cast<Amount>(rng() % 20), t);
            canonical[item.body.payload_digest] = canonicalize_record(r);
            published.emplace_back(owner.address, r.category);
            t += 10;
        }
        d.world().commit(t);

        for (int i = 0; i < 25; ++i) {
            const auto& [owner, category] = published[rng() % published.size()];
            auto action = rng() % 10;
            t = d.world().clock_ms() + 10;
            if (action == 0 && d.shop_node().policy(owner, category)) {
                d.shop_node().revoke_consent(owner, category, t);
                continue;
            }
            std::string purpose = action < 8 ? "analytics" : "marketing";
            try {
                d.demo_access(rng() % d.enterprise_count(), owner, category, purpose, t);
            } catch (const Error& e) {
                CHECK(e.code() == Errc::DuplicateRequest);
            }
        }
        d.world().tick(d.world().clock_ms() + 200'000);

        std::uint64_t responses = 0, denials = 0;
        std::size_t delivered_rows = 0, denied_rows = 0;
        for (const auto& node : d.world().nodes()) {
            responses += node->counters().responses_sent;
            denials += node->counters().denied_sent;
            for (const auto& a : node->audit_log()) {
                CHECK(a.complete());
                delivered_rows += a.outcome == AuditOutcome::Delivered;
                denied_rows += a.outcome == AuditOutcome::Denied;
            }
        }
        CHECK(responses == delivered_rows);
        CHECK(denials == denied_rows);

        std::size_t verified = 0;
        for (std::size_t e = 0; e < d.enterprise_count(); ++e) {
            for (const auto& entry : d.enterprise(e).retrieval_queue()) {
                CHECK(entry.terminal());
                const auto& c = d.world().escrow().contract(entry.contract_id);
                if (entry.state != RetrievalState::Verified) {
                    // Only an honest delivery whose response never arrived
                    // may still settle for the provider.
                    if (c.state == ContractState::Settled) {
                        CHECK(entry.fault == "timeout");
                        REQUIRE(c.receipt);
                        CHECK(c.receipt->delivered_digest == c.terms.item_digest);
                    }
                    continue;
                }
                ++verified;
                auto got = d.enterprise(e).received().at(entry.digest);
                CHECK(std::string(got.begin(), got.end()) == canonical.at(entry.digest));
                CHECK(c.state == ContractState::Settled);
                CHECK(c.closed_ms == entry.completed_ms);
                CHECK(c.terms.provider == entry.owner);
            }
        }
        CHECK(verified > 0);

        // Rewards view agrees with the escrow engine.
        for (const auto& cust : d.customers()) {
            Amount settled = 0;
            for (const auto& [id, c] : d.world().escrow().contracts())
                if (c.state == ContractState::Settled && c.terms.provider == cust.address)
                    settled += c.terms.price;
            CHECK(d.shop().rewards(cust.address).balance_delta == settled);
        }

        CHECK(d.world().chain().validate() == std::nullopt);
        CHECK(watch.violations == 0);
        CHECK(watch.checks > 0);
    }
}

TEST_CASE("checkout atomicity and merchant accounting under random carts")
{
    DemoWorld d(AppConfig{}, 31);
    ConservationWatch watch;
    watch.attach(d.world());
    auto& shop = d.shop();
    std::mt19937_64 rng(105);
    auto catalog = shop.list_catalog();
    auto merchant_before = shop.wallet(d.merchant().address).balance;
    Amount successful = 0;
    std::int64_t t = 100;

    for (int i = 0; i < 60; ++i) {
        const auto& customer = d.customers()[rng() % d.customers().size()].address;
        auto session = "p" + std::to_string(i);
        shop.open_session(session, customer);
        auto lines = 1 + rng() % 3;
        for (std::uint64_t l = 0; l < lines; ++l)
            shop.cart_update(session, catalog[rng() % catalog.size()].sku, 1 + rng() % 12);

        auto stock_before = shop.list_catalog();
        auto cart_before = shop.cart(session);
        auto bal_before = shop.wallet(customer).balance;
        auto height_before = d.world().chain().height();
        t += 50;
        try {
            auto r = shop.checkout(session, t);
            successful += r.total;
            CHECK(r.total == cart_before.total);
            CHECK(shop.verify_receipt(r));
            CHECK(shop.wallet(customer).balance == bal_before - r.total);
        } catch (const Error& e) {
            CHECK((e.code() == Errc::InsufficientFunds || e.code() == Errc::OutOfStock));
            CHECK(shop.wallet(customer).balance == bal_before);
            CHECK(shop.cart(session).lines == cart_before.lines);
            CHECK(d.world().chain().height() == height_before);
            CHECK(d.world().chain().mempool().empty());
            auto stock_after = shop.list_catalog();
            for (std::size_t k = 0; k < stock_after.size(); ++k)
                CHECK(stock_after[k].stock == stock_before[k].stock);
        }
    }
    CHECK(successful > 0);
    CHECK(shop.wallet(d.merchant().address).balance == merchant_before + successful);
    CHECK(watch.violations == 0);
}
