#include "support.hpp"

#include <doctest.h>

#include <random>

using namespace testing;

namespace {

struct Market {
    Identity provider = identity_from_label("provider");
    Identity consumer = identity_from_label("consumer");
    EscrowEngine engine;
    ConservationWatch watch;
    Digest32 item = hash_payload(std::string_view("ciphertext"));
    Digest32 commitment = hash_payload(std::string_view("data key"));

    explicit Market(Amount provider_funds = 100, Amount consumer_funds = 100, CollateralPolicy policy = {})
        : engine(AccountLedger({{identity_from_label("provider").address, provider_funds},
                                {identity_from_label("consumer").address, consumer_funds}}),
                 policy)
    {
        engine.register_key(provider.address, provider.sign_public);
        engine.register_key(consumer.address, consumer.sign_public);
        watch.attach(engine.ledger());
    }

    ContractTerms terms(Amount price = 10, Amount collateral = 0)
    {
        ContractTerms t;
        t.provider = provider.address;
        t.consumer = consumer.address;
        t.item_digest = item;
        t.key_commitment = commitment;
        t.price = price;
        t.collateral = collateral;
        t.deadlines = {100, 200, 50};
        t.salt = 1;
        return t;
    }

    ContractId funded(Amount price = 10)
    {
        auto id = engine.create_contract(terms(price));
        engine.fund(id, consumer.address, 1);
        engine.fund(id, provider.address, 2);
        return id;
    }

    DeliveryReceipt receipt(const ContractId& id, bool honest = true, std::int64_t at = 10)
    {
        auto digest = honest ? item : hash_payload(std::string_view("garbage"));
        return DeliveryReceipt::make(provider, id, digest, commitment, at);
    }

    Amount bal(const Identity& who) const { return engine.ledger().balance(who.address); }
};

} // namespace

TEST_CASE("transfer")
{
    auto a = identity_from_label("a").address;
    auto b = identity_from_label("b").address;
    AccountLedger l({{a, 50}});
    ConservationWatch w;
    w.attach(l);
    l.transfer(a, b, 20);
    CHECK(l.balance(a) == 30);
    CHECK(l.balance(b) == 20);
    CHECK(error_of([&] { l.transfer(a, b, 0); }) == Errc::ZeroAmount);
    CHECK(error_of([&] { l.transfer(a, b, 31); }) == Errc::InsufficientFunds);
    CHECK(l.balance(a) == 30);
    CHECK(l.balance(b) == 20);
    CHECK(w.checks >= 1);
    CHECK(w.violations == 0);
}

TEST_CASE("create_contract")
{
    Market m;
    auto id = m.engine.create_contract(m.terms(10));
    const auto& c = m.engine.contract(id);
    CHECK(c.state == ContractState::Created);
    CHECK(c.collateral() == 10);
    CHECK(id == c.terms.id());
    CHECK(error_of([&] { m.engine.create_contract(m.terms(0)); }) == Errc::BadTerms);
    auto same_party = m.terms();
    same_party.consumer = same_party.provider;
    CHECK(error_of([&] { m.engine.create_contract(same_party); }) == Errc::BadTerms);

    Market m2;
    CHECK(m2.engine.create_contract(m2.terms(10)) == id);
    auto salted = m2.terms(10);
    salted.salt = 2;
    CHECK_FALSE(salted.id() == id);
}

TEST_CASE("collateral policy")
{
    CHECK(CollateralPolicy::parse("match-price").collateral_for(10) == 10);
    CHECK(CollateralPolicy::parse("percent:50").collateral_for(10) == 5);
    CHECK(CollateralPolicy::parse("fixed:3").collateral_for(10) == 3);
    CHECK(error_of([] { CollateralPolicy::parse("double"); }) == Errc::BadConfig);
    Market m(100, 100, CollateralPolicy::parse("fixed:4"));
    auto id = m.engine.create_contract(m.terms(10));
    CHECK(m.engine.contract(id).collateral() == 4);
}

TEST_CASE("fund")
{
    Market m;
    auto id = m.engine.create_contract(m.terms(10));
    CHECK(m.engine.fund(id, m.consumer.address, 1) == ContractState::PartiallyFunded);
    CHECK(m.engine.ledger().locked(id, m.consumer.address) == 20);
    CHECK(error_of([&] { m.engine.fund(id, m.consumer.address, 1); }) == Errc::AlreadyFunded);
    CHECK(error_of([&] { m.engine.fund(id, identity_from_label("x").address, 1); }) == Errc::NotParty);
    CHECK(m.engine.fund(id, m.provider.address, 2) == ContractState::Funded);
    CHECK(m.engine.ledger().locked(id, m.provider.address) == 10);
    CHECK(m.engine.ledger().locked(id) == 30);
    CHECK(error_of([&] { m.engine.fund(id, m.provider.address, 3); }) == Errc::WrongState);

    Market poor(100, 19);
    auto pid = poor.engine.create_contract(poor.terms(10));
    CHECK(error_of([&] { poor.engine.fund(pid, poor.consumer.address, 1); }) == Errc::InsufficientFunds);
    CHECK(poor.engine.contract(pid).state == ContractState::Created);
    CHECK(poor.bal(poor.consumer) == 19);
    CHECK(poor.engine.ledger().locked(pid) == 0);

    Market late;
    auto lid = late.engine.create_contract(late.terms(10));
    CHECK(error_of([&] { late.engine.fund(lid, late.consumer.address, 101); }) == Errc::PastDeadline);
}

TEST_CASE("mark_delivered")
{
    Market m;
    auto created = m.engine.create_contract(m.terms(10));
    CHECK(error_of([&] { m.engine.mark_delivered(created, m.receipt(created)); }) == Errc::WrongState);

    auto id = m.funded(11);
    auto unsigned_receipt = m.receipt(id);
    unsigned_receipt.provider_sig = {};
    CHECK(error_of([&] { m.engine.mark_delivered(id, unsigned_receipt); }) == Errc::BadReceiptSignature);
    auto by_consumer = DeliveryReceipt::make(m.consumer, id, m.item, m.commitment, 10);
    CHECK(error_of([&] { m.engine.mark_delivered(id, by_consumer); }) == Errc::BadReceiptSignature);
    CHECK(error_of([&] { m.engine.mark_delivered(id, m.receipt(id, true, 201)); }) == Errc::PastDeadline);
    CHECK(m.engine.mark_delivered(id, m.receipt(id)) == ContractState::Delivered);
    CHECK(DeliveryReceipt::decode(m.receipt(id).encode()) == m.receipt(id));
}

TEST_CASE("confirm")
{
    Market m;
    auto id = m.funded();
    m.engine.mark_delivered(id, m.receipt(id));
    CHECK(error_of([&] { m.engine.confirm(id, m.provider.address, 20); }) == Errc::NotParty);
    CHECK(m.engine.confirm(id, m.consumer.address, 20) == ContractState::Settled);
    CHECK(m.bal(m.provider) == 110);
    CHECK(m.bal(m.consumer) == 90);
    CHECK(m.engine.ledger().burned() == 0);
    CHECK(m.engine.ledger().locked(id) == 0);
    CHECK(error_of([&] { m.engine.confirm(id, m.consumer.address, 21); }) == Errc::WrongState);

    Market g;
    auto gid = g.funded();
    g.engine.mark_delivered(gid, g.receipt(gid, false));
    CHECK(error_of([&] { g.engine.confirm(gid, g.consumer.address, 20); }) == Errc::DigestMismatch);
}

TEST_CASE("raise_mismatch")
{
    Market m;
    auto id = m.funded();
    m.engine.mark_delivered(id, m.receipt(id, false));
    CHECK(error_of([&] { m.engine.raise_mismatch(id, m.provider.address, 20); }) == Errc::NotParty);
    CHECK(m.engine.raise_mismatch(id, m.consumer.address, 20) == ContractState::Slashed);
    CHECK(m.bal(m.consumer) == 100);
    CHECK(m.bal(m.provider) == 90);
    CHECK(m.engine.ledger().burned() == 10);

    Market h;
    auto hid = h.funded();
    h.engine.mark_delivered(hid, h.receipt(hid));
    CHECK(error_of([&] { h.engine.raise_mismatch(hid, h.consumer.address, 20); }) == Errc::NoMismatch);

    Market wk;
    auto wid = wk.funded();
    wk.engine.mark_delivered(wid, DeliveryReceipt::make(wk.provider, wid, wk.item,
                                                        hash_payload(std::string_view("other key")), 10));
    CHECK(wk.engine.raise_mismatch(wid, wk.consumer.address, 20) == ContractState::Slashed);
}

TEST_CASE("claim_timeout")
{
    SUBCASE("(a) provider never funds")
    {
        Market m;
        auto id = m.engine.create_contract(m.terms());
        m.engine.fund(id, m.consumer.address, 1);
        CHECK(m.bal(m.consumer) == 80);
        CHECK(error_of([&] { m.engine.claim_timeout(id, 100); }) == Errc::NotYetTimedOut);
        CHECK(m.engine.claim_timeout(id, 101) == ContractState::Refunded);
        CHECK(m.bal(m.consumer) == 100);
        CHECK(m.engine.ledger().burned() == 0);
    }
    SUBCASE("(b) funded, no delivery")
    {
        Market m;
        auto id = m.funded();
        CHECK(error_of([&] { m.engine.claim_timeout(id, 200); }) == Errc::NotYetTimedOut);
        CHECK(m.engine.claim_timeout(id, 201) == ContractState::Slashed);
        CHECK(m.bal(m.consumer) == 100);
        CHECK(m.bal(m.provider) == 90);
        CHECK(m.engine.ledger().burned() == 10);
    }
    SUBCASE("(c) delivered, consumer silent")
    {
        Market m;
        auto id = m.funded();
        m.engine.mark_delivered(id, m.receipt(id, true, 10));
        CHECK(error_of([&] { m.engine.claim_timeout(id, 60); }) == Errc::NotYetTimedOut);
        CHECK(m.engine.claim_timeout(id, 61) == ContractState::Settled);
        CHECK(m.bal(m.provider) == 110);
        CHECK(m.bal(m.consumer) == 90);
    }
    SUBCASE("(c) with a mismatching receipt keeps the consumer's remedy")
    {
        Market m;
        auto id = m.funded();
        m.engine.mark_delivered(id, m.receipt(id, false, 10));
        CHECK(error_of([&] { m.engine.claim_timeout(id, 1000); }) == Errc::DigestMismatch);
        CHECK(m.engine.contract(id).state == ContractState::Delivered);
        CHECK(m.engine.raise_mismatch(id, m.consumer.address, 5000) == ContractState::Slashed);
    }
    SUBCASE("terminal states absorb")
    {
        Market m;
        auto id = m.funded();
        m.engine.claim_timeout(id, 201);
        CHECK(error_of([&] { m.engine.claim_timeout(id, 500); }) == Errc::WrongState);
        CHECK(error_of([&] { m.engine.fund(id, m.consumer.address, 500); }) == Errc::WrongState);
    }
}

TEST_CASE("random operation sequences conserve tokens and follow the state machine")
{
    std::mt19937_64 rng(2024);
    for (int round = 0; round < 200; ++round) {
        Market m(rng() % 40, rng() % 40);
        std::vector<ContractId> ids;
        std::map<ContractId, ContractState> last;
        std::int64_t now = 0;
        for (int step = 0; step < 30; ++step) {
            now += static_cast<std::int64_t>(rng() % 40);
            try {
                switch (rng() % 7) {
                case 0: {
                    auto t = m.terms(1 + rng() % 15);
                    t.salt = rng();
                    t.deadlines = {now + 50, now + 100, 30};
                    ids.push_back(m.engine.create_contract(t));
                    break;
                }
                case 1:
                    if (!ids.empty())
                        m.engine.fund(ids[rng() % ids.size()], m.consumer.address, now);
                    break;
                case 2:
                    if (!ids.empty())
                        m.engine.fund(ids[rng() % ids.size()], m.provider.address, now);
                    break;
                case 3:
                    if (!ids.empty()) {
                        auto id = ids[rng() % ids.size()];
                        m.engine.mark_delivered(id, m.receipt(id, rng() % 2, now));
                    }
                    break;
                case 4:
                    if (!ids.empty())
                        m.engine.confirm(ids[rng() % ids.size()], m.consumer.address, now);
                    break;
                case 5:
                    if (!ids.empty())
                        m.engine.raise_mismatch(ids[rng() % ids.size()], m.consumer.address, now);
                    break;
                case 6:
                    if (!ids.empty())
                        m.engine.claim_timeout(ids[rng() % ids.size()], now);
                    break;
                }
            } catch (const Error&) {
            }
            for (const auto& [id, c] : m.engine.contracts()) {
                auto prev = last.contains(id) ? last[id] : ContractState::Created;
                if (is_terminal(prev))
                    CHECK(c.state == prev);
                CHECK(c.funded_consumer <= c.consumer_required());
                CHECK(c.funded_provider <= c.provider_required());
                last[id] = c.state;
            }
            CHECK(m.engine.ledger().conserved());
        }
        CHECK(m.watch.violations == 0);
    }
}
