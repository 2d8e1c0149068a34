#include "support.hpp"

#include <chainmart/http.hpp>

#include <doctest.h>
#include <httplib.h>

#include <thread>

using namespace testing;
using json = nlohmann::json;

namespace {

struct Server {
    DemoWorld demo;
    std::int64_t now = 1000;
    ShopService service;
    httplib::Server srv;
    std::thread thread;
    int port = 0;

    explicit Server(bool demo_mode = true) : service(demo, demo_mode, [this] { return now += 10; })
    {
        service.install(srv);
        port = srv.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { srv.listen_after_bind(); });
        srv.wait_until_ready();
    }
    ~Server()
    {
        srv.stop();
        thread.join();
    }

    httplib::Client client() const
    {
        httplib::Client c("127.0.0.1", port);
        c.set_read_timeout(10, 0);
        return c;
    }
};

json body_of(const httplib::Result& r)
{
    REQUIRE(r);
    return json::parse(r->body);
}

} // namespace

TEST_CASE("catalog, cart, checkout, receipts")
{
    Server s;
    auto c = s.client();

    auto cat = c.Get("/catalog");
    REQUIRE(cat);
    CHECK(cat->status == 200);
    CHECK(cat->get_header_value("Content-Type") == "application/json");
    CHECK(body_of(cat).size() == 8);

    auto put = c.Put("/cart/abc/items", R"({"sku":"sku-002","qty":2})", "application/json");
    CHECK(put->status == 200);
    CHECK(body_of(put)["total"] == 10);
    put = c.Put("/cart/abc/items", R"({"sku":"sku-008","qty":1})", "application/json");
    CHECK(body_of(put)["total"] == 17);
    CHECK(body_of(c.Get("/cart/abc"))["lines"]["sku-008"] == 1);

    auto bad = c.Put("/cart/abc/items", R"({"sku":"nope","qty":1})", "application/json");
    CHECK(bad->status == 404);
    CHECK(body_of(bad)["error"] == "UnknownSku");
    bad = c.Put("/cart/abc/items", R"({"sku":"sku-001","qty":-1})", "application/json");
    CHECK(bad->status == 400);
    bad = c.Put("/cart/abc/items", "not json", "application/json");
    CHECK(bad->status == 400);
    CHECK(body_of(bad)["error"] == "BadRequest");
    CHECK(body_of(c.Get("/cart/missing"))["error"] == "UnknownSession");

    auto wallet0 = body_of(c.Get("/wallet"))["balance"].get<Amount>();
    auto co = c.Post("/checkout/abc", "", "application/json");
    REQUIRE(co->status == 200);
    auto receipt = body_of(co);
    CHECK(receipt["total"] == 17);
    CHECK(body_of(c.Get("/wallet"))["balance"].get<Amount>() == wallet0 - 17);

    auto ver = c.Post("/receipts/verify", receipt.dump(), "application/json");
    CHECK(body_of(ver)["valid"] == true);
    auto tampered = receipt;
    tampered["total"] = 1;
    CHECK(body_of(c.Post("/receipts/verify", tampered.dump(), "application/json"))["valid"] == false);

    auto fetched = body_of(c.Get(("/receipts/" + receipt["order_id"].get<std::string>()).c_str()));
    CHECK(fetched == receipt);
    auto missing = c.Get(("/receipts/" + std::string(64, '0')).c_str());
    CHECK(missing->status == 404);
    CHECK(body_of(missing)["error"] == "UnknownOrder");

    auto empty = c.Post("/checkout/abc", "", "application/json");
    CHECK(empty->status == 409);
    CHECK(body_of(empty)["error"] == "EmptyCart");
}

TEST_CASE("insufficient funds keeps the cart")
{
    Server s;
    auto c = s.client();
    c.Put("/cart/big/items", R"({"sku":"sku-005","qty":15})", "application/json");
    c.Put("/cart/big/items", R"({"sku":"sku-003","qty":3})", "application/json");
    auto r = c.Post("/checkout/big", "", "application/json");
    CHECK(r->status == 409);
    CHECK(body_of(r)["error"] == "InsufficientFunds");
    CHECK(body_of(c.Get("/cart/big"))["total"] == 1035);
    CHECK(body_of(c.Get("/wallet"))["balance"] == kDemoGrant);
}

TEST_CASE("customer selection")
{
    Server s;
    auto c = s.client();
    auto second = s.demo.customers()[1].address.hex();
    httplib::Headers h{{"X-Customer", second}};
    CHECK(body_of(c.Get("/wallet", h))["address"] == second);
    CHECK(body_of(c.Get(("/wallet?customer=" + second).c_str()))["address"] == second);
    auto r = c.Get("/wallet", httplib::Headers{{"X-Customer", std::string(40, 'a')}});
    CHECK(r->status == 404);
    CHECK(body_of(r)["error"] == "UnknownCustomer");
}

TEST_CASE("consent, demo access, audit and rewards")
{
    Server s;
    auto c = s.client();
    c.Put("/cart/s/items", R"({"sku":"sku-001","qty":1})", "application/json");
    c.Post("/checkout/s", "", "application/json");

    auto consent = c.Post("/consent", R"({"category":"purchase-history","purposes":["analytics"],"price":10})",
                          "application/json");
    REQUIRE(consent->status == 200);
    CHECK(body_of(consent)["revoked"] == false);

    auto wallet0 = body_of(c.Get("/wallet"))["balance"].get<Amount>();
    auto access = c.Post("/demo/access", R"({"enterprise":0,"category":"purchase-history","purpose":"analytics"})",
                         "application/json");
    REQUIRE(access->status == 200);
    CHECK(body_of(access)["outcome"] == "Delivered");
    CHECK(body_of(c.Get("/wallet"))["balance"].get<Amount>() == wallet0 + 10);

    auto rewards = body_of(c.Get("/rewards"));
    CHECK(rewards["balance_delta"] == 10);
    CHECK(rewards["entries"].size() == 1);

    auto disallowed = c.Post("/demo/access", R"({"enterprise":1,"category":"purchase-history","purpose":"resale"})",
                             "application/json");
    CHECK(body_of(disallowed)["outcome"] == "Denied");
    CHECK(body_of(disallowed)["reason"] == "purpose-not-allowed");

    auto audit = body_of(c.Get("/audit"));
    REQUIRE(audit.size() == 2);
    CHECK(audit[0]["outcome"] == "Delivered");
    CHECK(audit[1]["outcome"] == "Denied");
    auto e0 = s.demo.enterprises()[0].address.hex();
    CHECK(body_of(c.Get(("/audit?who=" + e0).c_str())).size() == 1);
    auto since = audit[1]["when_ms"].get<std::int64_t>();
    CHECK(body_of(c.Get(("/audit?since=" + std::to_string(since)).c_str())).size() == 1);
    CHECK(c.Get("/audit?since=abc")->status == 400);

    auto del = c.Delete("/consent/purchase-history");
    CHECK(body_of(del)["revoked"] == 1);
    auto revoked = c.Post("/demo/access", R"({"category":"purchase-history","purpose":"analytics"})",
                          "application/json");
    CHECK(body_of(revoked)["reason"] == "consent-revoked");

    auto purge = c.Delete("/consent/purchase-history?purge=true");
    CHECK(body_of(purge)["deleted"] == 1);
    auto gone = c.Post("/demo/access", R"({"category":"purchase-history","purpose":"analytics"})",
                       "application/json");
    CHECK(body_of(gone)["reason"] == "data-deleted");

    auto unknown = c.Delete("/consent/demographics");
    CHECK(unknown->status == 404);
    CHECK(body_of(unknown)["error"] == "UnknownCategory");

    auto floaty = c.Post("/consent", R"({"category":"prefs","purposes":["analytics"],"price":5,"fields":{"x":1.5}})",
                         "application/json");
    CHECK(floaty->status == 400);
    CHECK(body_of(floaty)["error"] == "UnsupportedValue");

    // Re-enabling consent makes the next access deliver again.
    c.Post("/consent", R"({"category":"purchase-history","purposes":["analytics"],"price":12})", "application/json");
    auto again = c.Post("/demo/access", R"({"category":"purchase-history","purpose":"analytics"})",
                        "application/json");
    CHECK(body_of(again)["outcome"] == "Delivered");
    CHECK(body_of(c.Get("/rewards"))["balance_delta"] == 22);

    CHECK(s.demo.world().chain().validate() == std::nullopt);
}

TEST_CASE("demo endpoint only in demo mode")
{
    Server s(false);
    auto c = s.client();
    auto r = c.Post("/demo/access", R"({"category":"purchase-history","purpose":"analytics"})", "application/json");
    CHECK(r->status == 404);
}

TEST_CASE("concurrent clients are serialized")
{
    Server s;
    std::vector<std::thread> threads;
    std::atomic<int> ok{0};
    for (int i = 0; i < 8; ++i) {
        threads.emplace_back([&, i] {
            auto c = s.client();
            auto session = "t" + std::to_string(i);
            for (int k = 0; k < 5; ++k)
                c.Put(("/cart/" + session + "/items").c_str(), R"({"sku":"sku-004","qty":1})", "application/json");
            auto r = c.Post(("/checkout/" + session).c_str(), "", "application/json");
            if (r && r->status == 200)
                ++ok;
        });
    }
    for (auto& t : threads)
        t.join();
    CHECK(ok == 8);
    CHECK(s.demo.shop().list_catalog()[3].stock == 500 - 8);
    CHECK(s.demo.world().chain().validate() == std::nullopt);
}
