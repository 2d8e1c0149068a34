#include <chainmart/error.hpp>
#include <chainmart/http.hpp>

#include <httplib.h>

#include <chrono>

namespace chainmart {

using json = nlohmann::json;

int http_status(Errc code)
{
    switch (code) {
    case Errc::UnknownSku:
    case Errc::UnknownSession:
    case Errc::UnknownOrder:
    case Errc::UnknownCustomer:
    case Errc::UnknownCategory:
    case Errc::UnknownContract:
    case Errc::UnknownTx:
    case Errc::NotFound:
        return 404;
    case Errc::EmptyCart:
    case Errc::OutOfStock:
    case Errc::InsufficientFunds:
    case Errc::DuplicateRequest:
    case Errc::WrongState:
    case Errc::PendingTx:
        return 409;
    case Errc::BadRequest:
    case Errc::UnsupportedValue:
    case Errc::BadItem:
    case Errc::BadConfig:
    case Errc::ZeroAmount:
        return 400;
    default:
        return 500;
    }
}

namespace {

json product_json(const Product& p)
{
    return {{"sku", p.sku}, {"name", p.name}, {"price", p.price}, {"stock", p.stock}};
}

json cart_json(const Cart& c)
{
    json lines = json::object();
    for (const auto& [sku, qty] : c.lines)
        lines[sku] = qty;
    return {{"session_id", c.session_id}, {"customer", c.customer.hex()}, {"lines", lines}, {"total", c.total}};
}

json policy_json(const ConsentPolicy& p)
{
    json j = {{"category", p.category},
              {"purposes", p.allowed_purposes},
              {"price", p.price},
              {"revoked", p.revoked}};
    if (p.expiry_ms)
        j["expiry_ms"] = *p.expiry_ms;
    return j;
}

json reward_json(const RewardEntry& e)
{
    return {{"customer", e.customer.hex()},
            {"amount", e.amount},
            {"contract_id", e.contract_id.hex()},
            {"when_ms", e.when_ms},
            {"category", e.category}};
}

void reply(httplib::Response& res, int status, const json& body)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, std::string_view code, const std::string& message)
{
    reply(res, status, {{"error", code}, {"message", message}});
}

json parse_body(const httplib::Request& req)
{
    try {
        auto j = json::parse(req.body);
        if (!j.is_object())
            fail(Errc::BadRequest, "request body must be a JSON object");
        return j;
    } catch (const json::parse_error& e) {
        fail(Errc::BadRequest, std::string("request body is not JSON: ") + e.what());
    }
}

template <typename T>
T field(const json& j, const char* name)
{
    try {
        return j.at(name).get<T>();
    } catch (const json::exception& e) {
        fail(Errc::BadRequest, std::string("field '") + name + "': " + e.what());
    }
}

bool parse_bool(const std::string& s)
{
    if (s == "true" || s == "1")
        return true;
    if (s == "false" || s == "0" || s.empty())
        return false;
    fail(Errc::BadRequest, "expected a boolean, got '" + s + "'");
}

std::int64_t parse_i64(const std::string& s)
{
    try {
        std::size_t used = 0;
        auto v = std::stoll(s, &used);
        if (used != s.size())
            throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        fail(Errc::BadRequest, "expected an integer, got '" + s + "'");
    }
}

} // namespace

ShopService::ShopService(DemoWorld& demo, bool demo_mode, Clock clock)
    : demo_(demo), demo_mode_(demo_mode), clock_(std::move(clock))
{
    if (!clock_) {
        auto start = std::chrono::steady_clock::now();
        clock_ = [start] {
            return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start)
                .count();
        };
    }
}

std::int64_t ShopService::now()
{
    auto& w = demo_.world();
    auto t = std::max(clock_(), w.clock_ms());
    w.tick(t);
    return t;
}

void ShopService::install(httplib::Server& srv)
{
    using Handler = std::function<void(const httplib::Request&, httplib::Response&, std::int64_t)>;
    auto wrap = [this](Handler h) {
        return [this, h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mu_);
            try {
                h(req, res, now());
            } catch (const Error& e) {
                reply_error(res, http_status(e.code()), errc_name(e.code()), e.what());
            } catch (const std::exception& e) {
                reply_error(res, 500, "Internal", e.what());
            }
        };
    };
    auto customer_of = [this](const httplib::Request& req) {
        std::string hex;
        if (req.has_header("X-Customer"))
            hex = req.get_header_value("X-Customer");
        else if (req.has_param("customer"))
            hex = req.get_param_value("customer");
        if (hex.empty())
            return demo_.customers().front().address;
        Address a;
        try {
            a = address_from_hex(hex);
        } catch (const Error&) {
            fail(Errc::UnknownCustomer, "'" + hex + "' is not a customer address");
        }
        if (!demo_.shop().is_customer(a))
            fail(Errc::UnknownCustomer, "unknown customer " + hex);
        return a;
    };

    srv.Get("/catalog", wrap([this](const auto&, auto& res, std::int64_t) {
        json out = json::array();
        for (const auto& p : demo_.shop().list_catalog())
            out.push_back(product_json(p));
        reply(res, 200, out);
    }));

    srv.Put("/cart/:session/items", wrap([this, customer_of](const auto& req, auto& res, std::int64_t) {
        auto& shop = demo_.shop();
        const auto& session = req.path_params.at("session");
        auto body = parse_body(req);
        auto sku = field<std::string>(body, "sku");
        auto qty = field<std::int64_t>(body, "qty");
        if (qty < 0)
            fail(Errc::BadRequest, "qty must be non-negative");
        if (!shop.has_session(session))
            shop.open_session(session, customer_of(req));
        reply(res, 200, cart_json(shop.cart_update(session, sku, static_cast<std::uint64_t>(qty))));
    }));

    srv.Get("/cart/:session", wrap([this](const auto& req, auto& res, std::int64_t) {
        reply(res, 200, cart_json(demo_.shop().cart(req.path_params.at("session"))));
    }));

    srv.Post("/checkout/:session", wrap([this](const auto& req, auto& res, std::int64_t t) {
        reply(res, 200, demo_.shop().checkout(req.path_params.at("session"), t).to_json());
    }));

    srv.Get("/receipts/:order_id", wrap([this](const auto& req, auto& res, std::int64_t) {
        Digest32 id;
        try {
            id = digest_from_hex(req.path_params.at("order_id"));
        } catch (const Error&) {
            fail(Errc::UnknownOrder, "unknown order " + req.path_params.at("order_id"));
        }
        reply(res, 200, demo_.shop().receipt(id).to_json());
    }));

    srv.Post("/receipts/verify", wrap([this](const auto& req, auto& res, std::int64_t) {
        auto r = Receipt::from_json(parse_body(req));
        reply(res, 200, {{"valid", demo_.shop().verify_receipt(r)}, {"order_id", r.order_id.hex()}});
    }));

    srv.Post("/consent", wrap([this, customer_of](const auto& req, auto& res, std::int64_t t) {
        auto& shop = demo_.shop();
        auto customer = customer_of(req);
        auto body = parse_body(req);
        auto category = field<std::string>(body, "category");
        auto purposes = field<std::set<std::string>>(body, "purposes");
        auto price = field<Amount>(body, "price");
        std::optional<json> fields;
        if (body.contains("fields"))
            fields = body.at("fields");
        auto record = shop.repository_record(customer, category, fields);
        auto item = shop.opt_in_sharing(customer, record, purposes, price, t);
        demo_.world().commit(t);
        json out = policy_json(*shop.node().policy(customer, category));
        out["txid"] = item.txid.hex();
        out["digest"] = item.body.payload_digest.hex();
        reply(res, 200, out);
    }));

    srv.Delete("/consent/:category", wrap([this, customer_of](const auto& req, auto& res, std::int64_t t) {
        bool purge = req.has_param("purge") && parse_bool(req.get_param_value("purge"));
        const auto& category = req.path_params.at("category");
        auto r = demo_.shop().withdraw_consent(customer_of(req), category, purge, t);
        demo_.world().commit(t);
        reply(res, 200, {{"category", category}, {"revoked", r.revoked}, {"deleted", r.deleted}, {"purged", purge}});
    }));

    srv.Get("/audit", wrap([this, customer_of](const auto& req, auto& res, std::int64_t) {
        AuditFilter f;
        if (req.has_param("who") && !req.get_param_value("who").empty())
            f.who = address_from_hex(req.get_param_value("who"));
        if (req.has_param("since") && !req.get_param_value("since").empty())
            f.since_ms = parse_i64(req.get_param_value("since"));
        json out = json::array();
        for (const auto& a : demo_.shop().audit_trail(customer_of(req), f))
            out.push_back(a.to_json());
        reply(res, 200, out);
    }));

    srv.Get("/rewards", wrap([this, customer_of](const auto& req, auto& res, std::int64_t) {
        auto r = demo_.shop().rewards(customer_of(req));
        json entries = json::array();
        for (const auto& e : r.entries)
            entries.push_back(reward_json(e));
        reply(res, 200, {{"balance_delta", r.balance_delta}, {"entries", entries}});
    }));

    srv.Get("/wallet", wrap([this, customer_of](const auto& req, auto& res, std::int64_t) {
        auto w = demo_.shop().wallet(customer_of(req));
        reply(res, 200, {{"address", w.address.hex()}, {"balance", w.balance}});
    }));

    if (demo_mode_) {
        srv.Post("/demo/access", wrap([this, customer_of](const auto& req, auto& res, std::int64_t t) {
            auto body = parse_body(req);
            auto enterprise = body.contains("enterprise") ? field<std::size_t>(body, "enterprise") : 0;
            if (enterprise >= demo_.enterprise_count())
                fail(Errc::BadRequest, "no enterprise " + std::to_string(enterprise));
            auto r = demo_.demo_access(enterprise, customer_of(req), field<std::string>(body, "category"),
                                       field<std::string>(body, "purpose"), t);
            reply(res, 200, r.to_json());
        }));
    }
}

} // namespace chainmart
