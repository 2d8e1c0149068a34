#pragma once

// JSON-over-HTTP front of the shop. Every handler takes one service-wide
// lock, advances the consortium to the current time and then runs the
// operation, so cart, checkout and escrow mutations never interleave.
//
// Customer selection: X-Customer header or ?customer= (hex address),
// defaulting to the first fixture customer.

#include <chainmart/demo.hpp>

#include <functional>
#include <mutex>

namespace httplib {
class Server;
}

namespace chainmart {

/// HTTP status for an error code: 404 for unknown things, 409 for
/// conflicts with current state, 400 for malformed input, 500 otherwise.
int http_status(Errc code);

class ShopService {
public:
    using Clock = std::function<std::int64_t()>;

    /// Without a clock, time is milliseconds since construction.
    ShopService(DemoWorld& demo, bool demo_mode, Clock clock = {});

    void install(httplib::Server& server);

    std::mutex& mutex() { return mu_; }

private:
    std::int64_t now();

    DemoWorld& demo_;
    bool demo_mode_;
    Clock clock_;
    std::mutex mu_;
};

} // namespace chainmart
