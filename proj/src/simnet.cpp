#include <chainmart/error.hpp>
#include <chainmart/simnet.hpp>

namespace chainmart {

std::string_view NetworkMessage::kind() const
{
    switch (body.index()) {
    case 0: return "QueryData";
    case 1: return "DataResponse";
    default: return "Denied";
    }
}

SimNet::SimNet(std::uint64_t seed, LinkParams default_link) : rng_(seed), default_link_(default_link) {}

void SimNet::set_link(const Address& a, const Address& b, LinkParams p)
{
    if (p.one_way_latency_ms < 0 || p.drop_rate < 0.0 || p.drop_rate > 1.0)
        fail(Errc::BadConfig, "link latency must be >= 0 and drop rate within [0, 1]");
    links_[{a, b}] = p;
    links_[{b, a}] = p;
}

LinkParams SimNet::link(const Address& from, const Address& to) const
{
    auto it = links_.find({from, to});
    return it == links_.end() ? default_link_ : it->second;
}

bool SimNet::send(NetworkMessage msg, std::int64_t now_ms)
{
    auto p = link(msg.from, msg.to);
    ++sent_;
    // One draw per send keeps the random stream aligned across drop rates.
    double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    if (u < p.drop_rate) {
        ++dropped_;
        return false;
    }
    msg.sent_ms = now_ms;
    msg.deliver_ms = now_ms + p.one_way_latency_ms;
    msg.seq = seq_++;
    queue_.push(std::move(msg));
    return true;
}

std::optional<std::int64_t> SimNet::next_delivery_ms() const
{
    if (queue_.empty())
        return std::nullopt;
    return queue_.top().deliver_ms;
}

std::optional<NetworkMessage> SimNet::pop_due(std::int64_t now_ms)
{
    if (queue_.empty() || queue_.top().deliver_ms > now_ms)
        return std::nullopt;
    auto msg = queue_.top();
    queue_.pop();
    return msg;
}

} // namespace chainmart
