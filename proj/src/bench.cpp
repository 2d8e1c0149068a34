#include <chainmart/bench.hpp>
#include <chainmart/error.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace chainmart {

namespace {

constexpr Amount kBenchGrant = 1'000'000'000;
constexpr Amount kBenchPrice = 10;

std::string random_text(std::mt19937_64& rng, std::size_t n)
{
    static constexpr char alphabet[] = "abcdefghijklmnopqrstuvwxyz0123456789";
    std::string s(n, ' ');
    for (auto& c : s)
        c = alphabet[rng() % (sizeof(alphabet) - 1)];
    return s;
}

struct Publish {
    std::size_t node = 0;
    Digest32 txid;
    Digest32 digest;
    std::string category;
    std::int64_t at_ms = 0;
    double wall_ms = 0;
};

struct Retrieval {
    std::size_t consumer = 0;
    Digest32 digest;
};

class Driver {
public:
    explicit Driver(const ScenarioConfig& cfg) : cfg_(cfg), text_rng_(cfg.seed)
    {
        ConsortiumConfig cc;
        cc.chain_id = "chainmart-bench";
        cc.block_interval_ms = cfg.block_interval_ms;
        cc.seed = cfg.seed;
        cc.default_link = {cfg.link_latency_ms, cfg.drop_rate};

        GenesisSpec g;
        for (int i = 1; i <= 4; ++i)
            g.validators.push_back(identity_from_label("bench-validator-" + std::to_string(i)));
        std::vector<Identity> ids;
        for (std::uint32_t i = 0; i < cfg.nodes; ++i) {
            ids.push_back(identity_from_label("bench-node-" + std::to_string(i)));
            g.members.emplace_back(ids.back(), kBenchGrant);
        }
        world_ = std::make_unique<Consortium>(cc, g);
        for (std::uint32_t i = 0; i < cfg.nodes; ++i)
            nodes_.push_back(&world_->add_node("node-" + std::to_string(i), {ids[i]}));
    }

    void advance_to(std::int64_t t)
    {
        while (auto next = world_->next_event_ms()) {
            if (*next > t)
                break;
            world_->tick(*next);
            sample();
        }
        world_->tick(t);
        sample();
    }

    void drain()
    {
        while (auto next = world_->next_event_ms()) {
            world_->tick(std::max(*next, world_->clock_ms()));
            sample();
        }
    }

    void publish(std::size_t idx, std::int64_t t)
    {
        advance_to(t);
        auto node = idx % nodes_.size();
        ProfileRecord r;
        r.owner = nodes_[node]->primary().address;
        r.category = "bench-" + std::to_string(idx);
        r.fields["payload"] = random_text(text_rng_, cfg_.record_bytes);

        auto start = std::chrono::steady_clock::now();
        auto item = nodes_[node]->publish_profile(r, {"analytics"}, kBenchPrice, t);
        auto wall = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        publishes_.push_back({node, item.txid, item.body.payload_digest, r.category, t, wall});
        sample();
    }

    void retrieve(std::size_t pub_idx, std::size_t seq, std::int64_t t)
    {
        advance_to(t);
        const auto& p = publishes_.at(pub_idx);
        auto n = nodes_.size();
        auto consumer = (p.node + 1 + seq % (n - 1)) % n;
        auto& node = *nodes_[consumer];
        // Wait for the listing to land on chain if it is still pending.
        while (!world_->chain().locate(p.txid)) {
            auto next = world_->next_event_ms();
            if (!next)
                fail(Errc::PendingTx, "listing never committed");
            advance_to(*next);
        }
        for (const auto& l : node.listings(p.category, false)) {
            if (l.digest() == p.digest) {
                node.request_data(l, "analytics", world_->clock_ms());
                retrievals_.push_back({consumer, p.digest});
                break;
            }
        }
        sample();
    }

    void sample()
    {
        std::uint64_t bytes = world_->chain().export_size();
        std::size_t open = 0;
        for (auto* n : nodes_) {
            bytes += n->store().total_bytes();
            for (const auto& e : n->retrieval_queue())
                if (!e.terminal())
                    ++open;
        }
        bytes += open * kQueueEntryBytes;
        peak_ = std::max(peak_, bytes);
    }

    std::int64_t block_time(const Digest32& txid) const
    {
        auto loc = world_->chain().locate(txid);
        if (!loc)
            fail(Errc::PendingTx, "transaction " + txid.hex() + " not committed");
        return world_->chain().blocks().at(loc->height).header.timestamp_ms;
    }

    MetricsReport report() const
    {
        std::vector<std::int64_t> pub_sim, ret_sim, set_sim;
        std::vector<double> pub_wall, ret_wall, set_wall;
        for (const auto& p : publishes_) {
            pub_sim.push_back(block_time(p.txid) - p.at_ms);
            pub_wall.push_back(p.wall_ms);
        }
        std::size_t failed = 0;
        for (const auto& r : retrievals_) {
            const auto* e = nodes_[r.consumer]->retrieval(r.digest);
            if (!e || e->state != RetrievalState::Verified) {
                ++failed;
                continue;
            }
            ret_sim.push_back(*e->completed_ms - e->enqueued_ms);
            ret_wall.push_back(e->wall_ms);
            const auto& anchors = world_->contract_anchors(e->contract_id);
            set_sim.push_back(block_time(anchors.back()) - *e->completed_ms);
            set_wall.push_back(e->settle_wall_ms);
        }

        MetricsReport rep;
        rep.chain_export_bytes = world_->chain().export_size();
        rep.failed_retrievals = failed;
        auto row = [&](std::string op, const std::vector<std::int64_t>& sim, const std::vector<double>& wall) {
            MetricsRow r;
            r.scenario = cfg_.name;
            r.op_kind = std::move(op);
            r.count = sim.size();
            r.sim_p50_ms = percentile(sim, 0.50);
            r.sim_p95_ms = percentile(sim, 0.95);
            r.sim_max_ms = sim.empty() ? 0 : *std::max_element(sim.begin(), sim.end());
            r.wall_p50_ms = percentile(wall, 0.50);
            r.wall_p95_ms = percentile(wall, 0.95);
            r.data_bytes_peak = peak_;
            rep.rows.push_back(std::move(r));
        };
        row("publish", pub_sim, pub_wall);
        row("retrieve", ret_sim, ret_wall);
        row("settle", set_sim, set_wall);
        return rep;
    }

    std::size_t published() const { return publishes_.size(); }

private:
    ScenarioConfig cfg_;
    std::mt19937_64 text_rng_;
    std::unique_ptr<Consortium> world_;
    std::vector<SharingNode*> nodes_;
    std::vector<Publish> publishes_;
    std::vector<Retrieval> retrievals_;
    std::uint64_t peak_ = 0;
};

} // namespace

template <typename T>
T percentile(std::vector<T> values, double q)
{
    if (values.empty())
        return T{};
    std::sort(values.begin(), values.end());
    auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
    return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

template std::int64_t percentile(std::vector<std::int64_t>, double);
template double percentile(std::vector<double>, double);

void ScenarioConfig::validate()
{
    if (name == "s1")
        name = "s1-publish";
    else if (name == "s2")
        name = "s2-retrieve";
    else if (name == "s3")
        name = "s3-mixed";
    if (name != "s1-publish" && name != "s2-retrieve" && name != "s3-mixed")
        fail(Errc::BadConfig, "unknown scenario '" + name + "'");
    if (nodes < 2)
        fail(Errc::BadConfig, "nodes must be at least 2");
    if (items < 1)
        fail(Errc::BadConfig, "items must be at least 1");
    if (link_latency_ms < 0)
        fail(Errc::BadConfig, "latency must be non-negative");
    if (!(drop_rate >= 0.0 && drop_rate <= 1.0))
        fail(Errc::BadConfig, "drop rate must be within [0, 1]");
    if (record_bytes < 1)
        fail(Errc::BadConfig, "record_bytes must be at least 1");
    if (block_interval_ms < 1 || op_gap_ms < 0)
        fail(Errc::BadConfig, "bad timing parameters");
}

const MetricsRow& MetricsReport::row(std::string_view op_kind) const
{
    for (const auto& r : rows)
        if (r.op_kind == op_kind)
            return r;
    fail(Errc::NotFound, "no row for " + std::string(op_kind));
}

MetricsReport run_scenario(ScenarioConfig cfg)
{
    cfg.validate();
    Driver d(cfg);
    std::int64_t t = cfg.op_gap_ms;
    if (cfg.name == "s1-publish") {
        for (std::size_t i = 0; i < cfg.items; ++i, t += cfg.op_gap_ms)
            d.publish(i, t);
    } else if (cfg.name == "s2-retrieve") {
        for (std::size_t i = 0; i < cfg.items; ++i, t += cfg.op_gap_ms)
            d.publish(i, t);
        for (std::size_t i = 0; i < cfg.items; ++i, t += cfg.op_gap_ms)
            d.retrieve(i, i, t);
    } else {
        for (std::size_t i = 0; i < cfg.items; ++i, t += cfg.op_gap_ms) {
            if (i % 2 == 0)
                d.publish(d.published(), t);
            else
                d.retrieve(d.published() - 1, i, t);
        }
    }
    d.drain();
    return d.report();
}

std::string to_csv(const MetricsReport& report)
{
    std::string out(kCsvHeader);
    out += '\n';
    char buf[256];
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof buf, "%s,%s,%zu,%lld,%lld,%lld,%.3f,%.3f,%llu\n", r.scenario.c_str(),
                      r.op_kind.c_str(), r.count, static_cast<long long>(r.sim_p50_ms),
                      static_cast<long long>(r.sim_p95_ms), static_cast<long long>(r.sim_max_ms), r.wall_p50_ms,
                      r.wall_p95_ms, static_cast<unsigned long long>(r.data_bytes_peak));
        out += buf;
    }
    return out;
}

void write_csv(const MetricsReport& report, const std::filesystem::path& path)
{
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        fail(Errc::IoError, "cannot open " + path.string() + " for writing");
    f << to_csv(report);
    f.flush();
    if (!f)
        fail(Errc::IoError, "failed writing " + path.string());
}

} // namespace chainmart
