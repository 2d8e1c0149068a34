// chainmart: bench, demo and serve entry points.

#include <chainmart/bench.hpp>
#include <chainmart/demo.hpp>
#include <chainmart/error.hpp>
#include <chainmart/http.hpp>

#include <CLI11.hpp>
#include <httplib.h>

#include <fstream>
#include <iostream>

using namespace chainmart;

namespace {

void write_file(const std::string& path, const std::string& text)
{
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f || !(f << text))
        fail(Errc::IoError, "cannot write " + path);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"chainmart - consortium shop and data-sharing simulator"};
    app.require_subcommand(1);

    ScenarioConfig bench;
    std::string bench_out = "metrics.csv";
    auto* b = app.add_subcommand("bench", "run a simulated scenario and write metrics CSV");
    b->add_option("--scenario", bench.name, "s1|s2|s3 (or s1-publish, s2-retrieve, s3-mixed)")->required();
    b->add_option("--nodes", bench.nodes, "sharing nodes (>= 2)");
    b->add_option("--items", bench.items, "items to publish / retrieve");
    b->add_option("--latency-ms", bench.link_latency_ms, "one-way link latency");
    b->add_option("--drop", bench.drop_rate, "message drop probability");
    b->add_option("--seed", bench.seed, "simulation seed");
    b->add_option("--record-bytes", bench.record_bytes, "payload size per record");
    b->add_option("--out", bench_out, "CSV output path");

    auto* demo = app.add_subcommand("demo", "demonstrations");
    demo->require_subcommand(1);
    std::uint64_t e2e_seed = 1;
    std::string export_path, audit_path;
    auto* e2e = demo->add_subcommand("e2e", "checkout, share, settle and print the audit trail");
    e2e->add_option("--seed", e2e_seed, "simulation seed");
    e2e->add_option("--export", export_path, "write the chain export (JSONL) here");
    e2e->add_option("--audit-log", audit_path, "write the audit log (JSONL) here");

    std::string config_path;
    int port = 8080;
    std::string host = "127.0.0.1";
    bool demo_mode = false;
    std::uint64_t serve_seed = 1;
    auto* serve = app.add_subcommand("serve", "start the shop HTTP service");
    serve->add_option("--config", config_path, "JSON config file");
    serve->add_option("--port", port, "listen port");
    serve->add_option("--host", host, "listen address");
    serve->add_option("--seed", serve_seed, "simulation seed");
    serve->add_flag("--demo", demo_mode, "enable POST /demo/access");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*b) {
            auto report = run_scenario(bench);
            write_csv(report, bench_out);
            std::cout << to_csv(report);
            if (report.failed_retrievals)
                std::cerr << report.failed_retrievals << " retrievals did not complete\n";
        } else if (*e2e) {
            auto r = run_e2e_demo(e2e_seed);
            std::cout << "order " << r.receipt.order_id.hex() << " total=" << r.receipt.total
                      << " receipt=" << (r.receipt_verified ? "verified" : "INVALID") << "\n";
            std::cout << "access analytics: " << r.access.outcome << "\n";
            std::cout << "access advertising: " << r.denied_access.outcome << " " << r.denied_access.reason << "\n";
            std::cout << "owner balance " << r.owner_balance_before << " -> " << r.owner_balance_after << "\n";
            auto v = r.demo->world().chain().validate();
            std::cout << "chain height " << r.demo->world().chain().height() << " "
                      << (v ? "INVALID: " + v->reason : std::string("valid")) << "\n";
            std::cout << "audit trail:\n";
            for (const auto& line : r.trail)
                std::cout << "  " << line << "\n";
            if (!export_path.empty())
                write_file(export_path, r.chain_export);
            if (!audit_path.empty())
                write_file(audit_path, r.audit_log);
        } else if (*serve) {
            auto cfg = config_path.empty() ? AppConfig{} : AppConfig::load(config_path);
            DemoWorld world(cfg, serve_seed);
            ShopService service(world, demo_mode);
            httplib::Server srv;
            service.install(srv);
            std::cerr << "listening on " << host << ":" << port << (demo_mode ? " (demo mode)" : "") << "\n";
            if (!srv.listen(host, port)) {
                std::cerr << "cannot listen on " << host << ":" << port << "\n";
                return 1;
            }
        }
    } catch (const Error& e) {
        std::cerr << errc_name(e.code()) << ": " << e.what() << "\n";
        return 2;
    }
    return 0;
}
