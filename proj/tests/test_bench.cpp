#include "support.hpp"

#include <chainmart/bench.hpp>

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace testing;

namespace {

ScenarioConfig small(std::string name, std::uint32_t items = 20)
{
    ScenarioConfig c;
    c.name = std::move(name);
    c.items = items;
    return c;
}

std::string read_file(const std::filesystem::path& p)
{
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep))
        out.push_back(cur);
    return out;
}

} // namespace

TEST_CASE("percentile is nearest rank")
{
    std::vector<std::int64_t> v{15, 20, 35, 40, 50};
    CHECK(percentile(v, 0.05) == 15);
    CHECK(percentile(v, 0.30) == 20);
    CHECK(percentile(v, 0.39) == 20);
    CHECK(percentile(v, 0.50) == 35);
    CHECK(percentile(v, 1.0) == 50);
    CHECK(percentile(std::vector<std::int64_t>{}, 0.5) == 0);
    CHECK(percentile(std::vector<double>{3.0, 1.0, 2.0}, 0.5) == 2.0);
}

TEST_CASE("config validation")
{
    auto c = small("s1");
    c.validate();
    CHECK(c.name == "s1-publish");
    c = small("s3");
    c.validate();
    CHECK(c.name == "s3-mixed");

    CHECK(error_of([] { run_scenario(small("s2", 0)); }) == Errc::BadConfig);
    CHECK(error_of([] { run_scenario(small("s9")); }) == Errc::BadConfig);
    auto one = small("s2");
    one.nodes = 1;
    CHECK(error_of([&] { run_scenario(one); }) == Errc::BadConfig);
    auto lossy = small("s2");
    lossy.drop_rate = 1.5;
    CHECK(error_of([&] { run_scenario(lossy); }) == Errc::BadConfig);
}

TEST_CASE("s2 report shape and determinism")
{
    auto a = run_scenario(small("s2"));
    REQUIRE(a.rows.size() == 3);
    CHECK(a.rows[0].op_kind == "publish");
    CHECK(a.rows[1].op_kind == "retrieve");
    CHECK(a.rows[2].op_kind == "settle");
    CHECK(a.row("publish").count == 20);
    CHECK(a.row("retrieve").count == 20);
    CHECK(a.failed_retrievals == 0);
    for (const auto& r : a.rows) {
        CHECK(r.sim_p50_ms <= r.sim_p95_ms);
        CHECK(r.sim_p95_ms <= r.sim_max_ms);
        CHECK(r.data_bytes_peak >= a.chain_export_bytes);
    }

    auto csv = to_csv(a);
    auto lines = split(csv, '\n');
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == kCsvHeader);
    CHECK(split(lines[1], ',').size() == 9);

    auto b = run_scenario(small("s2"));
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(a.rows[i].count == b.rows[i].count);
        CHECK(a.rows[i].sim_p50_ms == b.rows[i].sim_p50_ms);
        CHECK(a.rows[i].sim_p95_ms == b.rows[i].sim_p95_ms);
        CHECK(a.rows[i].sim_max_ms == b.rows[i].sim_max_ms);
        CHECK(a.rows[i].data_bytes_peak == b.rows[i].data_bytes_peak);
    }
    CHECK(a.chain_export_bytes == b.chain_export_bytes);
}

TEST_CASE("write_csv")
{
    auto report = run_scenario(small("s1", 5));
    auto dir = std::filesystem::temp_directory_path() / "chainmart-bench-test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    write_csv(report, dir / "out.csv");
    CHECK(read_file(dir / "out.csv") == to_csv(report));
    CHECK(error_of([&] { write_csv(report, dir / "missing" / "deeper" / "out.csv"); }) == Errc::IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("publish-only export grows linearly")
{
    auto fifty = run_scenario(small("s1", 50));
    auto hundred = run_scenario(small("s1", 100));
    CHECK(fifty.row("publish").count == 50);
    CHECK(fifty.row("retrieve").count == 0);
    double ratio = static_cast<double>(hundred.chain_export_bytes) / static_cast<double>(fifty.chain_export_bytes);
    CHECK(ratio >= 1.8);
    CHECK(ratio <= 2.2);
}

TEST_CASE("retrieval latency follows link latency")
{
    std::int64_t previous = -1;
    for (std::int64_t latency : {0, 50, 200}) {
        auto c = small("s2");
        c.link_latency_ms = latency;
        auto r = run_scenario(c);
        auto p50 = r.row("retrieve").sim_p50_ms;
        CHECK(p50 >= 2 * latency);
        CHECK(p50 >= previous);
        previous = p50;
    }
}

TEST_CASE("mixed scenario with loss completes")
{
    auto c = small("s3", 30);
    c.link_latency_ms = 20;
    c.drop_rate = 0.1;
    auto r = run_scenario(c);
    CHECK(r.row("publish").count == 15);
    CHECK(r.row("retrieve").count + r.failed_retrievals == 15);
}

TEST_CASE("cli bench command")
{
    auto dir = std::filesystem::temp_directory_path() / "chainmart-bench-cli";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    auto out = dir / "m.csv";
    std::string cmd = std::string(CHAINMART_CLI) + " bench --scenario s2 --items 10 --latency-ms 50 --seed 4 --out " +
                      out.string() + " > " + (dir / "stdout.txt").string();
    REQUIRE(std::system(cmd.c_str()) == 0);
    auto csv = read_file(out);
    CHECK(split(csv, '\n')[0] == kCsvHeader);
    CHECK(split(csv, '\n').size() == 4);

    std::string bad = std::string(CHAINMART_CLI) + " bench --scenario s2 --items 0 2> " + (dir / "err.txt").string();
    CHECK(std::system(bad.c_str()) != 0);
    CHECK(read_file(dir / "err.txt").find("BadConfig") != std::string::npos);
    std::filesystem::remove_all(dir);
}
