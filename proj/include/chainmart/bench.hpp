#pragma once

// Scenario driver over the discrete-event consortium. Simulated latencies
// come from the SimNet clock and are deterministic for a fixed seed; wall
// latencies are measured with a steady clock and are not.
//
//   s1-publish   every item is a new listing, spread across the nodes
//   s2-retrieve  all items are listed, then each is bought by another node
//   s3-mixed     publishes and retrievals alternate
//
// data_bytes_peak is the largest value seen of
//   chain export bytes + off-chain store bytes + open retrievals * 85

#include <chainmart/sharing.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace chainmart {

inline constexpr std::size_t kQueueEntryBytes = 85;

struct ScenarioConfig {
    std::string name = "s2-retrieve";
    std::uint32_t nodes = 4;
    std::uint32_t items = 100;
    std::int64_t link_latency_ms = 0;
    double drop_rate = 0.0;
    std::uint64_t seed = 1;
    std::uint32_t record_bytes = 256;
    std::uint64_t block_interval_ms = 100;
    // Simulated time between consecutive operations.
    std::int64_t op_gap_ms = 10;

    /// Accepts "s1" as well as "s1-publish". Throws Error(BadConfig).
    void validate();
};

struct MetricsRow {
    std::string scenario;
    std::string op_kind;
    std::size_t count = 0;
    std::int64_t sim_p50_ms = 0;
    std::int64_t sim_p95_ms = 0;
    std::int64_t sim_max_ms = 0;
    double wall_p50_ms = 0;
    double wall_p95_ms = 0;
    std::uint64_t data_bytes_peak = 0;
};

struct MetricsReport {
    std::vector<MetricsRow> rows; // publish, retrieve, settle
    std::uint64_t chain_export_bytes = 0;
    std::size_t failed_retrievals = 0;

    const MetricsRow& row(std::string_view op_kind) const;
};

MetricsReport run_scenario(ScenarioConfig cfg);

inline constexpr std::string_view kCsvHeader =
    "scenario,op_kind,count,sim_p50_ms,sim_p95_ms,sim_max_ms,wall_p50_ms,wall_p95_ms,data_bytes_peak";

std::string to_csv(const MetricsReport& report);
/// Throws Error(IoError).
void write_csv(const MetricsReport& report, const std::filesystem::path& path);

/// Nearest-rank percentile, q in (0, 1]. Empty input yields 0.
template <typename T>
T percentile(std::vector<T> values, double q);

} // namespace chainmart
