#pragma once

#include "soafog/fixture.hpp"

#include "json.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace soafog::sim {

struct Outage {
    double start_ms = 0.0;
    double end_ms = 0.0; // exclusive
};

struct LinkSpec {
    double one_way_latency_ms = 0.0;
    double bandwidth_bytes_per_s = 1.0e6;
    std::vector<Outage> outages; // sorted, disjoint
    std::uint64_t seed = 0;

    void validate(const std::string& name) const;
    bool down_at(double t_ms) const;
    double transfer_ms(std::size_t bytes) const;
    /// True when [start, start + duration) touches no outage. A zero-length
    /// transfer is checked at its start instant.
    bool clear(double start_ms, double duration_ms) const;
};

enum class Endpoint { Capabilities, Features, Map, Execute, Upload };
std::string_view to_string(Endpoint e);
Endpoint parse_endpoint(std::string_view text);
inline bool is_read(Endpoint e) { return e != Endpoint::Upload; }

enum class ClientKind { Mobile, Thin, Thick };
std::string_view to_string(ClientKind k);
ClientKind parse_client_kind(std::string_view text);

struct ClientProfile {
    ClientKind kind = ClientKind::Mobile;
    int count = 0;
    std::vector<std::pair<Endpoint, double>> mix; // weights sum to 1
    double think_ms = 1000.0;
};

enum class Topology { FogMediated, CloudDirect };
std::string_view to_string(Topology t);
Topology parse_topology(std::string_view text);

struct DatasetSpec {
    std::string fixture = "maharashtra";
    fixture::FixtureOptions options;
    int cases_per_district = 20; // per upload batch
};

struct ScenarioConfig {
    Topology topology = Topology::FogMediated;
    std::vector<ClientProfile> clients;
    double duration_ms = 60000.0;
    LinkSpec client_fog;
    LinkSpec fog_cloud;
    LinkSpec client_cloud;
    DatasetSpec dataset;
    std::uint64_t seed = 1;
    double flush_interval_ms = 2000.0;
    std::size_t storage_budget_bytes = 64 * 1024 * 1024;

    /// Throws ConfigError naming the offending field.
    void validate() const;
    static ScenarioConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// SHA-256 over the parts of a scenario that define the workload: clients,
/// duration, dataset and seed. Topology and links are excluded.
std::string workload_hash(const ScenarioConfig& cfg);

struct KindMetrics {
    std::size_t issued = 0;
    std::size_t succeeded = 0;
    std::size_t failed = 0;
    double mean_latency_ms = 0.0;
};

struct MetricsReport {
    std::string topology;
    std::string workload_hash;
    std::size_t issued = 0;
    std::size_t succeeded = 0;
    std::size_t failed = 0;
    std::size_t deferred_writes = 0;
    double mean_latency_ms = 0.0;
    double p50_latency_ms = 0.0;
    double p95_latency_ms = 0.0;
    std::size_t bytes_to_cloud = 0;
    std::size_t reads_issued = 0;
    std::size_t reads_succeeded = 0;
    double read_availability = 1.0;
    std::size_t outage_reads_issued = 0;
    double availability_during_outage = 1.0;
    std::size_t sync_enqueued = 0;
    std::size_t sync_acked = 0;
    std::size_t sync_pending = 0;
    std::size_t cloud_bytes_received = 0;
    std::size_t storage_budget_bytes = 0;
    double client_link_latency_ms = 0.0;
    double cloud_link_latency_ms = 0.0;
    std::map<std::string, KindMetrics> per_kind;
    std::map<std::string, KindMetrics> per_endpoint;

    nlohmann::json to_json() const;
    static MetricsReport from_json(const nlohmann::json& j);
    std::string to_csv() const;
};

MetricsReport run_scenario(const ScenarioConfig& cfg);

struct Comparison {
    std::string text;
    std::string csv;
};

/// Side-by-side metrics with a/b ratios (0/0 reads as 1). Throws
/// WorkloadMismatch when the reports come from different workloads.
Comparison compare(const MetricsReport& a, const MetricsReport& b);

} // namespace soafog::sim
