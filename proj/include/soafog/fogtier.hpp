#pragma once

#include "soafog/encoding.hpp"
#include "soafog/geodata.hpp"
#include "soafog/http.hpp"
#include "soafog/overlay.hpp"
#include "soafog/security.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace soafog::fog {

struct FogConfig {
    std::string listen = "127.0.0.1:8080";
    std::string node_id = "fog-01";
    std::size_t storage_budget_bytes = 64 * 1024 * 1024;
    std::string sync_key_id = "k1";
    std::string sync_key; // raw 32 bytes
    std::string cloud_address = "http://127.0.0.1:9090";
    std::vector<std::int64_t> backoff_ms = {1000, 2000, 5000, 10000};
    std::set<std::string> pinned_layers;
    std::vector<std::string> summary_group_attrs = {"district", "year"};
    std::vector<std::string> summary_measures = {"positives", "deaths"};
    std::int64_t flush_interval_ms = 2000;
    std::string catalog_dir;
    std::string policy_file;
    std::string queue_dir;
    std::string audit_log;

    /// Throws ConfigError on a zero budget, empty or decreasing backoff, or a
    /// sync key that is not 32 bytes.
    void validate() const;
    static FogConfig from_json(const nlohmann::json& j);
};

// ---------------------------------------------------------------------------
// Aggregation

struct SummaryRow {
    std::vector<geo::PropertyValue> key;
    std::vector<double> sums;
    std::size_t count = 0;

    friend bool operator==(const SummaryRow&, const SummaryRow&) = default;
};

struct SummaryTable {
    std::string layer_id;
    std::vector<std::string> group_attrs;
    std::vector<std::string> measure_attrs;
    std::vector<SummaryRow> rows; // sorted by key

    nlohmann::json to_json() const;
    std::string serialize() const { return to_json().dump(); }
    static SummaryTable from_json(const nlohmann::json& j);
};

/// One row per distinct group tuple with measure sums and feature counts.
SummaryTable aggregate_summary(const geo::VectorLayer& layer, const std::vector<std::string>& group_attrs,
                               const std::vector<std::string>& measure_attrs);

// ---------------------------------------------------------------------------
// Store-and-forward queue

enum class SyncKind { Summary, AuditBatch };
std::string_view to_string(SyncKind kind);

struct SyncItem {
    std::string item_id;
    std::string node_id;
    std::int64_t created_at = 0;
    SyncKind kind = SyncKind::Summary;
    security::Envelope payload;
    int attempts = 0;
};

/// Body of POST <cloud>/ingest for one item.
std::string sync_wire_body(const SyncItem& item);

/// Durable FIFO of sealed items bound for the cloud.
///
/// Two append-only JSON-lines files live in `dir`: items.jsonl receives each
/// enqueued item and acks.jsonl each acknowledged id. Every append is flushed
/// and fsync'd before the call returns; the ack is journaled before the item
/// leaves memory. Opening the queue replays both files and compacts them.
class SyncQueue {
public:
    SyncQueue(std::filesystem::path dir, std::size_t budget_bytes, IdGenerator ids = random_uuid_generator(),
              security::Clock clock = security::system_clock());

    SyncQueue(const SyncQueue&) = delete;
    SyncQueue& operator=(const SyncQueue&) = delete;

    SyncItem enqueue(SyncKind kind, std::string payload, const std::string& node_id, const std::string& key_id,
                     std::string_view key);

    std::vector<SyncItem> pending() const;
    std::optional<SyncItem> front() const;
    void note_attempt(const std::string& item_id);
    void mark_acked(const std::string& item_id);
    bool is_acked(const std::string& item_id) const;

    std::size_t size() const;
    std::size_t bytes() const;
    std::size_t budget() const { return budget_; }

    int failure_streak() const;
    void record_flush_outcome(bool clean);

private:
    void append_line(const std::filesystem::path& file, const std::string& line);
    void load_and_compact();

    std::filesystem::path dir_;
    std::size_t budget_;
    IdGenerator ids_;
    security::Clock clock_;

    mutable std::mutex mutex_;
    std::vector<std::pair<SyncItem, std::size_t>> items_; // item, journal line bytes
    std::set<std::string> acked_;
    std::size_t bytes_ = 0;
    int failure_streak_ = 0;
};

/// The fog-to-cloud path as the flusher sees it.
class Link {
public:
    virtual ~Link() = default;
    virtual bool up() = 0;
    /// False when the transfer is cut off before completing.
    virtual bool carry(std::size_t bytes) = 0;
};

class AlwaysUpLink final : public Link {
public:
    bool up() override { return true; }
    bool carry(std::size_t) override { return true; }
};

class CloudEndpoint {
public:
    virtual ~CloudEndpoint() = default;
    /// nullopt on transport failure.
    virtual std::optional<HttpResponse> post_ingest(const std::string& body) = 0;
};

struct FlushReport {
    std::size_t sent = 0;
    std::size_t acked = 0;
    std::size_t failed = 0;
    std::size_t bytes = 0;
    std::size_t remaining = 0;
    std::optional<std::int64_t> retry_after_ms;
};

/// Sends pending items in FIFO order until the queue drains or a send fails.
/// A failure stops the pass and sets retry_after_ms from the backoff schedule.
FlushReport flush_sync(SyncQueue& queue, Link& link, CloudEndpoint& cloud, const std::vector<std::int64_t>& backoff);

// ---------------------------------------------------------------------------
// Fog node

struct EvictionReport {
    std::vector<std::string> evicted;
    std::size_t bytes_before = 0;
    std::size_t bytes_after = 0;
};

class FogNode {
public:
    FogNode(FogConfig config, std::shared_ptr<security::PolicyStore> policy, std::shared_ptr<SyncQueue> queue);

    FogNode(const FogNode&) = delete;
    FogNode& operator=(const FogNode&) = delete;

    /// Registers a layer in the local cache and labels it in the policy store.
    void put_layer(const geo::VectorLayer& layer);
    void put_layer(const geo::RasterGrid& grid);
    void load_catalog(const geo::Catalog& catalog);

    HttpResponse handle_request(const HttpRequest& req);

    // Service operations. Authorization failures throw Error(Unauthorized)
    // with the reason code in detail().
    std::vector<geo::Feature> get_features(const std::string& token, const std::string& layer_id,
                                           const std::optional<geo::BBox>& bbox);
    nlohmann::json execute_process(const std::string& token, const std::string& process,
                                   const nlohmann::json& params);

    SyncItem enqueue_summary(const SummaryTable& summary);
    FlushReport flush(Link& link, CloudEndpoint& cloud);

    EvictionReport cache_evict();

    std::size_t layer_bytes() const;
    std::size_t local_bytes() const;
    bool was_evicted(const std::string& layer_id) const;
    std::uint64_t engine_invocations() const { return engine_invocations_.load(); }

    const FogConfig& config() const { return config_; }
    const geo::Catalog& catalog() const { return catalog_; }
    security::PolicyStore& policy() { return *policy_; }
    SyncQueue& queue() { return *queue_; }

private:
    void register_layer(const std::string& id, SensitivityLabel label, std::size_t bytes);
    void touch(const std::string& layer_id);
    void require_allowed(const std::string& token, const std::optional<std::string>& layer, security::Permission p);
    std::shared_ptr<const geo::VectorLayer> vector_param(const nlohmann::json& params, const char* name);
    HttpResponse route(const HttpRequest& req, const std::string& token);
    HttpResponse upload(const HttpRequest& req, const std::string& token);

    FogConfig config_;
    std::shared_ptr<security::PolicyStore> policy_;
    std::shared_ptr<SyncQueue> queue_;
    geo::Catalog catalog_;

    mutable std::mutex cache_mutex_;
    std::map<std::string, std::size_t> layer_sizes_;
    std::map<std::string, std::uint64_t> last_access_;
    std::set<std::string> evicted_;
    std::uint64_t access_tick_ = 0;

    std::atomic<std::uint64_t> engine_invocations_{0};
};

/// Parses "Bearer <token>" from the Authorization header; empty if absent.
std::string bearer_token(const HttpRequest& req);

} // namespace soafog::fog
