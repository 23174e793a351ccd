#pragma once

#include "soafog/http.hpp"
#include "soafog/security.hpp"

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

namespace soafog::cloud {

struct NodeKey {
    std::string key_id;
    std::string key; // raw 32 bytes
};

struct StoredSummary {
    std::string item_id;
    std::string node_id;
    std::string kind;
    std::int64_t received_at = 0;
    std::string payload;
};

struct IngestAck {
    std::string item_id;
    bool duplicate = false;
};

struct HistoryRange {
    std::optional<int> from;
    std::optional<int> to;
};

/// One matching summary with its rows narrowed to the requested years.
struct HistoryEntry {
    std::string item_id;
    std::string node_id;
    std::int64_t received_at = 0;
    nlohmann::json summary;
};

/// Long-term store of fog-produced summaries.
///
/// With a journal path, every accepted summary and raw blob is appended as a
/// JSON line and replayed on construction.
class CloudStore {
public:
    explicit CloudStore(std::string journal_path = {}, security::Clock clock = security::system_clock());

    CloudStore(const CloudStore&) = delete;
    CloudStore& operator=(const CloudStore&) = delete;

    void register_node(const std::string& node_id, NodeKey key);

    /// Throws MalformedItem, UnknownNode or BadMac. Repeats of a stored
    /// item_id ack with duplicate=true and change nothing.
    IngestAck ingest(const std::string& body);

    void put_raw(const std::string& blob_id, std::string bytes);

    /// `key` matches a summary whose layer id starts with it or any row whose
    /// group key contains it. Year bounds are inclusive.
    std::vector<HistoryEntry> query_history(const std::string& key, const HistoryRange& range = {}) const;

    HttpResponse handle_request(const HttpRequest& req);

    std::size_t summary_count() const;
    std::set<std::string> item_ids() const;
    std::size_t raw_count() const;
    std::size_t raw_bytes() const;
    std::size_t bytes_received() const;
    std::vector<security::AuditRecord> audit() const;

private:
    void journal(const nlohmann::json& line);
    void replay();

    std::string journal_path_;
    security::Clock clock_;

    mutable std::shared_mutex mutex_;
    std::map<std::string, NodeKey> nodes_;
    std::map<std::string, StoredSummary> summaries_;
    std::map<std::string, std::string> raw_blobs_;
    std::size_t bytes_received_ = 0;
    std::vector<security::AuditRecord> audit_;
};

} // namespace soafog::cloud
