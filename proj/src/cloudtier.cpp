#include "soafog/cloudtier.hpp"

#include "soafog/encoding.hpp"
#include "soafog/error.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <tuple>

namespace soafog::cloud {

using nlohmann::json;

namespace {

std::string required_string(const json& j, const char* name) {
    if (!j.contains(name) || !j[name].is_string() || j[name].get_ref<const std::string&>().empty()) {
        throw Error(ErrorCode::MalformedItem, std::string("ingest body lacks ") + name, name);
    }
    return j[name].get<std::string>();
}

bool key_matches(const json& value, const std::string& key) {
    if (value.is_string()) return value.get<std::string>() == key;
    if (value.is_number()) return format_number(value.get<double>()) == key;
    return false;
}

std::optional<int> row_year(const json& row, std::optional<std::size_t> year_index) {
    if (!year_index) return std::nullopt;
    const auto& key = row.at("key");
    if (*year_index >= key.size() || !key[*year_index].is_number()) return std::nullopt;
    return static_cast<int>(key[*year_index].get<double>());
}

std::optional<int> parse_year(const std::optional<std::string>& text, const char* name) {
    if (!text) return std::nullopt;
    int v = 0;
    auto res = std::from_chars(text->data(), text->data() + text->size(), v);
    if (res.ec != std::errc{} || res.ptr != text->data() + text->size()) {
        throw Error(ErrorCode::ParamError, std::string(name) + " must be a year", name);
    }
    return v;
}

HttpResponse error_json(int status, const Error& e) {
    return HttpResponse::json(status, {{"error", to_string(e.code())}, {"message", e.what()}});
}

} // namespace

CloudStore::CloudStore(std::string journal_path, security::Clock clock)
    : journal_path_(std::move(journal_path)), clock_(std::move(clock)) {
    if (!journal_path_.empty()) replay();
}

void CloudStore::register_node(const std::string& node_id, NodeKey key) {
    if (key.key.size() != 32) {
        throw Error(ErrorCode::BadKeyLength, "node key must be 32 bytes", node_id);
    }
    std::unique_lock lock(mutex_);
    nodes_[node_id] = std::move(key);
}

void CloudStore::journal(const json& line) {
    if (journal_path_.empty()) return;
    std::ofstream out(journal_path_, std::ios::app);
    out << line.dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "cannot append to " + journal_path_, journal_path_);
}

void CloudStore::replay() {
    std::ifstream in(journal_path_, std::ios::binary);
    std::string line;
    bool torn_tail = false;
    while (std::getline(in, line)) {
        torn_tail = in.eof();
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("t")) continue;
        if (j["t"] == "summary") {
            StoredSummary s{j.at("item_id"), j.at("node_id"), j.at("kind"), j.at("received_at"), {}};
            auto payload = base64_decode(j.at("payload_b64").get<std::string>());
            if (!payload) continue;
            s.payload = std::move(*payload);
            summaries_.emplace(s.item_id, std::move(s));
        } else if (j["t"] == "raw") {
            auto bytes = base64_decode(j.at("bytes_b64").get<std::string>());
            if (bytes) raw_blobs_[j.at("blob_id").get<std::string>()] = std::move(*bytes);
        }
    }
    // Terminate a torn last line so the next append starts a fresh record.
    if (torn_tail) {
        std::ofstream out(journal_path_, std::ios::app | std::ios::binary);
        out << '\n';
    }
}

IngestAck CloudStore::ingest(const std::string& body) {
    {
        std::unique_lock lock(mutex_);
        bytes_received_ += body.size();
    }
    auto j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw Error(ErrorCode::MalformedItem, "ingest body is not a JSON object");
    }
    const auto item_id = required_string(j, "item_id");
    const auto node_id = required_string(j, "node_id");
    const auto kind = required_string(j, "kind");
    const auto key_id = required_string(j, "key_id");
    const auto mac = required_string(j, "mac");
    auto payload = base64_decode(required_string(j, "payload_b64"));
    if (!payload) {
        throw Error(ErrorCode::MalformedItem, "payload_b64 is not valid base64", "payload_b64");
    }

    std::unique_lock lock(mutex_);
    auto node = nodes_.find(node_id);
    if (node == nodes_.end()) {
        throw Error(ErrorCode::UnknownNode, "unregistered node: " + node_id, node_id);
    }
    security::Envelope env{*payload, key_id, mac};
    if (key_id != node->second.key_id || !security::verify_envelope(env, node->second.key)) {
        audit_.push_back({clock_(), node_id, "ingest", std::nullopt, security::Decision::Deny, "bad_mac:" + item_id});
        throw Error(ErrorCode::BadMac, "envelope MAC does not verify", item_id);
    }
    if (summaries_.count(item_id)) return {item_id, true};
    StoredSummary stored{item_id, node_id, kind, clock_(), std::move(*payload)};
    journal({{"t", "summary"},
             {"item_id", stored.item_id},
             {"node_id", stored.node_id},
             {"kind", stored.kind},
             {"received_at", stored.received_at},
             {"payload_b64", base64_encode(stored.payload)}});
    summaries_.emplace(item_id, std::move(stored));
    return {item_id, false};
}

void CloudStore::put_raw(const std::string& blob_id, std::string bytes) {
    std::unique_lock lock(mutex_);
    bytes_received_ += bytes.size();
    journal({{"t", "raw"}, {"blob_id", blob_id}, {"bytes_b64", base64_encode(bytes)}});
    raw_blobs_[blob_id] = std::move(bytes);
}

std::vector<HistoryEntry> CloudStore::query_history(const std::string& key, const HistoryRange& range) const {
    std::shared_lock lock(mutex_);
    std::vector<HistoryEntry> out;
    for (const auto& [id, s] : summaries_) {
        if (s.kind != "summary") continue;
        auto doc = json::parse(s.payload, nullptr, false);
        if (doc.is_discarded() || !doc.contains("rows") || !doc.contains("layer")) continue;

        const auto layer = doc["layer"].get<std::string>();
        const bool layer_match = layer.compare(0, key.size(), key) == 0;
        std::optional<std::size_t> year_index;
        const auto& attrs = doc.at("group_attrs");
        for (std::size_t i = 0; i < attrs.size(); ++i) {
            if (attrs[i] == "year") year_index = i;
        }

        json rows = json::array();
        for (const auto& row : doc["rows"]) {
            if (!layer_match) {
                const auto& k = row.at("key");
                if (std::none_of(k.begin(), k.end(), [&](const json& v) { return key_matches(v, key); })) continue;
            }
            if (range.from || range.to) {
                auto year = row_year(row, year_index);
                if (!year) continue;
                if (range.from && *year < *range.from) continue;
                if (range.to && *year > *range.to) continue;
            }
            rows.push_back(row);
        }
        if (rows.empty()) continue;
        doc["rows"] = std::move(rows);
        out.push_back({s.item_id, s.node_id, s.received_at, std::move(doc)});
    }
    std::sort(out.begin(), out.end(), [](const HistoryEntry& a, const HistoryEntry& b) {
        return std::tie(a.received_at, a.item_id) < std::tie(b.received_at, b.item_id);
    });
    return out;
}

HttpResponse CloudStore::handle_request(const HttpRequest& req) {
    if (req.method == "GET" && req.path == "/health") {
        return HttpResponse::json(200, {{"status", "ok"}, {"summaries", summary_count()}});
    }
    if (req.method == "POST" && req.path == "/ingest") {
        try {
            auto ack = ingest(req.body);
            return HttpResponse::json(200, {{"item_id", ack.item_id}, {"duplicate", ack.duplicate}});
        } catch (const Error& e) {
            switch (e.code()) {
            case ErrorCode::UnknownNode: return error_json(403, e);
            case ErrorCode::BadMac: return error_json(401, e);
            case ErrorCode::MalformedItem: return error_json(400, e);
            default: return error_json(500, e);
            }
        }
    }
    if (req.method == "POST" && req.path == "/raw") {
        auto id = req.header("x-blob-id");
        if (!id || id->empty()) {
            return HttpResponse::json(400, {{"error", "malformed_item"}, {"message", "X-Blob-Id header is required"}});
        }
        put_raw(*id, req.body);
        return HttpResponse::json(200, {{"blob_id", *id}, {"bytes", req.body.size()}});
    }
    if (req.method == "GET" && req.path == "/history") {
        HistoryRange range;
        try {
            range.from = parse_year(req.param("from"), "from");
            range.to = parse_year(req.param("to"), "to");
        } catch (const Error& e) {
            return error_json(400, e);
        }
        json entries = json::array();
        for (const auto& e : query_history(req.param("key").value_or(""), range)) {
            entries.push_back(
                {{"item_id", e.item_id}, {"node_id", e.node_id}, {"received_at", e.received_at}, {"summary", e.summary}});
        }
        return HttpResponse::json(200, {{"summaries", entries}});
    }
    return HttpResponse::json(404, {{"error", "not_found"}, {"message", req.method + " " + req.path}});
}

std::size_t CloudStore::summary_count() const {
    std::shared_lock lock(mutex_);
    return summaries_.size();
}

std::set<std::string> CloudStore::item_ids() const {
    std::shared_lock lock(mutex_);
    std::set<std::string> out;
    for (const auto& [id, s] : summaries_) out.insert(id);
    return out;
}

std::size_t CloudStore::raw_count() const {
    std::shared_lock lock(mutex_);
    return raw_blobs_.size();
}

std::size_t CloudStore::raw_bytes() const {
    std::shared_lock lock(mutex_);
    std::size_t n = 0;
    for (const auto& [id, b] : raw_blobs_) n += b.size();
    return n;
}

std::size_t CloudStore::bytes_received() const {
    std::shared_lock lock(mutex_);
    return bytes_received_;
}

std::vector<security::AuditRecord> CloudStore::audit() const {
    std::shared_lock lock(mutex_);
    return audit_;
}

} // namespace soafog::cloud
