#include "soafog/fogtier.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>

namespace soafog::fog {

using nlohmann::json;

namespace {

void write_all_fsync(int fd, const std::string& data, const std::filesystem::path& path) {
    std::size_t off = 0;
    while (off < data.size()) {
        auto n = ::write(fd, data.data() + off, data.size() - off);
        if (n < 0) {
            ::close(fd);
            throw Error(ErrorCode::Io, "write failed: " + path.string(), path.string());
        }
        off += static_cast<std::size_t>(n);
    }
    if (::fsync(fd) != 0) {
        ::close(fd);
        throw Error(ErrorCode::Io, "fsync failed: " + path.string(), path.string());
    }
    ::close(fd);
}

void fsync_dir(const std::filesystem::path& dir) {
    int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
    if (fd >= 0) {
        ::fsync(fd);
        ::close(fd);
    }
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::vector<std::string> lines;
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

json item_json(const SyncItem& item) {
    return {{"item_id", item.item_id},
            {"node_id", item.node_id},
            {"created_at", item.created_at},
            {"kind", to_string(item.kind)},
            {"payload_b64", base64_encode(item.payload.payload)},
            {"key_id", item.payload.key_id},
            {"mac", item.payload.mac}};
}

std::optional<SyncItem> item_from_json(const json& j) {
    try {
        SyncItem item;
        item.item_id = j.at("item_id").get<std::string>();
        item.node_id = j.at("node_id").get<std::string>();
        item.created_at = j.at("created_at").get<std::int64_t>();
        item.kind = j.at("kind").get<std::string>() == "audit_batch" ? SyncKind::AuditBatch : SyncKind::Summary;
        auto payload = base64_decode(j.at("payload_b64").get<std::string>());
        if (!payload) return std::nullopt;
        item.payload = {std::move(*payload), j.at("key_id").get<std::string>(), j.at("mac").get<std::string>()};
        return item;
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

} // namespace

std::string_view to_string(SyncKind kind) {
    return kind == SyncKind::AuditBatch ? "audit_batch" : "summary";
}

std::string sync_wire_body(const SyncItem& item) {
    return json{{"item_id", item.item_id},
                {"node_id", item.node_id},
                {"kind", to_string(item.kind)},
                {"payload_b64", base64_encode(item.payload.payload)},
                {"key_id", item.payload.key_id},
                {"mac", item.payload.mac}}
        .dump();
}

SyncQueue::SyncQueue(std::filesystem::path dir, std::size_t budget_bytes, IdGenerator ids, security::Clock clock)
    : dir_(std::move(dir)), budget_(budget_bytes), ids_(std::move(ids)), clock_(std::move(clock)) {
    std::filesystem::create_directories(dir_);
    load_and_compact();
}

void SyncQueue::append_line(const std::filesystem::path& file, const std::string& line) {
    int fd = ::open(file.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) {
        throw Error(ErrorCode::Io, "cannot open " + file.string(), file.string());
    }
    write_all_fsync(fd, line + "\n", file);
}

void SyncQueue::load_and_compact() {
    const auto items_path = dir_ / "items.jsonl";
    const auto acks_path = dir_ / "acks.jsonl";
    std::set<std::string> acked;
    for (const auto& line : read_lines(acks_path)) {
        // A torn final line from a crash mid-append is skipped.
        auto j = json::parse(line, nullptr, false);
        if (!j.is_discarded() && j.contains("ack")) acked.insert(j["ack"].get<std::string>());
    }
    std::set<std::string> seen;
    std::string compacted;
    for (const auto& line : read_lines(items_path)) {
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded()) continue;
        auto item = item_from_json(j);
        if (!item || acked.count(item->item_id) || !seen.insert(item->item_id).second) continue;
        compacted += line + "\n";
        bytes_ += line.size() + 1;
        items_.emplace_back(std::move(*item), line.size() + 1);
    }
    auto tmp = dir_ / "items.jsonl.tmp";
    int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0) {
        throw Error(ErrorCode::Io, "cannot open " + tmp.string(), tmp.string());
    }
    write_all_fsync(fd, compacted, tmp);
    std::filesystem::rename(tmp, items_path);
    fsync_dir(dir_);
    // Every acked id has now left items.jsonl, so the journal can restart.
    fd = ::open(acks_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd >= 0) write_all_fsync(fd, "", acks_path);
}

SyncItem SyncQueue::enqueue(SyncKind kind, std::string payload, const std::string& node_id,
                            const std::string& key_id, std::string_view key) {
    if (payload.empty()) {
        throw Error(ErrorCode::Validation, "sync payload is empty", "payload");
    }
    SyncItem item;
    item.kind = kind;
    item.node_id = node_id;
    item.payload = security::seal_envelope(std::move(payload), key_id, key);
    std::lock_guard lock(mutex_);
    item.item_id = ids_();
    item.created_at = clock_();
    const auto line = item_json(item).dump();
    if (bytes_ + line.size() + 1 > budget_) {
        throw Error(ErrorCode::StorageFull, "sync queue would exceed the storage budget", std::to_string(budget_));
    }
    append_line(dir_ / "items.jsonl", line);
    bytes_ += line.size() + 1;
    items_.emplace_back(item, line.size() + 1);
    return item;
}

std::vector<SyncItem> SyncQueue::pending() const {
    std::lock_guard lock(mutex_);
    std::vector<SyncItem> out;
    out.reserve(items_.size());
    for (const auto& [item, size] : items_) out.push_back(item);
    return out;
}

std::optional<SyncItem> SyncQueue::front() const {
    std::lock_guard lock(mutex_);
    if (items_.empty()) return std::nullopt;
    return items_.front().first;
}

void SyncQueue::note_attempt(const std::string& item_id) {
    std::lock_guard lock(mutex_);
    for (auto& [item, size] : items_) {
        if (item.item_id == item_id) ++item.attempts;
    }
}

void SyncQueue::mark_acked(const std::string& item_id) {
    std::lock_guard lock(mutex_);
    auto it = std::find_if(items_.begin(), items_.end(), [&](const auto& e) { return e.first.item_id == item_id; });
    if (it == items_.end()) return;
    append_line(dir_ / "acks.jsonl", json{{"ack", item_id}}.dump());
    acked_.insert(item_id);
    bytes_ -= it->second;
    items_.erase(it);
}

bool SyncQueue::is_acked(const std::string& item_id) const {
    std::lock_guard lock(mutex_);
    return acked_.count(item_id) > 0;
}

std::size_t SyncQueue::size() const {
    std::lock_guard lock(mutex_);
    return items_.size();
}

std::size_t SyncQueue::bytes() const {
    std::lock_guard lock(mutex_);
    return bytes_;
}

int SyncQueue::failure_streak() const {
    std::lock_guard lock(mutex_);
    return failure_streak_;
}

void SyncQueue::record_flush_outcome(bool clean) {
    std::lock_guard lock(mutex_);
    failure_streak_ = clean ? 0 : failure_streak_ + 1;
}

FlushReport flush_sync(SyncQueue& queue, Link& link, CloudEndpoint& cloud, const std::vector<std::int64_t>& backoff) {
    FlushReport report;
    bool clean = true;
    while (auto item = queue.front()) {
        if (!link.up()) {
            clean = false;
            break;
        }
        const auto body = sync_wire_body(*item);
        queue.note_attempt(item->item_id);
        if (!link.carry(body.size())) {
            ++report.failed;
            clean = false;
            break;
        }
        ++report.sent;
        report.bytes += body.size();
        auto resp = cloud.post_ingest(body);
        // The cloud may have applied the item even when its ack is lost;
        // the resend is deduplicated by item_id.
        if (!resp || !link.carry(resp->body.size()) || resp->status != 200) {
            ++report.failed;
            clean = false;
            break;
        }
        queue.mark_acked(item->item_id);
        ++report.acked;
    }
    queue.record_flush_outcome(clean);
    report.remaining = queue.size();
    if (!clean && !backoff.empty()) {
        auto idx = static_cast<std::size_t>(std::max(0, queue.failure_streak() - 1));
        report.retry_after_ms = backoff[std::min(idx, backoff.size() - 1)];
    }
    return report;
}

} // namespace soafog::fog
