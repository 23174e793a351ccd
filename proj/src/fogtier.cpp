#include "soafog/fogtier.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace soafog {

std::size_t wire_size(const HttpRequest& req) {
    std::size_t n = req.method.size() + 1 + req.path.size() + std::string_view(" HTTP/1.1\r\n").size();
    for (const auto& [k, v] : req.query) n += 1 + k.size() + 1 + v.size();
    for (const auto& [k, v] : req.headers) n += k.size() + 2 + v.size() + 2;
    n += 2 + req.body.size();
    return n;
}

std::size_t wire_size(const HttpResponse& resp) {
    return std::string_view("HTTP/1.1 200 OK\r\n").size() + std::string_view("Content-Type: \r\n").size() +
           resp.content_type.size() + 2 + resp.body.size();
}

std::string url_decode(const std::string& text) {
    std::string out;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '+') {
            out += ' ';
        } else if (text[i] == '%' && i + 2 < text.size()) {
            int v = 0;
            auto res = std::from_chars(text.data() + i + 1, text.data() + i + 3, v, 16);
            if (res.ec == std::errc{} && res.ptr == text.data() + i + 3) {
                out += static_cast<char>(v);
                i += 2;
            } else {
                out += text[i];
            }
        } else {
            out += text[i];
        }
    }
    return out;
}

HttpRequest make_request(const std::string& method, const std::string& target, std::string body) {
    HttpRequest req;
    req.method = method;
    req.body = std::move(body);
    auto q = target.find('?');
    req.path = target.substr(0, q);
    if (q != std::string::npos) {
        std::istringstream in(target.substr(q + 1));
        std::string pair;
        while (std::getline(in, pair, '&')) {
            if (pair.empty()) continue;
            auto eq = pair.find('=');
            auto key = url_decode(pair.substr(0, eq));
            req.query[key] = eq == std::string::npos ? std::string{} : url_decode(pair.substr(eq + 1));
        }
    }
    return req;
}

namespace fog {

using geo::Feature;
using geo::PropertyValue;
using nlohmann::json;
using security::Permission;

void FogConfig::validate() const {
    if (storage_budget_bytes == 0) {
        throw Error(ErrorCode::ConfigError, "storage_budget_bytes must be positive", "storage_budget_bytes");
    }
    if (backoff_ms.empty()) {
        throw Error(ErrorCode::ConfigError, "backoff schedule is empty", "backoff_ms");
    }
    if (!std::is_sorted(backoff_ms.begin(), backoff_ms.end()) || backoff_ms.front() < 0) {
        throw Error(ErrorCode::ConfigError, "backoff schedule must be non-decreasing", "backoff_ms");
    }
    if (sync_key.size() != 32) {
        throw Error(ErrorCode::ConfigError, "sync key must be 32 bytes", "sync_key_hex");
    }
    if (node_id.empty()) {
        throw Error(ErrorCode::ConfigError, "node_id is required", "node_id");
    }
}

FogConfig FogConfig::from_json(const json& j) {
    FogConfig c;
    try {
        c.listen = j.value("listen", c.listen);
        c.node_id = j.value("node_id", c.node_id);
        c.storage_budget_bytes = j.value("storage_budget_bytes", c.storage_budget_bytes);
        c.sync_key_id = j.value("sync_key_id", c.sync_key_id);
        auto key = hex_decode(j.at("sync_key_hex").get<std::string>());
        if (!key) throw Error(ErrorCode::ConfigError, "sync_key_hex is not hex", "sync_key_hex");
        c.sync_key = *key;
        c.cloud_address = j.value("cloud_address", c.cloud_address);
        c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
        c.pinned_layers = j.value("pinned_layers", std::set<std::string>{});
        c.summary_group_attrs = j.value("summary_group_attrs", c.summary_group_attrs);
        c.summary_measures = j.value("summary_measures", c.summary_measures);
        c.flush_interval_ms = j.value("flush_interval_ms", c.flush_interval_ms);
        c.catalog_dir = j.value("catalog_dir", "");
        c.policy_file = j.value("policy_file", "");
        c.queue_dir = j.value("queue_dir", "");
        c.audit_log = j.value("audit_log", "");
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("bad fog config: ") + e.what());
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------

json SummaryTable::to_json() const {
    json rows_json = json::array();
    for (const auto& r : rows) {
        json key = json::array();
        for (const auto& v : r.key) key.push_back(geo::property_to_json(v));
        rows_json.push_back({{"key", key}, {"sums", r.sums}, {"count", r.count}});
    }
    return {{"layer", layer_id}, {"group_attrs", group_attrs}, {"measures", measure_attrs}, {"rows", rows_json}};
}

SummaryTable SummaryTable::from_json(const json& j) {
    SummaryTable t;
    t.layer_id = j.at("layer").get<std::string>();
    t.group_attrs = j.at("group_attrs").get<std::vector<std::string>>();
    t.measure_attrs = j.at("measures").get<std::vector<std::string>>();
    for (const auto& r : j.at("rows")) {
        SummaryRow row;
        for (const auto& v : r.at("key")) {
            if (v.is_number()) row.key.emplace_back(v.get<double>());
            else row.key.emplace_back(v.get<std::string>());
        }
        row.sums = r.at("sums").get<std::vector<double>>();
        row.count = r.at("count").get<std::size_t>();
        t.rows.push_back(std::move(row));
    }
    return t;
}

SummaryTable aggregate_summary(const geo::VectorLayer& layer, const std::vector<std::string>& group_attrs,
                               const std::vector<std::string>& measure_attrs) {
    SummaryTable table;
    table.layer_id = layer.metadata.layer_id;
    table.group_attrs = group_attrs;
    table.measure_attrs = measure_attrs;
    std::map<std::vector<PropertyValue>, SummaryRow> groups;
    for (std::size_t i = 0; i < layer.features.size(); ++i) {
        const auto& props = layer.features[i].properties;
        std::vector<PropertyValue> key;
        for (const auto& attr : group_attrs) {
            auto it = props.find(attr);
            if (it == props.end()) {
                throw Error(ErrorCode::MissingAttr, "feature " + std::to_string(i) + " lacks " + attr, attr);
            }
            key.push_back(it->second);
        }
        auto& row = groups[key];
        if (row.count == 0) {
            row.key = key;
            row.sums.assign(measure_attrs.size(), 0.0);
        }
        for (std::size_t m = 0; m < measure_attrs.size(); ++m) {
            auto it = props.find(measure_attrs[m]);
            if (it == props.end() || !std::holds_alternative<double>(it->second)) {
                throw Error(ErrorCode::MissingAttr,
                            "feature " + std::to_string(i) + " lacks numeric " + measure_attrs[m], measure_attrs[m]);
            }
            row.sums[m] += std::get<double>(it->second);
        }
        ++row.count;
    }
    for (auto& [key, row] : groups) table.rows.push_back(std::move(row));
    return table;
}

// ---------------------------------------------------------------------------

std::string bearer_token(const HttpRequest& req) {
    auto h = req.header("authorization");
    if (!h) return {};
    static constexpr std::string_view prefix = "Bearer ";
    if (h->size() <= prefix.size() || h->compare(0, prefix.size(), prefix) != 0) return {};
    return h->substr(prefix.size());
}

FogNode::FogNode(FogConfig config, std::shared_ptr<security::PolicyStore> policy, std::shared_ptr<SyncQueue> queue)
    : config_(std::move(config)), policy_(std::move(policy)), queue_(std::move(queue)) {
    config_.validate();
}

void FogNode::register_layer(const std::string& id, SensitivityLabel label, std::size_t bytes) {
    policy_->set_layer_label(id, label);
    std::lock_guard lock(cache_mutex_);
    layer_sizes_[id] = bytes;
    last_access_[id] = ++access_tick_;
    evicted_.erase(id);
}

void FogNode::put_layer(const geo::VectorLayer& layer) {
    catalog_.put(layer);
    auto payload = catalog_.payload(layer.metadata.layer_id);
    register_layer(layer.metadata.layer_id, layer.metadata.sensitivity, geo::payload_bytes(*payload));
}

void FogNode::put_layer(const geo::RasterGrid& grid) {
    catalog_.put(grid);
    auto payload = catalog_.payload(grid.metadata.layer_id);
    register_layer(grid.metadata.layer_id, grid.metadata.sensitivity, geo::payload_bytes(*payload));
}

void FogNode::load_catalog(const geo::Catalog& catalog) {
    for (const auto& md : catalog.entries()) {
        auto payload = *catalog.payload(md.layer_id);
        catalog_.put(md, payload);
        register_layer(md.layer_id, md.sensitivity, geo::payload_bytes(payload));
    }
}

void FogNode::touch(const std::string& layer_id) {
    std::lock_guard lock(cache_mutex_);
    if (layer_sizes_.count(layer_id)) last_access_[layer_id] = ++access_tick_;
}

std::size_t FogNode::layer_bytes() const {
    std::lock_guard lock(cache_mutex_);
    std::size_t total = 0;
    for (const auto& [id, n] : layer_sizes_) total += n;
    return total;
}

std::size_t FogNode::local_bytes() const {
    return layer_bytes() + queue_->bytes();
}

bool FogNode::was_evicted(const std::string& layer_id) const {
    std::lock_guard lock(cache_mutex_);
    return evicted_.count(layer_id) > 0;
}

EvictionReport FogNode::cache_evict() {
    EvictionReport report;
    const std::size_t queue_bytes = queue_->bytes();
    std::lock_guard lock(cache_mutex_);
    std::size_t layers = 0, pinned = 0;
    for (const auto& [id, n] : layer_sizes_) {
        layers += n;
        if (config_.pinned_layers.count(id)) pinned += n;
    }
    report.bytes_before = layers + queue_bytes;
    if (report.bytes_before <= config_.storage_budget_bytes) {
        report.bytes_after = report.bytes_before;
        return report;
    }
    if (pinned + queue_bytes > config_.storage_budget_bytes) {
        throw Error(ErrorCode::BudgetUnsatisfiable, "pinned layers and sync queue alone exceed the storage budget",
                    std::to_string(pinned + queue_bytes));
    }
    // In-flight requests hold shared_ptr copies of payloads, so removal from
    // the catalog never invalidates a layer mid-request.
    while (layers + queue_bytes > config_.storage_budget_bytes) {
        std::string victim;
        std::uint64_t oldest = UINT64_MAX;
        for (const auto& [id, n] : layer_sizes_) {
            if (config_.pinned_layers.count(id)) continue;
            auto tick = last_access_[id];
            if (tick < oldest) {
                oldest = tick;
                victim = id;
            }
        }
        layers -= layer_sizes_[victim];
        layer_sizes_.erase(victim);
        last_access_.erase(victim);
        evicted_.insert(victim);
        catalog_.erase(victim);
        report.evicted.push_back(victim);
    }
    report.bytes_after = layers + queue_bytes;
    return report;
}

void FogNode::require_allowed(const std::string& token, const std::optional<std::string>& layer, Permission p) {
    auto d = policy_->authorize(token, layer, p);
    if (!d.allowed()) {
        throw Error(ErrorCode::Unauthorized, "denied: " + d.reason, d.reason);
    }
}

std::vector<Feature> FogNode::get_features(const std::string& token, const std::string& layer_id,
                                           const std::optional<geo::BBox>& bbox) {
    require_allowed(token, layer_id, Permission::ReadFeatures);
    auto md = catalog_.metadata(layer_id);
    if (!md) {
        throw Error(ErrorCode::UnknownLayer,
                    "unknown layer: " + layer_id + (was_evicted(layer_id) ? " (evicted)" : ""), layer_id);
    }
    auto layer = catalog_.vector(layer_id);
    if (!layer) {
        throw Error(ErrorCode::KindMismatch, "layer " + layer_id + " is not a vector layer", layer_id);
    }
    touch(layer_id);
    if (!bbox) return layer->features;
    std::vector<Feature> out;
    for (const auto& f : layer->features) {
        if (geo::geometry_bbox(f.geometry).intersects(*bbox)) out.push_back(f);
    }
    return out;
}

std::shared_ptr<const geo::VectorLayer> FogNode::vector_param(const json& params, const char* name) {
    if (!params.contains(name) || !params[name].is_string()) {
        throw Error(ErrorCode::ParamError, std::string("missing or non-string parameter ") + name, name);
    }
    auto layer = catalog_.vector(params[name].get<std::string>());
    if (!layer) {
        throw Error(ErrorCode::ParamError, std::string("parameter ") + name + " names no vector layer", name);
    }
    return layer;
}

json FogNode::execute_process(const std::string& token, const std::string& process, const json& params) {
    require_allowed(token, std::nullopt, Permission::ExecuteProcess);
    if (!params.is_object()) {
        throw Error(ErrorCode::ParamError, "params must be an object", "params");
    }
    auto string_param = [&](const char* name) {
        if (!params.contains(name) || !params[name].is_string()) {
            throw Error(ErrorCode::ParamError, std::string("missing or non-string parameter ") + name, name);
        }
        return params[name].get<std::string>();
    };
    auto authorize_inputs = [&](const std::vector<std::string>& ids) {
        for (const auto& id : ids) require_allowed(token, id, Permission::ExecuteProcess);
        for (const auto& id : ids) touch(id);
    };

    json result = {{"process", process}};
    if (process == "intersect") {
        auto a = vector_param(params, "layer_a");
        auto b = vector_param(params, "layer_b");
        double resolution = 0.0;
        if (params.contains("resolution")) {
            if (!params["resolution"].is_number() || !(params["resolution"].get<double>() > 0.0)) {
                throw Error(ErrorCode::ParamError, "resolution must be a positive number", "resolution");
            }
            resolution = params["resolution"].get<double>();
        }
        std::vector<std::string> ids = {string_param("layer_a"), string_param("layer_b")};
        authorize_inputs(ids);
        if (resolution == 0.0) {
            const auto& box = a->metadata.bbox;
            resolution = std::max(box.xmax - box.xmin, box.ymax - box.ymin) / 512.0;
            if (!(resolution > 0.0)) resolution = 1.0;
        }
        ++engine_invocations_;
        auto out = overlay::intersect_layers(*a, *b, resolution);
        result["inputs"] = ids;
        result["features"] = geo::feature_collection_json(out.features);
    } else if (process == "join") {
        auto a = vector_param(params, "layer");
        auto key = string_param("key");
        std::vector<std::string> ids = {string_param("layer")};
        std::vector<geo::Properties> table;
        if (params.contains("table_layer")) {
            auto t = vector_param(params, "table_layer");
            ids.push_back(string_param("table_layer"));
            for (const auto& f : t->features) table.push_back(f.properties);
        } else if (params.contains("table") && params["table"].is_array()) {
            try {
                for (const auto& row : params["table"]) table.push_back(geo::properties_from_json(row));
            } catch (const Error&) {
                throw Error(ErrorCode::ParamError, "table rows must hold strings and numbers", "table");
            }
        } else {
            throw Error(ErrorCode::ParamError, "join needs table or table_layer", "table");
        }
        authorize_inputs(ids);
        ++engine_invocations_;
        auto out = overlay::attribute_join(*a, table, key);
        result["inputs"] = ids;
        result["features"] = geo::feature_collection_json(out.features);
    } else if (process == "zonal_stats") {
        auto raster_id = string_param("raster");
        auto raster = catalog_.raster(raster_id);
        if (!raster) {
            throw Error(ErrorCode::ParamError, "parameter raster names no raster layer", "raster");
        }
        auto zones = vector_param(params, "zones");
        auto attr = string_param("zone_attr");
        std::vector<std::string> ids = {raster_id, string_param("zones")};
        authorize_inputs(ids);
        ++engine_invocations_;
        result["inputs"] = ids;
        result["rows"] = overlay::zonal_rows_json(overlay::zonal_stats(*raster, *zones, attr));
    } else if (process == "classify") {
        if (!params.contains("k") || !params["k"].is_number_integer() || params["k"].get<int>() < 1) {
            throw Error(ErrorCode::ParamError, "k must be an integer >= 1", "k");
        }
        const int k = params["k"].get<int>();
        auto scheme = overlay::parse_scheme(params.value("scheme", "equal_interval"));
        std::vector<double> values;
        std::vector<std::string> ids;
        if (params.contains("values")) {
            if (!params["values"].is_array()) throw Error(ErrorCode::ParamError, "values must be an array", "values");
            for (const auto& v : params["values"]) {
                if (!v.is_number()) throw Error(ErrorCode::ParamError, "values must be numbers", "values");
                values.push_back(v.get<double>());
            }
        } else {
            auto layer = vector_param(params, "layer");
            auto attr = string_param("attr");
            ids.push_back(string_param("layer"));
            for (const auto& f : layer->features) {
                auto it = f.properties.find(attr);
                if (it != f.properties.end() && std::holds_alternative<double>(it->second))
                    values.push_back(std::get<double>(it->second));
            }
        }
        if (values.empty()) throw Error(ErrorCode::ParamError, "nothing to classify", "values");
        authorize_inputs(ids);
        ++engine_invocations_;
        auto breaks = overlay::classify(values, k, scheme);
        result["inputs"] = ids;
        result["breaks"] = breaks.breaks;
        result["k"] = breaks.k;
        result["scheme"] = overlay::to_string(breaks.scheme);
        result["degenerate"] = breaks.degenerate;
    } else {
        throw Error(ErrorCode::UnknownProcess, "unknown process: " + process, process);
    }
    return result;
}

SyncItem FogNode::enqueue_summary(const SummaryTable& summary) {
    return queue_->enqueue(SyncKind::Summary, summary.serialize(), config_.node_id, config_.sync_key_id,
                           config_.sync_key);
}

FlushReport FogNode::flush(Link& link, CloudEndpoint& cloud) {
    return flush_sync(*queue_, link, cloud, config_.backoff_ms);
}

namespace {

HttpResponse error_response(int status, ErrorCode code, const std::string& message, json extra = json::object()) {
    extra["error"] = to_string(code);
    extra["message"] = message;
    return HttpResponse::json(status, extra);
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string part;
    while (std::getline(in, part, ',')) {
        if (!part.empty()) out.push_back(part);
    }
    return out;
}

int parse_int_param(const std::optional<std::string>& v, int fallback, const char* name) {
    if (!v) return fallback;
    int out = 0;
    auto res = std::from_chars(v->data(), v->data() + v->size(), out);
    if (res.ec != std::errc{} || res.ptr != v->data() + v->size()) {
        throw Error(ErrorCode::ParamError, std::string(name) + " must be an integer", name);
    }
    return out;
}

} // namespace

HttpResponse FogNode::upload(const HttpRequest& req, const std::string& token) {
    auto id = req.param("layer");
    if (!id || !geo::valid_layer_id(*id)) {
        throw Error(ErrorCode::ParamError, "layer parameter missing or invalid", "layer");
    }
    auto principal = policy_->session_principal(token);
    const bool exists = catalog_.metadata(*id).has_value();
    // Replacing a layer goes through the full gate set; a new layer only
    // needs the role grant (no write-up rule).
    require_allowed(token, exists ? std::optional<std::string>(*id) : std::nullopt, Permission::WriteLayer);
    auto layer = geo::parse_vector_layer(req.body);
    layer.metadata.layer_id = *id;
    layer.metadata.title = req.param("title").value_or(*id);
    layer.metadata.owner = principal.value_or("");
    layer.metadata.sensitivity = parse_sensitivity(req.param("sensitivity").value_or("public"));
    if (layer.features.empty()) {
        throw Error(ErrorCode::Validation, "uploaded layer has no features", *id);
    }
    put_layer(layer);

    json out = {{"layer", *id}, {"features", layer.features.size()}};
    bool summarizable = true;
    for (const auto& f : layer.features) {
        for (const auto& a : config_.summary_group_attrs) summarizable = summarizable && f.properties.count(a);
        for (const auto& m : config_.summary_measures) summarizable = summarizable && f.properties.count(m);
    }
    if (summarizable) {
        auto summary = aggregate_summary(layer, config_.summary_group_attrs, config_.summary_measures);
        auto item = enqueue_summary(summary);
        out["summary_rows"] = summary.rows.size();
        out["queued_item"] = item.item_id;
    }
    auto eviction = cache_evict();
    out["evicted"] = eviction.evicted;
    return HttpResponse::json(200, out);
}

HttpResponse FogNode::route(const HttpRequest& req, const std::string& token) {
    const auto& path = req.path;
    if (req.method == "GET" && path == "/capabilities") {
        require_allowed(token, std::nullopt, Permission::ReadCatalog);
        geo::CatalogFilter filter;
        if (auto k = req.param("kind")) filter.kind = *k == "raster" ? geo::LayerKind::Raster : geo::LayerKind::Vector;
        if (auto b = req.param("bbox")) filter.bbox = geo::parse_bbox(*b);
        if (auto y = req.param("year")) filter.year = parse_int_param(y, 0, "year");
        if (auto t = req.param("text")) filter.text = *t;
        json layers = json::array();
        for (const auto& md : catalog_.query(filter)) {
            if (policy_->authorize(token, md.layer_id, Permission::ReadFeatures).allowed())
                layers.push_back(geo::metadata_to_json(md));
        }
        json services = {{{"name", "WMS"}, {"served", true}, {"endpoint", "/map"}},
                         {{"name", "WFS"}, {"served", true}, {"endpoint", "/features"}},
                         {{"name", "WPS"}, {"served", true}, {"endpoint", "/execute"}},
                         {{"name", "CSW"}, {"served", true}, {"endpoint", "/capabilities"}},
                         {{"name", "WCS"}, {"served", false}, {"endpoint", nullptr}}};
        return HttpResponse::json(200, {{"node_id", config_.node_id}, {"services", services}, {"layers", layers}});
    }
    if (req.method == "GET" && path == "/features") {
        auto layer = req.param("layer");
        if (!layer) throw Error(ErrorCode::ParamError, "layer parameter is required", "layer");
        std::optional<geo::BBox> bbox;
        if (auto b = req.param("bbox")) bbox = geo::parse_bbox(*b);
        auto features = get_features(token, *layer, bbox);
        return HttpResponse::json(200, geo::feature_collection_json(features));
    }
    if (req.method == "GET" && path == "/map") {
        overlay::MapRequest mr;
        auto layers = req.param("layers");
        if (!layers) throw Error(ErrorCode::ParamError, "layers parameter is required", "layers");
        mr.layer_ids = split_csv(*layers);
        auto bbox = req.param("bbox");
        if (!bbox) throw Error(ErrorCode::ParamError, "bbox parameter is required", "bbox");
        mr.bbox = geo::parse_bbox(*bbox);
        mr.width = parse_int_param(req.param("width"), 256, "width");
        mr.height = parse_int_param(req.param("height"), 256, "height");
        if (auto s = req.param("style")) mr.style = overlay::parse_style(*s);
        require_allowed(token, std::nullopt, Permission::RenderMap);
        for (const auto& id : mr.layer_ids) require_allowed(token, id, Permission::RenderMap);
        for (const auto& id : mr.layer_ids) touch(id);
        ++engine_invocations_;
        return {200, "image/x-portable-pixmap", overlay::render_map(mr, catalog_)};
    }
    if (req.method == "POST" && path == "/execute") {
        auto body = json::parse(req.body);
        if (!body.is_object() || !body.contains("process") || !body["process"].is_string()) {
            throw Error(ErrorCode::ParamError, "body needs a process name", "process");
        }
        return HttpResponse::json(
            200, execute_process(token, body["process"].get<std::string>(), body.value("params", json::object())));
    }
    if (req.method == "POST" && path == "/upload") {
        return upload(req, token);
    }
    if (req.method == "POST" && path == "/admin/policy") {
        auto change = security::policy_change_from_json(json::parse(req.body));
        policy_->manage_policy(token, change);
        if (const auto* label = std::get_if<security::change::SetLabel>(&change)) {
            if (auto md = catalog_.metadata(label->layer_id)) {
                md->sensitivity = label->label;
                catalog_.put(*md, *catalog_.payload(label->layer_id));
            }
        }
        return HttpResponse::json(200, {{"applied", true}});
    }
    return HttpResponse::json(404, {{"error", "not_found"}, {"message", "no such endpoint: " + req.method + " " + path}});
}

HttpResponse FogNode::handle_request(const HttpRequest& req) {
    if (req.method == "GET" && req.path == "/health") {
        return HttpResponse::json(200, {{"status", "ok"}, {"node_id", config_.node_id}});
    }
    if (req.method == "POST" && req.path == "/auth") {
        try {
            auto body = json::parse(req.body);
            auto token = policy_->authenticate(body.at("principal_id").get<std::string>(),
                                               body.at("secret").get<std::string>());
            return HttpResponse::json(200, {{"token", token}, {"expires_in_ms", policy_->options().session_ttl_ms}});
        } catch (const Error& e) {
            return error_response(e.code() == ErrorCode::LockedOut ? 403 : 401, e.code(), e.what());
        } catch (const json::exception&) {
            return error_response(400, ErrorCode::Syntax, "body must be {principal_id, secret}");
        }
    }

    const auto token = bearer_token(req);
    const auto principal = policy_->session_principal(token).value_or("");
    auto audit_outcome = [&](int status, const std::string& reason) {
        policy_->append_audit({policy_->now(), principal, req.method + " " + req.path, req.param("layer"),
                               status < 400 ? security::Decision::Allow : security::Decision::Deny, reason});
    };
    HttpResponse resp;
    try {
        resp = route(req, token);
    } catch (const Error& e) {
        switch (e.code()) {
        case ErrorCode::Unauthorized:
            resp = HttpResponse::json(403, {{"reason", e.detail()}});
            break;
        case ErrorCode::UnknownLayer:
            resp = error_response(404, e.code(), e.what(), {{"layer", e.detail()}, {"evicted", was_evicted(e.detail())}});
            break;
        case ErrorCode::InvalidChange:
            resp = error_response(409, e.code(), e.what());
            break;
        case ErrorCode::StorageFull:
        case ErrorCode::BudgetUnsatisfiable:
            resp = error_response(507, e.code(), e.what());
            break;
        case ErrorCode::Io:
            resp = error_response(500, e.code(), "internal error");
            break;
        default:
            resp = error_response(400, e.code(), e.what(), {{"detail", e.detail()}});
            break;
        }
    } catch (const json::exception& e) {
        resp = error_response(400, ErrorCode::Syntax, std::string("malformed JSON body: ") + e.what());
    } catch (const std::exception& e) {
        const auto incident = random_uuid_generator()();
        policy_->append_audit({policy_->now(), principal, req.method + " " + req.path, req.param("layer"),
                               security::Decision::Deny, "internal:" + incident + ":" + e.what()});
        return HttpResponse::json(500, {{"error", "internal"}, {"id", incident}});
    }
    audit_outcome(resp.status, "status:" + std::to_string(resp.status));
    return resp;
}

} // namespace fog
} // namespace soafog
