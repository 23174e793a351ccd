#include "soafog/geodata.hpp"
#include "soafog/encoding.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>

namespace soafog {

std::string_view to_string(SensitivityLabel label) {
    switch (label) {
    case SensitivityLabel::Public: return "public";
    case SensitivityLabel::Restricted: return "restricted";
    case SensitivityLabel::Confidential: return "confidential";
    }
    return "confidential";
}

SensitivityLabel parse_sensitivity(std::string_view text) {
    if (text == "public") return SensitivityLabel::Public;
    if (text == "restricted") return SensitivityLabel::Restricted;
    if (text == "confidential") return SensitivityLabel::Confidential;
    throw Error(ErrorCode::Validation, "unknown sensitivity label: " + std::string(text), std::string(text));
}

namespace geo {

using nlohmann::json;

namespace {

[[noreturn]] void fail_feature(ErrorCode code, std::size_t index, const std::string& what) {
    throw Error(code, "feature " + std::to_string(index) + ": " + what, std::to_string(index));
}

double read_coord(const json& v, std::size_t index) {
    if (!v.is_number()) {
        fail_feature(ErrorCode::Validation, index, "coordinate is not a number");
    }
    double d = v.get<double>();
    if (!std::isfinite(d)) {
        fail_feature(ErrorCode::Validation, index, "non-finite coordinate");
    }
    return d;
}

GeoPoint read_point(const json& v, std::size_t index) {
    if (!v.is_array() || v.size() != 2) {
        fail_feature(ErrorCode::Validation, index, "position must be an [x,y] pair");
    }
    return {read_coord(v[0], index), read_coord(v[1], index)};
}

double shoelace(const Ring& ring) {
    double s = 0.0;
    for (std::size_t i = 0, n = ring.size(); i < n; ++i) {
        const auto& a = ring[i];
        const auto& b = ring[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    return s / 2.0;
}

Ring read_ring(const json& v, std::size_t index, bool exterior) {
    if (!v.is_array()) {
        fail_feature(ErrorCode::Validation, index, "ring must be an array of positions");
    }
    Ring ring;
    ring.reserve(v.size());
    for (const auto& p : v) {
        ring.push_back(read_point(p, index));
    }
    if (ring.size() >= 2 && ring.front() == ring.back()) {
        ring.pop_back();
    }
    std::set<std::pair<double, double>> distinct;
    for (const auto& p : ring) {
        distinct.emplace(p.x, p.y);
    }
    if (distinct.size() < 3) {
        fail_feature(ErrorCode::Validation, index, "ring has fewer than 3 distinct vertices");
    }
    if (exterior && shoelace(ring) == 0.0) {
        fail_feature(ErrorCode::Validation, index, "exterior ring has zero area");
    }
    return ring;
}

Polygon read_polygon(const json& v, std::size_t index) {
    if (!v.is_array() || v.empty()) {
        fail_feature(ErrorCode::Validation, index, "polygon needs at least an exterior ring");
    }
    Polygon poly;
    poly.exterior = read_ring(v[0], index, true);
    for (std::size_t i = 1; i < v.size(); ++i) {
        poly.holes.push_back(read_ring(v[i], index, false));
    }
    return poly;
}

Geometry read_geometry(const json& g, std::size_t index) {
    if (!g.is_object() || !g.contains("type") || !g["type"].is_string() || !g.contains("coordinates")) {
        fail_feature(ErrorCode::Syntax, index, "geometry needs type and coordinates");
    }
    const auto type = g["type"].get<std::string>();
    const auto& c = g["coordinates"];
    if (type == "Point") {
        return read_point(c, index);
    }
    if (type == "Polygon") {
        return read_polygon(c, index);
    }
    if (type == "MultiPolygon") {
        if (!c.is_array() || c.empty()) {
            fail_feature(ErrorCode::Validation, index, "empty MultiPolygon");
        }
        MultiPolygon mp;
        for (const auto& p : c) {
            mp.push_back(read_polygon(p, index));
        }
        return mp;
    }
    fail_feature(ErrorCode::Validation, index, "unsupported geometry type " + type);
}

json ring_json(const Ring& ring) {
    json out = json::array();
    for (const auto& p : ring) {
        out.push_back({p.x, p.y});
    }
    if (!ring.empty()) {
        out.push_back({ring.front().x, ring.front().y});
    }
    return out;
}

json polygon_json(const Polygon& poly) {
    json out = json::array();
    out.push_back(ring_json(poly.exterior));
    for (const auto& h : poly.holes) {
        out.push_back(ring_json(h));
    }
    return out;
}

// Tracks the parser position so a duplicated property name can be pinned to
// the feature that holds it. nlohmann keeps the last duplicate silently.
struct DuplicateKeyTracker {
    struct Frame {
        bool is_object = false;
        std::set<std::string> keys;
        std::size_t count = 0;
        std::string key_in_parent;
    };
    std::vector<Frame> stack;
    std::string pending_key;
    std::optional<std::size_t> duplicate_at;
    std::string duplicate_name;

    void element_begins() {
        if (!stack.empty() && !stack.back().is_object) {
            ++stack.back().count;
        }
    }
    std::size_t current_feature() const {
        if (stack.size() >= 2 && !stack[1].is_object && stack[1].key_in_parent == "features") {
            return stack[1].count == 0 ? 0 : stack[1].count - 1;
        }
        return 0;
    }
    bool operator()(int, json::parse_event_t event, json& parsed) {
        switch (event) {
        case json::parse_event_t::object_start:
        case json::parse_event_t::array_start:
            element_begins();
            stack.push_back({event == json::parse_event_t::object_start, {}, 0, pending_key});
            pending_key.clear();
            break;
        case json::parse_event_t::object_end:
        case json::parse_event_t::array_end:
            if (!stack.empty()) stack.pop_back();
            break;
        case json::parse_event_t::key: {
            auto name = parsed.get<std::string>();
            if (!stack.empty() && !stack.back().keys.insert(name).second && !duplicate_at) {
                duplicate_at = current_feature();
                duplicate_name = name;
            }
            pending_key = std::move(name);
            break;
        }
        case json::parse_event_t::value:
            element_begins();
            pending_key.clear();
            break;
        }
        return true;
    }
};

} // namespace

std::string_view to_string(GeometryKind kind) {
    switch (kind) {
    case GeometryKind::Point: return "Point";
    case GeometryKind::Polygon: return "Polygon";
    case GeometryKind::MultiPolygon: return "MultiPolygon";
    }
    return "Point";
}

GeometryKind kind_of(const Geometry& g) {
    return static_cast<GeometryKind>(g.index());
}

std::string_view to_string(LayerKind kind) {
    return kind == LayerKind::Vector ? "vector" : "raster";
}

std::string property_to_string(const PropertyValue& v) {
    if (const auto* d = std::get_if<double>(&v)) {
        return format_number(*d);
    }
    return std::get<std::string>(v);
}

void BBox::expand(const GeoPoint& p) {
    xmin = std::min(xmin, p.x);
    ymin = std::min(ymin, p.y);
    xmax = std::max(xmax, p.x);
    ymax = std::max(ymax, p.y);
}

void BBox::expand(const BBox& o) {
    xmin = std::min(xmin, o.xmin);
    ymin = std::min(ymin, o.ymin);
    xmax = std::max(xmax, o.xmax);
    ymax = std::max(ymax, o.ymax);
}

BBox parse_bbox(std::string_view text) {
    double v[4];
    std::size_t pos = 0;
    for (int i = 0; i < 4; ++i) {
        auto comma = text.find(',', pos);
        if ((i < 3) != (comma != std::string_view::npos)) {
            throw Error(ErrorCode::Syntax, "bbox must be x1,y1,x2,y2", std::string(text));
        }
        auto part = text.substr(pos, i < 3 ? comma - pos : std::string_view::npos);
        auto res = std::from_chars(part.data(), part.data() + part.size(), v[i]);
        if (res.ec != std::errc{} || res.ptr != part.data() + part.size() || !std::isfinite(v[i])) {
            throw Error(ErrorCode::Syntax, "bbox must be x1,y1,x2,y2", std::string(text));
        }
        pos = comma + 1;
    }
    BBox b{v[0], v[1], v[2], v[3]};
    if (!b.valid()) {
        throw Error(ErrorCode::Validation, "bbox requires x1<x2 and y1<y2", std::string(text));
    }
    return b;
}

bool valid_layer_id(std::string_view id) {
    if (id.empty() || id.size() > 64) {
        return false;
    }
    return std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
    });
}

void validate_metadata(const LayerMetadata& md) {
    if (!valid_layer_id(md.layer_id)) {
        throw Error(ErrorCode::Validation, "invalid layer id: " + md.layer_id, md.layer_id);
    }
    if (!md.bbox.valid()) {
        throw Error(ErrorCode::Validation, "layer " + md.layer_id + " has a degenerate extent", md.layer_id);
    }
    if (md.temporal_extent && md.temporal_extent->year_from > md.temporal_extent->year_to) {
        throw Error(ErrorCode::Validation, "layer " + md.layer_id + " has an inverted temporal extent",
                    md.layer_id);
    }
}

std::optional<GeometryKind> VectorLayer::geometry_kind() const {
    if (features.empty()) {
        return std::nullopt;
    }
    return kind_of(features.front().geometry);
}

GeoPoint RasterGrid::cell_center(std::size_t row, std::size_t col) const {
    return {x_origin + (static_cast<double>(col) + 0.5) * cellsize,
            y_origin + (static_cast<double>(nrows - row) - 0.5) * cellsize};
}

json property_to_json(const PropertyValue& v) {
    if (const auto* d = std::get_if<double>(&v)) {
        return *d;
    }
    return std::get<std::string>(v);
}

json properties_to_json(const Properties& props) {
    json out = json::object();
    for (const auto& [k, v] : props) {
        out[k] = property_to_json(v);
    }
    return out;
}

Properties properties_from_json(const json& j) {
    Properties props;
    if (j.is_null()) {
        return props;
    }
    if (!j.is_object()) {
        throw Error(ErrorCode::Validation, "properties must be an object");
    }
    for (const auto& [k, v] : j.items()) {
        if (v.is_string()) {
            props.emplace(k, v.get<std::string>());
        } else if (v.is_number()) {
            double d = v.get<double>();
            if (!std::isfinite(d)) {
                throw Error(ErrorCode::Validation, "property " + k + " is not finite", k);
            }
            props.emplace(k, d);
        } else {
            throw Error(ErrorCode::Validation, "property " + k + " must be a string or number", k);
        }
    }
    return props;
}

json geometry_to_json(const Geometry& g) {
    return std::visit(
        [](const auto& geom) -> json {
            using T = std::decay_t<decltype(geom)>;
            if constexpr (std::is_same_v<T, GeoPoint>) {
                return {{"type", "Point"}, {"coordinates", {geom.x, geom.y}}};
            } else if constexpr (std::is_same_v<T, Polygon>) {
                return {{"type", "Polygon"}, {"coordinates", polygon_json(geom)}};
            } else {
                json coords = json::array();
                for (const auto& p : geom) {
                    coords.push_back(polygon_json(p));
                }
                return {{"type", "MultiPolygon"}, {"coordinates", coords}};
            }
        },
        g);
}

json feature_collection_json(const std::vector<Feature>& features) {
    json fs = json::array();
    for (const auto& f : features) {
        fs.push_back({{"type", "Feature"}, {"geometry", geometry_to_json(f.geometry)},
                      {"properties", properties_to_json(f.properties)}});
    }
    return {{"type", "FeatureCollection"}, {"features", fs}};
}

VectorLayer parse_vector_layer(std::string_view text) {
    DuplicateKeyTracker tracker;
    json doc;
    try {
        doc = json::parse(text.begin(), text.end(), std::ref(tracker));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Syntax, std::string("malformed document: ") + e.what());
    }
    if (tracker.duplicate_at) {
        fail_feature(ErrorCode::Validation, *tracker.duplicate_at, "duplicate member " + tracker.duplicate_name);
    }
    if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" || !doc.contains("features") ||
        !doc["features"].is_array()) {
        throw Error(ErrorCode::Syntax, "expected a FeatureCollection with a features array");
    }
    if (doc.contains("crs")) {
        throw Error(ErrorCode::Validation, "crs member is not supported; coordinates are planar");
    }

    VectorLayer layer;
    layer.metadata.kind = LayerKind::Vector;
    const auto& features = doc["features"];
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto& f = features[i];
        if (!f.is_object() || f.value("type", "") != "Feature" || !f.contains("geometry")) {
            fail_feature(ErrorCode::Syntax, i, "expected a Feature with a geometry");
        }
        Feature feature;
        feature.geometry = read_geometry(f["geometry"], i);
        try {
            feature.properties = properties_from_json(f.contains("properties") ? f["properties"] : json());
        } catch (const Error& e) {
            fail_feature(ErrorCode::Validation, i, e.what());
        }
        if (!layer.features.empty() && kind_of(feature.geometry) != kind_of(layer.features.front().geometry)) {
            fail_feature(ErrorCode::Validation, i, "mixed geometry kinds in one layer");
        }
        layer.features.push_back(std::move(feature));
    }
    if (!layer.features.empty()) {
        layer.metadata.bbox = layer_bbox(layer);
    }
    return layer;
}

std::string serialize_vector_layer(const VectorLayer& layer) {
    return feature_collection_json(layer.features).dump();
}

RasterGrid parse_raster_grid(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::map<std::string, std::string> header;
    static const std::set<std::string> required = {"ncols", "nrows", "xllcorner", "yllcorner", "cellsize",
                                                   "nodata_value"};
    for (int i = 0; i < 6; ++i) {
        std::string key, value;
        if (!(in >> key >> value)) {
            throw Error(ErrorCode::Syntax, "raster header needs six key/value lines");
        }
        std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
        if (!required.count(key) || !header.emplace(key, value).second) {
            throw Error(ErrorCode::Syntax, "unexpected raster header key: " + key, key);
        }
    }
    auto number = [&](const std::string& key) {
        const auto& s = header.at(key);
        double v = 0.0;
        auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
            throw Error(ErrorCode::Syntax, "raster header " + key + " is not a number", key);
        }
        return v;
    };
    auto count = [&](const std::string& key) {
        double v = number(key);
        if (v < 1 || v != std::floor(v)) {
            throw Error(ErrorCode::Validation, key + " must be a positive integer", key);
        }
        return static_cast<std::size_t>(v);
    };

    RasterGrid grid;
    grid.metadata.kind = LayerKind::Raster;
    grid.ncols = count("ncols");
    grid.nrows = count("nrows");
    grid.x_origin = number("xllcorner");
    grid.y_origin = number("yllcorner");
    grid.cellsize = number("cellsize");
    grid.nodata = number("nodata_value");
    if (!(grid.cellsize > 0.0) || !std::isfinite(grid.cellsize)) {
        throw Error(ErrorCode::Validation, "cellsize must be positive", "cellsize");
    }
    std::string token;
    while (in >> token) {
        double v = 0.0;
        auto res = std::from_chars(token.data(), token.data() + token.size(), v);
        if (res.ec != std::errc{} || res.ptr != token.data() + token.size()) {
            throw Error(ErrorCode::Syntax, "raster cell is not a number: " + token, token);
        }
        grid.cells.push_back(v);
    }
    const std::size_t expected = grid.ncols * grid.nrows;
    if (grid.cells.size() != expected) {
        throw Error(ErrorCode::Validation,
                    "expected " + std::to_string(expected) + " cells, found " + std::to_string(grid.cells.size()));
    }
    grid.metadata.bbox = layer_bbox(grid);
    return grid;
}

std::string serialize_raster_grid(const RasterGrid& grid) {
    std::string out;
    out += "ncols " + std::to_string(grid.ncols) + "\n";
    out += "nrows " + std::to_string(grid.nrows) + "\n";
    out += "xllcorner " + format_number(grid.x_origin) + "\n";
    out += "yllcorner " + format_number(grid.y_origin) + "\n";
    out += "cellsize " + format_number(grid.cellsize) + "\n";
    out += "nodata_value " + format_number(grid.nodata) + "\n";
    for (std::size_t r = 0; r < grid.nrows; ++r) {
        for (std::size_t c = 0; c < grid.ncols; ++c) {
            if (c) out += ' ';
            out += format_number(grid.at(r, c));
        }
        out += '\n';
    }
    return out;
}

BBox geometry_bbox(const Geometry& g) {
    BBox box{INFINITY, INFINITY, -INFINITY, -INFINITY};
    std::visit(
        [&](const auto& geom) {
            using T = std::decay_t<decltype(geom)>;
            if constexpr (std::is_same_v<T, GeoPoint>) {
                box.expand(geom);
            } else if constexpr (std::is_same_v<T, Polygon>) {
                for (const auto& p : geom.exterior) box.expand(p);
            } else {
                for (const auto& poly : geom)
                    for (const auto& p : poly.exterior) box.expand(p);
            }
        },
        g);
    return box;
}

BBox layer_bbox(const VectorLayer& layer) {
    if (layer.features.empty()) {
        throw Error(ErrorCode::EmptyLayer, "bbox of an empty layer", layer.metadata.layer_id);
    }
    BBox box = geometry_bbox(layer.features.front().geometry);
    for (const auto& f : layer.features) {
        box.expand(geometry_bbox(f.geometry));
    }
    return box;
}

BBox layer_bbox(const RasterGrid& grid) {
    return {grid.x_origin, grid.y_origin, grid.x_origin + static_cast<double>(grid.ncols) * grid.cellsize,
            grid.y_origin + static_cast<double>(grid.nrows) * grid.cellsize};
}

json metadata_to_json(const LayerMetadata& md) {
    json j = {{"layer_id", md.layer_id},
              {"title", md.title},
              {"kind", to_string(md.kind)},
              {"bbox", {md.bbox.xmin, md.bbox.ymin, md.bbox.xmax, md.bbox.ymax}},
              {"temporal_extent", nullptr},
              {"sensitivity", to_string(md.sensitivity)},
              {"owner", md.owner}};
    if (md.temporal_extent) {
        j["temporal_extent"] = {md.temporal_extent->year_from, md.temporal_extent->year_to};
    }
    return j;
}

LayerMetadata metadata_from_json(const json& j) {
    try {
        LayerMetadata md;
        md.layer_id = j.at("layer_id").get<std::string>();
        md.title = j.value("title", md.layer_id);
        md.kind = j.at("kind").get<std::string>() == "raster" ? LayerKind::Raster : LayerKind::Vector;
        const auto& b = j.at("bbox");
        md.bbox = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()};
        if (j.contains("temporal_extent") && !j["temporal_extent"].is_null()) {
            md.temporal_extent =
                TemporalExtent{j["temporal_extent"].at(0).get<int>(), j["temporal_extent"].at(1).get<int>()};
        }
        md.sensitivity = parse_sensitivity(j.value("sensitivity", "public"));
        md.owner = j.value("owner", "");
        return md;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Syntax, std::string("bad layer metadata: ") + e.what());
    }
}

Catalog::Catalog(const Catalog& other) {
    std::shared_lock lock(other.mutex_);
    entries_ = other.entries_;
    payloads_ = other.payloads_;
}

Catalog& Catalog::operator=(const Catalog& other) {
    if (this != &other) {
        Catalog copy(other);
        std::unique_lock lock(mutex_);
        entries_ = std::move(copy.entries_);
        payloads_ = std::move(copy.payloads_);
    }
    return *this;
}

void Catalog::put(const VectorLayer& layer) {
    auto copy = std::make_shared<VectorLayer>(layer);
    copy->metadata.kind = LayerKind::Vector;
    if (!copy->features.empty()) {
        copy->metadata.bbox = layer_bbox(*copy);
    }
    auto md = copy->metadata;
    put(std::move(md), std::shared_ptr<const VectorLayer>(std::move(copy)));
}

void Catalog::put(const RasterGrid& grid) {
    auto copy = std::make_shared<RasterGrid>(grid);
    copy->metadata.kind = LayerKind::Raster;
    copy->metadata.bbox = layer_bbox(*copy);
    auto md = copy->metadata;
    put(std::move(md), std::shared_ptr<const RasterGrid>(std::move(copy)));
}

void Catalog::put(LayerMetadata metadata, LayerPayload payload) {
    validate_metadata(metadata);
    std::unique_lock lock(mutex_);
    auto id = metadata.layer_id;
    entries_[id] = std::move(metadata);
    payloads_[id] = std::move(payload);
}

bool Catalog::erase(const std::string& layer_id) {
    std::unique_lock lock(mutex_);
    payloads_.erase(layer_id);
    return entries_.erase(layer_id) > 0;
}

std::optional<LayerMetadata> Catalog::metadata(const std::string& layer_id) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(layer_id);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

std::optional<LayerPayload> Catalog::payload(const std::string& layer_id) const {
    std::shared_lock lock(mutex_);
    auto it = payloads_.find(layer_id);
    if (it == payloads_.end()) return std::nullopt;
    return it->second;
}

std::shared_ptr<const VectorLayer> Catalog::vector(const std::string& layer_id) const {
    auto p = payload(layer_id);
    if (!p) return nullptr;
    if (auto* v = std::get_if<std::shared_ptr<const VectorLayer>>(&*p)) return *v;
    return nullptr;
}

std::shared_ptr<const RasterGrid> Catalog::raster(const std::string& layer_id) const {
    auto p = payload(layer_id);
    if (!p) return nullptr;
    if (auto* r = std::get_if<std::shared_ptr<const RasterGrid>>(&*p)) return *r;
    return nullptr;
}

std::vector<LayerMetadata> Catalog::query(const CatalogFilter& filter) const {
    auto lower = [](std::string s) {
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
        return s;
    };
    const auto needle = filter.text ? lower(*filter.text) : std::string{};
    std::vector<LayerMetadata> out;
    std::shared_lock lock(mutex_);
    for (const auto& [id, md] : entries_) {
        if (filter.kind && md.kind != *filter.kind) continue;
        if (filter.bbox && !md.bbox.intersects(*filter.bbox)) continue;
        if (filter.year && (!md.temporal_extent || *filter.year < md.temporal_extent->year_from ||
                            *filter.year > md.temporal_extent->year_to))
            continue;
        if (filter.text && lower(md.layer_id).find(needle) == std::string::npos &&
            lower(md.title).find(needle) == std::string::npos)
            continue;
        out.push_back(md);
    }
    return out;
}

std::size_t Catalog::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot read " + path.string(), path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& data) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorCode::Io, "cannot write " + tmp.string(), tmp.string());
        }
        out << data;
    }
    std::filesystem::rename(tmp, path);
}

} // namespace

Catalog Catalog::load(const std::string& dir) {
    namespace fs = std::filesystem;
    Catalog cat;
    const fs::path index = fs::path(dir) / "catalog.json";
    if (!fs::exists(index)) {
        return cat;
    }
    json doc;
    try {
        doc = json::parse(read_file(index));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Syntax, "corrupt catalog index: " + std::string(e.what()));
    }
    for (const auto& entry : doc.at("layers")) {
        auto md = metadata_from_json(entry);
        if (md.kind == LayerKind::Vector) {
            auto layer = parse_vector_layer(read_file(fs::path(dir) / (md.layer_id + ".geojson")));
            layer.metadata = md;
            cat.put(layer);
        } else {
            auto grid = parse_raster_grid(read_file(fs::path(dir) / (md.layer_id + ".asc")));
            grid.metadata = md;
            cat.put(grid);
        }
    }
    return cat;
}

void Catalog::save(const std::string& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    json layers = json::array();
    std::shared_lock lock(mutex_);
    for (const auto& [id, md] : entries_) {
        layers.push_back(metadata_to_json(md));
        const auto& payload = payloads_.at(id);
        if (auto* v = std::get_if<std::shared_ptr<const VectorLayer>>(&payload)) {
            write_file_atomic(fs::path(dir) / (id + ".geojson"), serialize_vector_layer(**v));
        } else {
            write_file_atomic(fs::path(dir) / (id + ".asc"),
                              serialize_raster_grid(*std::get<std::shared_ptr<const RasterGrid>>(payload)));
        }
    }
    write_file_atomic(fs::path(dir) / "catalog.json", json{{"layers", layers}}.dump(2) + "\n");
}

std::vector<LayerMetadata> catalog_query(const Catalog& catalog, const CatalogFilter& filter) {
    return catalog.query(filter);
}

std::size_t payload_bytes(const LayerPayload& payload) {
    if (auto* v = std::get_if<std::shared_ptr<const VectorLayer>>(&payload)) {
        return serialize_vector_layer(**v).size();
    }
    return serialize_raster_grid(*std::get<std::shared_ptr<const RasterGrid>>(payload)).size();
}

} // namespace geo
} // namespace soafog
