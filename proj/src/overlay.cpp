#include "soafog/overlay.hpp"
#include "soafog/encoding.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numbers>

namespace soafog::overlay {

using geo::Feature;
using geo::Geometry;
using geo::GeometryKind;
using geo::MultiPolygon;
using geo::PropertyValue;
using geo::Ring;
using nlohmann::json;

namespace {

enum class RingSide { Outside, Inside, Boundary };

double cross(const GeoPoint& o, const GeoPoint& a, const GeoPoint& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool on_segment(const GeoPoint& p, const GeoPoint& a, const GeoPoint& b) {
    if (cross(a, b, p) != 0.0) return false;
    return p.x >= std::min(a.x, b.x) && p.x <= std::max(a.x, b.x) && p.y >= std::min(a.y, b.y) &&
           p.y <= std::max(a.y, b.y);
}

RingSide ring_side(const GeoPoint& p, const Ring& ring) {
    bool inside = false;
    for (std::size_t i = 0, n = ring.size(), j = n - 1; i < n; j = i++) {
        const auto& a = ring[i];
        const auto& b = ring[j];
        if (on_segment(p, a, b)) return RingSide::Boundary;
        if ((a.y > p.y) != (b.y > p.y)) {
            double x_at = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (p.x < x_at) inside = !inside;
        }
    }
    return inside ? RingSide::Inside : RingSide::Outside;
}

BBox ring_bbox(const Ring& ring) {
    BBox box{ring[0].x, ring[0].y, ring[0].x, ring[0].y};
    for (const auto& p : ring) box.expand(p);
    return box;
}

std::vector<Polygon> polygons_of(const Geometry& g) {
    if (const auto* p = std::get_if<Polygon>(&g)) return {*p};
    if (const auto* mp = std::get_if<MultiPolygon>(&g)) return *mp;
    return {};
}

void require_polygon_layer(const VectorLayer& layer, const char* role) {
    auto kind = layer.geometry_kind();
    if (kind && *kind == GeometryKind::Point) {
        throw Error(ErrorCode::KindMismatch, std::string(role) + " must be a polygon layer", role);
    }
}

Ring clip_ring(const Ring& subject, const Ring& clip_ccw) {
    Ring output = subject;
    for (std::size_t e = 0, n = clip_ccw.size(); e < n && !output.empty(); ++e) {
        const auto& a = clip_ccw[e];
        const auto& b = clip_ccw[(e + 1) % n];
        Ring input = std::move(output);
        output.clear();
        auto inside = [&](const GeoPoint& p) { return cross(a, b, p) >= 0.0; };
        auto intersection = [&](const GeoPoint& p, const GeoPoint& q) {
            double cp = cross(a, b, p);
            double cq = cross(a, b, q);
            double t = cp / (cp - cq);
            return GeoPoint{p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
        };
        for (std::size_t i = 0, m = input.size(); i < m; ++i) {
            const auto& cur = input[i];
            const auto& prev = input[(i + m - 1) % m];
            if (inside(cur)) {
                if (!inside(prev)) output.push_back(intersection(prev, cur));
                output.push_back(cur);
            } else if (inside(prev)) {
                output.push_back(intersection(prev, cur));
            }
        }
    }
    Ring cleaned;
    for (const auto& p : output) {
        if (cleaned.empty() || !(cleaned.back() == p)) cleaned.push_back(p);
    }
    while (cleaned.size() > 1 && cleaned.front() == cleaned.back()) cleaned.pop_back();
    return cleaned;
}

bool has_area(const Ring& ring, double scale) {
    return ring.size() >= 3 && std::abs(ring_signed_area(ring)) > 1e-12 * scale;
}

double bbox_area(const BBox& b) {
    return (b.xmax - b.xmin) * (b.ymax - b.ymin);
}

// Cell-center overlay of two arbitrary polygons on a grid anchored at the
// origin, so (a,b) and (b,a) sample identical points.
std::vector<Polygon> raster_overlay(const Polygon& a, const Polygon& b, double res) {
    BBox ba = ring_bbox(a.exterior);
    BBox bb = ring_bbox(b.exterior);
    if (!ba.intersects(bb)) return {};
    BBox box{std::max(ba.xmin, bb.xmin), std::max(ba.ymin, bb.ymin), std::min(ba.xmax, bb.xmax),
             std::min(ba.ymax, bb.ymax)};
    const auto i0 = static_cast<long long>(std::floor(box.xmin / res));
    const auto i1 = static_cast<long long>(std::ceil(box.xmax / res));
    const auto j0 = static_cast<long long>(std::floor(box.ymin / res));
    const auto j1 = static_cast<long long>(std::ceil(box.ymax / res));
    std::vector<Polygon> out;
    for (long long j = j0; j < j1; ++j) {
        long long run_start = 0;
        bool in_run = false;
        for (long long i = i0; i <= i1; ++i) {
            bool hit = false;
            if (i < i1) {
                GeoPoint c{(static_cast<double>(i) + 0.5) * res, (static_cast<double>(j) + 0.5) * res};
                hit = point_in_polygon(c, a) && point_in_polygon(c, b);
            }
            if (hit && !in_run) {
                run_start = i;
                in_run = true;
            } else if (!hit && in_run) {
                double x0 = static_cast<double>(run_start) * res, x1 = static_cast<double>(i) * res;
                double y0 = static_cast<double>(j) * res, y1 = static_cast<double>(j + 1) * res;
                out.push_back(Polygon{{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}, {}});
                in_run = false;
            }
        }
    }
    return out;
}

std::vector<Polygon> intersect_polygons(const Polygon& a, const Polygon& b, double res) {
    if (!ring_bbox(a.exterior).intersects(ring_bbox(b.exterior))) return {};
    if (b.holes.empty() && is_convex(b)) return clip_polygon(a, b);
    if (a.holes.empty() && is_convex(a)) return clip_polygon(b, a);
    return raster_overlay(a, b, res);
}

Properties merge_properties(const Properties& a, const Properties& b, const std::string* skip = nullptr) {
    Properties out = a;
    for (const auto& [k, v] : b) {
        if (skip && k == *skip) continue;
        out[a.count(k) ? "b_" + k : k] = v;
    }
    return out;
}

} // namespace

bool point_in_polygon(const GeoPoint& p, const Polygon& poly) {
    auto side = ring_side(p, poly.exterior);
    if (side == RingSide::Outside) return false;
    if (side == RingSide::Boundary) return true;
    for (const auto& hole : poly.holes) {
        if (ring_side(p, hole) == RingSide::Inside) return false;
    }
    return true;
}

bool point_in_geometry(const GeoPoint& p, const Geometry& g) {
    if (const auto* pt = std::get_if<GeoPoint>(&g)) return *pt == p;
    for (const auto& poly : polygons_of(g)) {
        if (point_in_polygon(p, poly)) return true;
    }
    return false;
}

double ring_signed_area(const Ring& ring) {
    double s = 0.0;
    for (std::size_t i = 0, n = ring.size(); i < n; ++i) {
        const auto& a = ring[i];
        const auto& b = ring[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    return s / 2.0;
}

double polygon_area(const Polygon& poly) {
    double area = std::abs(ring_signed_area(poly.exterior));
    for (const auto& h : poly.holes) area -= std::abs(ring_signed_area(h));
    return std::max(area, 0.0);
}

double geometry_area(const Geometry& g) {
    double total = 0.0;
    for (const auto& p : polygons_of(g)) total += polygon_area(p);
    return total;
}

bool is_convex(const Polygon& poly) {
    if (!poly.holes.empty()) return false;
    const auto& r = poly.exterior;
    const std::size_t n = r.size();
    if (n < 3) return false;
    int sign = 0;
    double turning = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& a = r[i];
        const auto& b = r[(i + 1) % n];
        const auto& c = r[(i + 2) % n];
        double z = cross(a, b, c);
        double dx1 = b.x - a.x, dy1 = b.y - a.y, dx2 = c.x - b.x, dy2 = c.y - b.y;
        turning += std::atan2(dx1 * dy2 - dy1 * dx2, dx1 * dx2 + dy1 * dy2);
        if (z == 0.0) continue;
        int s = z > 0 ? 1 : -1;
        if (sign == 0) sign = s;
        else if (s != sign) return false;
    }
    // Star polygons turn the same way at every vertex but wind twice.
    return sign != 0 && std::abs(std::abs(turning) - 2 * std::numbers::pi) < 1e-6;
}

std::vector<Polygon> clip_polygon(const Polygon& subject, const Polygon& clip) {
    if (!is_convex(clip)) {
        throw Error(ErrorCode::NonConvexClip, "clip polygon is not convex");
    }
    Ring clip_ccw = clip.exterior;
    if (ring_signed_area(clip_ccw) < 0) std::reverse(clip_ccw.begin(), clip_ccw.end());
    const double scale = bbox_area(ring_bbox(clip_ccw));

    if (!ring_bbox(subject.exterior).intersects(ring_bbox(clip_ccw))) return {};
    Polygon out;
    out.exterior = clip_ring(subject.exterior, clip_ccw);
    if (!has_area(out.exterior, scale)) return {};
    for (const auto& hole : subject.holes) {
        auto h = clip_ring(hole, clip_ccw);
        if (has_area(h, scale)) out.holes.push_back(std::move(h));
    }
    return {std::move(out)};
}

VectorLayer intersect_layers(const VectorLayer& a, const VectorLayer& b, double resolution) {
    require_polygon_layer(a, "layer_a");
    require_polygon_layer(b, "layer_b");
    if (!(resolution > 0.0) || !std::isfinite(resolution)) {
        throw Error(ErrorCode::Validation, "resolution must be positive", "resolution");
    }
    VectorLayer out;
    out.metadata.kind = geo::LayerKind::Vector;
    std::vector<BBox> bboxes_b;
    bboxes_b.reserve(b.features.size());
    for (const auto& f : b.features) bboxes_b.push_back(geo::geometry_bbox(f.geometry));

    for (const auto& fa : a.features) {
        const BBox box_a = geo::geometry_bbox(fa.geometry);
        const auto polys_a = polygons_of(fa.geometry);
        for (std::size_t j = 0; j < b.features.size(); ++j) {
            if (!box_a.intersects(bboxes_b[j])) continue;
            MultiPolygon pieces;
            for (const auto& pa : polys_a) {
                for (const auto& pb : polygons_of(b.features[j].geometry)) {
                    for (auto& piece : intersect_polygons(pa, pb, resolution)) pieces.push_back(std::move(piece));
                }
            }
            double area = 0.0;
            for (const auto& p : pieces) area += polygon_area(p);
            if (pieces.empty() || area <= 0.0) continue;
            Feature f;
            f.properties = merge_properties(fa.properties, b.features[j].properties);
            f.properties["area"] = area;
            f.geometry = std::move(pieces);
            out.features.push_back(std::move(f));
        }
    }
    if (!out.features.empty()) out.metadata.bbox = geo::layer_bbox(out);
    return out;
}

VectorLayer attribute_join(const VectorLayer& a, const std::vector<Properties>& b_table, const std::string& key) {
    std::map<PropertyValue, const Properties*> index;
    for (const auto& row : b_table) {
        auto it = row.find(key);
        if (it == row.end()) {
            throw Error(ErrorCode::MissingKey, "join table row lacks key " + key, key);
        }
        if (!index.emplace(it->second, &row).second) {
            auto value = geo::property_to_string(it->second);
            throw Error(ErrorCode::DuplicateKey, "duplicate join key value: " + value, value);
        }
    }
    VectorLayer out = a;
    for (std::size_t i = 0; i < out.features.size(); ++i) {
        auto& f = out.features[i];
        auto it = f.properties.find(key);
        if (it == f.properties.end()) {
            throw Error(ErrorCode::MissingKey, "feature " + std::to_string(i) + " lacks key " + key, key);
        }
        auto match = index.find(it->second);
        if (match != index.end()) {
            f.properties = merge_properties(f.properties, *match->second, &key);
        }
    }
    return out;
}

std::vector<ZonalRow> zonal_stats(const RasterGrid& r, const VectorLayer& zones, const std::string& zone_attr) {
    require_polygon_layer(zones, "zones");
    std::vector<ZonalRow> rows(zones.features.size());
    std::vector<BBox> boxes;
    for (std::size_t i = 0; i < zones.features.size(); ++i) {
        const auto& f = zones.features[i];
        auto it = f.properties.find(zone_attr);
        if (it == f.properties.end()) {
            throw Error(ErrorCode::MissingAttr, "zone " + std::to_string(i) + " lacks " + zone_attr, zone_attr);
        }
        rows[i].feature_index = i;
        rows[i].zone = it->second;
        boxes.push_back(geo::geometry_bbox(f.geometry));
    }
    for (std::size_t row = 0; row < r.nrows; ++row) {
        for (std::size_t col = 0; col < r.ncols; ++col) {
            const double v = r.at(row, col);
            if (v == r.nodata || std::isnan(v)) continue;
            const GeoPoint c = r.cell_center(row, col);
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (!boxes[i].contains(c) || !point_in_geometry(c, zones.features[i].geometry)) continue;
                auto& z = rows[i];
                if (z.count == 0) {
                    z.sum = v;
                    z.min = v;
                    z.max = v;
                } else {
                    *z.sum += v;
                    z.min = std::min(*z.min, v);
                    z.max = std::max(*z.max, v);
                }
                ++z.count;
            }
        }
    }
    for (auto& z : rows) {
        if (z.count > 0) z.mean = *z.sum / static_cast<double>(z.count);
    }
    return rows;
}

json zonal_rows_json(const std::vector<ZonalRow>& rows) {
    json out = json::array();
    for (const auto& z : rows) {
        json j = {{"feature_index", z.feature_index}, {"zone", geo::property_to_json(z.zone)}, {"count", z.count}};
        if (z.count > 0) {
            j["sum"] = *z.sum;
            j["mean"] = *z.mean;
            j["min"] = *z.min;
            j["max"] = *z.max;
        }
        out.push_back(std::move(j));
    }
    return out;
}

std::string_view to_string(ClassScheme scheme) {
    return scheme == ClassScheme::Quantile ? "quantile" : "equal_interval";
}

ClassScheme parse_scheme(std::string_view text) {
    if (text == "equal_interval") return ClassScheme::EqualInterval;
    if (text == "quantile") return ClassScheme::Quantile;
    throw Error(ErrorCode::ParamError, "unknown classification scheme: " + std::string(text), "scheme");
}

int ClassBreaks::class_of(double value) const {
    return static_cast<int>(std::lower_bound(breaks.begin(), breaks.end(), value) - breaks.begin());
}

ClassBreaks classify(const std::vector<double>& values, int k, ClassScheme scheme) {
    if (k < 1) throw Error(ErrorCode::ParamError, "class count must be at least 1", "k");
    if (values.empty()) throw Error(ErrorCode::ParamError, "no values to classify", "values");
    for (double v : values) {
        if (!std::isfinite(v)) throw Error(ErrorCode::ParamError, "values must be finite", "values");
    }
    ClassBreaks out;
    out.scheme = scheme;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    if (*lo == *hi) {
        out.k = 1;
        out.degenerate = k > 1;
        return out;
    }
    if (scheme == ClassScheme::EqualInterval) {
        for (int i = 1; i < k; ++i) out.breaks.push_back(*lo + i * (*hi - *lo) / k);
    } else {
        std::vector<double> sorted = values;
        std::sort(sorted.begin(), sorted.end());
        const auto n = sorted.size();
        for (int i = 1; i < k; ++i) {
            // nearest-rank order statistic
            auto rank = (static_cast<std::size_t>(i) * n + static_cast<std::size_t>(k) - 1) / static_cast<std::size_t>(k);
            double b = sorted[rank - 1];
            if (b < sorted.back() && (out.breaks.empty() || b > out.breaks.back())) out.breaks.push_back(b);
        }
    }
    out.k = static_cast<int>(out.breaks.size()) + 1;
    return out;
}

const ColorRamp& color_ramp(const std::string& name) {
    static const std::map<std::string, ColorRamp> ramps = {
        {"reds", {{{0xFE, 0xE5, 0xD9}, {0xFC, 0xAE, 0x91}, {0xFB, 0x6A, 0x4A}, {0xCB, 0x18, 0x1D}}}},
        {"blues", {{{0xEF, 0xF3, 0xFF}, {0xBD, 0xD7, 0xE7}, {0x6B, 0xAE, 0xD6}, {0x21, 0x71, 0xB5}}}},
        {"greens", {{{0xED, 0xF8, 0xE9}, {0xBA, 0xE4, 0xB3}, {0x74, 0xC4, 0x76}, {0x23, 0x8B, 0x45}}}},
        {"purples", {{{0xF2, 0xF0, 0xF7}, {0xCB, 0xC9, 0xE2}, {0x9E, 0x9A, 0xC8}, {0x6A, 0x51, 0xA3}}}},
    };
    auto it = ramps.find(name);
    if (it == ramps.end()) throw Error(ErrorCode::ParamError, "unknown color ramp: " + name, "style");
    return it->second;
}

Rgb class_color(const ColorRamp& ramp, int class_index, int k) {
    if (k <= 1) return ramp[3];
    int idx = (class_index * 6 + (k - 1)) / (2 * (k - 1));
    return ramp[static_cast<std::size_t>(std::clamp(idx, 0, 3))];
}

MapStyle parse_style(std::string_view text) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (true) {
        auto colon = text.find(':', pos);
        parts.emplace_back(text.substr(pos, colon == std::string_view::npos ? std::string_view::npos : colon - pos));
        if (colon == std::string_view::npos) break;
        pos = colon + 1;
    }
    if (parts.size() < 3 || parts.size() > 4 || parts[0].empty()) {
        throw Error(ErrorCode::ParamError, "style must be attr:ramp:k[:scheme]", "style");
    }
    MapStyle style;
    style.attribute = parts[0];
    style.ramp = parts[1];
    color_ramp(style.ramp);
    auto res = std::from_chars(parts[2].data(), parts[2].data() + parts[2].size(), style.k);
    if (res.ec != std::errc{} || res.ptr != parts[2].data() + parts[2].size() || style.k < 1 || style.k > 4) {
        throw Error(ErrorCode::ParamError, "style class count must be 1..4", "style");
    }
    if (parts.size() == 4) style.scheme = parse_scheme(parts[3]);
    return style;
}

std::string render_map(const MapRequest& req, const geo::Catalog& catalog) {
    if (req.width < 1 || req.height < 1) {
        throw Error(ErrorCode::Validation, "image dimensions must be positive", "size");
    }
    if (req.width > kMaxImageSide || req.height > kMaxImageSide) {
        throw Error(ErrorCode::OversizeImage, "image larger than 4096 pixels per side", "size");
    }
    if (!req.bbox.valid()) {
        throw Error(ErrorCode::Validation, "map bbox is degenerate", "bbox");
    }
    std::vector<geo::LayerPayload> layers;
    for (const auto& id : req.layer_ids) {
        auto p = catalog.payload(id);
        if (!p) throw Error(ErrorCode::UnknownLayer, "unknown layer: " + id, id);
        layers.push_back(*p);
    }

    const auto w = static_cast<std::size_t>(req.width);
    const auto h = static_cast<std::size_t>(req.height);
    std::vector<Rgb> canvas(w * h, kBackground);
    const double px = (req.bbox.xmax - req.bbox.xmin) / static_cast<double>(w);
    const double py = (req.bbox.ymax - req.bbox.ymin) / static_cast<double>(h);
    auto pixel_center = [&](std::size_t col, std::size_t row) {
        return GeoPoint{req.bbox.xmin + (static_cast<double>(col) + 0.5) * px,
                        req.bbox.ymax - (static_cast<double>(row) + 0.5) * py};
    };

    for (const auto& payload : layers) {
        if (const auto* rp = std::get_if<std::shared_ptr<const RasterGrid>>(&payload)) {
            const RasterGrid& r = **rp;
            double lo = INFINITY, hi = -INFINITY;
            for (double v : r.cells) {
                if (v == r.nodata || std::isnan(v)) continue;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            const double top = r.y_origin + static_cast<double>(r.nrows) * r.cellsize;
            for (std::size_t row = 0; row < h; ++row) {
                for (std::size_t col = 0; col < w; ++col) {
                    auto c = pixel_center(col, row);
                    double fc = std::floor((c.x - r.x_origin) / r.cellsize);
                    double fr = std::floor((top - c.y) / r.cellsize);
                    if (fc < 0 || fr < 0 || fc >= static_cast<double>(r.ncols) || fr >= static_cast<double>(r.nrows))
                        continue;
                    double v = r.at(static_cast<std::size_t>(fr), static_cast<std::size_t>(fc));
                    if (v == r.nodata || std::isnan(v)) continue;
                    double t = hi > lo ? (v - lo) / (hi - lo) : 0.0;
                    auto level = static_cast<std::uint8_t>(240 - std::lround(t * 160.0));
                    canvas[row * w + col] = {level, level, level};
                }
            }
            continue;
        }

        const VectorLayer& layer = *std::get<std::shared_ptr<const VectorLayer>>(payload);
        const ColorRamp& ramp = color_ramp(req.style ? req.style->ramp : "reds");
        std::optional<ClassBreaks> breaks;
        if (req.style) {
            std::vector<double> values;
            for (const auto& f : layer.features) {
                auto it = f.properties.find(req.style->attribute);
                if (it != f.properties.end() && std::holds_alternative<double>(it->second))
                    values.push_back(std::get<double>(it->second));
            }
            if (!values.empty()) breaks = classify(values, req.style->k, req.style->scheme);
        }
        for (const auto& f : layer.features) {
            Rgb color = ramp[3];
            if (breaks) {
                auto it = f.properties.find(req.style->attribute);
                if (it != f.properties.end() && std::holds_alternative<double>(it->second))
                    color = class_color(ramp, breaks->class_of(std::get<double>(it->second)), breaks->k);
                else
                    color = ramp[0];
            }
            if (const auto* pt = std::get_if<GeoPoint>(&f.geometry)) {
                double fc = std::floor((pt->x - req.bbox.xmin) / px);
                double fr = std::floor((req.bbox.ymax - pt->y) / py);
                if (fc >= 0 && fr >= 0 && fc < static_cast<double>(w) && fr < static_cast<double>(h))
                    canvas[static_cast<std::size_t>(fr) * w + static_cast<std::size_t>(fc)] = color;
                continue;
            }
            const BBox fb = geo::geometry_bbox(f.geometry);
            if (!fb.intersects(req.bbox)) continue;
            auto clamp_index = [](double v, std::size_t n) {
                return static_cast<std::size_t>(std::clamp(v, 0.0, static_cast<double>(n - 1)));
            };
            const std::size_t c0 = clamp_index(std::floor((fb.xmin - req.bbox.xmin) / px), w);
            const std::size_t c1 = clamp_index(std::floor((fb.xmax - req.bbox.xmin) / px), w);
            const std::size_t r0 = clamp_index(std::floor((req.bbox.ymax - fb.ymax) / py), h);
            const std::size_t r1 = clamp_index(std::floor((req.bbox.ymax - fb.ymin) / py), h);
            for (std::size_t row = r0; row <= r1; ++row) {
                for (std::size_t col = c0; col <= c1; ++col) {
                    if (point_in_geometry(pixel_center(col, row), f.geometry)) canvas[row * w + col] = color;
                }
            }
        }
    }

    std::string out = "P3\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    out.reserve(out.size() + canvas.size() * 12);
    for (const auto& c : canvas) {
        out += std::to_string(c.r);
        out += ' ';
        out += std::to_string(c.g);
        out += ' ';
        out += std::to_string(c.b);
        out += '\n';
    }
    return out;
}

} // namespace soafog::overlay
