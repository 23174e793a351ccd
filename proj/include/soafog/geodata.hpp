#pragma once

#include "soafog/error.hpp"

#include "json.hpp"

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace soafog {

// Ordered sensitivity labels used by the mandatory access gate. Lives here
// because every layer's metadata carries one.
enum class SensitivityLabel { Public = 0, Restricted = 1, Confidential = 2 };

std::string_view to_string(SensitivityLabel label);
SensitivityLabel parse_sensitivity(std::string_view text);

namespace geo {

struct GeoPoint {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

/// Stored unclosed: the first vertex is not repeated at the end.
using Ring = std::vector<GeoPoint>;

struct Polygon {
    Ring exterior;
    std::vector<Ring> holes;

    friend bool operator==(const Polygon&, const Polygon&) = default;
};

using MultiPolygon = std::vector<Polygon>;
using Geometry = std::variant<GeoPoint, Polygon, MultiPolygon>;

enum class GeometryKind { Point, Polygon, MultiPolygon };
std::string_view to_string(GeometryKind kind);
GeometryKind kind_of(const Geometry& g);

/// Numbers sort before strings; used for group keys and join keys.
using PropertyValue = std::variant<double, std::string>;
using Properties = std::map<std::string, PropertyValue>;

std::string property_to_string(const PropertyValue& v);

struct Feature {
    Geometry geometry;
    Properties properties;

    friend bool operator==(const Feature&, const Feature&) = default;
};

struct BBox {
    double xmin = 0.0;
    double ymin = 0.0;
    double xmax = 0.0;
    double ymax = 0.0;

    bool valid() const { return xmin < xmax && ymin < ymax; }
    bool intersects(const BBox& o) const {
        return xmin <= o.xmax && o.xmin <= xmax && ymin <= o.ymax && o.ymin <= ymax;
    }
    bool contains(const GeoPoint& p) const { return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax; }
    void expand(const GeoPoint& p);
    void expand(const BBox& o);

    friend bool operator==(const BBox&, const BBox&) = default;
};

/// Parses "x1,y1,x2,y2".
BBox parse_bbox(std::string_view text);

enum class LayerKind { Vector, Raster };
std::string_view to_string(LayerKind kind);

struct TemporalExtent {
    int year_from = 0;
    int year_to = 0;
    friend bool operator==(const TemporalExtent&, const TemporalExtent&) = default;
};

struct LayerMetadata {
    std::string layer_id;
    std::string title;
    LayerKind kind = LayerKind::Vector;
    BBox bbox;
    std::optional<TemporalExtent> temporal_extent;
    SensitivityLabel sensitivity = SensitivityLabel::Public;
    std::string owner;

    friend bool operator==(const LayerMetadata&, const LayerMetadata&) = default;
};

bool valid_layer_id(std::string_view id);

/// Throws ValidationError when the id pattern or bbox ordering is violated.
void validate_metadata(const LayerMetadata& md);

struct VectorLayer {
    LayerMetadata metadata;
    std::vector<Feature> features;

    /// Kind shared by all features; nullopt for an empty layer.
    std::optional<GeometryKind> geometry_kind() const;
};

struct RasterGrid {
    LayerMetadata metadata;
    std::size_t ncols = 0;
    std::size_t nrows = 0;
    double x_origin = 0.0;
    double y_origin = 0.0;
    double cellsize = 1.0;
    double nodata = -9999.0;
    std::vector<double> cells; // row-major, top row first

    double at(std::size_t row, std::size_t col) const { return cells[row * ncols + col]; }
    /// Map coordinate of a cell center. Row 0 is the top row.
    GeoPoint cell_center(std::size_t row, std::size_t col) const;
};

// Ingestion. Errors name the offending feature index in Error::detail.
VectorLayer parse_vector_layer(std::string_view text);
RasterGrid parse_raster_grid(std::string_view text);

std::string serialize_vector_layer(const VectorLayer& layer);
std::string serialize_raster_grid(const RasterGrid& grid);

BBox geometry_bbox(const Geometry& g);
BBox layer_bbox(const VectorLayer& layer);
BBox layer_bbox(const RasterGrid& grid);

using LayerPayload = std::variant<std::shared_ptr<const VectorLayer>, std::shared_ptr<const RasterGrid>>;

struct CatalogFilter {
    std::optional<LayerKind> kind;
    std::optional<BBox> bbox;
    std::optional<int> year;
    std::optional<std::string> text;
};

/// Layer registry shared by the fog services. Many readers, one writer;
/// `put` replaces metadata and payload under one lock so a reader sees either
/// the old layer or the new one.
class Catalog {
public:
    Catalog() = default;
    Catalog(const Catalog& other);
    Catalog& operator=(const Catalog& other);

    void put(const VectorLayer& layer);
    void put(const RasterGrid& grid);
    void put(LayerMetadata metadata, LayerPayload payload);
    bool erase(const std::string& layer_id);

    std::optional<LayerMetadata> metadata(const std::string& layer_id) const;
    std::optional<LayerPayload> payload(const std::string& layer_id) const;
    std::shared_ptr<const VectorLayer> vector(const std::string& layer_id) const;
    std::shared_ptr<const RasterGrid> raster(const std::string& layer_id) const;

    std::vector<LayerMetadata> query(const CatalogFilter& filter) const;
    std::vector<LayerMetadata> entries() const { return query({}); }
    std::size_t size() const;

    /// Directory form: catalog.json plus one <id>.geojson / <id>.asc per layer.
    static Catalog load(const std::string& dir);
    void save(const std::string& dir) const;

private:
    mutable std::shared_mutex mutex_;
    std::map<std::string, LayerMetadata> entries_;
    std::map<std::string, LayerPayload> payloads_;
};

std::vector<LayerMetadata> catalog_query(const Catalog& catalog, const CatalogFilter& filter);

nlohmann::json metadata_to_json(const LayerMetadata& md);
LayerMetadata metadata_from_json(const nlohmann::json& j);
nlohmann::json property_to_json(const PropertyValue& v);
nlohmann::json properties_to_json(const Properties& props);
/// Throws ValidationError for values that are not strings or finite numbers.
Properties properties_from_json(const nlohmann::json& j);
nlohmann::json geometry_to_json(const Geometry& g);
nlohmann::json feature_collection_json(const std::vector<Feature>& features);

/// Size in bytes of the layer's serialized form, used for storage budgets.
std::size_t payload_bytes(const LayerPayload& payload);

} // namespace geo
} // namespace soafog
