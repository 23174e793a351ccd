#pragma once

#include "soafog/geodata.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace soafog::overlay {

using geo::BBox;
using geo::GeoPoint;
using geo::Polygon;
using geo::Properties;
using geo::RasterGrid;
using geo::VectorLayer;

/// Boundary points count as inside; points inside a hole are outside.
bool point_in_polygon(const GeoPoint& p, const Polygon& poly);
bool point_in_geometry(const GeoPoint& p, const geo::Geometry& g);

double ring_signed_area(const geo::Ring& ring);
double polygon_area(const Polygon& poly);
double geometry_area(const geo::Geometry& g);

/// True when every turn of the (hole-free) polygon goes the same way.
bool is_convex(const Polygon& poly);

/// Sutherland-Hodgman clip against a convex polygon. Holes are clipped on
/// their own and re-attached. Returns an empty list when the result has no area.
std::vector<Polygon> clip_polygon(const Polygon& subject, const Polygon& clip);

/// Pairwise overlay of two polygon layers. Pairs with a convex operand are
/// clipped exactly; other pairs fall back to a cell-center raster overlay at
/// `resolution`. Each output feature carries both property sets (b's keys
/// prefixed "b_" on collision) plus "area".
VectorLayer intersect_layers(const VectorLayer& a, const VectorLayer& b, double resolution);

/// Left join of `b_table` rows onto `a` by `key`.
VectorLayer attribute_join(const VectorLayer& a, const std::vector<Properties>& b_table, const std::string& key);

struct ZonalRow {
    std::size_t feature_index = 0;
    geo::PropertyValue zone;
    std::size_t count = 0;
    std::optional<double> sum;
    std::optional<double> mean;
    std::optional<double> min;
    std::optional<double> max;

    friend bool operator==(const ZonalRow&, const ZonalRow&) = default;
};

/// Per-zone statistics over cells whose centers fall inside each feature.
/// Sums accumulate in row-major order.
std::vector<ZonalRow> zonal_stats(const RasterGrid& r, const VectorLayer& zones, const std::string& zone_attr);

nlohmann::json zonal_rows_json(const std::vector<ZonalRow>& rows);

enum class ClassScheme { EqualInterval, Quantile };
std::string_view to_string(ClassScheme scheme);
ClassScheme parse_scheme(std::string_view text);

struct ClassBreaks {
    ClassScheme scheme = ClassScheme::EqualInterval;
    std::vector<double> breaks; // ascending, size k-1
    int k = 1;
    bool degenerate = false;

    /// Values on a break fall into the lower class.
    int class_of(double value) const;
};

ClassBreaks classify(const std::vector<double>& values, int k, ClassScheme scheme);

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

using ColorRamp = std::array<Rgb, 4>;

/// Named four-colour ramps ("reds", "blues", "greens", "purples").
const ColorRamp& color_ramp(const std::string& name);
Rgb class_color(const ColorRamp& ramp, int class_index, int k);

inline constexpr Rgb kBackground{255, 255, 255};
inline constexpr int kMaxImageSide = 4096;

struct MapStyle {
    std::string attribute;
    std::string ramp = "reds";
    int k = 4;
    ClassScheme scheme = ClassScheme::EqualInterval;
};

/// Parses "attr:ramp:k" with an optional ":scheme" suffix.
MapStyle parse_style(std::string_view text);

struct MapRequest {
    std::vector<std::string> layer_ids; // bottom to top
    BBox bbox;
    int width = 256;
    int height = 256;
    std::optional<MapStyle> style;
};

/// Renders an ASCII PPM ("P3"). Pixel (0,0) is the top-left corner at
/// (bbox.xmin, bbox.ymax); layers paint bottom to top.
std::string render_map(const MapRequest& req, const geo::Catalog& catalog);

} // namespace soafog::overlay
