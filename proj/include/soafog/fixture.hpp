#pragma once

#include "soafog/geodata.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace soafog::fixture {

// Synthetic district-level malaria dataset. District outlines are convex
// quads on a jittered grid over [0,1000]x[0,1000]; the geometry depends only
// on the seed, the attributes on the seed and the year.
struct FixtureOptions {
    int year_from = 2011;
    int year_to = 2014;
    int districts = 6;
    std::uint64_t seed = 7;
};

inline constexpr double kExtent = 1000.0;

std::vector<std::string> district_names(int count);

std::string year_layer_id(int year);
inline constexpr const char* kBaseRasterId = "maharashtra_base";
inline constexpr const char* kZonesLayerId = "risk_zones";

/// District polygons for one year with district, year, positives, deaths.
geo::VectorLayer district_layer(const FixtureOptions& opts, int year);

/// 100x100 grid at the origin, cellsize 10, cell (r, c) = r*100+c.
geo::RasterGrid base_raster();

/// Convex risk-zone polygons scattered over the extent.
geo::VectorLayer risk_zones(const FixtureOptions& opts, int count = 8);

/// Individual case reports as points inside each district, `per_district`
/// per district. Grouping them by (district, year) reproduces a summary with
/// one row per district whatever the batch size.
geo::VectorLayer case_batch(const FixtureOptions& opts, int year, int per_district, std::uint64_t batch_seed);

struct GeneratedFile {
    std::string path;
    std::string layer_id;
};

/// Writes one vector file per year, the base raster and manifest.json.
/// Returns the written files in order.
std::vector<GeneratedFile> write_fixture(const FixtureOptions& opts, const std::filesystem::path& dir,
                                         bool with_zones = false);

nlohmann::json manifest_json(const FixtureOptions& opts, const std::vector<GeneratedFile>& files);

/// Parses "2011-2014" or "2011".
std::pair<int, int> parse_year_range(const std::string& text);

} // namespace soafog::fixture
