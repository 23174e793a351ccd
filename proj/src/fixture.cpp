#include "soafog/fixture.hpp"

#include "soafog/encoding.hpp"
#include "soafog/overlay.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

namespace soafog::fixture {

using geo::Feature;
using geo::GeoPoint;
using geo::Polygon;
using nlohmann::json;

namespace {

constexpr const char* kNames[] = {"Mumbai",    "Pune",       "Nagpur",   "Thane",     "Nashik",   "Aurangabad",
                                  "Solapur",   "Kolhapur",   "Amravati", "Nanded",    "Sangli",   "Jalgaon",
                                  "Akola",     "Latur",      "Dhule",    "Ahmednagar", "Chandrapur", "Satara",
                                  "Ratnagiri", "Gadchiroli", "Yavatmal", "Beed",      "Wardha",   "Raigad"};

double round1(double v) { return std::round(v * 10.0) / 10.0; }

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t salt) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
    return std::mt19937_64(seq);
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit_uniform(rng); }

struct Grid {
    int cols = 1;
    int rows = 1;
};

Grid grid_for(int n) {
    Grid g;
    g.cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
    g.rows = (n + g.cols - 1) / g.cols;
    return g;
}

// Interior vertices move by at most 18% of a cell side on each axis, which
// keeps every quad convex (an affine image of a perturbed square).
std::vector<Polygon> district_polygons(const FixtureOptions& opts) {
    const auto g = grid_for(opts.districts);
    const double w = kExtent / g.cols;
    const double h = kExtent / g.rows;
    auto rng = stream(opts.seed, 0x6765'6f6d);
    std::vector<std::vector<GeoPoint>> v(g.cols + 1, std::vector<GeoPoint>(g.rows + 1));
    for (int i = 0; i <= g.cols; ++i) {
        for (int j = 0; j <= g.rows; ++j) {
            double x = i * w;
            double y = j * h;
            if (i > 0 && i < g.cols) x += uniform(rng, -0.18, 0.18) * w;
            if (j > 0 && j < g.rows) y += uniform(rng, -0.18, 0.18) * h;
            v[i][j] = {round1(x), round1(y)};
        }
    }
    std::vector<Polygon> out;
    for (int k = 0; k < opts.districts; ++k) {
        const int i = k % g.cols;
        const int j = g.rows - 1 - k / g.cols; // first district in the top row
        out.push_back(Polygon{{v[i][j], v[i + 1][j], v[i + 1][j + 1], v[i][j + 1]}, {}});
    }
    return out;
}

void check_options(const FixtureOptions& opts) {
    if (opts.districts < 1) throw Error(ErrorCode::ParamError, "districts must be >= 1", "districts");
    if (opts.year_from > opts.year_to) throw Error(ErrorCode::ParamError, "year range is reversed", "years");
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string(), path.string());
}

} // namespace

std::vector<std::string> district_names(int count) {
    constexpr int known = static_cast<int>(std::size(kNames));
    std::vector<std::string> out;
    for (int i = 0; i < count; ++i) {
        std::string name = kNames[i % known];
        if (i >= known) name += "_" + std::to_string(i / known + 1);
        out.push_back(std::move(name));
    }
    return out;
}

std::string year_layer_id(int year) { return "maharashtra_malaria_" + std::to_string(year); }

geo::VectorLayer district_layer(const FixtureOptions& opts, int year) {
    check_options(opts);
    const auto polys = district_polygons(opts);
    const auto names = district_names(opts.districts);
    auto base_rng = stream(opts.seed, 0x6261'7365);
    auto year_rng = stream(opts.seed, static_cast<std::uint64_t>(year));

    geo::VectorLayer layer;
    layer.metadata.layer_id = year_layer_id(year);
    layer.metadata.title = "Malaria positives by district " + std::to_string(year);
    layer.metadata.temporal_extent = geo::TemporalExtent{year, year};
    for (int k = 0; k < opts.districts; ++k) {
        const double base = std::round(uniform(base_rng, 200.0, 5000.0));
        const double positives = std::round(base * uniform(year_rng, 0.7, 1.3));
        const double deaths = std::round(positives * uniform(year_rng, 0.002, 0.02));
        layer.features.push_back(Feature{polys[k],
                                         {{"district", names[k]},
                                          {"year", static_cast<double>(year)},
                                          {"positives", positives},
                                          {"deaths", deaths}}});
    }
    layer.metadata.bbox = geo::layer_bbox(layer);
    return layer;
}

geo::RasterGrid base_raster() {
    geo::RasterGrid r;
    r.metadata.layer_id = kBaseRasterId;
    r.metadata.title = "Base surface";
    r.metadata.kind = geo::LayerKind::Raster;
    r.ncols = 100;
    r.nrows = 100;
    r.cellsize = 10.0;
    r.nodata = -9999.0;
    r.cells.resize(r.ncols * r.nrows);
    for (std::size_t row = 0; row < r.nrows; ++row) {
        for (std::size_t col = 0; col < r.ncols; ++col) {
            r.cells[row * r.ncols + col] = static_cast<double>(row * 100 + col);
        }
    }
    r.metadata.bbox = geo::layer_bbox(r);
    return r;
}

geo::VectorLayer risk_zones(const FixtureOptions& opts, int count) {
    auto rng = stream(opts.seed, 0x7a6f'6e65);
    geo::VectorLayer layer;
    layer.metadata.layer_id = kZonesLayerId;
    layer.metadata.title = "Vector risk zones";
    for (int z = 0; z < count; ++z) {
        const double cx = uniform(rng, 150.0, 850.0);
        const double cy = uniform(rng, 150.0, 850.0);
        const double radius = uniform(rng, 120.0, 260.0);
        const int sides = 5 + static_cast<int>(rng() % 4);
        const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        geo::Ring ring;
        for (int s = 0; s < sides; ++s) {
            const double a = phase + 2.0 * std::numbers::pi * s / sides;
            ring.push_back({round1(cx + radius * std::cos(a)), round1(cy + radius * std::sin(a))});
        }
        layer.features.push_back(Feature{Polygon{ring, {}},
                                         {{"zone", "Z" + std::to_string(z + 1)},
                                          {"risk", std::round(uniform(rng, 1.0, 5.0))}}});
    }
    layer.metadata.bbox = geo::layer_bbox(layer);
    return layer;
}

geo::VectorLayer case_batch(const FixtureOptions& opts, int year, int per_district, std::uint64_t batch_seed) {
    check_options(opts);
    const auto polys = district_polygons(opts);
    const auto names = district_names(opts.districts);
    auto rng = stream(opts.seed ^ (batch_seed * 0x9e37'79b9'7f4a'7c15ULL), static_cast<std::uint64_t>(year) + 0x6361);
    geo::VectorLayer layer;
    layer.metadata.layer_id = "cases_" + std::to_string(year);
    layer.metadata.title = "Case reports " + std::to_string(year);
    layer.metadata.temporal_extent = geo::TemporalExtent{year, year};
    for (int k = 0; k < opts.districts; ++k) {
        const auto box = geo::geometry_bbox(polys[k]);
        for (int n = 0; n < per_district; ++n) {
            GeoPoint p;
            do {
                p = {round1(uniform(rng, box.xmin, box.xmax)), round1(uniform(rng, box.ymin, box.ymax))};
            } while (!overlay::point_in_polygon(p, polys[k]));
            const double positives = 1.0 + static_cast<double>(rng() % 5);
            const double deaths = unit_uniform(rng) < 0.05 ? 1.0 : 0.0;
            layer.features.push_back(Feature{p,
                                             {{"district", names[k]},
                                              {"year", static_cast<double>(year)},
                                              {"positives", positives},
                                              {"deaths", deaths}}});
        }
    }
    if (!layer.features.empty()) layer.metadata.bbox = geo::layer_bbox(layer);
    return layer;
}

json manifest_json(const FixtureOptions& opts, const std::vector<GeneratedFile>& files) {
    json totals = json::object();
    for (int year = opts.year_from; year <= opts.year_to; ++year) {
        double positives = 0.0, deaths = 0.0;
        json by_district = json::object();
        for (const auto& f : district_layer(opts, year).features) {
            const double p = std::get<double>(f.properties.at("positives"));
            const double d = std::get<double>(f.properties.at("deaths"));
            positives += p;
            deaths += d;
            by_district[std::get<std::string>(f.properties.at("district"))] = {{"positives", p}, {"deaths", d}};
        }
        totals[std::to_string(year)] = {
            {"features", opts.districts}, {"positives", positives}, {"deaths", deaths}, {"districts", by_district}};
    }
    json file_list = json::array();
    for (const auto& f : files) {
        file_list.push_back({{"file", std::filesystem::path(f.path).filename().string()}, {"layer_id", f.layer_id}});
    }
    return {{"dataset", "maharashtra"},
            {"seed", opts.seed},
            {"districts", opts.districts},
            {"years", {opts.year_from, opts.year_to}},
            {"files", file_list},
            {"totals", totals}};
}

std::vector<GeneratedFile> write_fixture(const FixtureOptions& opts, const std::filesystem::path& dir,
                                         bool with_zones) {
    check_options(opts);
    std::filesystem::create_directories(dir);
    std::vector<GeneratedFile> files;
    for (int year = opts.year_from; year <= opts.year_to; ++year) {
        auto layer = district_layer(opts, year);
        auto path = dir / (layer.metadata.layer_id + ".json");
        write_file(path, geo::serialize_vector_layer(layer));
        files.push_back({path.string(), layer.metadata.layer_id});
    }
    auto raster = base_raster();
    auto raster_path = dir / (std::string(kBaseRasterId) + ".asc");
    write_file(raster_path, geo::serialize_raster_grid(raster));
    files.push_back({raster_path.string(), kBaseRasterId});
    if (with_zones) {
        auto zones = risk_zones(opts);
        auto path = dir / (std::string(kZonesLayerId) + ".json");
        write_file(path, geo::serialize_vector_layer(zones));
        files.push_back({path.string(), kZonesLayerId});
    }
    write_file(dir / "manifest.json", manifest_json(opts, files).dump(2) + "\n");
    return files;
}

std::pair<int, int> parse_year_range(const std::string& text) {
    auto parse = [&](std::string_view s) {
        int v = 0;
        auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
            throw Error(ErrorCode::ParamError, "bad year range: " + text, "years");
        }
        return v;
    };
    auto dash = text.find('-');
    if (dash == std::string::npos) {
        int y = parse(text);
        return {y, y};
    }
    auto range = std::pair{parse(std::string_view(text).substr(0, dash)), parse(std::string_view(text).substr(dash + 1))};
    if (range.first > range.second) throw Error(ErrorCode::ParamError, "year range is reversed: " + text, "years");
    return range;
}

} // namespace soafog::fixture
