// Prints one PASS/FAIL line per acceptance criterion; exits non-zero if any fail.

#include "soafog/cli.hpp"
#include "soafog/cloudtier.hpp"
#include "soafog/fixture.hpp"
#include "soafog/fogtier.hpp"
#include "soafog/overlay.hpp"
#include "soafog/security.hpp"
#include "soafog/simnet.hpp"

#include "fog_helpers.hpp"
#include "golden.hpp"
#include "oracles.hpp"
#include "policy_universe.hpp"
#include "rfc4231.hpp"
#include "test_util.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

using namespace soafog;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

Outcome truth_table() {
    const auto t0 = Clock::now();
    const auto r = universe::run_truth_table();
    const double secs = seconds_since(t0);
    std::ostringstream d;
    d << r.cases << " cases, " << r.mismatches << " mismatches, " << fmt("%.2f s", secs);
    if (r.mismatches) d << "; first: " << r.first_mismatch;
    return {r.mismatches == 0 && r.cases > 0 && secs < 10.0, d.str()};
}

Outcome random_policies() {
    const auto r = universe::run_random_policies(10'000, 2024);
    const auto bad = r.read_up + r.default_allow + r.deny_lifted + r.oracle_mismatch;
    std::ostringstream d;
    d << r.policies << " policies, " << r.queries << " queries, read_up=" << r.read_up
      << " default_allow=" << r.default_allow << " deny_lifted=" << r.deny_lifted
      << " oracle_mismatch=" << r.oracle_mismatch;
    return {bad == 0 && r.policies == 10'000, d.str()};
}

Outcome geometry() {
    const auto t0 = Clock::now();
    fixture::FixtureOptions opts;
    const auto districts = fixture::district_layer(opts, 2011);
    const auto zones = fixture::risk_zones(opts);
    const auto out = overlay::intersect_layers(districts, zones, 1.0);

    auto polygon_of = [](const geo::VectorLayer& layer, const char* attr, const std::string& value) {
        for (const auto& f : layer.features) {
            if (std::get<std::string>(f.properties.at(attr)) == value) return std::get<geo::Polygon>(f.geometry);
        }
        throw std::runtime_error("no feature " + value);
    };

    std::size_t pairs = 0, within = 0;
    double worst = 0.0;
    std::uint64_t seed = 1;
    for (const auto& f : out.features) {
        const double area = std::get<double>(f.properties.at("area"));
        const auto a = polygon_of(districts, "district", std::get<std::string>(f.properties.at("district")));
        const auto b = polygon_of(zones, "zone", std::get<std::string>(f.properties.at("zone")));
        const auto est = oracle::mc_intersection_area(a, b, 1'000'000, ++seed);
        const double z = est.sigma > 0 ? std::abs(area - est.area) / est.sigma : (area == est.area ? 0.0 : 1e9);
        worst = std::max(worst, z);
        ++pairs;
        if (z <= 3.0) ++within;
    }

    const auto grid = fixture::base_raster();
    const auto rows = overlay::zonal_stats(grid, districts, "district");
    std::vector<geo::Polygon> polys;
    for (const auto& f : districts.features) polys.push_back(std::get<geo::Polygon>(f.geometry));
    const auto expect = oracle::zonal(grid, polys);
    bool zonal_exact = rows.size() == expect.size();
    for (std::size_t i = 0; zonal_exact && i < rows.size(); ++i) {
        zonal_exact = rows[i].count == expect[i].count && rows[i].sum.value_or(0) == expect[i].sum &&
                      (rows[i].count == 0 || (*rows[i].min == expect[i].min && *rows[i].max == expect[i].max));
    }

    const double secs = seconds_since(t0);
    std::ostringstream d;
    d << within << "/" << pairs << " pairs within 3 sigma (worst " << fmt("%.2f", worst) << "), zonal "
      << (zonal_exact ? "exact" : "MISMATCH") << " on " << grid.ncols << "x" << grid.nrows << ", "
      << fmt("%.1f s", secs);
    return {pairs >= 20 && within == pairs && zonal_exact && grid.ncols == 100 && grid.nrows == 100 && secs < 60.0,
            d.str()};
}

// Link whose transfers fail on a seeded schedule.
class FlakyLink final : public fog::Link {
public:
    FlakyLink(std::uint64_t seed, double p_down) : rng_(seed), p_down_(p_down) {}
    bool up() override { return std::bernoulli_distribution(1.0 - p_down_)(rng_); }
    bool carry(std::size_t) override { return std::bernoulli_distribution(1.0 - p_down_)(rng_); }

private:
    std::mt19937_64 rng_;
    double p_down_;
};

// Delivers into a journaled CloudStore; the process dies at the chosen post,
// either before the cloud sees it or after the cloud stored it but before
// the fog learns of the ack.
class DyingEndpoint final : public fog::CloudEndpoint {
public:
    DyingEndpoint(cloud::CloudStore& store, int die_at, bool after_store)
        : store_(store), die_at_(die_at), after_store_(after_store) {}
    std::optional<HttpResponse> post_ingest(const std::string& body) override {
        if (++posts_ == die_at_ && !after_store_) _exit(9);
        auto resp = store_.handle_request(make_request("POST", "/ingest", body));
        if (posts_ == die_at_) _exit(9);
        return resp;
    }

private:
    cloud::CloudStore& store_;
    int posts_ = 0;
    int die_at_;
    bool after_store_;
};

std::map<std::string, int> journal_counts(const std::string& path) {
    std::map<std::string, int> counts;
    std::istringstream in(testutil::slurp(path));
    for (std::string line; std::getline(in, line);) {
        auto j = json::parse(line, nullptr, false);
        if (!j.is_discarded() && j.value("t", "") == "summary") ++counts[j["item_id"].get<std::string>()];
    }
    return counts;
}

std::string summary_payload(int year, int batch) {
    fixture::FixtureOptions opts;
    const auto cases = fixture::case_batch(opts, year, 5, static_cast<std::uint64_t>(batch));
    return fog::aggregate_summary(cases, {"district", "year"}, {"positives", "deaths"}).serialize();
}

// One schedule: several fog "process lifetimes", each a forked child that
// enqueues a few items and flushes over a flaky link until it is killed or
// finishes. The parent then restarts the fog once more on a healthy link.
bool one_schedule(std::uint64_t seed, std::string& why, std::size_t& kills) {
    testutil::TempDir dir;
    const auto queue_dir = dir / "queue";
    const auto journal = (dir / "cloud.jsonl").string();
    const auto enqueued_log = (dir / "enqueued.txt").string();
    std::mt19937_64 rng(seed);
    const int lifetimes = 3 + static_cast<int>(rng() % 4);

    for (int life = 0; life < lifetimes; ++life) {
        const auto child_seed = rng();
        const pid_t pid = fork();
        if (pid < 0) {
            why = "fork failed";
            return false;
        }
        if (pid == 0) {
            std::mt19937_64 crng(child_seed);
            fog::SyncQueue queue(queue_dir, 1 << 24);
            cloud::CloudStore store(journal);
            fogtest::register_node(store);
            const int adds = 2 + static_cast<int>(crng() % 5);
            std::ofstream log(enqueued_log, std::ios::app);
            for (int i = 0; i < adds; ++i) {
                const auto item = queue.enqueue(fog::SyncKind::Summary,
                                                summary_payload(2011 + i % 4, static_cast<int>(crng() % 1000)),
                                                "fog-test", "k1", fogtest::kKey);
                log << item.item_id << '\n';
            }
            log.close();
            FlakyLink link(crng(), 0.2 + 0.5 * std::uniform_real_distribution<double>()(crng));
            DyingEndpoint cloud(store, 1 + static_cast<int>(crng() % 8), crng() % 2 == 0);
            for (int pass = 0; pass < 6 && queue.size() > 0; ++pass) fog::flush_sync(queue, link, cloud, {0});
            _exit(0);
        }
        int status = 0;
        waitpid(pid, &status, 0);
        if (!WIFEXITED(status) || (WEXITSTATUS(status) != 0 && WEXITSTATUS(status) != 9)) {
            why = "child ended abnormally";
            return false;
        }
        if (WEXITSTATUS(status) == 9) ++kills;
    }

    std::set<std::string> enqueued;
    {
        std::istringstream in(testutil::slurp(enqueued_log));
        for (std::string id; std::getline(in, id);) enqueued.insert(id);
    }

    fog::SyncQueue queue(queue_dir, 1 << 24);
    cloud::CloudStore store(journal);
    fogtest::register_node(store);
    fogtest::StoreEndpoint endpoint(store);
    fog::AlwaysUpLink up;
    for (int pass = 0; pass < 10 && queue.size() > 0; ++pass) fog::flush_sync(queue, up, endpoint, {0});

    const auto counts = journal_counts(journal);
    std::set<std::string> stored;
    for (const auto& [id, n] : counts) {
        stored.insert(id);
        if (n != 1) {
            why = "item " + id + " stored " + std::to_string(n) + " times";
            return false;
        }
    }
    if (queue.size() != 0) {
        why = std::to_string(queue.size()) + " items still queued";
        return false;
    }
    if (stored != store.item_ids() || stored != enqueued) {
        why = "stored set differs from enqueued set";
        return false;
    }
    return true;
}

Outcome exactly_once() {
    std::size_t ok = 0, kills = 0;
    std::string first_failure;
    for (std::uint64_t s = 0; s < 50; ++s) {
        std::string why;
        if (one_schedule(1000 + s, why, kills)) {
            ++ok;
        } else if (first_failure.empty()) {
            first_failure = "schedule " + std::to_string(s) + ": " + why;
        }
    }
    std::ostringstream d;
    d << ok << "/50 schedules exactly-once, " << kills << " fog processes killed mid-flush";
    if (!first_failure.empty()) d << "; " << first_failure;
    return {ok == 50, d.str()};
}

sim::ScenarioConfig scenario(const std::string& name) {
    return sim::ScenarioConfig::from_json(json::parse(testutil::slurp(std::string(SOAFOG_SCENARIOS) + "/" + name)));
}

Outcome bandwidth() {
    auto fog1 = scenario("fog_mediated.json");
    auto direct1 = scenario("cloud_direct.json");
    auto fog10 = fog1, direct10 = direct1;
    fog10.dataset.cases_per_district *= 10;
    direct10.dataset.cases_per_district *= 10;
    const double f1 = static_cast<double>(sim::run_scenario(fog1).bytes_to_cloud);
    const double d1 = static_cast<double>(sim::run_scenario(direct1).bytes_to_cloud);
    const double f10 = static_cast<double>(sim::run_scenario(fog10).bytes_to_cloud);
    const double d10 = static_cast<double>(sim::run_scenario(direct10).bytes_to_cloud);
    std::ostringstream d;
    d << "fog " << f1 << " B vs direct " << d1 << " B; x10 features: direct " << fmt("x%.2f", d10 / d1) << ", fog "
      << fmt("x%.2f", f10 / f1);
    return {f1 < d1 && d10 >= 9.0 * d1 && f10 < 2.0 * f1, d.str()};
}

Outcome autonomy() {
    const auto fog_cfg = scenario("fog_mediated.json");
    const auto direct_cfg = scenario("cloud_direct.json");
    double down = 0.0;
    for (const auto& o : fog_cfg.fog_cloud.outages) down += o.end_ms - o.start_ms;
    double think = 0.0;
    for (const auto& c : direct_cfg.clients) think = std::max(think, c.think_ms);
    const auto fog = sim::run_scenario(fog_cfg);
    const auto direct = sim::run_scenario(direct_cfg);
    const double bound = 2.0 / 3.0 + think / direct_cfg.duration_ms;
    std::ostringstream d;
    d << "outage " << fmt("%.3f", down / fog_cfg.duration_ms) << " of run; fog read availability "
      << fmt("%.4f", fog.read_availability) << ", direct " << fmt("%.4f", direct.read_availability) << " (bound "
      << fmt("%.4f", bound) << ")";
    const bool third = std::abs(down / fog_cfg.duration_ms - 1.0 / 3.0) < 1e-9;
    return {third && fog.read_availability == 1.0 && direct.read_availability <= bound, d.str()};
}

Outcome determinism() {
    testutil::TempDir dir;
    const auto scen = std::string(SOAFOG_SCENARIOS) + "/fog_mediated.json";
    std::ostringstream sink;
    bool ok = true;
    for (const char* name : {"a.json", "b.json"}) {
        ok = ok && cli::run({"simulate", "--scenario", scen, "--out", (dir / name).string()}, sink, sink) == 0;
    }
    const bool reports = ok && testutil::slurp(dir / "a.json") == testutil::slurp(dir / "b.json") &&
                         testutil::slurp(dir / "a.csv") == testutil::slurp(dir / "b.csv");

    const auto data = dir / "data";
    const auto cat = dir / "catalog";
    ok = cli::run({"fixture-gen", "--out", data.string()}, sink, sink) == 0;
    for (const char* f : {"maharashtra_base.asc", "maharashtra_malaria_2011.json"}) {
        ok = ok && cli::run({"ingest", "--catalog", cat.string(), "--file", (data / f).string()}, sink, sink) == 0;
    }
    const auto ppm = (dir / "map.ppm").string();
    ok = ok && cli::run({"render", "--catalog", cat.string(), "--layers", golden::kLayers, "--bbox", golden::kBBox,
                         "--style", golden::kStyle, "--out", ppm},
                        sink, sink) == 0;
    const bool image = ok && testutil::slurp(ppm) == testutil::slurp(golden::kFile);
    std::ostringstream d;
    d << "reports " << (reports ? "identical" : "DIFFER") << ", render " << (image ? "matches" : "DIFFERS from")
      << " golden";
    return {reports && image, d.str()};
}

Outcome hmac_vectors() {
    std::size_t ok = 0, total = 0;
    for (const auto& v : rfc4231::vectors()) {
        ++total;
        if (hex_encode(security::hmac_sha256(v.key, v.data)).substr(0, v.mac_hex.size()) == v.mac_hex) ++ok;
    }
    return {ok == total && total == 7, std::to_string(ok) + "/" + std::to_string(total) + " RFC 4231 cases"};
}

} // namespace

int main() {
    const std::pair<const char*, Outcome (*)()> criteria[] = {
        {"security truth table", truth_table},
        {"no read-up and deny-by-default", random_policies},
        {"geometry oracle agreement", geometry},
        {"exactly-once sync", exactly_once},
        {"bandwidth scaling", bandwidth},
        {"autonomy under outage", autonomy},
        {"end-to-end determinism", determinism},
        {"HMAC test vectors", hmac_vectors},
    };
    int failed = 0;
    int n = 0;
    for (const auto& [name, check] : criteria) {
        ++n;
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::cout << (o.pass ? "PASS" : "FAIL") << " " << n << " " << name << ": " << o.detail << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
