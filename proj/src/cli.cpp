#include "soafog/cli.hpp"

#include "soafog/cloudtier.hpp"
#include "soafog/fixture.hpp"
#include "soafog/fogtier.hpp"
#include "soafog/overlay.hpp"
#include "soafog/simnet.hpp"

#include "CLI11.hpp"
#include "httplib.h"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <csignal>
#include <fstream>
#include <sstream>
#include <thread>

namespace soafog::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + path, path);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path, path);
}

json read_json(const std::string& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Syntax, path + ": " + e.what(), path);
    }
}

std::pair<std::string, int> split_host_port(const std::string& listen) {
    auto colon = listen.rfind(':');
    if (colon == std::string::npos) throw Error(ErrorCode::ConfigError, "listen must be host:port", "listen");
    return {listen.substr(0, colon), std::stoi(listen.substr(colon + 1))};
}

HttpRequest from_httplib(const httplib::Request& r) {
    HttpRequest req;
    req.method = r.method;
    req.path = r.path;
    for (const auto& [k, v] : r.params) req.query.emplace(k, v);
    for (const auto& [k, v] : r.headers) {
        std::string name = k;
        for (auto& ch : name) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        req.headers.emplace(std::move(name), v);
    }
    req.body = r.body;
    return req;
}

void mount(httplib::Server& server, std::function<HttpResponse(const HttpRequest&)> handler) {
    auto fn = [handler](const httplib::Request& r, httplib::Response& res) {
        auto resp = handler(from_httplib(r));
        res.status = resp.status;
        res.set_content(resp.body, resp.content_type);
    };
    server.Get(".*", fn);
    server.Post(".*", fn);
}

std::atomic<httplib::Server*> g_server{nullptr};

extern "C" void on_signal(int) {
    if (auto* s = g_server.load()) s->stop();
}

void serve(httplib::Server& server, const std::string& listen, std::ostream& out) {
    auto [host, port] = split_host_port(listen);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    out << "listening on " << host << ":" << port << std::endl;
    if (!server.listen(host, port)) {
        g_server = nullptr;
        throw Error(ErrorCode::Io, "cannot listen on " + listen, listen);
    }
    g_server = nullptr;
}

class HttpCloud final : public fog::CloudEndpoint {
public:
    explicit HttpCloud(const std::string& address) : client_(address) {
        client_.set_connection_timeout(2, 0);
        client_.set_read_timeout(5, 0);
    }
    std::optional<HttpResponse> post_ingest(const std::string& body) override {
        auto res = client_.Post("/ingest", body, "application/json");
        if (!res) return std::nullopt;
        return HttpResponse{res->status, res->get_header_value("Content-Type"), res->body};
    }

private:
    httplib::Client client_;
};

std::string layer_id_from_path(const std::string& path) {
    auto stem = fs::path(path).stem().string();
    for (auto& ch : stem) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return stem;
}

int cmd_ingest(const Command& cmd, std::ostream& out) {
    auto catalog = geo::Catalog::load(cmd.catalog);
    const auto id = cmd.id.empty() ? layer_id_from_path(cmd.file) : cmd.id;
    if (!geo::valid_layer_id(id)) {
        throw Error(ErrorCode::Validation, "invalid layer id: " + id + " (use --id)", id);
    }
    const auto label = parse_sensitivity(cmd.sensitivity);
    const auto text = read_text(cmd.file);
    if (fs::path(cmd.file).extension() == ".asc") {
        auto grid = geo::parse_raster_grid(text);
        grid.metadata.layer_id = id;
        grid.metadata.title = id;
        grid.metadata.kind = geo::LayerKind::Raster;
        grid.metadata.sensitivity = label;
        catalog.put(grid);
    } else {
        auto layer = geo::parse_vector_layer(text);
        layer.metadata.layer_id = id;
        layer.metadata.title = id;
        layer.metadata.sensitivity = label;
        std::optional<geo::TemporalExtent> years;
        for (const auto& f : layer.features) {
            auto it = f.properties.find("year");
            if (it == f.properties.end() || !std::holds_alternative<double>(it->second)) {
                years.reset();
                break;
            }
            const int y = static_cast<int>(std::get<double>(it->second));
            if (!years) years = geo::TemporalExtent{y, y};
            years->year_from = std::min(years->year_from, y);
            years->year_to = std::max(years->year_to, y);
        }
        layer.metadata.temporal_extent = years;
        catalog.put(layer);
    }
    catalog.save(cmd.catalog);
    out << id << "\n";
    return 0;
}

int cmd_serve_fog(const Command& cmd, std::ostream& out, std::ostream& err) {
    const auto doc = read_json(cmd.config);
    auto cfg = fog::FogConfig::from_json(doc);

    auto policy = std::make_shared<security::PolicyStore>();
    json policy_doc = json::object();
    if (!cfg.policy_file.empty()) policy_doc = read_json(cfg.policy_file);
    security::PolicyStore::load_json(*policy, policy_doc);
    std::shared_ptr<std::ofstream> audit_out;
    if (!cfg.audit_log.empty()) {
        audit_out = std::make_shared<std::ofstream>(cfg.audit_log, std::ios::app);
        auto mu = std::make_shared<std::mutex>();
        policy->set_audit_sink([audit_out, mu](const std::string& line) {
            std::lock_guard lock(*mu);
            *audit_out << line << '\n';
            audit_out->flush();
        });
    }

    const auto queue_dir = cfg.queue_dir.empty() ? std::string("fog-queue") : cfg.queue_dir;
    auto queue = std::make_shared<fog::SyncQueue>(queue_dir, cfg.storage_budget_bytes);
    fog::FogNode node(cfg, policy, queue);
    if (!cfg.catalog_dir.empty()) node.load_catalog(geo::Catalog::load(cfg.catalog_dir));
    // Labels in the policy file override the catalog's own.
    const auto labels = policy_doc.value("labels", json::object());
    for (const auto& [id, label] : labels.items()) {
        policy->set_layer_label(id, parse_sensitivity(label.get<std::string>()));
    }
    node.cache_evict();

    std::mutex stop_mu;
    std::condition_variable stop_cv;
    bool stopping = false;
    std::thread flusher([&] {
        fog::AlwaysUpLink link;
        HttpCloud cloud(cfg.cloud_address);
        std::unique_lock lock(stop_mu);
        auto wait = std::chrono::milliseconds(cfg.flush_interval_ms);
        while (!stop_cv.wait_for(lock, wait, [&] { return stopping; })) {
            lock.unlock();
            auto rep = node.flush(link, cloud);
            if (rep.sent || rep.failed) {
                err << "sync: sent=" << rep.sent << " acked=" << rep.acked << " failed=" << rep.failed
                    << " remaining=" << rep.remaining << std::endl;
            }
            wait = std::chrono::milliseconds(rep.retry_after_ms.value_or(cfg.flush_interval_ms));
            lock.lock();
        }
    });

    httplib::Server server;
    mount(server, [&node](const HttpRequest& r) { return node.handle_request(r); });
    try {
        serve(server, cfg.listen, out);
    } catch (...) {
        {
            std::lock_guard lock(stop_mu);
            stopping = true;
        }
        stop_cv.notify_all();
        flusher.join();
        throw;
    }
    {
        std::lock_guard lock(stop_mu);
        stopping = true;
    }
    stop_cv.notify_all();
    flusher.join();
    return 0;
}

int cmd_serve_cloud(const Command& cmd, std::ostream& out) {
    const auto doc = read_json(cmd.config);
    std::string listen, journal;
    cloud::CloudStore* store_ptr = nullptr;
    std::unique_ptr<cloud::CloudStore> store;
    try {
        listen = doc.value("listen", std::string("127.0.0.1:9090"));
        journal = doc.value("journal", std::string());
        store = std::make_unique<cloud::CloudStore>(journal);
        for (const auto& n : doc.at("nodes")) {
            auto key = hex_decode(n.at("sync_key_hex").get<std::string>());
            if (!key) throw Error(ErrorCode::ConfigError, "sync_key_hex is not hex", "nodes");
            store->register_node(n.at("node_id").get<std::string>(), {n.at("sync_key_id").get<std::string>(), *key});
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("bad cloud config: ") + e.what(), cmd.config);
    }
    store_ptr = store.get();
    httplib::Server server;
    mount(server, [store_ptr](const HttpRequest& r) { return store_ptr->handle_request(r); });
    serve(server, listen, out);
    return 0;
}

int cmd_user(const Command& cmd, std::ostream& out) {
    security::PolicyStore store;
    if (fs::exists(cmd.policy)) {
        security::PolicyStore::load_json(store, read_json(cmd.policy));
    } else if (cmd.name == "user add") {
        security::PolicyStore::load_json(store, json::object());
    } else {
        throw Error(ErrorCode::Io, "no such policy file: " + cmd.policy, cmd.policy);
    }
    if (cmd.name == "user add") {
        if (store.principal(cmd.id)) throw Error(ErrorCode::InvalidChange, "principal exists: " + cmd.id, cmd.id);
        store.add_principal(cmd.id, cmd.id, cmd.secret, {security::parse_role(cmd.role)});
        if (!cmd.label.empty()) store.set_clearance(cmd.id, parse_sensitivity(cmd.label));
    } else if (cmd.name == "user grant") {
        if (!store.principal(cmd.id)) throw Error(ErrorCode::InvalidChange, "unknown principal: " + cmd.id, cmd.id);
        store.grant_role(cmd.id, security::parse_role(cmd.role));
    } else {
        if (!store.principal(cmd.id)) throw Error(ErrorCode::InvalidChange, "unknown principal: " + cmd.id, cmd.id);
        store.set_clearance(cmd.id, parse_sensitivity(cmd.label));
    }
    auto tmp = cmd.policy + ".tmp";
    write_text(tmp, store.to_json().dump(2) + "\n");
    fs::rename(tmp, cmd.policy);
    out << cmd.id << "\n";
    return 0;
}

int cmd_request(const Command& cmd, std::ostream& out, std::ostream& err) {
    // Split "http://host:port/path?query" into base and target.
    auto scheme_end = cmd.url.find("://");
    auto path_start = cmd.url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    const auto base = path_start == std::string::npos ? cmd.url : cmd.url.substr(0, path_start);
    const auto target = path_start == std::string::npos ? std::string("/") : cmd.url.substr(path_start);
    httplib::Client client(base);
    httplib::Headers headers;
    if (!cmd.token.empty()) headers.emplace("Authorization", "Bearer " + cmd.token);
    httplib::Result res;
    if (cmd.method == "GET") {
        res = client.Get(target, headers);
    } else if (cmd.method == "POST") {
        res = client.Post(target, headers, cmd.data, "application/json");
    } else {
        throw Error(ErrorCode::ParamError, "method must be GET or POST", "method");
    }
    if (!res) throw Error(ErrorCode::Io, "request failed: " + httplib::to_string(res.error()), cmd.url);
    out << res->body;
    if (!res->body.empty() && res->body.back() != '\n') out << "\n";
    if (res->status >= 400) {
        err << "status " << res->status << "\n";
        return 1;
    }
    return 0;
}

int cmd_render(const Command& cmd, std::ostream& out) {
    auto catalog = geo::Catalog::load(cmd.catalog);
    overlay::MapRequest req;
    std::istringstream ids(cmd.layers);
    std::string id;
    while (std::getline(ids, id, ',')) {
        if (!id.empty()) req.layer_ids.push_back(id);
    }
    req.bbox = geo::parse_bbox(cmd.bbox);
    req.width = cmd.width;
    req.height = cmd.height;
    if (!cmd.style.empty()) req.style = overlay::parse_style(cmd.style);
    write_text(cmd.out, overlay::render_map(req, catalog));
    out << cmd.out << "\n";
    return 0;
}

std::string csv_path_for(const std::string& json_path) {
    auto p = fs::path(json_path);
    return p.replace_extension(".csv").string();
}

int cmd_simulate(const Command& cmd, std::ostream& out) {
    auto cfg = sim::ScenarioConfig::from_json(read_json(cmd.scenario));
    auto report = sim::run_scenario(cfg);
    write_text(cmd.out, report.to_json().dump(2) + "\n");
    write_text(csv_path_for(cmd.out), report.to_csv());
    out << cmd.out << "\n";
    return 0;
}

int cmd_compare(const Command& cmd, std::ostream& out) {
    auto a = sim::MetricsReport::from_json(read_json(cmd.a));
    auto b = sim::MetricsReport::from_json(read_json(cmd.b));
    auto cmp = sim::compare(a, b);
    out << cmp.text;
    if (!cmd.csv.empty()) write_text(cmd.csv, cmp.csv);
    return 0;
}

int cmd_fixture_gen(const Command& cmd, std::ostream& out) {
    fixture::FixtureOptions opts;
    std::tie(opts.year_from, opts.year_to) = fixture::parse_year_range(cmd.years);
    opts.districts = cmd.districts;
    opts.seed = cmd.seed;
    for (const auto& f : fixture::write_fixture(opts, cmd.out, cmd.zones)) out << f.path << "\n";
    out << (fs::path(cmd.out) / "manifest.json").string() << "\n";
    return 0;
}

} // namespace

Command parse_args(const std::vector<std::string>& args) {
    Command cmd;
    CLI::App app{"Fog-tier geospatial services, cloud store and scenario simulator", "soa-fog"};
    app.require_subcommand(1, 1);

    auto* ingest = app.add_subcommand("ingest", "Add a GeoJSON or ASCII grid file to a catalog directory");
    ingest->add_option("--catalog", cmd.catalog, "Catalog directory")->required();
    ingest->add_option("--file", cmd.file, "Layer file (.geojson/.json or .asc)")->required();
    ingest->add_option("--sensitivity", cmd.sensitivity, "public, restricted or confidential");
    ingest->add_option("--id", cmd.id, "Layer id (default: file stem)");

    auto* serve_fog = app.add_subcommand("serve-fog", "Run a fog node HTTP server");
    serve_fog->add_option("--config", cmd.config, "Fog config JSON")->required();

    auto* serve_cloud = app.add_subcommand("serve-cloud", "Run the cloud store HTTP server");
    serve_cloud->add_option("--config", cmd.config, "Cloud config JSON")->required();

    auto* user = app.add_subcommand("user", "Edit a policy file");
    user->require_subcommand(1, 1);
    auto* user_add = user->add_subcommand("add", "Add a principal");
    user_add->add_option("--policy", cmd.policy, "Policy JSON file")->required();
    user_add->add_option("--id", cmd.id, "Principal id")->required();
    user_add->add_option("--secret", cmd.secret, "Login secret")->required();
    user_add->add_option("--role", cmd.role, "Initial role")->required();
    user_add->add_option("--clearance", cmd.label, "Clearance label");
    auto* user_grant = user->add_subcommand("grant", "Grant a role");
    user_grant->add_option("--policy", cmd.policy, "Policy JSON file")->required();
    user_grant->add_option("--id", cmd.id, "Principal id")->required();
    user_grant->add_option("--role", cmd.role, "Role to grant")->required();
    auto* user_clear = user->add_subcommand("set-clearance", "Set a clearance label");
    user_clear->add_option("--policy", cmd.policy, "Policy JSON file")->required();
    user_clear->add_option("--id", cmd.id, "Principal id")->required();
    user_clear->add_option("--label", cmd.label, "public, restricted or confidential")->required();

    auto* request = app.add_subcommand("request", "Send one HTTP request to a fog or cloud server");
    request->add_option("--url", cmd.url, "Full URL")->required();
    request->add_option("--token", cmd.token, "Bearer token");
    request->add_option("--method", cmd.method, "GET or POST");
    request->add_option("--data", cmd.data, "Request body");

    auto* render = app.add_subcommand("render", "Render layers from a catalog to a PPM image");
    render->add_option("--catalog", cmd.catalog, "Catalog directory")->required();
    render->add_option("--layers", cmd.layers, "Comma-separated layer ids, bottom first")->required();
    render->add_option("--bbox", cmd.bbox, "xmin,ymin,xmax,ymax")->required();
    render->add_option("--out", cmd.out, "Output .ppm path")->required();
    render->add_option("--width", cmd.width, "Image width");
    render->add_option("--height", cmd.height, "Image height");
    render->add_option("--style", cmd.style, "attr:ramp:k[:scheme]");

    auto* simulate = app.add_subcommand("simulate", "Run a scenario and write its metrics report");
    simulate->add_option("--scenario", cmd.scenario, "Scenario JSON")->required();
    simulate->add_option("--out", cmd.out, "Report JSON path (CSV written alongside)")->required();

    auto* compare = app.add_subcommand("compare", "Compare two metrics reports");
    compare->add_option("--a", cmd.a, "First report")->required();
    compare->add_option("--b", cmd.b, "Second report")->required();
    compare->add_option("--csv", cmd.csv, "Also write the comparison as CSV");

    auto* fixture_gen = app.add_subcommand("fixture-gen", "Write the synthetic district dataset");
    fixture_gen->add_option("--years", cmd.years, "Year range, e.g. 2011-2014");
    fixture_gen->add_option("--districts", cmd.districts, "District count");
    fixture_gen->add_option("--seed", cmd.seed, "Generator seed");
    fixture_gen->add_option("--out", cmd.out, "Output directory")->required();
    fixture_gen->add_flag("--zones", cmd.zones, "Also write the risk-zone layer");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        throw UsageError(0, app.help());
    } catch (const CLI::CallForAllHelp&) {
        throw UsageError(0, app.help("", CLI::AppFormatMode::All));
    } catch (const CLI::ParseError& e) {
        throw UsageError(2, e.what());
    }

    for (auto* sub : app.get_subcommands()) {
        cmd.name = sub->get_name();
        if (sub == user) cmd.name += " " + user->get_subcommands().front()->get_name();
    }
    return cmd;
}

int execute_command(const Command& cmd, std::ostream& out, std::ostream& err) {
    try {
        if (cmd.name == "ingest") return cmd_ingest(cmd, out);
        if (cmd.name == "serve-fog") return cmd_serve_fog(cmd, out, err);
        if (cmd.name == "serve-cloud") return cmd_serve_cloud(cmd, out);
        if (cmd.name.rfind("user ", 0) == 0) return cmd_user(cmd, out);
        if (cmd.name == "request") return cmd_request(cmd, out, err);
        if (cmd.name == "render") return cmd_render(cmd, out);
        if (cmd.name == "simulate") return cmd_simulate(cmd, out);
        if (cmd.name == "compare") return cmd_compare(cmd, out);
        if (cmd.name == "fixture-gen") return cmd_fixture_gen(cmd, out);
        err << "soa-fog: unknown command: " << cmd.name << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "soa-fog: " << e.what() << "\n";
        return 1;
    }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Command cmd;
    try {
        cmd = parse_args(args);
    } catch (const UsageError& e) {
        (e.exit_code() == 0 ? out : err) << e.what() << (e.exit_code() == 0 ? "" : "\nRun with --help for usage.")
                                         << "\n";
        return e.exit_code();
    }
    return execute_command(cmd, out, err);
}

} // namespace soafog::cli
