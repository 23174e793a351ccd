#include "soafog/simnet.hpp"

#include "soafog/cloudtier.hpp"
#include "soafog/encoding.hpp"
#include "soafog/fogtier.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <queue>
#include <random>
#include <sstream>

namespace soafog::sim {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& message, const std::string& field) {
    throw Error(ErrorCode::ConfigError, message, field);
}

template <typename E, std::size_t N>
E parse_named(std::string_view text, const std::pair<E, const char*> (&names)[N], const char* what) {
    for (const auto& [value, name] : names) {
        if (text == name) return value;
    }
    config_error(std::string("unknown ") + what + ": " + std::string(text), what);
}

template <typename E, std::size_t N>
std::string_view name_of(E value, const std::pair<E, const char*> (&names)[N]) {
    for (const auto& [v, name] : names) {
        if (v == value) return name;
    }
    return "?";
}

constexpr std::pair<Endpoint, const char*> kEndpoints[] = {{Endpoint::Capabilities, "capabilities"},
                                                           {Endpoint::Features, "features"},
                                                           {Endpoint::Map, "map"},
                                                           {Endpoint::Execute, "execute"},
                                                           {Endpoint::Upload, "upload"}};
constexpr std::pair<ClientKind, const char*> kKinds[] = {
    {ClientKind::Mobile, "mobile"}, {ClientKind::Thin, "thin"}, {ClientKind::Thick, "thick"}};
constexpr std::pair<Topology, const char*> kTopologies[] = {{Topology::FogMediated, "fog_mediated"},
                                                            {Topology::CloudDirect, "cloud_direct"}};

LinkSpec link_from_json(const json& j) {
    LinkSpec l;
    l.one_way_latency_ms = j.value("latency_ms", 0.0);
    l.bandwidth_bytes_per_s = j.value("bandwidth_bytes_per_s", 1.0e6);
    l.seed = j.value("seed", std::uint64_t{0});
    for (const auto& o : j.value("outages", json::array())) {
        l.outages.push_back({o.at(0).get<double>(), o.at(1).get<double>()});
    }
    return l;
}

json link_to_json(const LinkSpec& l) {
    json outages = json::array();
    for (const auto& o : l.outages) outages.push_back({o.start_ms, o.end_ms});
    return {{"latency_ms", l.one_way_latency_ms},
            {"bandwidth_bytes_per_s", l.bandwidth_bytes_per_s},
            {"outages", outages},
            {"seed", l.seed}};
}

json clients_to_json(const std::vector<ClientProfile>& clients) {
    json out = json::array();
    for (const auto& c : clients) {
        json mix = json::object();
        for (const auto& [e, w] : c.mix) mix[std::string(to_string(e))] = w;
        out.push_back({{"kind", to_string(c.kind)}, {"count", c.count}, {"think_ms", c.think_ms}, {"mix", mix}});
    }
    return out;
}

json dataset_to_json(const DatasetSpec& d) {
    return {{"fixture", d.fixture},
            {"years", {d.options.year_from, d.options.year_to}},
            {"districts", d.options.districts},
            {"seed", d.options.seed},
            {"cases_per_district", d.cases_per_district}};
}

double percentile(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) return 0.0;
    auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(sorted.size())));
    return sorted[std::max<std::size_t>(rank, 1) - 1];
}

// Removes the scratch queue directory when the run ends.
struct ScratchDir {
    std::filesystem::path path;
    ScratchDir() {
        auto tmpl = (std::filesystem::temp_directory_path() / "soafog-sim-XXXXXX").string();
        if (!::mkdtemp(tmpl.data())) throw Error(ErrorCode::Io, "cannot create scratch directory", tmpl);
        path = tmpl;
    }
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

// Carries flush traffic over a link on the virtual clock, starting at the
// moment the flush event fires.
class SimLink final : public fog::Link {
public:
    SimLink(const LinkSpec& spec, double start) : spec_(spec), cursor_(start) {}
    bool up() override { return !spec_.down_at(cursor_); }
    bool carry(std::size_t bytes) override {
        const double d = spec_.transfer_ms(bytes);
        const bool ok = spec_.clear(cursor_, d);
        cursor_ += d;
        return ok;
    }

private:
    const LinkSpec& spec_;
    double cursor_;
};

class SimCloud final : public fog::CloudEndpoint {
public:
    explicit SimCloud(cloud::CloudStore& store) : store_(store) {}
    std::optional<HttpResponse> post_ingest(const std::string& body) override {
        return store_.handle_request(make_request("POST", "/ingest", body));
    }

private:
    cloud::CloudStore& store_;
};

struct Client {
    ClientProfile profile;
    std::string name;
    std::string token;
    std::mt19937_64 rng;
    int uploads = 0;
};

struct Pending {
    Endpoint endpoint = Endpoint::Capabilities;
    HttpRequest request;
    double issued_at = 0.0;
    bool during_outage = false;
};

enum class EventType { Issue, Arrive, Complete, Flush };

struct Event {
    double t = 0.0;
    std::uint64_t seq = 0;
    EventType type = EventType::Issue;
    std::size_t client = 0;
    bool ok = false;

    bool operator>(const Event& o) const { return std::tie(t, seq) > std::tie(o.t, o.seq); }
};

struct Tally {
    std::size_t issued = 0, succeeded = 0, failed = 0;
    double latency_sum = 0.0;

    KindMetrics finish() const {
        return {issued, succeeded, failed, succeeded ? latency_sum / static_cast<double>(succeeded) : 0.0};
    }
};

security::Role role_for(ClientKind k) {
    switch (k) {
    case ClientKind::Mobile: return security::Role::MobileClient;
    case ClientKind::Thin: return security::Role::ThinClient;
    case ClientKind::Thick: return security::Role::ThickClient;
    }
    return security::Role::MobileClient;
}

class Simulation {
public:
    explicit Simulation(const ScenarioConfig& cfg) : cfg_(cfg) {
        now_ = 0.0;
        auto clock = [this] { return static_cast<std::int64_t>(std::llround(now_)); };

        sync_key_ = sha256_raw("soafog-sim-key-" + std::to_string(cfg_.seed));
        cloud_ = std::make_unique<cloud::CloudStore>("", clock);
        cloud_->register_node("fog-sim", {"k1", sync_key_});

        security::PolicyOptions popts;
        popts.hash_iterations = 1000;
        popts.session_ttl_ms = static_cast<std::int64_t>(cfg_.duration_ms) * 10 + 3600 * 1000;
        policy_ = std::make_shared<security::PolicyStore>(popts, clock);
        auto rp = security::default_role_permissions();
        for (auto r : {security::Role::MobileClient, security::Role::ThinClient, security::Role::ThickClient}) {
            rp[r].insert(security::Permission::WriteLayer);
        }
        policy_->set_role_permissions(rp);
        auto token_ids = seeded_uuid_generator(cfg_.seed ^ 0x746f6b656eULL);
        policy_->set_token_generator([token_ids] {
            auto id = token_ids();
            id.erase(std::remove(id.begin(), id.end(), '-'), id.end());
            return id;
        });

        fog::FogConfig fc;
        fc.node_id = "fog-sim";
        fc.sync_key_id = "k1";
        fc.sync_key = sync_key_;
        fc.storage_budget_bytes = cfg_.storage_budget_bytes;
        const auto& opts = cfg_.dataset.options;
        for (int y = opts.year_from; y <= opts.year_to; ++y) fc.pinned_layers.insert(fixture::year_layer_id(y));
        fc.pinned_layers.insert(fixture::kBaseRasterId);
        auto queue = std::make_shared<fog::SyncQueue>(scratch_.path, cfg_.storage_budget_bytes,
                                                      seeded_uuid_generator(cfg_.seed ^ 0x71756575ULL), clock);
        node_ = std::make_unique<fog::FogNode>(fc, policy_, queue);
        for (int y = opts.year_from; y <= opts.year_to; ++y) node_->put_layer(fixture::district_layer(opts, y));
        node_->put_layer(fixture::base_raster());

        std::size_t index = 0;
        for (const auto& profile : cfg_.clients) {
            for (int n = 0; n < profile.count; ++n, ++index) {
                Client c;
                c.profile = profile;
                c.name = "client-" + std::to_string(index);
                policy_->add_principal(c.name, c.name, "pw-" + c.name, {role_for(profile.kind)});
                c.token = policy_->authenticate(c.name, "pw-" + c.name);
                std::seed_seq seq{static_cast<std::uint32_t>(cfg_.seed), static_cast<std::uint32_t>(cfg_.seed >> 32),
                                  static_cast<std::uint32_t>(index)};
                c.rng.seed(seq);
                clients_.push_back(std::move(c));
            }
        }
        pending_.resize(clients_.size());
    }

    MetricsReport run() {
        for (std::size_t i = 0; i < clients_.size(); ++i) {
            const double start = unit_uniform(clients_[i].rng) * clients_[i].profile.think_ms;
            push({start, 0, EventType::Issue, i, false});
        }
        if (cfg_.topology == Topology::FogMediated) push({cfg_.flush_interval_ms, 0, EventType::Flush, 0, false});

        double last_outage = 0.0;
        for (const auto& o : cfg_.fog_cloud.outages) last_outage = std::max(last_outage, o.end_ms);
        horizon_ = std::max(cfg_.duration_ms, last_outage) + 60000.0 + 10.0 * cfg_.flush_interval_ms;

        while (!events_.empty()) {
            auto ev = events_.top();
            events_.pop();
            now_ = ev.t;
            switch (ev.type) {
            case EventType::Issue: issue(ev.client); break;
            case EventType::Arrive: arrive(ev.client); break;
            case EventType::Complete: complete(ev.client, ev.ok); break;
            case EventType::Flush: flush(); break;
            }
        }
        return report();
    }

private:
    void push(Event ev) {
        ev.seq = next_seq_++;
        events_.push(ev);
    }

    const LinkSpec& client_link() const {
        return cfg_.topology == Topology::FogMediated ? cfg_.client_fog : cfg_.client_cloud;
    }
    const LinkSpec& wan_link() const {
        return cfg_.topology == Topology::FogMediated ? cfg_.fog_cloud : cfg_.client_cloud;
    }

    Endpoint pick(Client& c) {
        const double u = unit_uniform(c.rng);
        double acc = 0.0;
        for (const auto& [e, w] : c.profile.mix) {
            acc += w;
            if (u < acc) return e;
        }
        return c.profile.mix.back().first;
    }

    HttpRequest build(std::size_t idx, Endpoint e) {
        auto& c = clients_[idx];
        const auto& opts = cfg_.dataset.options;
        const int span = opts.year_to - opts.year_from + 1;
        const int year = opts.year_from + static_cast<int>(c.rng() % static_cast<std::uint64_t>(span));
        const auto layer = fixture::year_layer_id(year);
        HttpRequest req;
        switch (e) {
        case Endpoint::Capabilities: req = make_request("GET", "/capabilities"); break;
        case Endpoint::Features: {
            std::string target = "/features?layer=" + layer;
            if (c.rng() % 2 == 0) {
                const double x = std::floor(unit_uniform(c.rng) * 800.0);
                const double y = std::floor(unit_uniform(c.rng) * 800.0);
                target += "&bbox=" + format_number(x) + "," + format_number(y) + "," + format_number(x + 200.0) +
                          "," + format_number(y + 200.0);
            }
            req = make_request("GET", target);
            break;
        }
        case Endpoint::Map:
            req = make_request("GET", "/map?layers=" + std::string(fixture::kBaseRasterId) + "," + layer +
                                          "&bbox=0,0,1000,1000&width=64&height=64&style=positives:reds:4");
            break;
        case Endpoint::Execute: {
            json body = {{"process", "zonal_stats"},
                         {"params", {{"raster", fixture::kBaseRasterId}, {"zones", layer}, {"zone_attr", "district"}}}};
            req = make_request("POST", "/execute", body.dump());
            break;
        }
        case Endpoint::Upload: {
            const auto batch_seed = (static_cast<std::uint64_t>(idx) << 32) | static_cast<std::uint64_t>(c.uploads);
            auto batch = fixture::case_batch(opts, year, cfg_.dataset.cases_per_district, batch_seed);
            auto body = geo::serialize_vector_layer(batch);
            const auto blob = c.name + "-" + std::to_string(c.uploads++);
            if (cfg_.topology == Topology::FogMediated) {
                req = make_request("POST", "/upload?layer=cases_" + std::to_string(idx), std::move(body));
            } else {
                req = make_request("POST", "/raw", std::move(body));
                req.headers["x-blob-id"] = blob;
            }
            break;
        }
        }
        req.headers["authorization"] = "Bearer " + c.token;
        return req;
    }

    void issue(std::size_t idx) {
        if (now_ >= cfg_.duration_ms) return;
        auto& p = pending_[idx];
        p.endpoint = pick(clients_[idx]);
        p.request = build(idx, p.endpoint);
        p.issued_at = now_;
        p.during_outage = wan_link().down_at(now_);
        const double d = client_link().transfer_ms(wire_size(p.request));
        if (!client_link().clear(now_, d)) {
            push({now_ + d, 0, EventType::Complete, idx, false});
        } else {
            push({now_ + d, 0, EventType::Arrive, idx, false});
        }
    }

    void arrive(std::size_t idx) {
        auto& p = pending_[idx];
        HttpResponse resp;
        if (cfg_.topology == Topology::CloudDirect && p.endpoint == Endpoint::Upload) {
            resp = cloud_->handle_request(p.request);
            if (resp.status == 200) raw_bytes_ += p.request.body.size();
        } else {
            resp = node_->handle_request(p.request);
        }
        const double d = client_link().transfer_ms(wire_size(resp));
        const bool ok = client_link().clear(now_, d) && resp.status == 200;
        push({now_ + d, 0, EventType::Complete, idx, ok});
    }

    void complete(std::size_t idx, bool ok) {
        auto& c = clients_[idx];
        const auto& p = pending_[idx];
        const double latency = now_ - p.issued_at;
        auto record = [&](Tally& t) {
            ++t.issued;
            if (ok) {
                ++t.succeeded;
                t.latency_sum += latency;
            } else {
                ++t.failed;
            }
        };
        record(total_);
        record(per_kind_[std::string(to_string(c.profile.kind))]);
        record(per_endpoint_[std::string(to_string(p.endpoint))]);
        if (ok) latencies_.push_back(latency);
        if (is_read(p.endpoint)) {
            record(reads_);
            if (p.during_outage) record(outage_reads_);
        } else if (ok && cfg_.topology == Topology::FogMediated) {
            ++deferred_writes_;
        }
        const double think = c.profile.think_ms * (0.5 + unit_uniform(c.rng));
        push({now_ + think, 0, EventType::Issue, idx, false});
    }

    void flush() {
        SimLink link(cfg_.fog_cloud, now_);
        SimCloud endpoint(*cloud_);
        auto rep = node_->flush(link, endpoint);
        flushed_bytes_ += rep.bytes;
        acked_ += rep.acked;
        const bool drained = node_->queue().size() == 0;
        if (now_ >= cfg_.duration_ms && drained) return;
        if (now_ >= horizon_) return;
        const double wait = rep.retry_after_ms ? static_cast<double>(*rep.retry_after_ms) : cfg_.flush_interval_ms;
        push({now_ + std::max(wait, 1.0), 0, EventType::Flush, 0, false});
    }

    MetricsReport report() {
        MetricsReport r;
        r.topology = std::string(to_string(cfg_.topology));
        r.workload_hash = workload_hash(cfg_);
        r.issued = total_.issued;
        r.succeeded = total_.succeeded;
        r.failed = total_.failed;
        r.deferred_writes = deferred_writes_;
        std::sort(latencies_.begin(), latencies_.end());
        r.mean_latency_ms = total_.finish().mean_latency_ms;
        r.p50_latency_ms = percentile(latencies_, 0.50);
        r.p95_latency_ms = percentile(latencies_, 0.95);
        r.bytes_to_cloud = cfg_.topology == Topology::FogMediated ? flushed_bytes_ : raw_bytes_;
        r.reads_issued = reads_.issued;
        r.reads_succeeded = reads_.succeeded;
        r.read_availability =
            reads_.issued ? static_cast<double>(reads_.succeeded) / static_cast<double>(reads_.issued) : 1.0;
        r.outage_reads_issued = outage_reads_.issued;
        r.availability_during_outage = outage_reads_.issued ? static_cast<double>(outage_reads_.succeeded) /
                                                                  static_cast<double>(outage_reads_.issued)
                                                            : 1.0;
        r.sync_enqueued = acked_ + node_->queue().size();
        r.sync_acked = acked_;
        r.sync_pending = node_->queue().size();
        r.cloud_bytes_received = cloud_->bytes_received();
        r.storage_budget_bytes = cfg_.storage_budget_bytes;
        r.client_link_latency_ms = client_link().one_way_latency_ms;
        r.cloud_link_latency_ms = wan_link().one_way_latency_ms;
        for (const auto& [k, t] : per_kind_) r.per_kind[k] = t.finish();
        for (const auto& [k, t] : per_endpoint_) r.per_endpoint[k] = t.finish();
        return r;
    }

    static std::string sha256_raw(const std::string& text) {
        return *hex_decode(sha256_hex(text));
    }

    const ScenarioConfig& cfg_;
    double now_ = 0.0;
    double horizon_ = 0.0;
    ScratchDir scratch_;
    std::string sync_key_;
    std::unique_ptr<cloud::CloudStore> cloud_;
    std::shared_ptr<security::PolicyStore> policy_;
    std::unique_ptr<fog::FogNode> node_;
    std::vector<Client> clients_;
    std::vector<Pending> pending_;
    std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
    std::uint64_t next_seq_ = 0;

    Tally total_, reads_, outage_reads_;
    std::map<std::string, Tally> per_kind_, per_endpoint_;
    std::vector<double> latencies_;
    std::size_t deferred_writes_ = 0;
    std::size_t flushed_bytes_ = 0;
    std::size_t raw_bytes_ = 0;
    std::size_t acked_ = 0;
};

json kind_metrics_json(const std::map<std::string, KindMetrics>& m) {
    json out = json::object();
    for (const auto& [k, v] : m) {
        out[k] = {{"issued", v.issued},
                  {"succeeded", v.succeeded},
                  {"failed", v.failed},
                  {"mean_latency_ms", v.mean_latency_ms}};
    }
    return out;
}

std::map<std::string, KindMetrics> kind_metrics_from_json(const json& j) {
    std::map<std::string, KindMetrics> out;
    for (const auto& [k, v] : j.items()) {
        out[k] = {v.at("issued"), v.at("succeeded"), v.at("failed"), v.at("mean_latency_ms")};
    }
    return out;
}

} // namespace

std::string_view to_string(Endpoint e) { return name_of(e, kEndpoints); }
Endpoint parse_endpoint(std::string_view text) { return parse_named(text, kEndpoints, "endpoint"); }
std::string_view to_string(ClientKind k) { return name_of(k, kKinds); }
ClientKind parse_client_kind(std::string_view text) { return parse_named(text, kKinds, "client kind"); }
std::string_view to_string(Topology t) { return name_of(t, kTopologies); }
Topology parse_topology(std::string_view text) { return parse_named(text, kTopologies, "topology"); }

void LinkSpec::validate(const std::string& name) const {
    if (!(one_way_latency_ms >= 0.0)) config_error(name + ": latency must be >= 0", name + ".latency_ms");
    if (!(bandwidth_bytes_per_s > 0.0)) config_error(name + ": bandwidth must be > 0", name + ".bandwidth_bytes_per_s");
    for (std::size_t i = 0; i < outages.size(); ++i) {
        if (!(outages[i].start_ms < outages[i].end_ms)) {
            config_error(name + ": outage " + std::to_string(i) + " is empty or reversed", name + ".outages");
        }
        if (i > 0 && outages[i].start_ms < outages[i - 1].end_ms) {
            config_error(name + ": outages must be sorted and disjoint", name + ".outages");
        }
    }
}

bool LinkSpec::down_at(double t) const {
    for (const auto& o : outages) {
        if (t >= o.start_ms && t < o.end_ms) return true;
    }
    return false;
}

double LinkSpec::transfer_ms(std::size_t bytes) const {
    return static_cast<double>(bytes) / bandwidth_bytes_per_s * 1000.0 + one_way_latency_ms;
}

bool LinkSpec::clear(double start, double duration) const {
    if (duration <= 0.0) return !down_at(start);
    const double end = start + duration;
    for (const auto& o : outages) {
        if (start < o.end_ms && o.start_ms < end) return false;
    }
    return true;
}

void ScenarioConfig::validate() const {
    if (!(duration_ms > 0.0)) config_error("duration_ms must be > 0", "duration_ms");
    if (!(flush_interval_ms > 0.0)) config_error("flush_interval_ms must be > 0", "flush_interval_ms");
    if (storage_budget_bytes == 0) config_error("storage_budget_bytes must be > 0", "storage_budget_bytes");
    client_fog.validate("client_fog");
    fog_cloud.validate("fog_cloud");
    client_cloud.validate("client_cloud");
    if (dataset.fixture != "maharashtra") config_error("unknown dataset fixture: " + dataset.fixture, "dataset.fixture");
    if (dataset.options.districts < 1) config_error("dataset needs at least one district", "dataset.districts");
    if (dataset.options.year_from > dataset.options.year_to) config_error("dataset years reversed", "dataset.years");
    if (dataset.cases_per_district < 1) config_error("cases_per_district must be >= 1", "dataset.cases_per_district");
    for (std::size_t i = 0; i < clients.size(); ++i) {
        const auto& c = clients[i];
        const auto field = "clients[" + std::to_string(i) + "]";
        if (c.count < 0) config_error(field + ": count must be >= 0", field + ".count");
        if (!(c.think_ms > 0.0)) config_error(field + ": think_ms must be > 0", field + ".think_ms");
        if (c.mix.empty()) config_error(field + ": request mix is empty", field + ".mix");
        double sum = 0.0;
        for (const auto& [e, w] : c.mix) {
            if (!(w >= 0.0)) config_error(field + ": negative weight", field + ".mix");
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-9) config_error(field + ": mix weights must sum to 1", field + ".mix");
    }
}

ScenarioConfig ScenarioConfig::from_json(const json& j) {
    ScenarioConfig c;
    try {
        c.topology = parse_topology(j.at("topology").get<std::string>());
        c.duration_ms = j.at("duration_ms").get<double>();
        c.seed = j.value("seed", c.seed);
        c.flush_interval_ms = j.value("flush_interval_ms", c.flush_interval_ms);
        c.storage_budget_bytes = j.value("storage_budget_bytes", c.storage_budget_bytes);
        for (const auto& cj : j.value("clients", json::array())) {
            ClientProfile p;
            p.kind = parse_client_kind(cj.at("kind").get<std::string>());
            p.count = cj.at("count").get<int>();
            p.think_ms = cj.value("think_ms", p.think_ms);
            for (const auto& [name, w] : cj.at("mix").items()) p.mix.emplace_back(parse_endpoint(name), w.get<double>());
            std::sort(p.mix.begin(), p.mix.end());
            c.clients.push_back(std::move(p));
        }
        const auto& links = j.value("links", json::object());
        if (links.contains("client_fog")) c.client_fog = link_from_json(links["client_fog"]);
        if (links.contains("fog_cloud")) c.fog_cloud = link_from_json(links["fog_cloud"]);
        if (links.contains("client_cloud")) c.client_cloud = link_from_json(links["client_cloud"]);
        const auto& ds = j.value("dataset", json::object());
        c.dataset.fixture = ds.value("fixture", c.dataset.fixture);
        if (ds.contains("years")) {
            c.dataset.options.year_from = ds["years"].at(0).get<int>();
            c.dataset.options.year_to = ds["years"].at(1).get<int>();
        }
        c.dataset.options.districts = ds.value("districts", c.dataset.options.districts);
        c.dataset.options.seed = ds.value("seed", c.dataset.options.seed);
        c.dataset.cases_per_district = ds.value("cases_per_district", c.dataset.cases_per_district);
    } catch (const json::exception& e) {
        config_error(std::string("bad scenario: ") + e.what(), "scenario");
    }
    c.validate();
    return c;
}

json ScenarioConfig::to_json() const {
    return {{"topology", to_string(topology)},
            {"duration_ms", duration_ms},
            {"seed", seed},
            {"flush_interval_ms", flush_interval_ms},
            {"storage_budget_bytes", storage_budget_bytes},
            {"clients", clients_to_json(clients)},
            {"links",
             {{"client_fog", link_to_json(client_fog)},
              {"fog_cloud", link_to_json(fog_cloud)},
              {"client_cloud", link_to_json(client_cloud)}}},
            {"dataset", dataset_to_json(dataset)}};
}

std::string workload_hash(const ScenarioConfig& cfg) {
    json w = {{"clients", clients_to_json(cfg.clients)},
              {"duration_ms", cfg.duration_ms},
              {"dataset", dataset_to_json(cfg.dataset)},
              {"seed", cfg.seed}};
    return sha256_hex(w.dump());
}

MetricsReport run_scenario(const ScenarioConfig& cfg) {
    cfg.validate();
    Simulation sim(cfg);
    return sim.run();
}

json MetricsReport::to_json() const {
    return {{"topology", topology},
            {"workload_hash", workload_hash},
            {"requests", {{"issued", issued}, {"succeeded", succeeded}, {"failed", failed}}},
            {"deferred_writes", deferred_writes},
            {"latency_ms", {{"mean", mean_latency_ms}, {"p50", p50_latency_ms}, {"p95", p95_latency_ms}}},
            {"bytes_to_cloud", bytes_to_cloud},
            {"cloud_bytes_received", cloud_bytes_received},
            {"reads", {{"issued", reads_issued}, {"succeeded", reads_succeeded}}},
            {"read_availability", read_availability},
            {"outage_reads_issued", outage_reads_issued},
            {"availability_during_outage", availability_during_outage},
            {"sync", {{"enqueued", sync_enqueued}, {"acked", sync_acked}, {"pending", sync_pending}}},
            {"config_dimensions",
             {{"storage_budget_bytes", storage_budget_bytes},
              {"client_link_latency_ms", client_link_latency_ms},
              {"cloud_link_latency_ms", cloud_link_latency_ms}}},
            {"per_client_kind", kind_metrics_json(per_kind)},
            {"per_endpoint", kind_metrics_json(per_endpoint)}};
}

MetricsReport MetricsReport::from_json(const json& j) {
    MetricsReport r;
    try {
        r.topology = j.at("topology");
        r.workload_hash = j.at("workload_hash");
        r.issued = j.at("requests").at("issued");
        r.succeeded = j.at("requests").at("succeeded");
        r.failed = j.at("requests").at("failed");
        r.deferred_writes = j.at("deferred_writes");
        r.mean_latency_ms = j.at("latency_ms").at("mean");
        r.p50_latency_ms = j.at("latency_ms").at("p50");
        r.p95_latency_ms = j.at("latency_ms").at("p95");
        r.bytes_to_cloud = j.at("bytes_to_cloud");
        r.cloud_bytes_received = j.at("cloud_bytes_received");
        r.reads_issued = j.at("reads").at("issued");
        r.reads_succeeded = j.at("reads").at("succeeded");
        r.read_availability = j.at("read_availability");
        r.outage_reads_issued = j.at("outage_reads_issued");
        r.availability_during_outage = j.at("availability_during_outage");
        r.sync_enqueued = j.at("sync").at("enqueued");
        r.sync_acked = j.at("sync").at("acked");
        r.sync_pending = j.at("sync").at("pending");
        const auto& dims = j.at("config_dimensions");
        r.storage_budget_bytes = dims.at("storage_budget_bytes");
        r.client_link_latency_ms = dims.at("client_link_latency_ms");
        r.cloud_link_latency_ms = dims.at("cloud_link_latency_ms");
        r.per_kind = kind_metrics_from_json(j.at("per_client_kind"));
        r.per_endpoint = kind_metrics_from_json(j.at("per_endpoint"));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Syntax, std::string("not a metrics report: ") + e.what());
    }
    return r;
}

std::string MetricsReport::to_csv() const {
    std::ostringstream out;
    out << "metric,value\n";
    out << "topology," << topology << "\n";
    out << "workload_hash," << workload_hash << "\n";
    out << "issued," << issued << "\n";
    out << "succeeded," << succeeded << "\n";
    out << "failed," << failed << "\n";
    out << "deferred_writes," << deferred_writes << "\n";
    out << "latency_mean_ms," << format_number(mean_latency_ms) << "\n";
    out << "latency_p50_ms," << format_number(p50_latency_ms) << "\n";
    out << "latency_p95_ms," << format_number(p95_latency_ms) << "\n";
    out << "bytes_to_cloud," << bytes_to_cloud << "\n";
    out << "read_availability," << format_number(read_availability) << "\n";
    out << "availability_during_outage," << format_number(availability_during_outage) << "\n";
    out << "sync_enqueued," << sync_enqueued << "\n";
    out << "sync_acked," << sync_acked << "\n";
    out << "sync_pending," << sync_pending << "\n";
    for (const auto& [k, m] : per_kind) {
        out << "kind." << k << ".issued," << m.issued << "\n";
        out << "kind." << k << ".succeeded," << m.succeeded << "\n";
        out << "kind." << k << ".failed," << m.failed << "\n";
        out << "kind." << k << ".mean_latency_ms," << format_number(m.mean_latency_ms) << "\n";
    }
    return out.str();
}

Comparison compare(const MetricsReport& a, const MetricsReport& b) {
    if (a.workload_hash != b.workload_hash) {
        throw Error(ErrorCode::WorkloadMismatch, "reports come from different workloads",
                    a.workload_hash.substr(0, 12) + " vs " + b.workload_hash.substr(0, 12));
    }
    struct Row {
        std::string name;
        double a, b;
    };
    auto d = [](std::size_t v) { return static_cast<double>(v); };
    const std::vector<Row> rows = {
        {"requests_issued", d(a.issued), d(b.issued)},
        {"requests_succeeded", d(a.succeeded), d(b.succeeded)},
        {"requests_failed", d(a.failed), d(b.failed)},
        {"latency_mean_ms", a.mean_latency_ms, b.mean_latency_ms},
        {"latency_p50_ms", a.p50_latency_ms, b.p50_latency_ms},
        {"latency_p95_ms", a.p95_latency_ms, b.p95_latency_ms},
        {"bytes_to_cloud", d(a.bytes_to_cloud), d(b.bytes_to_cloud)},
        {"read_availability", a.read_availability, b.read_availability},
        {"availability_during_outage", a.availability_during_outage, b.availability_during_outage},
        {"storage_budget_bytes", d(a.storage_budget_bytes), d(b.storage_budget_bytes)},
        {"client_link_latency_ms", a.client_link_latency_ms, b.client_link_latency_ms},
        {"cloud_link_latency_ms", a.cloud_link_latency_ms, b.cloud_link_latency_ms},
    };
    auto ratio = [](double x, double y) -> std::string {
        if (x == 0.0 && y == 0.0) return "1";
        if (y == 0.0) return "inf";
        std::ostringstream s;
        s << std::fixed << std::setprecision(4) << x / y;
        return s.str();
    };
    auto fixed = [](double v) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(3) << v;
        return s.str();
    };

    std::ostringstream text, csv;
    const std::string a_name = "a:" + a.topology;
    const std::string b_name = "b:" + b.topology;
    text << std::left << std::setw(28) << "metric" << std::right << std::setw(18) << a_name << std::setw(18) << b_name
         << std::setw(12) << "a/b" << "\n";
    text << std::string(76, '-') << "\n";
    csv << "metric," << a_name << "," << b_name << ",ratio\n";
    for (const auto& r : rows) {
        text << std::left << std::setw(28) << r.name << std::right << std::setw(18) << fixed(r.a) << std::setw(18)
             << fixed(r.b) << std::setw(12) << ratio(r.a, r.b) << "\n";
        csv << r.name << "," << format_number(r.a) << "," << format_number(r.b) << "," << ratio(r.a, r.b) << "\n";
    }
    text << "\nworkload " << a.workload_hash.substr(0, 16) << "\n";
    text << "Size and server location are inputs here (storage budget, link latencies), not measured outcomes.\n";
    return {text.str(), csv.str()};
}

} // namespace soafog::sim
