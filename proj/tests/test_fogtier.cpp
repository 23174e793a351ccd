#include "soafog/cloudtier.hpp"
#include "soafog/fixture.hpp"
#include "soafog/fogtier.hpp"

#include "fog_helpers.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <thread>

using namespace soafog;
using namespace soafog::fog;
using soafog::geo::VectorLayer;
using nlohmann::json;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorCode::Io;
}

std::string detail_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.detail();
    }
    ADD_FAILURE() << "no error thrown";
    return {};
}

/// A fog node over the fixture with a restricted layer added.
struct Node {
    testutil::TempDir dir;
    std::shared_ptr<security::PolicyStore> policy = fogtest::policy();
    std::shared_ptr<SyncQueue> queue;
    std::unique_ptr<FogNode> node;
    fixture::FixtureOptions opts;

    explicit Node(FogConfig cfg = fogtest::config()) {
        queue = std::make_shared<SyncQueue>(dir / "queue", cfg.storage_budget_bytes, seeded_uuid_generator(1));
        node = std::make_unique<FogNode>(cfg, policy, queue);
        for (int y = 2011; y <= 2014; ++y) node->put_layer(fixture::district_layer(opts, y));
        node->put_layer(fixture::base_raster());
        auto zones = fixture::risk_zones(opts);
        zones.metadata.sensitivity = SensitivityLabel::Restricted;
        node->put_layer(zones);
    }

    std::string token(const std::string& who) { return policy->authenticate(who, "pw"); }

    HttpResponse get(const std::string& target, const std::string& token) {
        return node->handle_request(fogtest::with_token(make_request("GET", target), token));
    }
    HttpResponse post(const std::string& target, const std::string& body, const std::string& token) {
        return node->handle_request(fogtest::with_token(make_request("POST", target, body), token));
    }
};

} // namespace

TEST(FogConfig, Validation) {
    auto c = fogtest::config();
    EXPECT_NO_THROW(c.validate());
    auto bad = c;
    bad.storage_budget_bytes = 0;
    EXPECT_EQ(code_of([&] { bad.validate(); }), ErrorCode::ConfigError);
    bad = c;
    bad.backoff_ms.clear();
    EXPECT_EQ(code_of([&] { bad.validate(); }), ErrorCode::ConfigError);
    bad = c;
    bad.backoff_ms = {100, 50};
    EXPECT_EQ(code_of([&] { bad.validate(); }), ErrorCode::ConfigError);
    bad = c;
    bad.sync_key = "short";
    EXPECT_EQ(code_of([&] { bad.validate(); }), ErrorCode::ConfigError);
}

TEST(FogConfig, FromJson) {
    auto j = json::parse(R"({"node_id":"fog-9","storage_budget_bytes":1000,"sync_key_id":"kk",
        "sync_key_hex":"0000000000000000000000000000000000000000000000000000000000000001",
        "backoff_ms":[10,20],"pinned_layers":["a"]})");
    auto c = FogConfig::from_json(j);
    EXPECT_EQ(c.node_id, "fog-9");
    EXPECT_EQ(c.storage_budget_bytes, 1000u);
    EXPECT_EQ(c.sync_key.size(), 32u);
    EXPECT_EQ(c.backoff_ms, (std::vector<std::int64_t>{10, 20}));
    EXPECT_TRUE(c.pinned_layers.count("a"));
    j["sync_key_hex"] = "abcd";
    EXPECT_EQ(code_of([&] { FogConfig::from_json(j); }), ErrorCode::ConfigError);
}

TEST(Summary, FixtureTotalsByDistrict) {
    fixture::FixtureOptions opts;
    const auto layer = fixture::district_layer(opts, 2011);
    const auto s = aggregate_summary(layer, {"district", "year"}, {"positives"});
    ASSERT_EQ(s.rows.size(), 6u);
    for (const auto& f : layer.features) {
        const auto& name = f.properties.at("district");
        auto row = std::find_if(s.rows.begin(), s.rows.end(), [&](const SummaryRow& r) { return r.key[0] == name; });
        ASSERT_NE(row, s.rows.end());
        EXPECT_EQ(row->sums[0], std::get<double>(f.properties.at("positives")));
        EXPECT_EQ(row->count, 1u);
    }
    EXPECT_TRUE(std::is_sorted(s.rows.begin(), s.rows.end(),
                               [](const SummaryRow& a, const SummaryRow& b) { return a.key < b.key; }));
}

TEST(Summary, UniqueKeyAndEmpty) {
    fixture::FixtureOptions opts;
    const auto cases = fixture::case_batch(opts, 2012, 4, 3);
    VectorLayer numbered = cases;
    for (std::size_t i = 0; i < numbered.features.size(); ++i)
        numbered.features[i].properties["case_id"] = static_cast<double>(i);
    EXPECT_EQ(aggregate_summary(numbered, {"case_id"}, {"positives"}).rows.size(), numbered.features.size());
    EXPECT_TRUE(aggregate_summary(VectorLayer{}, {"district"}, {"positives"}).rows.empty());
    EXPECT_EQ(code_of([&] { aggregate_summary(cases, {"ward"}, {"positives"}); }), ErrorCode::MissingAttr);
}

TEST(Summary, CaseBatchesCompress) {
    fixture::FixtureOptions opts;
    for (int per : {2, 10, 50}) {
        const auto cases = fixture::case_batch(opts, 2013, per, 8);
        const auto s = aggregate_summary(cases, {"district", "year"}, {"positives", "deaths"});
        EXPECT_EQ(s.rows.size(), 6u);
        double total = 0.0, expect = 0.0;
        for (const auto& r : s.rows) {
            total += r.sums[0];
            EXPECT_EQ(r.count, static_cast<std::size_t>(per));
        }
        for (const auto& f : cases.features) expect += std::get<double>(f.properties.at("positives"));
        EXPECT_EQ(total, expect);
        EXPECT_LT(s.serialize().size(), geo::serialize_vector_layer(cases).size());
    }
}

TEST(Summary, JsonRoundTrip) {
    fixture::FixtureOptions opts;
    const auto s = aggregate_summary(fixture::case_batch(opts, 2011, 3, 1), {"district", "year"}, {"positives"});
    const auto back = SummaryTable::from_json(json::parse(s.serialize()));
    EXPECT_EQ(back.rows, s.rows);
    EXPECT_EQ(back.group_attrs, s.group_attrs);
}

TEST(SyncQueue, SurvivesRestart) {
    testutil::TempDir dir;
    std::string id;
    {
        SyncQueue q(dir.path(), 1 << 20);
        id = q.enqueue(SyncKind::Summary, "{\"a\":1}", "n", "k1", fogtest::kKey).item_id;
        EXPECT_EQ(q.front()->attempts, 0);
    }
    SyncQueue again(dir.path(), 1 << 20);
    ASSERT_EQ(again.size(), 1u);
    EXPECT_EQ(again.front()->item_id, id);
    EXPECT_TRUE(security::verify_envelope(again.front()->payload, fogtest::kKey));
}

TEST(SyncQueue, AckedItemsStayGoneAfterRestart) {
    testutil::TempDir dir;
    std::vector<std::string> ids;
    {
        SyncQueue q(dir.path(), 1 << 20);
        for (int i = 0; i < 3; ++i) ids.push_back(q.enqueue(SyncKind::Summary, "p" + std::to_string(i), "n", "k1", fogtest::kKey).item_id);
        q.mark_acked(ids[0]);
        q.mark_acked(ids[2]);
    }
    SyncQueue again(dir.path(), 1 << 20);
    ASSERT_EQ(again.size(), 1u);
    EXPECT_EQ(again.front()->item_id, ids[1]);
}

TEST(SyncQueue, TornTailIsSkipped) {
    testutil::TempDir dir;
    std::string id;
    {
        SyncQueue q(dir.path(), 1 << 20);
        id = q.enqueue(SyncKind::Summary, "x", "n", "k1", fogtest::kKey).item_id;
    }
    {
        std::ofstream out(dir / "items.jsonl", std::ios::app);
        out << "{\"item_id\":\"half";
    }
    {
        SyncQueue q(dir.path(), 1 << 20);
        EXPECT_EQ(q.size(), 1u);
        q.enqueue(SyncKind::Summary, "y", "n", "k1", fogtest::kKey);
    }
    SyncQueue q(dir.path(), 1 << 20);
    EXPECT_EQ(q.size(), 2u);
    EXPECT_EQ(q.front()->item_id, id);
}

TEST(SyncQueue, StorageFullLeavesQueueUnchanged) {
    testutil::TempDir dir;
    SyncQueue q(dir.path(), 600);
    q.enqueue(SyncKind::Summary, "small", "n", "k1", fogtest::kKey);
    const auto before = q.pending();
    EXPECT_EQ(code_of([&] { q.enqueue(SyncKind::Summary, std::string(800, 'x'), "n", "k1", fogtest::kKey); }),
              ErrorCode::StorageFull);
    EXPECT_EQ(q.size(), before.size());
    EXPECT_EQ(q.front()->item_id, before.front().item_id);
    SyncQueue reopened(dir.path(), 600);
    EXPECT_EQ(reopened.size(), 1u);
}

TEST(Flush, LinkUpDrainsQueue) {
    testutil::TempDir dir;
    SyncQueue q(dir.path(), 1 << 20);
    cloud::CloudStore store;
    fogtest::register_node(store, "n");
    std::vector<std::string> ids;
    for (int i = 0; i < 3; ++i) ids.push_back(q.enqueue(SyncKind::Summary, "{\"i\":" + std::to_string(i) + "}", "n", "k1", fogtest::kKey).item_id);
    fogtest::ScriptedLink link;
    fogtest::StoreEndpoint cloud(store);
    auto r = flush_sync(q, link, cloud, {100});
    EXPECT_EQ(r.sent, 3u);
    EXPECT_EQ(r.acked, 3u);
    EXPECT_EQ(r.remaining, 0u);
    EXPECT_FALSE(r.retry_after_ms.has_value());
    EXPECT_EQ(q.size(), 0u);
    EXPECT_EQ(store.item_ids(), std::set<std::string>(ids.begin(), ids.end()));
}

TEST(Flush, LinkDownKeepsEverything) {
    testutil::TempDir dir;
    SyncQueue q(dir.path(), 1 << 20);
    cloud::CloudStore store;
    fogtest::register_node(store, "n");
    for (int i = 0; i < 3; ++i) q.enqueue(SyncKind::Summary, "x", "n", "k1", fogtest::kKey);
    fogtest::ScriptedLink link;
    link.is_up = false;
    fogtest::StoreEndpoint cloud(store);
    auto r = flush_sync(q, link, cloud, {100, 200, 400});
    EXPECT_EQ(r.sent, 0u);
    EXPECT_EQ(r.remaining, 3u);
    EXPECT_EQ(r.retry_after_ms, 100);
    EXPECT_EQ(flush_sync(q, link, cloud, {100, 200, 400}).retry_after_ms, 200);
    EXPECT_EQ(flush_sync(q, link, cloud, {100, 200, 400}).retry_after_ms, 400);
    EXPECT_EQ(flush_sync(q, link, cloud, {100, 200, 400}).retry_after_ms, 400);
    EXPECT_EQ(store.summary_count(), 0u);
    EXPECT_EQ(cloud.posts, 0u);
}

TEST(Flush, LostAckIsDeduplicated) {
    testutil::TempDir dir;
    SyncQueue q(dir.path(), 1 << 20);
    cloud::CloudStore store;
    fogtest::register_node(store, "n");
    std::vector<std::string> ids;
    for (int i = 0; i < 3; ++i) ids.push_back(q.enqueue(SyncKind::Summary, "{\"i\":" + std::to_string(i) + "}", "n", "k1", fogtest::kKey).item_id);
    fogtest::ScriptedLink link;
    // item 1 request + ack, item 2 request reaches the cloud, its ack is lost.
    link.carries = {true, true, true, false};
    fogtest::StoreEndpoint cloud(store);
    auto first = flush_sync(q, link, cloud, {100});
    EXPECT_EQ(first.acked, 1u);
    EXPECT_EQ(first.failed, 1u);
    EXPECT_EQ(store.summary_count(), 2u);
    auto second = flush_sync(q, link, cloud, {100});
    EXPECT_EQ(second.acked, 2u);
    EXPECT_EQ(store.summary_count(), 3u);
    EXPECT_EQ(store.item_ids(), std::set<std::string>(ids.begin(), ids.end()));
    EXPECT_EQ(cloud.posts, 4u); // item 2 went out twice
}

TEST(Flush, FifoOrder) {
    testutil::TempDir dir;
    SyncQueue q(dir.path(), 1 << 20);
    struct Recorder final : CloudEndpoint {
        std::vector<std::string> seen;
        std::optional<HttpResponse> post_ingest(const std::string& body) override {
            seen.push_back(json::parse(body)["item_id"]);
            return HttpResponse::json(200, {{"ok", true}});
        }
    } cloud;
    std::vector<std::string> ids;
    for (int i = 0; i < 5; ++i) ids.push_back(q.enqueue(SyncKind::Summary, "x", "n", "k1", fogtest::kKey).item_id);
    fogtest::ScriptedLink link;
    flush_sync(q, link, cloud, {1});
    EXPECT_EQ(cloud.seen, ids);
}

TEST(FogNode, CapabilitiesListsReadableLayers) {
    Node n;
    auto phone = n.get("/capabilities", n.token("phone"));
    ASSERT_EQ(phone.status, 200);
    const auto body = json::parse(phone.body);
    std::set<std::string> ids;
    for (const auto& l : body["layers"]) ids.insert(l["layer_id"].get<std::string>());
    EXPECT_EQ(ids.size(), 5u);
    EXPECT_FALSE(ids.count(fixture::kZonesLayerId));
    auto laptop = json::parse(n.get("/capabilities", n.token("laptop")).body);
    EXPECT_EQ(laptop["layers"].size(), 6u);
}

TEST(FogNode, MacDenialIs403) {
    Node n;
    auto r = n.get("/features?layer=risk_zones", n.token("phone"));
    EXPECT_EQ(r.status, 403);
    EXPECT_EQ(json::parse(r.body), (json{{"reason", "mac"}}));
    auto noauth = n.node->handle_request(make_request("GET", "/features?layer=risk_zones"));
    EXPECT_EQ(noauth.status, 403);
    EXPECT_EQ(json::parse(noauth.body)["reason"], "expired_token");
}

TEST(FogNode, FeaturesFiltering) {
    Node n;
    const auto t = n.token("phone");
    EXPECT_EQ(n.node->get_features(t, "maharashtra_malaria_2011", std::nullopt).size(), 6u);
    const auto layer = fixture::district_layer(n.opts, 2011);
    const auto first = geo::geometry_bbox(layer.features[0].geometry);
    const geo::BBox probe{first.xmin + 1, first.ymin + 1, first.xmin + 2, first.ymin + 2};
    const auto got = n.node->get_features(t, "maharashtra_malaria_2011", probe);
    std::vector<geo::Feature> expect;
    for (const auto& f : layer.features) {
        const auto b = geo::geometry_bbox(f.geometry);
        if (b.xmin <= probe.xmax && probe.xmin <= b.xmax && b.ymin <= probe.ymax && probe.ymin <= b.ymax)
            expect.push_back(f);
    }
    EXPECT_EQ(got, expect);
    auto disjoint = n.get("/features?layer=maharashtra_malaria_2011&bbox=5000,5000,6000,6000", t);
    EXPECT_EQ(disjoint.status, 200);
    EXPECT_TRUE(json::parse(disjoint.body)["features"].empty());
    EXPECT_EQ(code_of([&] { n.node->get_features(t, "maharashtra_base", std::nullopt); }), ErrorCode::KindMismatch);
}

TEST(FogNode, ZonalStatsMatchesLibrary) {
    Node n;
    const auto body = json{{"process", "zonal_stats"},
                           {"params",
                            {{"raster", "maharashtra_base"}, {"zones", "maharashtra_malaria_2011"}, {"zone_attr", "district"}}}};
    auto r = n.post("/execute", body.dump(), n.token("laptop"));
    ASSERT_EQ(r.status, 200) << r.body;
    const auto direct = overlay::zonal_rows_json(
        overlay::zonal_stats(fixture::base_raster(), fixture::district_layer(n.opts, 2011), "district"));
    const auto got = json::parse(r.body);
    EXPECT_EQ(got["rows"], direct);
    EXPECT_EQ(got["process"], "zonal_stats");
    EXPECT_EQ(got["inputs"], (json{"maharashtra_base", "maharashtra_malaria_2011"}));
}

TEST(FogNode, ExecuteParamErrors) {
    Node n;
    const auto t = n.token("laptop");
    EXPECT_EQ(detail_of([&] {
                  n.node->execute_process(t, "intersect",
                                          {{"layer_a", "maharashtra_malaria_2011"}, {"layer_b", "nowhere"}});
              }),
              "layer_b");
    EXPECT_EQ(detail_of([&] { n.node->execute_process(t, "classify", {{"values", {1, 2, 3}}, {"k", 0}}); }), "k");
    EXPECT_EQ(code_of([&] { n.node->execute_process(t, "buffer", json::object()); }), ErrorCode::UnknownProcess);
    auto r = n.post("/execute", R"({"process":"classify","params":{"values":[1,2],"k":0}})", t);
    EXPECT_EQ(r.status, 400);
    EXPECT_EQ(json::parse(r.body)["detail"], "k");
}

TEST(FogNode, ExecuteProcesses) {
    Node n;
    const auto t = n.token("ana");
    auto inter = n.node->execute_process(t, "intersect",
                                         {{"layer_a", "maharashtra_malaria_2011"}, {"layer_b", "risk_zones"}});
    EXPECT_FALSE(inter["features"]["features"].empty());
    auto join = n.node->execute_process(
        t, "join", {{"layer", "maharashtra_malaria_2011"}, {"table_layer", "maharashtra_malaria_2014"}, {"key", "district"}});
    EXPECT_TRUE(join["features"]["features"][0]["properties"].contains("b_positives"));
    auto cls = n.node->execute_process(
        t, "classify", {{"layer", "maharashtra_malaria_2011"}, {"attr", "positives"}, {"k", 4}, {"scheme", "quantile"}});
    EXPECT_EQ(cls["breaks"].size(), 3u);
}

TEST(FogNode, DenyMeansNoEngineWork) {
    Node n;
    const auto phone = n.token("phone");
    const auto laptop = n.token("laptop");
    const auto before = n.node->engine_invocations();
    const auto zonal = json{{"process", "zonal_stats"},
                            {"params", {{"raster", "maharashtra_base"}, {"zones", "risk_zones"}, {"zone_attr", "zone"}}}};
    EXPECT_EQ(n.post("/execute", zonal.dump(), phone).status, 403);               // rbac
    EXPECT_EQ(n.post("/execute", zonal.dump(), "bogus").status, 403);             // no session
    EXPECT_EQ(n.get("/map?layers=risk_zones&bbox=0,0,1000,1000", phone).status, 403); // mac
    n.policy->add_acl("maharashtra_base", {"laptop", security::Permission::ExecuteProcess, security::Effect::Deny});
    EXPECT_EQ(n.post("/execute", zonal.dump(), laptop).status, 403); // dac
    EXPECT_EQ(n.node->engine_invocations(), before);
    EXPECT_EQ(n.get("/map?layers=maharashtra_base&bbox=0,0,1000,1000&width=8&height=8", phone).status, 200);
    EXPECT_EQ(n.node->engine_invocations(), before + 1);
}

TEST(FogNode, MapEndpointMatchesRenderer) {
    Node n;
    auto r = n.get("/map?layers=maharashtra_base,maharashtra_malaria_2011&bbox=0,0,1000,1000&width=64&height=64"
                   "&style=positives:reds:4",
                   n.token("desk"));
    ASSERT_EQ(r.status, 200);
    EXPECT_EQ(r.content_type, "image/x-portable-pixmap");
    overlay::MapRequest mr;
    mr.layer_ids = {"maharashtra_base", "maharashtra_malaria_2011"};
    mr.bbox = {0, 0, 1000, 1000};
    mr.width = mr.height = 64;
    mr.style = overlay::parse_style("positives:reds:4");
    EXPECT_EQ(r.body, overlay::render_map(mr, n.node->catalog()));
}

TEST(FogNode, RoutingErrors) {
    Node n;
    const auto t = n.token("phone");
    EXPECT_EQ(n.get("/nowhere", t).status, 404);
    EXPECT_EQ(json::parse(n.get("/nowhere", t).body)["error"], "not_found");
    EXPECT_EQ(n.post("/execute", "{not json", n.token("laptop")).status, 400);
    EXPECT_EQ(n.get("/features", t).status, 400);
    EXPECT_EQ(n.get("/features?layer=maharashtra_malaria_2011&bbox=1,2,3", t).status, 400);
    EXPECT_EQ(n.node->handle_request(make_request("GET", "/health")).status, 200);
}

TEST(FogNode, AuthEndpoint) {
    Node n;
    auto ok = n.node->handle_request(make_request("POST", "/auth", R"({"principal_id":"phone","secret":"pw"})"));
    ASSERT_EQ(ok.status, 200);
    const auto token = json::parse(ok.body)["token"].get<std::string>();
    EXPECT_EQ(n.get("/capabilities", token).status, 200);
    EXPECT_EQ(n.node->handle_request(make_request("POST", "/auth", R"({"principal_id":"phone","secret":"no"})")).status, 401);
    EXPECT_EQ(n.node->handle_request(make_request("POST", "/auth", "{}")).status, 400);
}

TEST(FogNode, EveryRequestAudited) {
    Node n;
    const auto t = n.token("phone");
    const auto before = n.policy->audit_size();
    n.get("/capabilities", t);
    n.get("/features?layer=risk_zones", t);
    n.get("/nowhere", t);
    const auto audit = n.policy->audit();
    EXPECT_GE(audit.size(), before + 3);
    EXPECT_EQ(audit.back().operation, "GET /nowhere");
    EXPECT_EQ(audit.back().reason, "status:404");
}

TEST(FogNode, UploadQueuesSummary) {
    Node n;
    const auto cases = fixture::case_batch(n.opts, 2014, 10, 4);
    auto r = n.post("/upload?layer=cases_2014_b1", geo::serialize_vector_layer(cases), n.token("phone"));
    EXPECT_EQ(r.status, 403);
    r = n.post("/upload?layer=cases_2014_b1", geo::serialize_vector_layer(cases), n.token("ana"));
    ASSERT_EQ(r.status, 200) << r.body;
    const auto body = json::parse(r.body);
    EXPECT_EQ(body["features"], 60);
    EXPECT_EQ(body["summary_rows"], 6);
    ASSERT_EQ(n.queue->size(), 1u);
    EXPECT_EQ(n.queue->front()->item_id, body["queued_item"]);
    const auto summary = SummaryTable::from_json(json::parse(n.queue->front()->payload.payload));
    EXPECT_EQ(summary.rows.size(), 6u);
}

TEST(FogNode, AdminPolicyEndpoint) {
    Node n;
    const auto phone = n.token("phone");
    EXPECT_EQ(n.post("/admin/policy", R"({"op":"set_label","layer_id":"risk_zones","label":"public"})", phone).status,
              403);
    EXPECT_EQ(n.post("/admin/policy", R"({"op":"set_label","layer_id":"risk_zones","label":"public"})", n.token("root"))
                  .status,
              200);
    EXPECT_EQ(n.get("/features?layer=risk_zones", phone).status, 200);
    EXPECT_EQ(n.post("/admin/policy", R"({"op":"revoke_role","principal_id":"root","role":"admin"})", n.token("root"))
                  .status,
              409);
}

TEST(Eviction, LargeBudgetDoesNothing) {
    Node n;
    auto r = n.node->cache_evict();
    EXPECT_TRUE(r.evicted.empty());
    EXPECT_EQ(r.bytes_before, r.bytes_after);
}

TEST(Eviction, LeastRecentlyUsedGoesFirst) {
    Node probe;
    const auto total = probe.node->local_bytes();
    const auto raster_bytes = geo::payload_bytes(*probe.node->catalog().payload("maharashtra_base"));

    auto cfg = fogtest::config(total - 1);
    cfg.pinned_layers = {"maharashtra_base"};
    Node n(cfg);
    const auto t = n.token("ana");
    // Touch everything except the 2012 layer.
    for (const char* id : {"maharashtra_malaria_2011", "maharashtra_malaria_2013", "maharashtra_malaria_2014", "risk_zones"})
        n.node->get_features(t, id, std::nullopt);
    auto r = n.node->cache_evict();
    ASSERT_EQ(r.evicted, std::vector<std::string>{"maharashtra_malaria_2012"});
    EXPECT_LE(r.bytes_after, cfg.storage_budget_bytes);
    EXPECT_TRUE(n.node->was_evicted("maharashtra_malaria_2012"));
    EXPECT_EQ(code_of([&] { n.node->get_features(t, "maharashtra_malaria_2012", std::nullopt); }), ErrorCode::UnknownLayer);
    auto resp = n.get("/features?layer=maharashtra_malaria_2012", t);
    EXPECT_EQ(resp.status, 404);
    EXPECT_EQ(json::parse(resp.body)["evicted"], true);
    EXPECT_GT(raster_bytes, 0u);
    EXPECT_TRUE(n.node->catalog().metadata("maharashtra_base").has_value());
}

TEST(Eviction, PinnedOverBudgetIsUnsatisfiable) {
    auto cfg = fogtest::config(1000);
    cfg.pinned_layers = {"maharashtra_malaria_2011", "maharashtra_malaria_2012", "maharashtra_malaria_2013",
                         "maharashtra_malaria_2014", "maharashtra_base", "risk_zones"};
    Node n(cfg);
    EXPECT_EQ(code_of([&] { n.node->cache_evict(); }), ErrorCode::BudgetUnsatisfiable);
}

TEST(Eviction, QueueBytesAreNeverEvicted) {
    Node probe;
    const auto layers = probe.node->layer_bytes();
    auto cfg = fogtest::config(layers + 4096);
    Node n(cfg);
    const auto t = n.token("ana");
    // Fill the queue until layers have to make room.
    for (int i = 0; i < 20 && n.node->layer_bytes() == layers; ++i) {
        n.node->enqueue_summary(aggregate_summary(fixture::case_batch(n.opts, 2011, 2, static_cast<std::uint64_t>(i)),
                                                  {"district", "year"}, {"positives"}));
        n.node->cache_evict();
    }
    EXPECT_LT(n.node->layer_bytes(), layers);
    EXPECT_LE(n.node->local_bytes(), cfg.storage_budget_bytes);
    EXPECT_GT(n.queue->size(), 0u);
    (void)t;
}

TEST(Autonomy, ResponsesIdenticalWithLinkDown) {
    Node n;
    const auto t = n.token("laptop");
    std::vector<HttpRequest> reqs = {
        make_request("GET", "/capabilities"),
        make_request("GET", "/features?layer=maharashtra_malaria_2013&bbox=0,0,400,400"),
        make_request("GET", "/map?layers=maharashtra_base,maharashtra_malaria_2011&bbox=0,0,1000,1000&width=32&height=32"),
        make_request("POST", "/execute",
                     R"({"process":"zonal_stats","params":{"raster":"maharashtra_base","zones":"risk_zones","zone_attr":"zone"}})"),
    };
    cloud::CloudStore store;
    fogtest::register_node(store);
    fogtest::StoreEndpoint cloud(store);
    n.node->enqueue_summary(aggregate_summary(fixture::district_layer(n.opts, 2011), {"district"}, {"positives"}));

    fogtest::ScriptedLink up;
    n.node->flush(up, cloud);
    std::vector<std::string> online;
    for (const auto& r : reqs) online.push_back(n.node->handle_request(fogtest::with_token(r, t)).body);

    n.node->enqueue_summary(aggregate_summary(fixture::district_layer(n.opts, 2012), {"district"}, {"positives"}));
    fogtest::ScriptedLink down;
    down.is_up = false;
    n.node->flush(down, cloud);
    for (std::size_t i = 0; i < reqs.size(); ++i) {
        auto resp = n.node->handle_request(fogtest::with_token(reqs[i], t));
        EXPECT_EQ(resp.status, 200);
        EXPECT_EQ(resp.body, online[i]) << reqs[i].path;
    }
}

TEST(FogNode, ConcurrentReadersDuringReplace) {
    Node n;
    const auto t = n.token("phone");
    std::atomic<bool> stop{false};
    std::atomic<int> bad{0};
    std::thread reader([&] {
        while (!stop) {
            auto fs = n.node->get_features(t, "maharashtra_malaria_2011", std::nullopt);
            if (fs.size() != 6 && fs.size() != 9) ++bad;
        }
    });
    auto nine = n.opts;
    nine.districts = 9;
    for (int i = 0; i < 200; ++i) {
        n.node->put_layer(fixture::district_layer(i % 2 ? n.opts : nine, 2011));
    }
    stop = true;
    reader.join();
    EXPECT_EQ(bad.load(), 0);
}
