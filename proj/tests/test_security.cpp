#include "soafog/security.hpp"

#include "policy_universe.hpp"
#include "rfc4231.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <regex>
#include <sstream>
#include <thread>

using namespace soafog;
using namespace soafog::security;

namespace {

struct Fixture {
    std::shared_ptr<std::int64_t> now = std::make_shared<std::int64_t>(1000);
    PolicyStore store{PolicyOptions{5, 60'000, 10}, [t = now] { return *t; }};

    Fixture() {
        store.set_role_permissions(default_role_permissions());
        store.add_principal("root", "Root", "root-pw", {Role::Admin});
        store.add_principal("phone", "Phone", "phone-pw", {Role::MobileClient});
        store.add_principal("ana", "Analyst", "ana-pw", {Role::Analyst});
        store.set_clearance("root", SensitivityLabel::Confidential);
        store.set_clearance("ana", SensitivityLabel::Confidential);
        store.set_layer_label("conf", SensitivityLabel::Confidential);
        store.set_layer_label("restr", SensitivityLabel::Restricted);
        store.set_layer_label("open", SensitivityLabel::Public);
    }
};

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorCode::Io;
}

} // namespace

TEST(Hmac, AllRfc4231Vectors) {
    for (const auto& v : rfc4231::vectors()) {
        const auto mac = hex_encode(hmac_sha256(v.key, v.data));
        EXPECT_EQ(mac.substr(0, v.mac_hex.size()), v.mac_hex) << "case " << v.id;
    }
}

TEST(Envelope, SealVerifyAndKeyLength) {
    const std::string key(32, 'k');
    auto env = seal_envelope("payload", "k1", key);
    EXPECT_EQ(env.mac.size(), 64u);
    EXPECT_EQ(env.mac, hex_encode(hmac_sha256(key, "payload")));
    EXPECT_TRUE(verify_envelope(env, key));
    EXPECT_FALSE(verify_envelope(env, std::string(32, 'j')));
    auto truncated = env;
    truncated.mac.pop_back();
    EXPECT_FALSE(verify_envelope(truncated, key));
    EXPECT_EQ(code_of([&] { seal_envelope("x", "k1", "Jefe"); }), ErrorCode::BadKeyLength);
}

TEST(Envelope, EmptyPayloadStable) {
    const std::string key(32, '\x01');
    EXPECT_EQ(seal_envelope("", "k", key).mac, seal_envelope("", "k", key).mac);
}

TEST(Envelope, EveryBitFlipFailsVerification) {
    const std::string key(32, '\x5a');
    const auto env = seal_envelope("{\"district\":\"Pune\",\"positives\":1400}", "k1", key);
    for (std::size_t byte = 0; byte < env.payload.size(); ++byte) {
        for (int bit = 0; bit < 8; ++bit) {
            auto bad = env;
            bad.payload[byte] = static_cast<char>(bad.payload[byte] ^ (1 << bit));
            ASSERT_FALSE(verify_envelope(bad, key)) << byte << ":" << bit;
        }
    }
}

TEST(Credential, HashAndCheck) {
    auto c = make_credential("secret", 50);
    EXPECT_EQ(c.iterations, 50);
    EXPECT_EQ(c.salt_hex.size(), 32u);
    EXPECT_TRUE(check_credential(c, "secret"));
    EXPECT_FALSE(check_credential(c, "Secret"));
    EXPECT_NE(make_credential("secret", 50).salt_hex, c.salt_hex);
}

TEST(Authenticate, TokenShapeAndSession) {
    Fixture f;
    const auto token = f.store.authenticate("phone", "phone-pw");
    EXPECT_TRUE(std::regex_match(token, std::regex("[0-9a-f]{32}")));
    EXPECT_TRUE(f.store.has_session(token));
    EXPECT_EQ(f.store.session_principal(token), "phone");
}

TEST(Authenticate, WrongSecretIsAudited) {
    Fixture f;
    EXPECT_EQ(code_of([&] { f.store.authenticate("phone", "nope"); }), ErrorCode::BadCredentials);
    const auto audit = f.store.audit();
    ASSERT_FALSE(audit.empty());
    EXPECT_EQ(audit.back().decision, Decision::Deny);
    EXPECT_EQ(audit.back().reason, "bad_credentials");
}

TEST(Authenticate, UnknownUserLooksTheSame) {
    Fixture f;
    std::string known, unknown;
    try {
        f.store.authenticate("phone", "nope");
    } catch (const Error& e) {
        known = std::string(to_string(e.code())) + e.what();
    }
    try {
        f.store.authenticate("nobody", "nope");
    } catch (const Error& e) {
        unknown = std::string(to_string(e.code())) + e.what();
    }
    EXPECT_EQ(known, unknown);
}

TEST(Authenticate, LocksOutAfterFiveFailures) {
    Fixture f;
    for (int i = 0; i < 5; ++i) {
        EXPECT_EQ(code_of([&] { f.store.authenticate("phone", "wrong"); }), ErrorCode::BadCredentials);
    }
    EXPECT_EQ(code_of([&] { f.store.authenticate("phone", "phone-pw"); }), ErrorCode::LockedOut);
}

TEST(Authenticate, SuccessResetsCounter) {
    Fixture f;
    for (int round = 0; round < 3; ++round) {
        for (int i = 0; i < 4; ++i) EXPECT_THROW(f.store.authenticate("phone", "wrong"), Error);
        EXPECT_NO_THROW(f.store.authenticate("phone", "phone-pw"));
    }
}

TEST(Authorize, GateOrderExamples) {
    Fixture f;
    const auto root = f.store.authenticate("root", "root-pw");
    const auto phone = f.store.authenticate("phone", "phone-pw");
    const auto ana = f.store.authenticate("ana", "ana-pw");
    EXPECT_TRUE(f.store.authorize(root, "conf", Permission::ReadFeatures).allowed());

    auto d = f.store.authorize(phone, "restr", Permission::ReadFeatures);
    EXPECT_FALSE(d.allowed());
    EXPECT_EQ(d.reason, "mac");

    EXPECT_TRUE(f.store.authorize(ana, "conf", Permission::ReadFeatures).allowed());
    f.store.add_acl("conf", {"ana", Permission::ReadFeatures, Effect::Deny});
    d = f.store.authorize(ana, "conf", Permission::ReadFeatures);
    EXPECT_FALSE(d.allowed());
    EXPECT_EQ(d.reason, "dac");

    d = f.store.authorize(phone, "open", Permission::ExecuteProcess);
    EXPECT_EQ(d.reason, "rbac");
}

TEST(Authorize, UnlabelledLayerIsConfidential) {
    Fixture f;
    const auto phone = f.store.authenticate("phone", "phone-pw");
    EXPECT_EQ(f.store.authorize(phone, "mystery", Permission::ReadFeatures).reason, "mac");
}

TEST(Authorize, SessionsExpire) {
    Fixture f;
    const auto phone = f.store.authenticate("phone", "phone-pw");
    EXPECT_TRUE(f.store.authorize(phone, "open", Permission::ReadFeatures).allowed());
    *f.now += 60'000;
    auto d = f.store.authorize(phone, "open", Permission::ReadFeatures);
    EXPECT_FALSE(d.allowed());
    EXPECT_EQ(d.reason, "expired_token");
}

TEST(Authorize, AllowListExcludesOthers) {
    Fixture f;
    const auto root = f.store.authenticate("root", "root-pw");
    const auto ana = f.store.authenticate("ana", "ana-pw");
    f.store.add_acl("conf", {"ana", Permission::RenderMap, Effect::Allow});
    EXPECT_TRUE(f.store.authorize(ana, "conf", Permission::RenderMap).allowed());
    EXPECT_EQ(f.store.authorize(root, "conf", Permission::RenderMap).reason, "dac");
    // Entries for other permissions do not apply.
    EXPECT_TRUE(f.store.authorize(root, "conf", Permission::ReadFeatures).allowed());
}

TEST(Authorize, DenyByDefault) {
    PolicyStore store(PolicyOptions{5, 60'000, 1});
    store.set_role_permissions({});
    store.add_principal("x", "X", "pw", {Role::Admin});
    store.set_clearance("x", SensitivityLabel::Confidential);
    const auto t = store.authenticate("x", "pw");
    for (auto perm : kAllPermissions) {
        EXPECT_FALSE(store.authorize(t, std::nullopt, perm).allowed());
        EXPECT_FALSE(store.authorize(t, "any", perm).allowed());
    }
}

TEST(Authorize, AuditCoversEveryCall) {
    Fixture f;
    std::size_t calls = 0;
    const auto t = f.store.authenticate("ana", "ana-pw");
    ++calls;
    for (auto perm : kAllPermissions) {
        for (const char* layer : {"conf", "open"}) {
            f.store.authorize(t, std::string(layer), perm);
            ++calls;
        }
    }
    f.store.authorize("junk", std::nullopt, Permission::ReadCatalog);
    ++calls;
    EXPECT_GE(f.store.audit_size(), calls);
}

TEST(Authorize, AuditIsAppendOnlyUnderConcurrency) {
    Fixture f;
    const auto t = f.store.authenticate("ana", "ana-pw");
    std::vector<std::string> sunk;
    std::mutex sink_mutex;
    f.store.set_audit_sink([&](const std::string& line) {
        std::lock_guard lock(sink_mutex);
        sunk.push_back(line);
    });
    const auto before = f.store.audit_size();
    std::vector<std::thread> threads;
    for (int i = 0; i < 4; ++i) {
        threads.emplace_back([&] {
            for (int j = 0; j < 250; ++j) f.store.authorize(t, "open", Permission::ReadFeatures);
        });
    }
    for (auto& th : threads) th.join();
    EXPECT_EQ(f.store.audit_size(), before + 1000);
    EXPECT_EQ(sunk.size(), 1000u);
    std::ostringstream jsonl;
    f.store.write_audit_jsonl(jsonl);
    std::size_t lines = 0;
    std::istringstream in(jsonl.str());
    for (std::string line; std::getline(in, line);) {
        EXPECT_TRUE(nlohmann::json::accept(line)) << line;
        ++lines;
    }
    EXPECT_EQ(lines, f.store.audit_size());
}

TEST(Authorize, RandomTokensNeverAccepted) {
    PolicyStore store(PolicyOptions{5, 60'000, 1});
    store.set_role_permissions(default_role_permissions());
    for (int i = 0; i < 10; ++i) {
        const auto id = "p" + std::to_string(i);
        store.add_principal(id, id, "pw", {Role::Admin});
        store.authenticate(id, "pw");
    }
    std::size_t accepted = 0;
    for (int i = 0; i < 100'000; ++i) {
        if (store.has_session(hex_encode(random_bytes(16)))) ++accepted;
    }
    EXPECT_EQ(accepted, 0u);
}

TEST(ManagePolicy, GrantTakesEffect) {
    Fixture f;
    const auto root = f.store.authenticate("root", "root-pw");
    const auto phone = f.store.authenticate("phone", "phone-pw");
    EXPECT_EQ(f.store.authorize(phone, std::nullopt, Permission::WriteLayer).reason, "rbac");
    f.store.manage_policy(root, change::GrantRole{"phone", Role::Analyst});
    EXPECT_TRUE(f.store.authorize(phone, std::nullopt, Permission::WriteLayer).allowed());
}

TEST(ManagePolicy, NonAdminIsUnauthorized) {
    Fixture f;
    const auto phone = f.store.authenticate("phone", "phone-pw");
    const auto before = f.store.to_json();
    EXPECT_EQ(code_of([&] { f.store.manage_policy(phone, change::SetLabel{"open", SensitivityLabel::Public}); }),
              ErrorCode::Unauthorized);
    EXPECT_EQ(f.store.to_json(), before);
}

TEST(ManagePolicy, LastAdminCannotBeRevoked) {
    Fixture f;
    const auto root = f.store.authenticate("root", "root-pw");
    f.store.manage_policy(root, change::GrantRole{"root", Role::Analyst});
    EXPECT_EQ(code_of([&] { f.store.manage_policy(root, change::RevokeRole{"root", Role::Admin}); }),
              ErrorCode::InvalidChange);
    f.store.manage_policy(root, change::GrantRole{"ana", Role::Admin});
    EXPECT_NO_THROW(f.store.manage_policy(root, change::RevokeRole{"root", Role::Admin}));
}

TEST(ManagePolicy, JsonChangesApply) {
    Fixture f;
    const auto root = f.store.authenticate("root", "root-pw");
    f.store.manage_policy(root, policy_change_from_json(nlohmann::json::parse(
                                    R"({"op":"add_principal","principal_id":"desk","secret":"d","roles":["thin_client"],
                                        "clearance":"restricted"})")));
    f.store.manage_policy(root, policy_change_from_json(nlohmann::json::parse(
                                    R"({"op":"set_label","layer_id":"open","label":"restricted"})")));
    EXPECT_EQ(f.store.clearance("desk"), SensitivityLabel::Restricted);
    EXPECT_EQ(f.store.layer_label("open"), SensitivityLabel::Restricted);
    const auto desk = f.store.authenticate("desk", "d");
    EXPECT_TRUE(f.store.authorize(desk, "restr", Permission::RenderMap).allowed());
    EXPECT_THROW(policy_change_from_json(nlohmann::json::parse(R"({"op":"reboot"})")), Error);
}

TEST(PolicyFile, RoundTrip) {
    Fixture f;
    f.store.add_acl("conf", {"ana", Permission::ReadFeatures, Effect::Deny});
    const auto doc = f.store.to_json();
    PolicyStore copy(PolicyOptions{5, 60'000, 10});
    PolicyStore::load_json(copy, doc);
    EXPECT_EQ(copy.to_json(), doc);
    const auto t = copy.authenticate("ana", "ana-pw");
    EXPECT_EQ(copy.authorize(t, "conf", Permission::ReadFeatures).reason, "dac");
}

TEST(PolicyUniverse, ExhaustiveTruthTable) {
    const auto r = universe::run_truth_table();
    EXPECT_EQ(r.mismatches, 0u) << r.first_mismatch;
    for (const char* reason : {"ok", "expired_token", "rbac", "mac", "dac"}) {
        const auto it = r.reasons.find(reason);
        EXPECT_TRUE(it != r.reasons.end() && it->second > 0) << reason;
    }
}

TEST(PolicyUniverse, RandomPolicyInvariants) {
    const auto r = universe::run_random_policies(2000, 99);
    EXPECT_EQ(r.read_up, 0u);
    EXPECT_EQ(r.default_allow, 0u);
    EXPECT_EQ(r.deny_lifted, 0u);
    EXPECT_EQ(r.oracle_mismatch, 0u);
}
