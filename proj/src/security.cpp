#include "soafog/security.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <algorithm>
#include <chrono>

namespace soafog::security {

using nlohmann::json;

std::string_view to_string(Role role) {
    switch (role) {
    case Role::MobileClient: return "mobile_client";
    case Role::ThinClient: return "thin_client";
    case Role::ThickClient: return "thick_client";
    case Role::Analyst: return "analyst";
    case Role::Admin: return "admin";
    }
    return "mobile_client";
}

Role parse_role(std::string_view text) {
    for (Role r : kAllRoles) {
        if (to_string(r) == text) return r;
    }
    throw Error(ErrorCode::Validation, "unknown role: " + std::string(text), std::string(text));
}

std::string_view to_string(Permission perm) {
    switch (perm) {
    case Permission::ReadCatalog: return "read_catalog";
    case Permission::ReadFeatures: return "read_features";
    case Permission::RenderMap: return "render_map";
    case Permission::ExecuteProcess: return "execute_process";
    case Permission::WriteLayer: return "write_layer";
    case Permission::SyncToCloud: return "sync_to_cloud";
    case Permission::ManagePolicy: return "manage_policy";
    }
    return "read_catalog";
}

Permission parse_permission(std::string_view text) {
    for (Permission p : kAllPermissions) {
        if (to_string(p) == text) return p;
    }
    throw Error(ErrorCode::Validation, "unknown permission: " + std::string(text), std::string(text));
}

RolePermissions default_role_permissions() {
    using P = Permission;
    const std::set<P> client = {P::ReadCatalog, P::ReadFeatures, P::RenderMap};
    RolePermissions rp;
    rp[Role::MobileClient] = client;
    rp[Role::ThinClient] = client;
    rp[Role::ThickClient] = client;
    rp[Role::ThickClient].insert(P::ExecuteProcess);
    rp[Role::Analyst] = client;
    rp[Role::Analyst].insert({P::ExecuteProcess, P::WriteLayer});
    rp[Role::Admin] = std::set<P>(std::begin(kAllPermissions), std::end(kAllPermissions));
    return rp;
}

namespace {

std::string pbkdf2(const std::string& secret, const std::string& salt, int iterations) {
    unsigned char out[32];
    if (PKCS5_PBKDF2_HMAC(secret.data(), static_cast<int>(secret.size()),
                          reinterpret_cast<const unsigned char*>(salt.data()), static_cast<int>(salt.size()),
                          iterations, EVP_sha256(), sizeof out, out) != 1) {
        throw Error(ErrorCode::Io, "credential hashing failed");
    }
    return std::string(reinterpret_cast<const char*>(out), sizeof out);
}

std::string_view to_string(Effect e) {
    return e == Effect::Allow ? "allow" : "deny";
}

std::string_view to_string(Decision d) {
    return d == Decision::Allow ? "allow" : "deny";
}

} // namespace

Credential make_credential(const std::string& secret, int iterations) {
    Credential c;
    const auto salt = random_bytes(16);
    c.salt_hex = hex_encode(salt);
    c.iterations = iterations;
    c.hash_hex = hex_encode(pbkdf2(secret, salt, iterations));
    return c;
}

bool check_credential(const Credential& cred, const std::string& secret) {
    auto salt = hex_decode(cred.salt_hex);
    auto expected = hex_decode(cred.hash_hex);
    if (!salt || !expected || expected->size() != 32 || cred.iterations < 1) return false;
    const auto actual = pbkdf2(secret, *salt, cred.iterations);
    return CRYPTO_memcmp(actual.data(), expected->data(), 32) == 0;
}

json audit_to_json(const AuditRecord& rec) {
    return {{"timestamp", rec.timestamp_ms},
            {"principal_id", rec.principal_id},
            {"operation", rec.operation},
            {"layer_id", rec.layer_id ? json(*rec.layer_id) : json(nullptr)},
            {"decision", to_string(rec.decision)},
            {"reason", rec.reason}};
}

Clock system_clock() {
    return [] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::system_clock::now().time_since_epoch())
            .count();
    };
}

PolicyChange policy_change_from_json(const json& j) {
    try {
        const auto op = j.at("op").get<std::string>();
        if (op == "add_principal") {
            change::AddPrincipal c;
            c.principal_id = j.at("principal_id").get<std::string>();
            c.display_name = j.value("display_name", c.principal_id);
            c.secret = j.at("secret").get<std::string>();
            for (const auto& r : j.at("roles")) c.roles.insert(parse_role(r.get<std::string>()));
            c.clearance = parse_sensitivity(j.value("clearance", "public"));
            return c;
        }
        if (op == "grant_role") {
            return change::GrantRole{j.at("principal_id").get<std::string>(),
                                     parse_role(j.at("role").get<std::string>())};
        }
        if (op == "revoke_role") {
            return change::RevokeRole{j.at("principal_id").get<std::string>(),
                                      parse_role(j.at("role").get<std::string>())};
        }
        if (op == "set_label") {
            return change::SetLabel{j.at("layer_id").get<std::string>(),
                                    parse_sensitivity(j.at("label").get<std::string>())};
        }
        if (op == "set_clearance") {
            return change::SetClearance{j.at("principal_id").get<std::string>(),
                                        parse_sensitivity(j.at("label").get<std::string>())};
        }
        if (op == "set_acl") {
            change::SetAcl c;
            c.layer_id = j.at("layer_id").get<std::string>();
            for (const auto& e : j.at("entries")) {
                c.entries.push_back({e.at("principal").get<std::string>(),
                                     parse_permission(e.at("permission").get<std::string>()),
                                     e.at("effect").get<std::string>() == "deny" ? Effect::Deny : Effect::Allow});
            }
            return c;
        }
        throw Error(ErrorCode::InvalidChange, "unknown policy change: " + op, op);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Syntax, std::string("malformed policy change: ") + e.what());
    }
}

PolicyStore::PolicyStore(PolicyOptions options, Clock clock)
    : options_(options), clock_(std::move(clock)), token_gen_([] { return hex_encode(random_bytes(16)); }) {}

void PolicyStore::add_principal(const std::string& id, const std::string& display_name, const std::string& secret,
                                std::set<Role> roles) {
    add_principal(Principal{id, display_name, make_credential(secret, options_.hash_iterations), std::move(roles)});
}

void PolicyStore::add_principal(Principal principal) {
    if (principal.principal_id.empty() || principal.roles.empty()) {
        throw Error(ErrorCode::InvalidChange, "principal needs an id and at least one role", principal.principal_id);
    }
    std::unique_lock lock(mutex_);
    auto id = principal.principal_id;
    if (!principals_.emplace(id, std::move(principal)).second) {
        throw Error(ErrorCode::InvalidChange, "principal already exists: " + id, id);
    }
}

void PolicyStore::set_role_permissions(RolePermissions rp) {
    std::unique_lock lock(mutex_);
    role_permissions_ = std::move(rp);
}

void PolicyStore::set_clearance(const std::string& principal_id, SensitivityLabel label) {
    std::unique_lock lock(mutex_);
    clearances_[principal_id] = label;
}

void PolicyStore::set_layer_label(const std::string& layer_id, SensitivityLabel label) {
    std::unique_lock lock(mutex_);
    layer_labels_[layer_id] = label;
}

void PolicyStore::add_acl(const std::string& layer_id, AclEntry entry) {
    std::unique_lock lock(mutex_);
    acls_[layer_id].push_back(std::move(entry));
}

void PolicyStore::grant_role(const std::string& principal_id, Role role) {
    std::unique_lock lock(mutex_);
    auto it = principals_.find(principal_id);
    if (it == principals_.end()) {
        throw Error(ErrorCode::InvalidChange, "unknown principal: " + principal_id, principal_id);
    }
    it->second.roles.insert(role);
}

std::string PolicyStore::authenticate(const std::string& principal_id, const std::string& secret) {
    std::unique_lock lock(mutex_);
    const auto now = clock_();
    auto deny = [&](ErrorCode code, const char* reason) {
        append_audit({now, principal_id, "authenticate", std::nullopt, Decision::Deny, reason});
        if (code == ErrorCode::LockedOut) throw Error(code, "account locked after repeated failures");
        throw Error(code, "bad credentials");
    };
    int& failures = failures_[principal_id];
    if (failures >= options_.lockout_threshold) {
        deny(ErrorCode::LockedOut, "locked_out");
    }
    auto it = principals_.find(principal_id);
    bool ok = false;
    if (it != principals_.end()) {
        ok = check_credential(it->second.credential, secret);
    } else {
        // Same hashing cost for unknown ids so timing does not enumerate users.
        static const Credential dummy = make_credential("", 1);
        check_credential(Credential{dummy.salt_hex, options_.hash_iterations, dummy.hash_hex}, secret);
    }
    if (!ok) {
        ++failures;
        deny(ErrorCode::BadCredentials, "bad_credentials");
    }
    failures = 0;
    for (auto s = sessions_.begin(); s != sessions_.end();) {
        s = s->second.expires_at_ms <= now ? sessions_.erase(s) : std::next(s);
    }
    auto token = token_gen_();
    sessions_[token] = Session{principal_id, now + options_.session_ttl_ms};
    append_audit({now, principal_id, "authenticate", std::nullopt, Decision::Allow, "ok"});
    return token;
}

bool PolicyStore::rbac_allows(const Principal& p, Permission perm) const {
    return std::any_of(p.roles.begin(), p.roles.end(), [&](Role r) {
        auto it = role_permissions_.find(r);
        return it != role_permissions_.end() && it->second.count(perm) > 0;
    });
}

AuthDecision PolicyStore::authorize(const std::string& token, const std::optional<std::string>& layer_id,
                                    Permission perm) {
    AuthDecision d;
    {
        std::shared_lock lock(mutex_);
        const auto now = clock_();
        auto decide = [&]() -> std::string {
            auto s = sessions_.find(token);
            if (s == sessions_.end() || s->second.expires_at_ms <= now) return "expired_token";
            d.principal_id = s->second.principal_id;
            auto p = principals_.find(d.principal_id);
            if (p == principals_.end() || !rbac_allows(p->second, perm)) return "rbac";
            if (!layer_id) return "ok";
            auto c = clearances_.find(d.principal_id);
            const auto clearance = c == clearances_.end() ? SensitivityLabel::Public : c->second;
            auto l = layer_labels_.find(*layer_id);
            const auto label = l == layer_labels_.end() ? SensitivityLabel::Confidential : l->second;
            if (clearance < label) return "mac";
            auto acl = acls_.find(*layer_id);
            if (acl != acls_.end()) {
                bool any_allow = false, allowed = false;
                for (const auto& e : acl->second) {
                    if (e.permission != perm) continue;
                    if (e.effect == Effect::Deny) {
                        if (e.principal_id == d.principal_id) return "dac";
                    } else {
                        any_allow = true;
                        allowed = allowed || e.principal_id == d.principal_id;
                    }
                }
                if (any_allow && !allowed) return "dac";
            }
            return "ok";
        };
        d.reason = decide();
        d.decision = d.reason == "ok" ? Decision::Allow : Decision::Deny;
        append_audit({now, d.principal_id, std::string(to_string(perm)), layer_id, d.decision, d.reason});
    }
    return d;
}

std::size_t PolicyStore::admin_count() const {
    return static_cast<std::size_t>(std::count_if(principals_.begin(), principals_.end(),
                                                  [](const auto& kv) { return kv.second.roles.count(Role::Admin); }));
}

void PolicyStore::apply(const PolicyChange& c) {
    auto require_principal = [&](const std::string& id) -> Principal& {
        auto it = principals_.find(id);
        if (it == principals_.end()) throw Error(ErrorCode::InvalidChange, "unknown principal: " + id, id);
        return it->second;
    };
    std::visit(
        [&](const auto& ch) {
            using T = std::decay_t<decltype(ch)>;
            if constexpr (std::is_same_v<T, change::AddPrincipal>) {
                // Hashed by the caller before the lock is taken.
            } else if constexpr (std::is_same_v<T, change::GrantRole>) {
                require_principal(ch.principal_id).roles.insert(ch.role);
            } else if constexpr (std::is_same_v<T, change::RevokeRole>) {
                auto& p = require_principal(ch.principal_id);
                if (!p.roles.count(ch.role)) {
                    throw Error(ErrorCode::InvalidChange, "role not held", ch.principal_id);
                }
                if (p.roles.size() == 1) {
                    throw Error(ErrorCode::InvalidChange, "cannot revoke a principal's last role", ch.principal_id);
                }
                if (ch.role == Role::Admin && admin_count() == 1) {
                    throw Error(ErrorCode::InvalidChange, "cannot revoke the last admin", ch.principal_id);
                }
                p.roles.erase(ch.role);
            } else if constexpr (std::is_same_v<T, change::SetLabel>) {
                if (!geo::valid_layer_id(ch.layer_id)) {
                    throw Error(ErrorCode::InvalidChange, "invalid layer id", ch.layer_id);
                }
                layer_labels_[ch.layer_id] = ch.label;
            } else if constexpr (std::is_same_v<T, change::SetClearance>) {
                require_principal(ch.principal_id);
                clearances_[ch.principal_id] = ch.label;
            } else {
                acls_[ch.layer_id] = ch.entries;
            }
        },
        c);
}

void PolicyStore::manage_policy(const std::string& admin_token, const PolicyChange& c) {
    auto d = authorize(admin_token, std::nullopt, Permission::ManagePolicy);
    if (!d.allowed()) {
        throw Error(ErrorCode::Unauthorized, "token may not manage policy", d.reason);
    }
    std::optional<Principal> added;
    if (const auto* add = std::get_if<change::AddPrincipal>(&c)) {
        if (add->principal_id.empty() || add->roles.empty()) {
            throw Error(ErrorCode::InvalidChange, "principal needs an id and at least one role", add->principal_id);
        }
        added = Principal{add->principal_id, add->display_name, make_credential(add->secret, options_.hash_iterations),
                          add->roles};
    }
    static constexpr const char* names[] = {"add_principal", "grant_role", "revoke_role",
                                            "set_label",     "set_clearance", "set_acl"};
    std::unique_lock lock(mutex_);
    if (added) {
        if (principals_.count(added->principal_id)) {
            throw Error(ErrorCode::InvalidChange, "principal already exists: " + added->principal_id,
                        added->principal_id);
        }
        clearances_[added->principal_id] = std::get<change::AddPrincipal>(c).clearance;
        principals_.emplace(added->principal_id, std::move(*added));
    } else {
        apply(c);
    }
    append_audit({clock_(), d.principal_id, std::string("manage_policy:") + names[c.index()], std::nullopt,
                  Decision::Allow, "ok"});
}

std::optional<std::string> PolicyStore::session_principal(const std::string& token) const {
    std::shared_lock lock(mutex_);
    auto s = sessions_.find(token);
    if (s == sessions_.end() || s->second.expires_at_ms <= clock_()) return std::nullopt;
    return s->second.principal_id;
}

bool PolicyStore::has_session(const std::string& token) const {
    return session_principal(token).has_value();
}

std::vector<AuditRecord> PolicyStore::audit() const {
    std::lock_guard lock(audit_mutex_);
    return audit_;
}

std::size_t PolicyStore::audit_size() const {
    std::lock_guard lock(audit_mutex_);
    return audit_.size();
}

void PolicyStore::append_audit(AuditRecord rec) {
    std::lock_guard lock(audit_mutex_);
    if (audit_sink_) audit_sink_(audit_to_json(rec).dump());
    audit_.push_back(std::move(rec));
}

void PolicyStore::set_audit_sink(std::function<void(const std::string&)> sink) {
    std::lock_guard lock(audit_mutex_);
    audit_sink_ = std::move(sink);
}

void PolicyStore::write_audit_jsonl(std::ostream& out) const {
    std::lock_guard lock(audit_mutex_);
    for (const auto& rec : audit_) out << audit_to_json(rec).dump() << '\n';
}

void PolicyStore::set_token_generator(std::function<std::string()> gen) {
    std::unique_lock lock(mutex_);
    token_gen_ = std::move(gen);
}

void PolicyStore::set_clock(Clock clock) {
    std::unique_lock lock(mutex_);
    clock_ = std::move(clock);
}

std::optional<Principal> PolicyStore::principal(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = principals_.find(id);
    if (it == principals_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> PolicyStore::principal_ids() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& kv : principals_) out.push_back(kv.first);
    return out;
}

SensitivityLabel PolicyStore::clearance(const std::string& principal_id) const {
    std::shared_lock lock(mutex_);
    auto it = clearances_.find(principal_id);
    return it == clearances_.end() ? SensitivityLabel::Public : it->second;
}

std::optional<SensitivityLabel> PolicyStore::layer_label(const std::string& layer_id) const {
    std::shared_lock lock(mutex_);
    auto it = layer_labels_.find(layer_id);
    if (it == layer_labels_.end()) return std::nullopt;
    return it->second;
}

json PolicyStore::to_json() const {
    std::shared_lock lock(mutex_);
    json principals = json::array();
    for (const auto& [id, p] : principals_) {
        json roles = json::array();
        for (Role r : p.roles) roles.push_back(to_string(r));
        principals.push_back({{"id", id},
                              {"display_name", p.display_name},
                              {"roles", roles},
                              {"credential",
                               {{"salt", p.credential.salt_hex},
                                {"iterations", p.credential.iterations},
                                {"hash", p.credential.hash_hex}}}});
    }
    json rp = json::object();
    for (const auto& [role, perms] : role_permissions_) {
        json list = json::array();
        for (Permission perm : perms) list.push_back(to_string(perm));
        rp[std::string(to_string(role))] = list;
    }
    json acls = json::array();
    for (const auto& [layer, entries] : acls_) {
        for (const auto& e : entries) {
            acls.push_back({{"layer", layer},
                            {"principal", e.principal_id},
                            {"permission", to_string(e.permission)},
                            {"effect", to_string(e.effect)}});
        }
    }
    json clearances = json::object();
    for (const auto& [id, label] : clearances_) clearances[id] = to_string(label);
    json labels = json::object();
    for (const auto& [id, label] : layer_labels_) labels[id] = to_string(label);
    return {{"principals", principals},
            {"role_permissions", rp},
            {"acls", acls},
            {"clearances", clearances},
            {"labels", labels}};
}

void PolicyStore::load_json(PolicyStore& store, const json& doc) {
    try {
        if (doc.contains("role_permissions")) {
            RolePermissions rp;
            for (const auto& [role, perms] : doc["role_permissions"].items()) {
                auto& set = rp[parse_role(role)];
                for (const auto& p : perms) set.insert(parse_permission(p.get<std::string>()));
            }
            store.set_role_permissions(std::move(rp));
        } else {
            store.set_role_permissions(default_role_permissions());
        }
        for (const auto& p : doc.value("principals", json::array())) {
            Principal principal;
            principal.principal_id = p.at("id").get<std::string>();
            principal.display_name = p.value("display_name", principal.principal_id);
            for (const auto& r : p.at("roles")) principal.roles.insert(parse_role(r.get<std::string>()));
            if (p.contains("credential")) {
                const auto& c = p["credential"];
                principal.credential = {c.at("salt").get<std::string>(), c.at("iterations").get<int>(),
                                        c.at("hash").get<std::string>()};
            } else {
                principal.credential =
                    make_credential(p.at("secret").get<std::string>(), store.options().hash_iterations);
            }
            store.add_principal(std::move(principal));
        }
        for (const auto& a : doc.value("acls", json::array())) {
            store.add_acl(a.at("layer").get<std::string>(),
                          {a.at("principal").get<std::string>(),
                           parse_permission(a.at("permission").get<std::string>()),
                           a.at("effect").get<std::string>() == "deny" ? Effect::Deny : Effect::Allow});
        }
        const auto clearances = doc.value("clearances", json::object());
        for (const auto& [id, label] : clearances.items()) {
            store.set_clearance(id, parse_sensitivity(label.get<std::string>()));
        }
        const auto labels = doc.value("labels", json::object());
        for (const auto& [id, label] : labels.items()) {
            store.set_layer_label(id, parse_sensitivity(label.get<std::string>()));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Syntax, std::string("malformed policy file: ") + e.what());
    }
}

std::string hmac_sha256(std::string_view key, std::string_view data) {
    unsigned char out[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    static const unsigned char empty = 0;
    const auto* k = key.empty() ? &empty : reinterpret_cast<const unsigned char*>(key.data());
    const auto* d = data.empty() ? &empty : reinterpret_cast<const unsigned char*>(data.data());
    if (!HMAC(EVP_sha256(), k, static_cast<int>(key.size()), d, data.size(), out, &len)) {
        throw Error(ErrorCode::Io, "HMAC computation failed");
    }
    return std::string(reinterpret_cast<const char*>(out), len);
}

Envelope seal_envelope(std::string payload, const std::string& key_id, std::string_view key) {
    if (key.size() != 32) {
        throw Error(ErrorCode::BadKeyLength, "envelope key must be 32 bytes", std::to_string(key.size()));
    }
    auto mac = hex_encode(hmac_sha256(key, payload));
    return Envelope{std::move(payload), key_id, std::move(mac)};
}

bool verify_envelope(const Envelope& env, std::string_view key) {
    const auto expected = hmac_sha256(key, env.payload);
    const auto given = hex_decode(env.mac);
    if (key.size() != 32 || !given || given->size() != expected.size()) return false;
    return CRYPTO_memcmp(given->data(), expected.data(), expected.size()) == 0;
}

} // namespace soafog::security
