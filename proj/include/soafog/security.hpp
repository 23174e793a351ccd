#pragma once

#include "soafog/encoding.hpp"
#include "soafog/geodata.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <shared_mutex>
#include <string>
#include <variant>
#include <vector>

namespace soafog::security {

enum class Role { MobileClient, ThinClient, ThickClient, Analyst, Admin };
inline constexpr Role kAllRoles[] = {Role::MobileClient, Role::ThinClient, Role::ThickClient, Role::Analyst,
                                     Role::Admin};

enum class Permission {
    ReadCatalog,
    ReadFeatures,
    RenderMap,
    ExecuteProcess,
    WriteLayer,
    SyncToCloud,
    ManagePolicy,
};
inline constexpr Permission kAllPermissions[] = {Permission::ReadCatalog,    Permission::ReadFeatures,
                                                 Permission::RenderMap,      Permission::ExecuteProcess,
                                                 Permission::WriteLayer,     Permission::SyncToCloud,
                                                 Permission::ManagePolicy};

std::string_view to_string(Role role);
Role parse_role(std::string_view text);
std::string_view to_string(Permission perm);
Permission parse_permission(std::string_view text);

using RolePermissions = std::map<Role, std::set<Permission>>;

/// Clients read and render; thick clients also run processes; analysts add
/// processing and layer writes; admins hold everything.
RolePermissions default_role_permissions();

struct Credential {
    std::string salt_hex;
    int iterations = 10000;
    std::string hash_hex;
};

/// PBKDF2-HMAC-SHA-256 with a fresh 16-byte salt.
Credential make_credential(const std::string& secret, int iterations = 10000);
bool check_credential(const Credential& cred, const std::string& secret);

struct Principal {
    std::string principal_id;
    std::string display_name;
    Credential credential;
    std::set<Role> roles;
};

enum class Effect { Allow, Deny };

struct AclEntry {
    std::string principal_id;
    Permission permission = Permission::ReadFeatures;
    Effect effect = Effect::Allow;
};

enum class Decision { Allow, Deny };

struct AuditRecord {
    std::int64_t timestamp_ms = 0;
    std::string principal_id;
    std::string operation;
    std::optional<std::string> layer_id;
    Decision decision = Decision::Deny;
    std::string reason;
};

nlohmann::json audit_to_json(const AuditRecord& rec);

struct AuthDecision {
    Decision decision = Decision::Deny;
    std::string reason; // ok | expired_token | rbac | mac | dac
    std::string principal_id;

    bool allowed() const { return decision == Decision::Allow; }
};

struct Session {
    std::string principal_id;
    std::int64_t expires_at_ms = 0;
};

using Clock = std::function<std::int64_t()>;

/// Milliseconds since the Unix epoch.
Clock system_clock();

struct PolicyOptions {
    int lockout_threshold = 5;
    std::int64_t session_ttl_ms = 3600 * 1000;
    int hash_iterations = 10000;
};

namespace change {
struct AddPrincipal {
    std::string principal_id;
    std::string display_name;
    std::string secret;
    std::set<Role> roles;
    SensitivityLabel clearance = SensitivityLabel::Public;
};
struct GrantRole {
    std::string principal_id;
    Role role;
};
struct RevokeRole {
    std::string principal_id;
    Role role;
};
struct SetLabel {
    std::string layer_id;
    SensitivityLabel label;
};
struct SetClearance {
    std::string principal_id;
    SensitivityLabel label;
};
struct SetAcl {
    std::string layer_id;
    std::vector<AclEntry> entries; // replaces the layer's list
};
} // namespace change

using PolicyChange = std::variant<change::AddPrincipal, change::GrantRole, change::RevokeRole, change::SetLabel,
                                  change::SetClearance, change::SetAcl>;

PolicyChange policy_change_from_json(const nlohmann::json& j);

/// Principals, role grants, ACLs, labels, sessions and the audit trail.
///
/// Reads (authorize) take a shared lock; policy edits and logins take the
/// exclusive lock. The audit log has its own mutex so concurrent authorize
/// calls append in a single total order.
class PolicyStore {
public:
    explicit PolicyStore(PolicyOptions options = {}, Clock clock = system_clock());

    PolicyStore(const PolicyStore&) = delete;
    PolicyStore& operator=(const PolicyStore&) = delete;

    // Bootstrap mutators (policy file loading, offline CLI). Online changes
    // go through manage_policy.
    void add_principal(const std::string& id, const std::string& display_name, const std::string& secret,
                       std::set<Role> roles);
    void add_principal(Principal principal);
    void set_role_permissions(RolePermissions rp);
    void set_clearance(const std::string& principal_id, SensitivityLabel label);
    void set_layer_label(const std::string& layer_id, SensitivityLabel label);
    void add_acl(const std::string& layer_id, AclEntry entry);
    void grant_role(const std::string& principal_id, Role role);

    std::string authenticate(const std::string& principal_id, const std::string& secret);

    AuthDecision authorize(const std::string& token, const std::optional<std::string>& layer_id, Permission perm);

    void manage_policy(const std::string& admin_token, const PolicyChange& change);

    /// Principal behind a live session, without auditing.
    std::optional<std::string> session_principal(const std::string& token) const;
    bool has_session(const std::string& token) const;

    std::vector<AuditRecord> audit() const;
    std::size_t audit_size() const;
    void append_audit(AuditRecord rec);
    /// Mirror every audit record to `sink` as a JSON line.
    void set_audit_sink(std::function<void(const std::string&)> sink);
    void write_audit_jsonl(std::ostream& out) const;

    void set_token_generator(std::function<std::string()> gen);
    void set_clock(Clock clock);
    std::int64_t now() const { return clock_(); }
    const PolicyOptions& options() const { return options_; }

    std::optional<Principal> principal(const std::string& id) const;
    std::vector<std::string> principal_ids() const;
    SensitivityLabel clearance(const std::string& principal_id) const;
    std::optional<SensitivityLabel> layer_label(const std::string& layer_id) const;

    nlohmann::json to_json() const;
    static void load_json(PolicyStore& store, const nlohmann::json& doc);

private:
    bool rbac_allows(const Principal& p, Permission perm) const;
    std::size_t admin_count() const;
    void apply(const PolicyChange& change);

    PolicyOptions options_;
    Clock clock_;
    std::function<std::string()> token_gen_;

    mutable std::shared_mutex mutex_;
    std::map<std::string, Principal> principals_;
    RolePermissions role_permissions_;
    std::map<std::string, std::vector<AclEntry>> acls_;
    std::map<std::string, SensitivityLabel> clearances_;
    std::map<std::string, SensitivityLabel> layer_labels_;
    std::map<std::string, Session> sessions_;
    std::map<std::string, int> failures_;

    mutable std::mutex audit_mutex_;
    std::vector<AuditRecord> audit_;
    std::function<void(const std::string&)> audit_sink_;
};

/// HMAC-SHA-256 with any key length.
std::string hmac_sha256(std::string_view key, std::string_view data);

struct Envelope {
    std::string payload;
    std::string key_id;
    std::string mac; // 64 lower-case hex chars
};

Envelope seal_envelope(std::string payload, const std::string& key_id, std::string_view key);

/// Comparison time does not depend on where the MACs differ.
bool verify_envelope(const Envelope& env, std::string_view key);

} // namespace soafog::security
