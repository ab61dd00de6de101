#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ledgerstack/bytes.hpp"
#include "ledgerstack/crypto.hpp"

/*! \file
 * \brief Clark-Wilson enforcement with Biba level checks.
 *
 * Constrained data items (CDIs) change only through certified
 * transformation procedures (TPs) that a subject is authorized to run on
 * them by a triple. Every registered integrity verification procedure (IVP)
 * is re-run on the touched CDIs before a TP's writes are committed. Every
 * request, allowed or denied, lands in a hash-chained audit log.
 */

namespace ledgerstack::integrity {

using crypto::Hash32;
using crypto::KeyPair;
using crypto::PublicKey;
using crypto::Signature;

// ---------------------------------------------------------------------------
// Biba

enum class BibaAction : std::uint8_t { Read, Write, Invoke };
enum class Decision : std::uint8_t { Allow, Deny };

/// No read down, no write up, invoke only at an equal or lower level.
[[nodiscard]] constexpr Decision biba_check(unsigned subject_level, unsigned object_level, BibaAction action) noexcept {
    switch (action) {
    case BibaAction::Read: return object_level >= subject_level ? Decision::Allow : Decision::Deny;
    case BibaAction::Write:
    case BibaAction::Invoke: return object_level <= subject_level ? Decision::Allow : Decision::Deny;
    }
    return Decision::Deny;
}

[[nodiscard]] std::string_view to_string(BibaAction a) noexcept;
[[nodiscard]] BibaAction biba_action_from_string(std::string_view s);

// ---------------------------------------------------------------------------
// Entities

enum class ItemClass : std::uint8_t { Cdi, Udi };
enum class Outcome : std::uint8_t { Allowed, Denied };

[[nodiscard]] std::string_view to_string(ItemClass c) noexcept;
[[nodiscard]] std::string_view to_string(Outcome o) noexcept;

struct Subject {
    std::string id;
    PublicKey public_key;
    unsigned biba_level = 0;
    bool is_privileged = false;
};

struct DataItem {
    std::string id;
    ItemClass cls = ItemClass::Udi;
    unsigned biba_level = 0;
    Bytes value;
    std::string ivp = "any"; ///< name of the verification procedure guarding this item
};

/// The closed set of procedure bodies a TP can be certified with.
///   transfer  args {amount}  cdis [from, to]: from -= amount, to += amount
///   adjust    args {delta}   every cdi += delta
///   assign    args {value}   every cdi  = value
///   validate  no args        identity; the IVP decides (used for promotion)
enum class TpKind : std::uint8_t { Transfer, Adjust, Assign, Validate };

[[nodiscard]] std::string_view to_string(TpKind k) noexcept;
[[nodiscard]] TpKind tp_kind_from_string(std::string_view s);

struct TransformationProcedure {
    std::string id;
    TpKind kind = TpKind::Validate;
    std::string certifier;
    unsigned biba_level = 0;
};

struct Triple {
    std::string subject_id;
    std::string tp_id;
    std::set<std::string> cdi_ids;
    auto operator<=>(const Triple&) const = default;
};

using Ivp = std::function<bool(ByteView)>;

// ---------------------------------------------------------------------------
// Audit log

struct AuditRecord {
    std::uint64_t seq = 0;
    std::string actor; ///< empty when the request named no registered subject
    std::string action;
    Outcome outcome = Outcome::Denied;
    std::string detail;
    Hash32 prev_hash;
    Hash32 record_hash;

    /// Canonical JSON of every field except record_hash.
    [[nodiscard]] Bytes canonical_bytes() const;
    [[nodiscard]] Hash32 compute_hash() const { return crypto::sha256d(canonical_bytes()); }
    [[nodiscard]] Json to_json() const;
    [[nodiscard]] static AuditRecord from_json(const Json& j);
    bool operator==(const AuditRecord&) const = default;
};

/// Length and head hash of a log, published elsewhere (e.g. on chain) so
/// that truncation of the tail is detectable.
struct AuditAnchor {
    std::uint64_t length = 0;
    Hash32 head;
};

struct AuditVerdict {
    bool valid = true;
    std::uint64_t first_bad_seq = 0;
    [[nodiscard]] Json to_json() const;
};

[[nodiscard]] AuditVerdict audit_verify(std::span<const AuditRecord> log,
                                        const std::optional<AuditAnchor>& anchor = std::nullopt);

void export_audit(std::span<const AuditRecord> log, std::ostream& out);
[[nodiscard]] std::vector<AuditRecord> import_audit(std::istream& in);

// ---------------------------------------------------------------------------
// Requests. Each is signed by the requesting subject (authentication).

struct TpRequest {
    std::string subject_id;
    std::string tp_id;
    std::vector<std::string> cdi_ids;
    Json args = Json::object();
    [[nodiscard]] Bytes signing_bytes() const;
};

struct PromoteRequest {
    std::string subject_id;
    std::string tp_id;
    std::string udi_id;
    [[nodiscard]] Bytes signing_bytes() const;
};

enum class AuthChange : std::uint8_t { Grant, Revoke };

struct AuthorizationRequest {
    std::string admin_id;
    Triple triple;
    AuthChange change = AuthChange::Grant;
    [[nodiscard]] Bytes signing_bytes() const;
};

template <class Request>
[[nodiscard]] Signature sign_request(const Request& request, const KeyPair& key) {
    return crypto::sign(key.secret, request.signing_bytes());
}

struct Result {
    Outcome outcome = Outcome::Denied;
    std::string reason;
    std::map<std::string, Bytes> values; ///< post-state of the touched items (allowed only)
    AuditRecord audit;

    [[nodiscard]] bool allowed() const noexcept { return outcome == Outcome::Allowed; }
};

// ---------------------------------------------------------------------------

/// Single-writer. Items are reachable read-only; the only mutation paths are
/// the audited request methods below.
class PolicyState {
public:
    PolicyState();

    // Bootstrap. Throws Error(DuplicateId | UnknownEntity | InvalidParams).
    void add_subject(Subject subject);
    void add_item(DataItem item);
    void register_ivp(const std::string& name, Ivp ivp);
    /// Throws Error(SeparationOfDuty) if the certifier is already authorized
    /// to execute a TP with this id.
    const AuditRecord& certify_tp(TransformationProcedure tp);
    /// Grant without an admin request, used when loading a policy file.
    const AuditRecord& bootstrap_grant(Triple triple);

    // Audited requests. Denials are outcomes; unknown ids throw
    // Error(UnknownEntity) after auditing.
    Result execute_tp(const TpRequest& request, const Signature& auth);
    /// Also throws Error(AlreadyConstrained) after auditing.
    Result promote_udi(const PromoteRequest& request, const Signature& auth);
    /// Also throws Error(SeparationOfDuty) after auditing.
    Result alter_authorization(const AuthorizationRequest& request, const Signature& auth);

    /// API-layer read gate: nullopt when the Biba read rule denies.
    [[nodiscard]] std::optional<Bytes> read_item(const std::string& subject_id, const std::string& item_id) const;

    [[nodiscard]] const std::map<std::string, Subject>& subjects() const noexcept { return subjects_; }
    [[nodiscard]] const std::map<std::string, DataItem>& items() const noexcept { return items_; }
    [[nodiscard]] const std::map<std::string, TransformationProcedure>& tps() const noexcept { return tps_; }
    [[nodiscard]] const std::set<Triple>& triples() const noexcept { return triples_; }
    [[nodiscard]] std::span<const AuditRecord> audit_log() const noexcept { return audit_; }
    [[nodiscard]] AuditAnchor anchor() const;

    [[nodiscard]] bool ivp_passes(const DataItem& item) const;
    [[nodiscard]] Json to_json() const;

private:
    const AuditRecord& audit(const std::string& actor, std::string action, Outcome outcome, std::string detail);
    bool authorized(const std::string& subject, const std::string& tp, std::span<const std::string> items) const;
    bool sod_violation(const std::string& executor, const std::string& tp_id) const;

    std::map<std::string, Subject> subjects_;
    std::map<std::string, DataItem> items_;
    std::map<std::string, TransformationProcedure> tps_;
    std::map<std::string, Ivp> ivps_;
    std::set<Triple> triples_;
    std::vector<AuditRecord> audit_;
};

/// Policy file: {"subjects":[{id, public_key, level, privileged}],
/// "items":[{id, class, level, value, ivp}], "tps":[{id, kind, certifier,
/// level}], "triples":[{subject, tp, items}]}.
[[nodiscard]] PolicyState load_policy(const Json& doc);

} // namespace ledgerstack::integrity
