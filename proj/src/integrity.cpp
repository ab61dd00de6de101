#include "ledgerstack/integrity.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <ostream>

#include "ledgerstack/error.hpp"

namespace ledgerstack::integrity {

namespace {

std::optional<std::int64_t> parse_int(ByteView v) {
    if (v.empty()) return std::nullopt;
    const char* first = reinterpret_cast<const char*>(v.data());
    const char* last = first + v.size();
    std::int64_t out = 0;
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc{} || ptr != last) return std::nullopt;
    return out;
}

Bytes int_bytes(std::int64_t v) { return to_bytes(std::to_string(v)); }

bool printable(ByteView v) {
    return std::all_of(v.begin(), v.end(), [](Byte b) { return b >= 0x20 && b < 0x7f; });
}

Json value_json(ByteView v) {
    if (printable(v)) return std::string(reinterpret_cast<const char*>(v.data()), v.size());
    return Json{{"hex", to_hex(v)}};
}

std::string join(std::span<const std::string> ids) {
    std::string out = "[";
    for (std::size_t i = 0; i < ids.size(); ++i) out += (i ? "," : "") + ids[i];
    return out + "]";
}

struct TpOutput {
    std::optional<std::string> rejection;
    std::map<std::string, Bytes> values;
};

/// The procedure bodies. They see only the staged values of their targets.
TpOutput run_procedure(TpKind kind, std::map<std::string, Bytes> values, std::span<const std::string> order,
                       const Json& args) {
    TpOutput out;
    auto reject = [&](std::string why) {
        out.rejection = std::move(why);
        return out;
    };
    switch (kind) {
    case TpKind::Validate: break;
    case TpKind::Assign: {
        if (!args.contains("value") || !args["value"].is_string()) return reject("assign needs a string 'value'");
        for (auto& [id, v] : values) v = to_bytes(args["value"].get<std::string>());
        break;
    }
    case TpKind::Adjust: {
        if (!args.contains("delta") || !args["delta"].is_number_integer()) return reject("adjust needs integer 'delta'");
        const auto delta = args["delta"].get<std::int64_t>();
        for (auto& [id, v] : values) {
            auto cur = parse_int(v);
            if (!cur) return reject("item " + id + " is not an integer");
            v = int_bytes(*cur + delta);
        }
        break;
    }
    case TpKind::Transfer: {
        if (order.size() != 2) return reject("transfer needs exactly [from, to]");
        if (!args.contains("amount") || !args["amount"].is_number_integer() || args["amount"].get<std::int64_t>() <= 0)
            return reject("transfer needs positive integer 'amount'");
        const auto amount = args["amount"].get<std::int64_t>();
        auto from = parse_int(values[order[0]]);
        auto to = parse_int(values[order[1]]);
        if (!from || !to) return reject("transfer items must be integers");
        values[order[0]] = int_bytes(*from - amount);
        values[order[1]] = int_bytes(*to + amount);
        break;
    }
    }
    out.values = std::move(values);
    return out;
}

Json request_json(std::string_view type, Json body) {
    body["type"] = type;
    return body;
}

} // namespace

// ---------------------------------------------------------------------------

std::string_view to_string(BibaAction a) noexcept {
    switch (a) {
    case BibaAction::Read: return "read";
    case BibaAction::Write: return "write";
    case BibaAction::Invoke: return "invoke";
    }
    return "read";
}

BibaAction biba_action_from_string(std::string_view s) {
    if (s == "read") return BibaAction::Read;
    if (s == "write") return BibaAction::Write;
    if (s == "invoke") return BibaAction::Invoke;
    throw Error(ErrorCode::InvalidParams, "unknown biba action '" + std::string(s) + "'");
}

std::string_view to_string(ItemClass c) noexcept { return c == ItemClass::Cdi ? "CDI" : "UDI"; }
std::string_view to_string(Outcome o) noexcept { return o == Outcome::Allowed ? "allowed" : "denied"; }

std::string_view to_string(TpKind k) noexcept {
    switch (k) {
    case TpKind::Transfer: return "transfer";
    case TpKind::Adjust: return "adjust";
    case TpKind::Assign: return "assign";
    case TpKind::Validate: return "validate";
    }
    return "validate";
}

TpKind tp_kind_from_string(std::string_view s) {
    if (s == "transfer") return TpKind::Transfer;
    if (s == "adjust") return TpKind::Adjust;
    if (s == "assign") return TpKind::Assign;
    if (s == "validate") return TpKind::Validate;
    throw Error(ErrorCode::InvalidParams, "unknown tp kind '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------

Bytes AuditRecord::canonical_bytes() const {
    const Json j{{"seq", seq},
                 {"actor", actor},
                 {"action", action},
                 {"outcome", to_string(outcome)},
                 {"detail", detail},
                 {"prev_hash", prev_hash.hex()}};
    return to_bytes(canonical_json(j));
}

Json AuditRecord::to_json() const {
    return Json{{"seq", seq},
                {"actor", actor},
                {"action", action},
                {"outcome", to_string(outcome)},
                {"detail", detail},
                {"prev_hash", prev_hash.hex()},
                {"record_hash", record_hash.hex()}};
}

AuditRecord AuditRecord::from_json(const Json& j) {
    AuditRecord r;
    r.seq = j.at("seq").get<std::uint64_t>();
    r.actor = j.at("actor").get<std::string>();
    r.action = j.at("action").get<std::string>();
    const auto outcome = j.at("outcome").get<std::string>();
    if (outcome != "allowed" && outcome != "denied") throw Error(ErrorCode::ParseError, "bad outcome " + outcome);
    r.outcome = outcome == "allowed" ? Outcome::Allowed : Outcome::Denied;
    r.detail = j.at("detail").get<std::string>();
    r.prev_hash = Hash32::from_hex(j.at("prev_hash").get<std::string>());
    r.record_hash = Hash32::from_hex(j.at("record_hash").get<std::string>());
    return r;
}

Json AuditVerdict::to_json() const {
    if (valid) return Json{{"valid", true}};
    return Json{{"valid", false}, {"first_bad_seq", first_bad_seq}};
}

AuditVerdict audit_verify(std::span<const AuditRecord> log, const std::optional<AuditAnchor>& anchor) {
    Hash32 prev = Hash32::zero();
    for (std::size_t i = 0; i < log.size(); ++i) {
        const AuditRecord& r = log[i];
        if (r.seq != i || r.prev_hash != prev || r.record_hash != r.compute_hash()) return {false, i};
        prev = r.record_hash;
    }
    if (anchor) {
        if (log.size() < anchor->length) return {false, log.size()};
        if (anchor->length > 0 && log[anchor->length - 1].record_hash != anchor->head) return {false, anchor->length - 1};
    }
    return {};
}

void export_audit(std::span<const AuditRecord> log, std::ostream& out) {
    for (const auto& r : log) out << canonical_json(r.to_json()) << '\n';
}

std::vector<AuditRecord> import_audit(std::istream& in) {
    std::vector<AuditRecord> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(AuditRecord::from_json(Json::parse(line)));
        } catch (const std::exception& e) {
            throw Error(ErrorCode::ParseError, "line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

Bytes TpRequest::signing_bytes() const {
    return to_bytes(canonical_json(request_json(
        "execute_tp", {{"subject", subject_id}, {"tp", tp_id}, {"cdis", cdi_ids}, {"args", args}})));
}

Bytes PromoteRequest::signing_bytes() const {
    return to_bytes(canonical_json(request_json("promote_udi", {{"subject", subject_id}, {"tp", tp_id}, {"udi", udi_id}})));
}

Bytes AuthorizationRequest::signing_bytes() const {
    return to_bytes(canonical_json(request_json(
        change == AuthChange::Grant ? "grant" : "revoke",
        {{"admin", admin_id}, {"subject", triple.subject_id}, {"tp", triple.tp_id}, {"items", triple.cdi_ids}})));
}

// ---------------------------------------------------------------------------

PolicyState::PolicyState() {
    ivps_["any"] = [](ByteView) { return true; };
    ivps_["nonempty"] = [](ByteView v) { return !v.empty(); };
    ivps_["integer"] = [](ByteView v) { return parse_int(v).has_value(); };
    ivps_["nonneg_integer"] = [](ByteView v) {
        auto n = parse_int(v);
        return n && *n >= 0;
    };
}

void PolicyState::add_subject(Subject subject) {
    if (subject.id.empty()) throw Error(ErrorCode::InvalidParams, "empty subject id");
    if (subjects_.contains(subject.id)) throw Error(ErrorCode::DuplicateId, "subject " + subject.id);
    const std::string id = subject.id;
    subjects_.emplace(id, std::move(subject));
}

void PolicyState::add_item(DataItem item) {
    if (item.id.empty()) throw Error(ErrorCode::InvalidParams, "empty item id");
    if (items_.contains(item.id)) throw Error(ErrorCode::DuplicateId, "item " + item.id);
    if (!ivps_.contains(item.ivp)) throw Error(ErrorCode::UnknownEntity, "ivp " + item.ivp);
    if (item.cls == ItemClass::Cdi && !ivp_passes(item))
        throw Error(ErrorCode::InvalidParams, "initial value of CDI " + item.id + " fails " + item.ivp);
    const std::string id = item.id;
    items_.emplace(id, std::move(item));
}

void PolicyState::register_ivp(const std::string& name, Ivp ivp) {
    if (ivps_.contains(name)) throw Error(ErrorCode::DuplicateId, "ivp " + name);
    ivps_[name] = std::move(ivp);
}

bool PolicyState::ivp_passes(const DataItem& item) const {
    auto it = ivps_.find(item.ivp);
    return it != ivps_.end() && it->second(item.value);
}

bool PolicyState::sod_violation(const std::string& executor, const std::string& tp_id) const {
    auto it = tps_.find(tp_id);
    return it != tps_.end() && it->second.certifier == executor;
}

const AuditRecord& PolicyState::certify_tp(TransformationProcedure tp) {
    if (!subjects_.contains(tp.certifier)) {
        audit("", "certify_tp", Outcome::Denied, "UnknownEntity certifier " + tp.certifier);
        throw Error(ErrorCode::UnknownEntity, "certifier " + tp.certifier);
    }
    if (tp.id.empty() || tps_.contains(tp.id)) {
        audit(tp.certifier, "certify_tp", Outcome::Denied, "duplicate tp " + tp.id);
        throw Error(ErrorCode::DuplicateId, "tp " + tp.id);
    }
    for (const auto& t : triples_) {
        if (t.tp_id == tp.id && t.subject_id == tp.certifier) {
            audit(tp.certifier, "certify_tp", Outcome::Denied, "SeparationOfDuty tp " + tp.id);
            throw Error(ErrorCode::SeparationOfDuty, tp.certifier + " is authorized to execute " + tp.id);
        }
    }
    const std::string detail = "tp=" + tp.id + " kind=" + std::string(to_string(tp.kind)) +
                               " level=" + std::to_string(tp.biba_level);
    const std::string certifier = tp.certifier;
    tps_.emplace(tp.id, std::move(tp));
    return audit(certifier, "certify_tp", Outcome::Allowed, detail);
}

const AuditRecord& PolicyState::bootstrap_grant(Triple triple) {
    const std::string detail = "subject=" + triple.subject_id + " tp=" + triple.tp_id;
    if (!subjects_.contains(triple.subject_id) || !tps_.contains(triple.tp_id) ||
        std::any_of(triple.cdi_ids.begin(), triple.cdi_ids.end(), [&](const auto& id) { return !items_.contains(id); })) {
        audit("", "grant", Outcome::Denied, "UnknownEntity " + detail);
        throw Error(ErrorCode::UnknownEntity, detail);
    }
    if (sod_violation(triple.subject_id, triple.tp_id)) {
        audit("", "grant", Outcome::Denied, "SeparationOfDuty " + detail);
        throw Error(ErrorCode::SeparationOfDuty, triple.subject_id + " certified " + triple.tp_id);
    }
    triples_.insert(std::move(triple));
    return audit("", "grant", Outcome::Allowed, "bootstrap " + detail);
}

const AuditRecord& PolicyState::audit(const std::string& actor, std::string action, Outcome outcome,
                                      std::string detail) {
    AuditRecord r;
    r.seq = audit_.size();
    r.actor = subjects_.contains(actor) ? actor : std::string{};
    r.action = std::move(action);
    r.outcome = outcome;
    r.detail = std::move(detail);
    r.prev_hash = audit_.empty() ? Hash32::zero() : audit_.back().record_hash;
    r.record_hash = r.compute_hash();
    audit_.push_back(std::move(r));
    return audit_.back();
}

bool PolicyState::authorized(const std::string& subject, const std::string& tp,
                             std::span<const std::string> items) const {
    for (const auto& t : triples_) {
        if (t.subject_id != subject || t.tp_id != tp) continue;
        if (std::all_of(items.begin(), items.end(), [&](const auto& id) { return t.cdi_ids.contains(id); })) return true;
    }
    return false;
}

AuditAnchor PolicyState::anchor() const {
    return {audit_.size(), audit_.empty() ? Hash32::zero() : audit_.back().record_hash};
}

Result PolicyState::execute_tp(const TpRequest& req, const Signature& auth) {
    const std::string detail = "tp=" + req.tp_id + " cdis=" + join(req.cdi_ids) + " args=" + canonical_json(req.args);
    auto deny = [&](std::string reason) {
        Result r;
        r.outcome = Outcome::Denied;
        r.reason = reason;
        r.audit = audit(req.subject_id, "execute_tp", Outcome::Denied, reason + "; " + detail);
        return r;
    };

    auto subject_it = subjects_.find(req.subject_id);
    if (subject_it == subjects_.end()) {
        audit("", "execute_tp", Outcome::Denied, "UnknownEntity subject " + req.subject_id + "; " + detail);
        throw Error(ErrorCode::UnknownEntity, "subject " + req.subject_id);
    }
    auto tp_it = tps_.find(req.tp_id);
    std::string missing;
    if (tp_it == tps_.end()) missing = "tp " + req.tp_id;
    for (const auto& id : req.cdi_ids)
        if (missing.empty() && !items_.contains(id)) missing = "item " + id;
    if (req.cdi_ids.empty() && missing.empty()) missing = "no target items";
    if (!missing.empty()) {
        audit(req.subject_id, "execute_tp", Outcome::Denied, "UnknownEntity " + missing + "; " + detail);
        throw Error(ErrorCode::UnknownEntity, missing);
    }
    const Subject& subject = subject_it->second;
    const TransformationProcedure& tp = tp_it->second;

    if (!crypto::verify(subject.public_key, req.signing_bytes(), auth)) return deny("authentication failed");

    std::set<std::string> distinct(req.cdi_ids.begin(), req.cdi_ids.end());
    if (distinct.size() != req.cdi_ids.size()) return deny("repeated target item");
    for (const auto& id : req.cdi_ids)
        if (items_.at(id).cls != ItemClass::Cdi) return deny("item " + id + " is not a CDI");

    if (biba_check(subject.biba_level, tp.biba_level, BibaAction::Invoke) == Decision::Deny)
        return deny("biba invoke denied for tp level " + std::to_string(tp.biba_level));
    for (const auto& id : req.cdi_ids)
        if (biba_check(subject.biba_level, items_.at(id).biba_level, BibaAction::Write) == Decision::Deny)
            return deny("biba write denied on " + id);

    if (!authorized(subject.id, tp.id, req.cdi_ids)) return deny("no authorizing triple");

    std::map<std::string, Bytes> staged;
    for (const auto& id : req.cdi_ids) staged[id] = items_.at(id).value;
    TpOutput out = run_procedure(tp.kind, std::move(staged), req.cdi_ids, req.args);
    if (out.rejection) return deny("tp rejected: " + *out.rejection);

    for (const auto& [id, value] : out.values) {
        DataItem probe = items_.at(id);
        probe.value = value;
        if (!ivp_passes(probe)) return deny("ivp " + probe.ivp + " failed on " + id + "; rolled back");
    }

    for (const auto& [id, value] : out.values) items_.at(id).value = value;
    Result r;
    r.outcome = Outcome::Allowed;
    r.values = std::move(out.values);
    r.audit = audit(subject.id, "execute_tp", Outcome::Allowed, detail);
    return r;
}

Result PolicyState::promote_udi(const PromoteRequest& req, const Signature& auth) {
    const std::string detail = "tp=" + req.tp_id + " udi=" + req.udi_id;
    auto deny = [&](std::string reason) {
        Result r;
        r.reason = reason;
        r.audit = audit(req.subject_id, "promote_udi", Outcome::Denied, reason + "; " + detail);
        return r;
    };
    auto subject_it = subjects_.find(req.subject_id);
    if (subject_it == subjects_.end()) {
        audit("", "promote_udi", Outcome::Denied, "UnknownEntity subject " + req.subject_id + "; " + detail);
        throw Error(ErrorCode::UnknownEntity, "subject " + req.subject_id);
    }
    auto tp_it = tps_.find(req.tp_id);
    auto item_it = items_.find(req.udi_id);
    if (tp_it == tps_.end() || item_it == items_.end()) {
        const std::string missing = tp_it == tps_.end() ? "tp " + req.tp_id : "item " + req.udi_id;
        audit(req.subject_id, "promote_udi", Outcome::Denied, "UnknownEntity " + missing + "; " + detail);
        throw Error(ErrorCode::UnknownEntity, missing);
    }
    const Subject& subject = subject_it->second;
    if (!crypto::verify(subject.public_key, req.signing_bytes(), auth)) return deny("authentication failed");

    DataItem& item = item_it->second;
    if (item.cls == ItemClass::Cdi) {
        audit(subject.id, "promote_udi", Outcome::Denied, "AlreadyConstrained; " + detail);
        throw Error(ErrorCode::AlreadyConstrained, req.udi_id);
    }
    const TransformationProcedure& tp = tp_it->second;
    if (biba_check(subject.biba_level, tp.biba_level, BibaAction::Invoke) == Decision::Deny)
        return deny("biba invoke denied for tp level " + std::to_string(tp.biba_level));
    if (biba_check(subject.biba_level, item.biba_level, BibaAction::Write) == Decision::Deny)
        return deny("biba write denied on " + item.id);
    const std::string ids[] = {item.id};
    if (!authorized(subject.id, tp.id, ids)) return deny("no authorizing triple");

    std::map<std::string, Bytes> staged{{item.id, item.value}};
    TpOutput out = run_procedure(tp.kind, std::move(staged), ids, Json::object());
    if (out.rejection) return deny("tp rejected: " + *out.rejection);
    DataItem probe = item;
    probe.value = out.values.at(item.id);
    probe.cls = ItemClass::Cdi;
    if (!ivp_passes(probe)) return deny("ivp " + probe.ivp + " failed on " + item.id + "; rolled back");

    item = std::move(probe);
    Result r;
    r.outcome = Outcome::Allowed;
    r.values[item.id] = item.value;
    r.audit = audit(subject.id, "promote_udi", Outcome::Allowed, detail);
    return r;
}

Result PolicyState::alter_authorization(const AuthorizationRequest& req, const Signature& auth) {
    const std::string action = req.change == AuthChange::Grant ? "grant" : "revoke";
    std::vector<std::string> ids(req.triple.cdi_ids.begin(), req.triple.cdi_ids.end());
    const std::string detail = "subject=" + req.triple.subject_id + " tp=" + req.triple.tp_id + " items=" + join(ids);
    auto deny = [&](std::string reason) {
        Result r;
        r.reason = reason;
        r.audit = audit(req.admin_id, action, Outcome::Denied, reason + "; " + detail);
        return r;
    };
    auto admin_it = subjects_.find(req.admin_id);
    if (admin_it == subjects_.end()) {
        audit("", action, Outcome::Denied, "UnknownEntity admin " + req.admin_id + "; " + detail);
        throw Error(ErrorCode::UnknownEntity, "subject " + req.admin_id);
    }
    const Subject& admin = admin_it->second;
    if (!crypto::verify(admin.public_key, req.signing_bytes(), auth)) return deny("authentication failed");
    if (!admin.is_privileged) return deny("subject is not privileged");

    if (req.change == AuthChange::Revoke) {
        if (triples_.erase(req.triple) == 0) return deny("no such triple");
        Result r;
        r.outcome = Outcome::Allowed;
        r.audit = audit(admin.id, action, Outcome::Allowed, detail);
        return r;
    }

    std::string missing;
    if (!subjects_.contains(req.triple.subject_id)) missing = "subject " + req.triple.subject_id;
    else if (!tps_.contains(req.triple.tp_id)) missing = "tp " + req.triple.tp_id;
    for (const auto& id : ids)
        if (missing.empty() && !items_.contains(id)) missing = "item " + id;
    if (!missing.empty()) {
        audit(admin.id, action, Outcome::Denied, "UnknownEntity " + missing + "; " + detail);
        throw Error(ErrorCode::UnknownEntity, missing);
    }
    if (sod_violation(req.triple.subject_id, req.triple.tp_id)) {
        audit(admin.id, action, Outcome::Denied, "SeparationOfDuty; " + detail);
        throw Error(ErrorCode::SeparationOfDuty,
                    req.triple.subject_id + " certified " + req.triple.tp_id + " and may not execute it");
    }
    triples_.insert(req.triple);
    Result r;
    r.outcome = Outcome::Allowed;
    r.audit = audit(admin.id, action, Outcome::Allowed, detail);
    return r;
}

std::optional<Bytes> PolicyState::read_item(const std::string& subject_id, const std::string& item_id) const {
    auto s = subjects_.find(subject_id);
    auto i = items_.find(item_id);
    if (s == subjects_.end() || i == items_.end())
        throw Error(ErrorCode::UnknownEntity, s == subjects_.end() ? "subject " + subject_id : "item " + item_id);
    if (biba_check(s->second.biba_level, i->second.biba_level, BibaAction::Read) == Decision::Deny) return std::nullopt;
    return i->second.value;
}

Json PolicyState::to_json() const {
    Json subjects = Json::array();
    for (const auto& [id, s] : subjects_)
        subjects.push_back({{"id", id}, {"public_key", s.public_key.hex()}, {"level", s.biba_level}, {"privileged", s.is_privileged}});
    Json items = Json::array();
    for (const auto& [id, it] : items_)
        items.push_back({{"id", id}, {"class", to_string(it.cls)}, {"level", it.biba_level}, {"value", value_json(it.value)}, {"ivp", it.ivp}});
    Json tps = Json::array();
    for (const auto& [id, tp] : tps_)
        tps.push_back({{"id", id}, {"kind", to_string(tp.kind)}, {"certifier", tp.certifier}, {"level", tp.biba_level}});
    Json triples = Json::array();
    for (const auto& t : triples_) triples.push_back({{"subject", t.subject_id}, {"tp", t.tp_id}, {"items", t.cdi_ids}});
    const AuditAnchor a = anchor();
    return Json{{"subjects", subjects},
                {"items", items},
                {"tps", tps},
                {"triples", triples},
                {"audit", {{"length", a.length}, {"head", a.head.hex()}}}};
}

PolicyState load_policy(const Json& doc) {
    PolicyState state;
    try {
        for (const auto& s : doc.value("subjects", Json::array()))
            state.add_subject({s.at("id").get<std::string>(), PublicKey::from_hex(s.at("public_key").get<std::string>()),
                               s.value("level", 0u), s.value("privileged", false)});
        for (const auto& i : doc.value("items", Json::array())) {
            DataItem item;
            item.id = i.at("id").get<std::string>();
            const std::string cls = i.value("class", "UDI");
            if (cls != "CDI" && cls != "UDI") throw Error(ErrorCode::InvalidParams, "item class " + cls);
            item.cls = cls == "CDI" ? ItemClass::Cdi : ItemClass::Udi;
            item.biba_level = i.value("level", 0u);
            item.value = to_bytes(i.value("value", std::string{}));
            item.ivp = i.value("ivp", std::string("any"));
            state.add_item(std::move(item));
        }
        for (const auto& t : doc.value("tps", Json::array()))
            state.certify_tp({t.at("id").get<std::string>(), tp_kind_from_string(t.at("kind").get<std::string>()),
                              t.at("certifier").get<std::string>(), t.value("level", 0u)});
        for (const auto& t : doc.value("triples", Json::array()))
            state.bootstrap_grant({t.at("subject").get<std::string>(), t.at("tp").get<std::string>(),
                                   t.at("items").get<std::set<std::string>>()});
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("policy: ") + e.what());
    }
    return state;
}

} // namespace ledgerstack::integrity
