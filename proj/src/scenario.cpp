#include "ledgerstack/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "ledgerstack/bank_ledger.hpp"
#include "ledgerstack/chain.hpp"
#include "ledgerstack/contracts.hpp"
#include "ledgerstack/crypto.hpp"
#include "ledgerstack/error.hpp"
#include "ledgerstack/escrow.hpp"
#include "ledgerstack/integrity.hpp"
#include "ledgerstack/json_util.hpp"
#include "ledgerstack/settlement.hpp"
#include "ledgerstack/tsa.hpp"

namespace ledgerstack::scenario {

using crypto::Hash32;
using crypto::KeyPair;

std::vector<ScenarioOp> parse_scenario(std::istream& in) {
    std::vector<ScenarioOp> ops;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::exception& e) {
            throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("op") || !j["op"].is_string())
            throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected {\"op\": ...}");
        ScenarioOp op;
        op.line = line_no;
        op.op = j["op"].get<std::string>();
        if (j.contains("args")) {
            if (!j["args"].is_object())
                throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": args must be an object");
            op.args = j["args"];
        }
        if (j.contains("expected")) op.expected = j["expected"];
        for (const auto& [k, v] : j.items())
            if (k != "op" && k != "args" && k != "expected")
                throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": unknown key '" + k + "'");
        ops.push_back(std::move(op));
    }
    return ops;
}

bool json_subset(const Json& expected, const Json& actual) {
    if (expected.is_object()) {
        if (!actual.is_object()) return false;
        for (const auto& [k, v] : expected.items()) {
            auto it = actual.find(k);
            if (it == actual.end() || !json_subset(v, *it)) return false;
        }
        return true;
    }
    return expected == actual;
}

const std::vector<std::string>& op_vocabulary() {
    static const std::vector<std::string> ops = {
        // keys and chains
        "key", "chain_config", "tx", "seal", "verify_chain", "tamper_check", "export_chain",
        // treasury
        "tsa_config", "open", "receipt", "disburse", "sweep", "buffer_check", "set_buffer", "position", "tsa_verify",
        // integrity
        "policy", "execute_tp", "promote_udi", "grant", "revoke", "read", "audit_verify",
        // contracts
        "deploy", "invoke", "contract_state",
        // bank
        "prime_entry", "summarize", "journal", "reverse", "trial_balance", "reconcile", "inject_subledger", "classify",
        "ecl", "depreciate", "issue_instrument", "repay_instrument", "gl",
        // settlement
        "order", "trade", "novate", "net", "settle_cycle",
        // escrow
        "fund", "open_escrow", "sign", "finalize", "balance", "escrow_state"};
    return ops;
}

std::string report_text(const Json& report) { return report.dump(2) + "\n"; }

// ---------------------------------------------------------------------------

namespace {

std::string text_of(ByteView v) { return std::string(reinterpret_cast<const char*>(v.data()), v.size()); }

struct NamedChain {
    chain::Chain chain;
    std::vector<chain::Transaction> pending;
};

} // namespace

struct Engine::Impl {
    std::map<std::string, KeyPair> keys;
    std::map<std::string, NamedChain> chains;
    std::optional<tsa::TsaNetwork> tsa;
    std::vector<Json> tsa_days;
    std::optional<integrity::PolicyState> policy;
    contracts::ContractState contract_state;
    std::map<std::string, Hash32> contract_names;
    std::optional<bank::BankLedger> bank;
    std::vector<settlement::Trade> trades;
    settlement::OrderBook book;
    std::optional<escrow::EscrowBook> escrow;
    std::map<std::string, Hash32> escrow_names;

    // --- helpers ------------------------------------------------------------

    const KeyPair& key(const std::string& name) const {
        auto it = keys.find(name);
        if (it == keys.end()) throw Error(ErrorCode::UnknownEntity, "key '" + name + "'");
        return it->second;
    }

    /// A key given by scenario name, or a raw public key in hex.
    crypto::PublicKey public_key(const std::string& name_or_hex) const {
        if (auto it = keys.find(name_or_hex); it != keys.end()) return it->second.public_key;
        if (name_or_hex.size() == 2 * crypto::kPublicKeySize) return crypto::PublicKey::from_hex(name_or_hex);
        throw Error(ErrorCode::UnknownEntity, "key '" + name_or_hex + "'");
    }

    std::string key_name(const crypto::PublicKey& pk) const {
        for (const auto& [name, kp] : keys)
            if (kp.public_key == pk) return name;
        return pk.hex();
    }

    NamedChain& named_chain(const std::string& name) {
        auto it = chains.find(name);
        if (it == chains.end()) throw Error(ErrorCode::UnknownEntity, "chain '" + name + "'");
        return it->second;
    }

    tsa::TsaNetwork& tsa_net() {
        if (!tsa) tsa.emplace(tsa::Architecture::Centralized, "ledgerstack-tsa");
        return *tsa;
    }

    integrity::PolicyState& policy_state() {
        if (!policy) throw Error(ErrorCode::UnknownEntity, "no policy loaded");
        return *policy;
    }

    bank::BankLedger& bank_ledger() {
        if (!bank) bank.emplace(crypto::keygen_from_text("ledgerstack-bank/operator"));
        return *bank;
    }

    escrow::EscrowBook& escrow_book() {
        if (!escrow) escrow.emplace(crypto::keygen_from_text("ledgerstack-escrow/publisher"));
        return *escrow;
    }

    const Hash32& escrow_address(const std::string& name) const {
        auto it = escrow_names.find(name);
        if (it == escrow_names.end()) throw Error(ErrorCode::UnknownContract, "escrow '" + name + "'");
        return it->second;
    }

    const KeyPair& signer_for(const Json& args, const std::string& subject) const {
        return key(field_or<std::string>(args, "signer", subject));
    }

    Json payouts_json(const std::vector<escrow::Payout>& ps) const {
        Json out = Json::array();
        for (const auto& p : ps) out.push_back({{"to", key_name(p.to)}, {"amount", p.amount}, {"role", p.role}});
        return out;
    }

    Json result_json(const integrity::Result& r) const {
        Json values = Json::object();
        for (const auto& [id, v] : r.values) values[id] = text_of(v);
        return Json{{"outcome", integrity::to_string(r.outcome)},
                    {"reason", r.reason},
                    {"values", values},
                    {"audit_seq", r.audit.seq}};
    }

    // --- keys and chains ----------------------------------------------------

    Json op_key(const Json& a) {
        const auto name = field<std::string>(a, "name");
        KeyPair kp = a.contains("seed") ? crypto::keygen(from_hex(field<std::string>(a, "seed")))
                                        : crypto::keygen_from_text(field_or<std::string>(a, "seed_text", name));
        Json out{{"name", name}, {"public_key", kp.public_key.hex()}};
        keys.insert_or_assign(name, std::move(kp));
        return out;
    }

    Json op_chain_config(const Json& a) {
        const auto name = field_or<std::string>(a, "name", "main");
        chain::ChainConfig c;
        c.mode = field_or<std::string>(a, "mode", "quorum") == "pow" ? chain::ConsensusMode::Pow : chain::ConsensusMode::Quorum;
        for (const auto& v : field_or<Json>(a, "validators", Json::array())) c.validators.push_back(public_key(v.get<std::string>()));
        c.quorum_m = field_or<std::uint32_t>(a, "quorum_m", 1);
        c.pow_target_bits = field_or<std::uint32_t>(a, "pow_target_bits", 8);
        chains.insert_or_assign(name, NamedChain{chain::Chain(c), {}});
        return c.to_json();
    }

    Json op_tx(const Json& a) {
        auto& nc = named_chain(field_or<std::string>(a, "chain", "main"));
        auto tx = chain::make_transaction(chain::tx_kind_from_string(field_or<std::string>(a, "kind", "generic")),
                                          field_or<Json>(a, "payload", Json::object()), key(field<std::string>(a, "author")));
        nc.pending.push_back(tx);
        return Json{{"tx_id", tx.id().hex()}, {"pending", nc.pending.size()}};
    }

    Json op_seal(const Json& a) {
        auto& nc = named_chain(field_or<std::string>(a, "chain", "main"));
        const auto wall = field_or<std::uint64_t>(a, "wall_time", nc.chain.next_height());
        std::vector<KeyPair> signers;
        if (a.contains("signers")) {
            for (const auto& s : a["signers"]) signers.push_back(key(s.get<std::string>()));
        } else {
            for (const auto& v : nc.chain.config().validators)
                for (const auto& [name, kp] : keys)
                    if (kp.public_key == v) signers.push_back(kp);
        }
        auto txs = std::move(nc.pending);
        nc.pending.clear();
        const auto& b = chain::seal_block(nc.chain, std::move(txs), wall, signers);
        return Json{{"height", b.header.height},
                    {"block_id", b.id().hex()},
                    {"tx_count", b.header.tx_count},
                    {"nonce", b.header.nonce},
                    {"approvals", b.approvals.size()}};
    }

    Json op_verify_chain(const Json& a) {
        return named_chain(field_or<std::string>(a, "chain", "main")).chain.verify().to_json();
    }

    /// Verifies a copy of the chain with one header byte flipped.
    Json op_tamper_check(const Json& a) {
        const auto& nc = named_chain(field_or<std::string>(a, "chain", "main"));
        std::vector<chain::Block> blocks(nc.chain.blocks().begin(), nc.chain.blocks().end());
        const auto height = field<std::size_t>(a, "height");
        if (height >= blocks.size()) throw Error(ErrorCode::InvalidParams, "no block at height " + std::to_string(height));
        const auto offset = field_or<std::size_t>(a, "offset", chain::kHeaderSize - 1);
        if (offset >= chain::kHeaderSize) throw Error(ErrorCode::InvalidParams, "offset beyond the header");
        Bytes raw = chain::serialize_header(blocks[height].header);
        raw[offset] ^= static_cast<Byte>(field_or<unsigned>(a, "xor", 1));
        blocks[height].header = chain::deserialize_header(raw);
        return chain::verify_chain(blocks, nc.chain.config()).to_json();
    }

    Json op_export_chain(const Json& a) {
        const auto& nc = named_chain(field_or<std::string>(a, "chain", "main"));
        std::ostringstream out;
        chain::export_chain(nc.chain.blocks(), out);
        return Json{{"blocks", nc.chain.size()},
                    {"tip", nc.chain.empty() ? std::string() : nc.chain.tip_id().hex()},
                    {"export_digest", crypto::sha256d(out.str()).hex()}};
    }

    // --- treasury -----------------------------------------------------------

    Json op_tsa_config(const Json& a) {
        if (tsa) throw Error(ErrorCode::InvalidConfig, "treasury already configured");
        tsa.emplace(tsa::architecture_from_string(field_or<std::string>(a, "architecture", "centralized")),
                    field_or<std::string>(a, "seed_text", "ledgerstack-tsa"), field_or<Minor>(a, "buffer", 0));
        return Json{{"architecture", tsa::to_string(tsa->architecture())}, {"buffer", tsa->ledger().buffer_requirement()}};
    }

    Json op_open(const Json& a) {
        std::optional<Minor> cap;
        if (a.contains("cap")) cap = field<Minor>(a, "cap");
        const auto id = field<std::string>(a, "id");
        tsa_net().ledger().open_account(id, tsa::account_kind_from_string(field<std::string>(a, "kind")), cap,
                                        field_or<std::string>(a, "agency", ""));
        const auto& acct = tsa_net().ledger().account(id);
        return Json{{"id", id}, {"balance", acct.balance}, {"parent", acct.parent}, {"agency", acct.agency}};
    }

    Json op_receipt(const Json& a) {
        const auto id = field<std::string>(a, "account");
        tsa_net().ledger().record_receipt(id, field<Minor>(a, "amount"));
        return Json{{"account", id}, {"balance", tsa_net().ledger().account(id).balance}};
    }

    Json op_disburse(const Json& a) {
        const auto id = field<std::string>(a, "account");
        tsa_net().ledger().record_disbursement(id, field<Minor>(a, "amount"));
        return Json{{"account", id}, {"balance", tsa_net().ledger().account(id).balance}};
    }

    Json op_sweep(const Json& a) {
        auto& net = tsa_net();
        const auto wall = field_or<std::uint64_t>(a, "wall_time", (net.ledger().day() + 1) * 86400);
        auto report = net.close_day(wall).to_json();
        tsa_days.push_back(report);
        return report;
    }

    Json op_buffer_check(const Json&) {
        auto b = tsa_net().ledger().check_buffer();
        return Json{{"ok", b.ok}, {"shortfall", b.ok ? Json(nullptr) : Json(b.shortfall)}};
    }

    Json op_set_buffer(const Json& a) {
        tsa_net().ledger().set_buffer_requirement(field<Minor>(a, "amount"));
        return Json{{"buffer", tsa_net().ledger().buffer_requirement()}};
    }

    Json op_position(const Json&) {
        auto r = tsa_net().ledger().report();
        return Json{{"consolidated", r.consolidated}, {"per_account", r.to_json()["per_account"]}};
    }

    Json op_tsa_verify(const Json& a) {
        auto& net = tsa_net();
        net.flush(field_or<std::uint64_t>(a, "wall_time", net.ledger().day() * 86400));
        auto v = net.verify();
        const bool replay_ok = net.replay().state_json() == net.ledger().state_json();
        Json subs = Json::object();
        for (const auto& [agency, c] : net.sub_chains()) subs[agency] = c.size();
        return Json{{"valid", v.valid},
                    {"detail", v.detail},
                    {"replay_matches", replay_ok},
                    {"main_blocks", net.main_chain().size()},
                    {"sub_chains", subs}};
    }

    // --- integrity ----------------------------------------------------------

    Json op_policy(const Json& a) {
        Json doc = field<Json>(a, "doc");
        for (auto& s : doc["subjects"]) {
            if (s.contains("key")) {
                s["public_key"] = key(s["key"].get<std::string>()).public_key.hex();
                s.erase("key");
            }
        }
        policy = integrity::load_policy(doc);
        return Json{{"subjects", policy->subjects().size()},
                    {"items", policy->items().size()},
                    {"tps", policy->tps().size()},
                    {"triples", policy->triples().size()},
                    {"audit_length", policy->audit_log().size()}};
    }

    Json op_execute_tp(const Json& a) {
        integrity::TpRequest req;
        req.subject_id = field<std::string>(a, "subject");
        req.tp_id = field<std::string>(a, "tp");
        req.cdi_ids = field<std::vector<std::string>>(a, "cdis");
        req.args = field_or<Json>(a, "args", Json::object());
        const auto sig = integrity::sign_request(req, signer_for(a, req.subject_id));
        return result_json(policy_state().execute_tp(req, sig));
    }

    Json op_promote_udi(const Json& a) {
        integrity::PromoteRequest req{field<std::string>(a, "subject"), field<std::string>(a, "tp"),
                                      field<std::string>(a, "udi")};
        const auto sig = integrity::sign_request(req, signer_for(a, req.subject_id));
        return result_json(policy_state().promote_udi(req, sig));
    }

    Json op_authorize(const Json& a, integrity::AuthChange change) {
        integrity::AuthorizationRequest req;
        req.admin_id = field<std::string>(a, "admin");
        req.triple = {field<std::string>(a, "subject"), field<std::string>(a, "tp"),
                      field<std::set<std::string>>(a, "items")};
        req.change = change;
        const auto sig = integrity::sign_request(req, signer_for(a, req.admin_id));
        return result_json(policy_state().alter_authorization(req, sig));
    }

    Json op_read(const Json& a) {
        auto v = policy_state().read_item(field<std::string>(a, "subject"), field<std::string>(a, "item"));
        if (!v) return Json{{"allowed", false}};
        return Json{{"allowed", true}, {"value", text_of(*v)}};
    }

    Json op_audit_verify(const Json& a) {
        const auto& st = policy_state();
        std::vector<integrity::AuditRecord> log(st.audit_log().begin(), st.audit_log().end());
        const auto anchor = st.anchor();
        // Optional in-copy tampering to demonstrate detection.
        if (a.contains("drop")) {
            const auto i = field<std::size_t>(a, "drop");
            if (i < log.size()) log.erase(log.begin() + static_cast<std::ptrdiff_t>(i));
        }
        if (a.contains("mutate")) {
            const auto i = field<std::size_t>(a, "mutate");
            if (i < log.size()) log[i].detail += "!";
        }
        auto v = integrity::audit_verify(log, anchor);
        Json out = v.to_json();
        out["length"] = log.size();
        out["head"] = anchor.head.hex();
        return out;
    }

    // --- contracts ----------------------------------------------------------

    Json op_deploy(const Json& a) {
        contracts::StepBudget budget{field<std::uint64_t>(a, "budget")};
        if (a.contains("height")) contract_state.set_height(field<std::uint64_t>(a, "height"));
        const auto addr = contracts::deploy(contract_state, field<std::string>(a, "code_id"),
                                            field_or<Json>(a, "init", Json::object()), budget);
        if (a.contains("name")) contract_names.insert_or_assign(field<std::string>(a, "name"), addr);
        return Json{{"address", addr.hex()}, {"steps_used", budget.used}};
    }

    Hash32 contract_address(const std::string& name_or_hex) const {
        if (auto it = contract_names.find(name_or_hex); it != contract_names.end()) return it->second;
        return Hash32::from_hex(name_or_hex);
    }

    Json op_invoke(const Json& a) {
        contracts::StepBudget budget{field<std::uint64_t>(a, "budget")};
        auto r = contracts::invoke(contract_state, contract_address(field<std::string>(a, "contract")),
                                   field<std::string>(a, "method"), field_or<Json>(a, "args", Json::object()), budget);
        return Json{{"result", r.result}, {"steps_used", r.steps_used}};
    }

    Json op_contract_state(const Json& a) {
        const auto& inst = contract_state.at(contract_address(field<std::string>(a, "contract")));
        Json storage = Json::object();
        for (const auto& [k, v] : inst.storage) storage[k] = text_of(v);
        return Json{{"code_id", inst.code_id}, {"alive", inst.alive}, {"storage", storage}};
    }

    // --- bank ---------------------------------------------------------------

    Json op_prime_entry(const Json& a) {
        auto posted = bank_ledger().capture(bank::PrimeEntry::from_json(a));
        return Json{{"book_length", posted.book_length}, {"double_entry_eligible", posted.double_entry_eligible}};
    }

    Json op_summarize(const Json& a) {
        Json out = Json::array();
        for (const auto& e : bank_ledger().summarize_day(field<std::int64_t>(a, "date"))) out.push_back(e.to_json());
        return Json{{"entries", out}};
    }

    static bank::EntrySide side_of(const std::string& s) {
        if (s == "debit") return bank::EntrySide::Debit;
        if (s == "credit") return bank::EntrySide::Credit;
        throw Error(ErrorCode::InvalidParams, "side '" + s + "'");
    }

    Json op_journal(const Json& a) {
        std::vector<bank::JournalLine> lines;
        for (const auto& l : field<Json>(a, "lines"))
            lines.push_back({field<std::string>(l, "account"), side_of(field<std::string>(l, "side")), field<Minor>(l, "amount")});
        return bank_ledger()
            .post_journal(field<std::int64_t>(a, "date"), std::move(lines), field_or<std::string>(a, "memo", ""),
                          field_or<std::string>(a, "counterparty", ""))
            .to_json();
    }

    Json op_reverse(const Json& a) {
        return bank_ledger()
            .reverse(field<std::uint64_t>(a, "entry_id"), field<std::int64_t>(a, "date"),
                     field_or<std::string>(a, "memo", "reversal"))
            .to_json();
    }

    Json op_reconcile(const Json& a) {
        return bank_ledger().reconcile_subledger(bank::control_for_from_string(field<std::string>(a, "which"))).to_json();
    }

    Json op_inject_subledger(const Json& a) {
        bank_ledger().inject_subledger_row_for_testing(
            bank::control_for_from_string(field<std::string>(a, "which")),
            {field_or<std::int64_t>(a, "date", 0), field<std::string>(a, "counterparty"), field<Minor>(a, "amount"), 0});
        return Json::object();
    }

    Json op_classify(const Json& a) {
        auto c = bank_ledger().classify(field<std::string>(a, "asset_id"), field<bool>(a, "sppi_pass"),
                                        bank::business_model_from_string(field<std::string>(a, "business_model")));
        return Json{{"category", bank::to_string(c.category)}};
    }

    Json op_ecl(const Json& a) {
        auto& b = bank_ledger();
        const auto provision = b.update_provision(field<std::string>(a, "asset_id"), field<Minor>(a, "exposure"),
                                                  field<double>(a, "pd_12m"), field_or<double>(a, "pd_lifetime", 0.0),
                                                  field<double>(a, "lgd"), field<int>(a, "stage"),
                                                  field_or<std::int64_t>(a, "date", 0));
        return Json{{"provision", provision}};
    }

    Json op_depreciate(const Json& a) {
        auto& b = bank_ledger();
        const auto id = field<std::string>(a, "id");
        if (!b.properties().contains(id))
            b.register_property(id, field<Minor>(a, "cost"), field_or<Minor>(a, "salvage", 0), field<std::uint32_t>(a, "life"));
        const auto amount = b.depreciate_property(id, field_or<std::int64_t>(a, "date", 0));
        return Json{{"amount", amount}, {"periods_elapsed", b.properties().at(id).periods_elapsed}};
    }

    Json op_issue_instrument(const Json& a) {
        bank::CapitalInstrument ci;
        ci.id = field<std::string>(a, "id");
        ci.kind = bank::instrument_kind_from_string(field<std::string>(a, "kind"));
        ci.holder = field_or<std::string>(a, "holder", "");
        ci.maturity_day = field_or<std::int64_t>(a, "maturity_day", 0);
        ci.rate_bps = field_or<std::uint32_t>(a, "rate_bps", 0);
        ci.original_balance = field<Minor>(a, "amount");
        bank_ledger().issue_instrument(ci, field_or<std::int64_t>(a, "date", 0));
        return bank_ledger().instruments().at(ci.id).to_json();
    }

    Json op_repay_instrument(const Json& a) {
        const auto id = field<std::string>(a, "id");
        bank_ledger().repay_instrument(id, field<Minor>(a, "amount"), field_or<std::int64_t>(a, "date", 0));
        return bank_ledger().instruments().at(id).to_json();
    }

    // --- settlement ---------------------------------------------------------

    Json op_order(const Json& a) {
        settlement::Order o;
        o.id = field<std::string>(a, "id");
        o.member = field<std::string>(a, "member");
        o.side = settlement::order_side_from_string(field<std::string>(a, "side"));
        o.asset = field<std::string>(a, "asset");
        o.quantity = field<std::int64_t>(a, "quantity");
        o.price = field<Minor>(a, "price");
        o.day = field_or<std::int64_t>(a, "day", 0);
        Json out = Json::array();
        for (auto& t : book.submit(o)) {
            out.push_back(t.to_json());
            trades.push_back(std::move(t));
        }
        return Json{{"trades", out}};
    }

    Json op_trade(const Json& a) {
        settlement::Trade t;
        t.id = field<std::string>(a, "id");
        t.buyer = field<std::string>(a, "buyer");
        t.seller = field<std::string>(a, "seller");
        t.asset = field<std::string>(a, "asset");
        t.quantity = field<std::int64_t>(a, "quantity");
        t.price = field<Minor>(a, "price");
        t.trade_day = field_or<std::int64_t>(a, "day", 0);
        settlement::validate(t);
        trades.push_back(t);
        return t.to_json();
    }

    Json op_novate(const Json& a) {
        const auto id = field<std::string>(a, "trade_id");
        auto it = std::find_if(trades.begin(), trades.end(), [&](const auto& t) { return t.id == id; });
        if (it == trades.end()) throw Error(ErrorCode::UnknownEntity, "trade " + id);
        // Novation is shown on a copy; the cycle ops novate for themselves.
        auto trade = *it;
        auto [s, b] = settlement::novate(trade, field_or<std::string>(a, "ccp", "CCP"));
        return Json{{"legs", {s.to_json(), b.to_json()}}};
    }

    std::vector<settlement::Trade> live_trades() const {
        std::vector<settlement::Trade> out;
        for (const auto& t : trades)
            if (!t.superseded) out.push_back(t);
        return out;
    }

    Json op_net(const Json&) {
        const auto live = live_trades();
        Json pos = Json::array();
        for (const auto& p : settlement::net_positions(live))
            pos.push_back({{"member", p.member}, {"asset", p.asset}, {"net_quantity", p.net_quantity}, {"net_cash", p.net_cash}});
        return Json{{"positions", pos}, {"obligations", settlement::obligation_totals(live).to_json()}};
    }

    Json op_settle_cycle(const Json& a) {
        settlement::CycleConfig cfg;
        cfg.lag_days = field<std::int64_t>(a, "lag");
        cfg.mode = settlement::clearing_mode_from_string(field_or<std::string>(a, "mode", "bilateral"));
        cfg.consortium_netting = settlement::netting_mode_from_string(field_or<std::string>(a, "netting", "multilateral"));
        cfg.settle_mode = settlement::settle_mode_from_string(field_or<std::string>(a, "settle_mode", "dvp"));
        if (a.contains("holdings")) cfg.holdings = settlement::holdings_from_json(a["holdings"]);
        const auto keys_ = settlement::derive_cycle_keys(field_or<std::string>(a, "seed_text", "ledgerstack-settlement"));
        return settlement::run_cycle(live_trades(), cfg, keys_).to_json();
    }

    // --- escrow -------------------------------------------------------------

    Json op_fund(const Json& a) {
        const auto& kp = key(field<std::string>(a, "key"));
        escrow_book().credit(kp.public_key, field<Minor>(a, "amount"));
        return Json{{"balance", escrow_book().balance(kp.public_key)}};
    }

    Json op_open_escrow(const Json& a) {
        const auto& c = escrow_book().open(public_key(field<std::string>(a, "buyer")), public_key(field<std::string>(a, "seller")),
                                           public_key(field<std::string>(a, "arbiter")), field<Minor>(a, "amount"),
                                           field_or<Minor>(a, "fee", 0), field_or<std::uint64_t>(a, "height", 0));
        escrow_names.insert_or_assign(field<std::string>(a, "name"), c.address);
        return Json{{"address", c.address.hex()},
                    {"state", escrow::to_string(c.state)},
                    {"buyer_balance", escrow_book().balance(c.buyer)}};
    }

    Json op_sign(const Json& a) {
        const auto& address = escrow_address(field<std::string>(a, "escrow"));
        const auto& signer = key(field<std::string>(a, "signer"));
        const auto d = escrow::disposition_from_string(field<std::string>(a, "disposition"));
        // "sign_key" lets a scenario present a signature made with the wrong key.
        const auto& sig_key = key(field_or<std::string>(a, "sign_key", field<std::string>(a, "signer")));
        auto payouts = escrow_book().sign(address, signer.public_key, d, escrow::sign_disposition_message(sig_key, address, d));
        const auto& c = escrow_book().at(address);
        return Json{{"state", escrow::to_string(c.state)}, {"signatures", c.signatures.size()}, {"payouts", payouts_json(payouts)}};
    }

    Json op_finalize(const Json& a) {
        const auto& address = escrow_address(field<std::string>(a, "escrow"));
        auto payouts = escrow_book().finalize(address);
        return Json{{"state", escrow::to_string(escrow_book().at(address).state)}, {"payouts", payouts_json(payouts)}};
    }

    Json op_balance(const Json& a) {
        return Json{{"balance", escrow_book().balance(public_key(field<std::string>(a, "key")))}};
    }

    Json op_escrow_state(const Json& a) {
        const auto& c = escrow_book().at(escrow_address(field<std::string>(a, "escrow")));
        return Json{{"state", escrow::to_string(c.state)},
                    {"signatures", c.signatures.size()},
                    {"payouts", payouts_json(c.payouts)}};
    }

    // --- dispatch -----------------------------------------------------------

    Json apply(const std::string& op, const Json& a) {
        using Fn = Json (Impl::*)(const Json&);
        static const std::map<std::string, Fn> table = {
            {"key", &Impl::op_key},
            {"chain_config", &Impl::op_chain_config},
            {"tx", &Impl::op_tx},
            {"seal", &Impl::op_seal},
            {"verify_chain", &Impl::op_verify_chain},
            {"tamper_check", &Impl::op_tamper_check},
            {"export_chain", &Impl::op_export_chain},
            {"tsa_config", &Impl::op_tsa_config},
            {"open", &Impl::op_open},
            {"receipt", &Impl::op_receipt},
            {"disburse", &Impl::op_disburse},
            {"sweep", &Impl::op_sweep},
            {"buffer_check", &Impl::op_buffer_check},
            {"set_buffer", &Impl::op_set_buffer},
            {"position", &Impl::op_position},
            {"tsa_verify", &Impl::op_tsa_verify},
            {"policy", &Impl::op_policy},
            {"execute_tp", &Impl::op_execute_tp},
            {"promote_udi", &Impl::op_promote_udi},
            {"read", &Impl::op_read},
            {"audit_verify", &Impl::op_audit_verify},
            {"deploy", &Impl::op_deploy},
            {"invoke", &Impl::op_invoke},
            {"contract_state", &Impl::op_contract_state},
            {"prime_entry", &Impl::op_prime_entry},
            {"summarize", &Impl::op_summarize},
            {"journal", &Impl::op_journal},
            {"reverse", &Impl::op_reverse},
            {"reconcile", &Impl::op_reconcile},
            {"inject_subledger", &Impl::op_inject_subledger},
            {"classify", &Impl::op_classify},
            {"ecl", &Impl::op_ecl},
            {"depreciate", &Impl::op_depreciate},
            {"issue_instrument", &Impl::op_issue_instrument},
            {"repay_instrument", &Impl::op_repay_instrument},
            {"order", &Impl::op_order},
            {"trade", &Impl::op_trade},
            {"novate", &Impl::op_novate},
            {"net", &Impl::op_net},
            {"settle_cycle", &Impl::op_settle_cycle},
            {"fund", &Impl::op_fund},
            {"open_escrow", &Impl::op_open_escrow},
            {"sign", &Impl::op_sign},
            {"finalize", &Impl::op_finalize},
            {"balance", &Impl::op_balance},
            {"escrow_state", &Impl::op_escrow_state},
        };
        if (op == "grant") return op_authorize(a, integrity::AuthChange::Grant);
        if (op == "revoke") return op_authorize(a, integrity::AuthChange::Revoke);
        if (op == "trial_balance") return bank_ledger().trial_balance_json();
        if (op == "gl") return bank_ledger().gl_json();
        auto it = table.find(op);
        if (it == table.end()) throw Error(ErrorCode::ParseError, "unknown op '" + op + "'");
        return (this->*(it->second))(a);
    }

    Json summary() const {
        Json s = Json::object();
        if (!chains.empty()) {
            Json cs = Json::object();
            for (const auto& [name, nc] : chains) {
                const auto v = nc.chain.verify();
                cs[name] = Json{{"height", nc.chain.size()},
                                {"tip", nc.chain.empty() ? std::string() : nc.chain.tip_id().hex()},
                                {"valid", v.valid},
                                {"pending", nc.pending.size()}};
            }
            s["chains"] = cs;
        }
        if (tsa) {
            const auto& l = tsa->ledger();
            s["tsa"] = Json{{"architecture", tsa::to_string(tsa->architecture())},
                            {"day", l.day()},
                            {"consolidated", l.consolidated_position()},
                            {"per_account", l.report().to_json()["per_account"]},
                            {"days", tsa_days},
                            {"main_chain", {{"height", tsa->main_chain().size()}, {"tip", tsa->main_chain().empty() ? std::string() : tsa->main_chain().tip_id().hex()}}}};
        }
        if (policy) {
            const auto anchor = policy->anchor();
            Json items = Json::object();
            for (const auto& [id, item] : policy->items())
                items[id] = Json{{"class", integrity::to_string(item.cls)}, {"value", text_of(item.value)}};
            s["integrity"] = Json{{"audit_length", anchor.length},
                                  {"audit_head", anchor.head.hex()},
                                  {"audit_valid", integrity::audit_verify(policy->audit_log(), anchor).valid},
                                  {"items", items}};
        }
        if (!contract_state.instances().empty()) s["contracts"] = contract_state.to_json();
        if (bank) {
            s["bank"] = Json{{"trial_balance", bank->trial_balance_json()},
                             {"receivables", bank->reconcile_subledger(bank::ControlFor::Receivables).to_json()},
                             {"payables", bank->reconcile_subledger(bank::ControlFor::Payables).to_json()},
                             {"journal_entries", bank->journal().size()},
                             {"chain_txs", bank->transactions().emitted()}};
        }
        if (!trades.empty()) s["trades"] = trades.size();
        if (escrow) {
            Json bal = Json::object();
            for (const auto& [pk, amount] : escrow->balances()) bal[key_name(pk)] = amount;
            Json cs = Json::object();
            for (const auto& [name, addr] : escrow_names) cs[name] = escrow::to_string(escrow->at(addr).state);
            s["escrow"] = Json{{"balances", bal}, {"contracts", cs}, {"locked", escrow->locked()},
                               {"chain_txs", escrow->transactions().emitted()}};
        }
        return s;
    }
};

Engine::Engine() : impl_(std::make_unique<Impl>()) {}
Engine::~Engine() = default;
Engine::Engine(Engine&&) noexcept = default;
Engine& Engine::operator=(Engine&&) noexcept = default;

Json Engine::apply(const std::string& op, const Json& args) { return impl_->apply(op, args); }
Json Engine::summary() const { return impl_->summary(); }

const chain::Chain& Engine::chain(const std::string& name) const {
    auto it = impl_->chains.find(name);
    if (it == impl_->chains.end()) throw Error(ErrorCode::UnknownEntity, "chain '" + name + "'");
    return it->second.chain;
}

const chain::Chain& Engine::tsa_chain() const {
    if (!impl_->tsa) throw Error(ErrorCode::UnknownEntity, "no treasury in this scenario");
    return impl_->tsa->main_chain();
}

// ---------------------------------------------------------------------------

RunResult run_scenario(std::istream& in, Engine* out) {
    RunResult rr;
    Json steps = Json::array();
    auto finish = [&](Engine* engine) {
        rr.report = Json{{"steps", steps}, {"summary", engine ? engine->summary() : Json::object()}};
        if (!rr.ok)
            rr.report["error"] = Json{{"line", rr.failed_line}, {"op", rr.failed_op}, {"error", rr.error_name}, {"message", rr.message}};
        return rr;
    };

    std::vector<ScenarioOp> ops;
    try {
        ops = parse_scenario(in);
    } catch (const Error& e) {
        rr.ok = false;
        rr.error_name = std::string(e.name());
        rr.message = e.detail();
        return finish(nullptr);
    }

    Engine local;
    Engine& engine = out ? *out : local;
    for (const auto& op : ops) {
        auto abort = [&](std::string name, std::string message) {
            rr.ok = false;
            rr.failed_line = op.line;
            rr.failed_op = op.op;
            rr.error_name = std::move(name);
            rr.message = std::move(message);
        };
        const bool expects_error = op.expected && op.expected->is_object() && op.expected->contains("error");
        Json result;
        try {
            result = engine.apply(op.op, op.args);
        } catch (const Error& e) {
            if (expects_error && (*op.expected)["error"] == std::string(e.name())) {
                steps.push_back({{"line", op.line}, {"op", op.op}, {"error", std::string(e.name())}});
                continue;
            }
            abort(std::string(e.name()), e.detail());
            if (expects_error)
                rr.message += " (expected " + (*op.expected)["error"].dump() + ")";
            return finish(&engine);
        } catch (const std::exception& e) {
            abort("InternalError", e.what());
            return finish(&engine);
        }
        if (expects_error) {
            abort(std::string(error_name(ErrorCode::AssertionFailed)),
                  "expected error " + (*op.expected)["error"].dump() + ", got " + result.dump());
            return finish(&engine);
        }
        if (op.expected && !json_subset(*op.expected, result)) {
            abort(std::string(error_name(ErrorCode::AssertionFailed)),
                  "expected " + op.expected->dump() + ", actual " + result.dump());
            return finish(&engine);
        }
        steps.push_back({{"line", op.line}, {"op", op.op}, {"result", result}});
    }
    return finish(&engine);
}

RunResult run_scenario_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        RunResult rr;
        rr.ok = false;
        rr.error_name = std::string(error_name(ErrorCode::IoError));
        rr.message = "cannot read " + path.string();
        rr.report = Json{{"steps", Json::array()}, {"summary", Json::object()},
                         {"error", {{"line", 0}, {"op", ""}, {"error", rr.error_name}, {"message", rr.message}}}};
        return rr;
    }
    return run_scenario(in);
}

} // namespace ledgerstack::scenario
