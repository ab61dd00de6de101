#include "ledgerstack/tsa.hpp"

#include <algorithm>

#include "ledgerstack/error.hpp"
#include "ledgerstack/json_util.hpp"

namespace ledgerstack::tsa {

namespace {

constexpr std::pair<AccountKind, std::string_view> kKindNames[] = {
    {AccountKind::Main, "main"},       {AccountKind::Subsidiary, "subsidiary"}, {AccountKind::Zba, "zba"},
    {AccountKind::Imprest, "imprest"}, {AccountKind::Transit, "transit"},       {AccountKind::Correspondent, "correspondent"}};

constexpr std::string_view kStream = "tsa";

Json transfer_json(const contracts::SweepTransfer& t) { return Json{{"from", t.from}, {"to", t.to}, {"amount", t.amount}}; }

} // namespace

std::string_view to_string(AccountKind k) noexcept {
    for (const auto& [kind, name] : kKindNames)
        if (kind == k) return name;
    return "?";
}

AccountKind account_kind_from_string(std::string_view s) {
    for (const auto& [kind, name] : kKindNames)
        if (name == s) return kind;
    throw Error(ErrorCode::InvalidParams, "account kind '" + std::string(s) + "'");
}

Json DayReport::to_json() const {
    Json accts = Json::object();
    for (const auto& [id, bal] : per_account) accts[id] = bal;
    Json ts = Json::array();
    for (const auto& t : transfers) ts.push_back(transfer_json(t));
    return Json{{"day", day},
                {"consolidated", consolidated},
                {"per_account", accts},
                {"shortfall", shortfall ? Json(*shortfall) : Json(nullptr)},
                {"transfers", ts}};
}

// ---------------------------------------------------------------------------

TsaLedger::TsaLedger(chain::KeyPair operator_key, Minor buffer_requirement)
    : txs_(std::string(kStream), std::move(operator_key)) {
    if (buffer_requirement != 0) set_buffer_requirement(buffer_requirement);
}

const TsaAccount& TsaLedger::account(const std::string& id) const {
    auto it = accounts_.find(id);
    if (it == accounts_.end()) throw Error(ErrorCode::UnknownAccount, id);
    return it->second;
}

TsaAccount& TsaLedger::mut(const std::string& id) {
    auto it = accounts_.find(id);
    if (it == accounts_.end()) throw Error(ErrorCode::UnknownAccount, id);
    return it->second;
}

void TsaLedger::set_buffer_requirement(Minor amount) {
    if (amount < 0) throw Error(ErrorCode::InvalidParams, "buffer requirement must be non-negative");
    buffer_ = amount;
    txs_.emit(chain::TxKind::Generic, Json{{"op", "buffer_requirement"}, {"amount", amount}});
}

void TsaLedger::open_account(const std::string& id, AccountKind kind, std::optional<Minor> cap, std::string agency) {
    if (id.empty()) throw Error(ErrorCode::InvalidParams, "account id is empty");
    if (accounts_.contains(id)) throw Error(ErrorCode::DuplicateId, "account " + id);
    if (kind == AccountKind::Main) {
        if (!main_.empty()) throw Error(ErrorCode::SecondMain, "main account is " + main_);
    } else if (main_.empty()) {
        throw Error(ErrorCode::NoMainAccount, "open the main account before " + id);
    }
    if (kind == AccountKind::Imprest) {
        if (!cap) throw Error(ErrorCode::CapMissing, "imprest account " + id);
        if (*cap < 0) throw Error(ErrorCode::InvalidParams, "negative cap on " + id);
    } else if (cap) {
        throw Error(ErrorCode::InvalidParams, "only imprest accounts take a cap");
    }

    TsaAccount a;
    a.id = id;
    a.kind = kind;
    a.cap = cap;
    a.parent = kind == AccountKind::Main ? std::string{} : main_;
    a.agency = agency.empty() ? id : std::move(agency);

    Json payload{{"id", id}, {"kind", to_string(kind)}, {"agency", a.agency}};
    if (cap) payload["cap"] = *cap;

    std::optional<crypto::Hash32> address;
    Json deploy_payload;
    if (kind == AccountKind::Main) {
        const Json init{{"main", id}};
        contracts_.set_height(day_);
        contracts::StepBudget budget{contracts::kInvokeFixedCost + 2};
        address = contracts::deploy(contracts_, "zba_sweep", init, budget);
        deploy_payload = Json{{"code_id", "zba_sweep"}, {"init", init}, {"address", address->hex()}, {"height", day_}};
    }

    accounts_.emplace(id, std::move(a));
    txs_.emit(chain::TxKind::TsaOpen, std::move(payload));
    if (address) {
        main_ = id;
        sweep_address_ = address;
        txs_.emit(chain::TxKind::ContractDeploy, std::move(deploy_payload));
    }
}

void TsaLedger::record_receipt(const std::string& id, Minor amount) {
    if (amount <= 0) throw Error(ErrorCode::NonPositiveAmount, "receipt of " + std::to_string(amount));
    mut(id).balance += amount;
    txs_.emit(chain::TxKind::TsaReceipt, Json{{"account", id}, {"amount", amount}, {"day", day_}});
}

void TsaLedger::record_disbursement(const std::string& id, Minor amount) {
    if (amount <= 0) throw Error(ErrorCode::NonPositiveAmount, "disbursement of " + std::to_string(amount));
    auto& a = mut(id);
    if (amount > a.balance)
        throw Error(ErrorCode::Overdraft, id + " holds " + std::to_string(a.balance) + ", asked " + std::to_string(amount));
    a.balance -= amount;
    txs_.emit(chain::TxKind::TsaDisbursement, Json{{"account", id}, {"amount", amount}, {"day", day_}});
}

void TsaLedger::apply_transfer(const contracts::SweepTransfer& t) {
    auto& from = mut(t.from);
    auto& to = mut(t.to);
    if (t.amount <= 0 || t.amount > from.balance)
        throw Error(ErrorCode::Overdraft, "transfer of " + std::to_string(t.amount) + " from " + t.from);
    from.balance -= t.amount;
    to.balance += t.amount;
}

std::vector<contracts::SweepTransfer> TsaLedger::end_of_day_sweep() {
    if (!sweep_address_) throw Error(ErrorCode::NoMainAccount, "nothing to sweep into");
    Json list = Json::array();
    for (const auto& [id, a] : accounts_) {
        if (a.kind == AccountKind::Main) continue;
        Json row{{"id", id}, {"kind", to_string(a.kind)}, {"balance", a.balance}};
        if (a.cap) row["cap"] = *a.cap;
        list.push_back(std::move(row));
    }
    const Json args{{"accounts", list}};
    const auto& method = contracts::find_code("zba_sweep")->methods.front();
    contracts::StepBudget budget{method.max_steps(args)};
    contracts_.set_height(day_);
    auto result = contracts::invoke(contracts_, *sweep_address_, "sweep", args, budget);
    txs_.emit(chain::TxKind::ContractInvoke, Json{{"address", sweep_address_->hex()},
                                                  {"method", "sweep"},
                                                  {"args", args},
                                                  {"steps", result.steps_used},
                                                  {"result", result.result}});

    std::vector<contracts::SweepTransfer> transfers;
    for (const auto& t : result.result["transfers"])
        transfers.push_back({t["from"].get<std::string>(), t["to"].get<std::string>(), t["amount"].get<Minor>()});
    for (const auto& t : transfers) {
        apply_transfer(t);
        Json payload = transfer_json(t);
        payload["day"] = day_;
        txs_.emit(chain::TxKind::TsaTransfer, std::move(payload));
    }
    txs_.emit(chain::TxKind::TsaDayClose, Json{{"day", day_}, {"consolidated", consolidated_position()}});
    ++day_;
    return transfers;
}

BufferCheck TsaLedger::check_buffer() const {
    Minor main_balance = 0;
    if (!main_.empty()) main_balance = accounts_.at(main_).balance;
    if (main_balance >= buffer_) return {true, 0};
    return {false, buffer_ - main_balance};
}

Minor TsaLedger::consolidated_position() const {
    Minor sum = 0;
    for (const auto& [id, a] : accounts_) sum += a.balance;
    return sum;
}

Json TsaLedger::state_json() const {
    Json accts = Json::array();
    for (const auto& [id, a] : accounts_) {
        Json row{{"id", id}, {"kind", to_string(a.kind)}, {"balance", a.balance}, {"parent", a.parent}, {"agency", a.agency}};
        if (a.cap) row["cap"] = *a.cap;
        accts.push_back(std::move(row));
    }
    return Json{{"accounts", accts},
                {"main", main_},
                {"day", day_},
                {"buffer_requirement", buffer_},
                {"contracts", contracts_.to_json()}};
}

DayReport TsaLedger::report(std::vector<contracts::SweepTransfer> transfers) const {
    DayReport r;
    r.day = day_ == 0 ? 0 : day_ - 1;
    r.consolidated = consolidated_position();
    for (const auto& [id, a] : accounts_) r.per_account[id] = a.balance;
    if (auto b = check_buffer(); !b.ok) r.shortfall = b.shortfall;
    r.transfers = std::move(transfers);
    return r;
}

TsaLedger TsaLedger::replay(std::span<const chain::Transaction> txs, chain::KeyPair operator_key) {
    std::vector<std::pair<std::uint64_t, const chain::Transaction*>> ordered;
    for (const auto& tx : txs) {
        const Json p = tx.payload_json();
        if (field_or<std::string>(p, "stream", "") != kStream) continue;
        ordered.emplace_back(field<std::uint64_t>(p, "seq"), &tx);
    }
    std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    TsaLedger ledger(std::move(operator_key));
    auto fail = [](std::uint64_t seq, const std::string& why) -> Error {
        return Error(ErrorCode::ParseError, "tsa seq " + std::to_string(seq) + ": " + why);
    };
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        const auto [seq, tx] = ordered[i];
        if (seq != i) throw fail(seq, "sequence gap, expected " + std::to_string(i));
        const Json p = tx->payload_json();
        try {
            switch (tx->kind) {
            case chain::TxKind::Generic: ledger.buffer_ = field<Minor>(p, "amount"); break;
            case chain::TxKind::TsaOpen: {
                std::optional<Minor> cap;
                if (p.contains("cap")) cap = p["cap"].get<Minor>();
                ledger.open_account(field<std::string>(p, "id"), account_kind_from_string(field<std::string>(p, "kind")),
                                    cap, field<std::string>(p, "agency"));
                // open_account re-emitted the record (and for main the deploy);
                // those copies are dropped below.
                break;
            }
            case chain::TxKind::ContractDeploy:
                if (!ledger.sweep_address_ || ledger.sweep_address_->hex() != field<std::string>(p, "address"))
                    throw fail(seq, "sweep contract address differs");
                break;
            case chain::TxKind::TsaReceipt:
                ledger.mut(field<std::string>(p, "account")).balance += field<Minor>(p, "amount");
                break;
            case chain::TxKind::TsaDisbursement: {
                auto& a = ledger.mut(field<std::string>(p, "account"));
                const auto amount = field<Minor>(p, "amount");
                if (amount > a.balance) throw fail(seq, "disbursement overdraws " + a.id);
                a.balance -= amount;
                break;
            }
            case chain::TxKind::ContractInvoke: {
                if (!ledger.sweep_address_) throw fail(seq, "invoke before deploy");
                const Json args = field<Json>(p, "args");
                const auto& method = contracts::find_code("zba_sweep")->methods.front();
                contracts::StepBudget budget{method.max_steps(args)};
                ledger.contracts_.set_height(ledger.day_);
                auto r = contracts::invoke(ledger.contracts_, *ledger.sweep_address_, field<std::string>(p, "method"),
                                           args, budget);
                if (r.result != field<Json>(p, "result")) throw fail(seq, "sweep result differs on re-execution");
                break;
            }
            case chain::TxKind::TsaTransfer:
                ledger.apply_transfer(
                    {field<std::string>(p, "from"), field<std::string>(p, "to"), field<Minor>(p, "amount")});
                break;
            case chain::TxKind::TsaDayClose:
                if (field<std::uint64_t>(p, "day") != ledger.day_) throw fail(seq, "day close out of order");
                ++ledger.day_;
                break;
            default: throw fail(seq, "unexpected kind " + std::string(chain::to_string(tx->kind)));
            }
        } catch (const Error& e) {
            if (e.code() == ErrorCode::ParseError) throw;
            throw fail(seq, e.what());
        }
        (void)ledger.txs_.drain();
    }
    ledger.txs_.resume_at(ordered.size());
    return ledger;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Architecture a) noexcept {
    return a == Architecture::Centralized ? "centralized" : "distributed";
}

Architecture architecture_from_string(std::string_view s) {
    if (s == "centralized") return Architecture::Centralized;
    if (s == "distributed") return Architecture::Distributed;
    throw Error(ErrorCode::InvalidParams, "architecture '" + std::string(s) + "'");
}

Json TsaVerdict::to_json() const { return Json{{"valid", valid}, {"detail", detail}}; }

namespace {

std::vector<chain::KeyPair> network_validators(std::string_view seed) {
    std::vector<chain::KeyPair> out;
    for (int i = 0; i < 3; ++i) out.push_back(crypto::keygen_from_text(std::string(seed) + "/tsa/validator/" + std::to_string(i)));
    return out;
}

chain::ChainConfig network_config(const std::vector<chain::KeyPair>& keys) {
    chain::ChainConfig c;
    for (const auto& k : keys) c.validators.push_back(k.public_key);
    c.quorum_m = 2;
    return c;
}

crypto::PeriodStamp stamp_from_anchor(const Json& p) {
    crypto::PeriodStamp s;
    s.period_index = field<std::uint64_t>(p, "period_index");
    s.items_root = crypto::Hash32::from_hex(field<std::string>(p, "items_root"));
    s.prev_stamp = crypto::Hash32::from_hex(field<std::string>(p, "prev_stamp"));
    s.stamp = crypto::Hash32::from_hex(field<std::string>(p, "stamp"));
    s.wall_time = field<std::uint64_t>(p, "wall_time");
    return s;
}

std::vector<Bytes> block_items(const chain::Block& b) {
    std::vector<Bytes> items;
    for (const auto& tx : b.txs) {
        const auto id = tx.id();
        items.emplace_back(id.bytes.begin(), id.bytes.end());
    }
    return items;
}

} // namespace

TsaNetwork::TsaNetwork(Architecture arch, std::string_view seed_text, Minor buffer_requirement)
    : arch_(arch),
      validators_(network_validators(seed_text)),
      operator_key_(crypto::keygen_from_text(std::string(seed_text) + "/tsa/operator")),
      ledger_(operator_key_, buffer_requirement),
      main_(network_config(validators_)),
      anchors_("tsa-anchor", operator_key_) {}

DayReport TsaNetwork::close_day(std::uint64_t wall_time) {
    auto transfers = ledger_.end_of_day_sweep();
    auto report = ledger_.report(std::move(transfers));
    seal(wall_time);
    return report;
}

void TsaNetwork::flush(std::uint64_t wall_time) { seal(wall_time); }

void TsaNetwork::seal(std::uint64_t wall_time) {
    std::vector<chain::Transaction> main_txs;
    std::map<std::string, std::vector<chain::Transaction>> per_agency;
    for (auto& tx : ledger_.transactions().drain()) {
        const bool local = tx.kind == chain::TxKind::TsaReceipt || tx.kind == chain::TxKind::TsaDisbursement;
        if (arch_ == Architecture::Distributed && local) {
            const auto& acct = ledger_.account(tx.payload_json()["account"].get<std::string>());
            if (acct.kind != AccountKind::Main) {
                per_agency[acct.agency].push_back(std::move(tx));
                continue;
            }
        }
        main_txs.push_back(std::move(tx));
    }
    for (auto& [agency, txs] : per_agency) {
        auto it = subs_.find(agency);
        if (it == subs_.end()) it = subs_.emplace(agency, chain::Chain(network_config(validators_))).first;
        const auto& block = chain::seal_block(it->second, std::move(txs), wall_time, validators_);
        auto& history = stamps_[agency];
        std::optional<crypto::PeriodStamp> prev;
        if (!history.empty()) prev = history.back();
        const auto items = block_items(block);
        auto stamp = crypto::stamp_period(items, prev, wall_time);
        anchors_.emit(chain::TxKind::StampAnchor, Json{{"agency", agency},
                                                       {"period_index", stamp.period_index},
                                                       {"items_root", stamp.items_root.hex()},
                                                       {"prev_stamp", stamp.prev_stamp.hex()},
                                                       {"stamp", stamp.stamp.hex()},
                                                       {"wall_time", stamp.wall_time},
                                                       {"block_id", block.id().hex()}});
        history.push_back(stamp);
    }
    for (auto& tx : anchors_.drain()) main_txs.push_back(std::move(tx));
    if (!main_txs.empty()) chain::seal_block(main_, std::move(main_txs), wall_time, validators_);
}

TsaVerdict TsaNetwork::verify() const {
    if (auto v = main_.verify(); !v.valid)
        return {false, "main chain: height " + std::to_string(v.first_bad_height) + " " + std::string(chain::to_string(v.reason))};
    std::map<std::string, std::vector<crypto::PeriodStamp>> anchored;
    for (const auto& b : main_.blocks())
        for (const auto& tx : b.txs)
            if (tx.kind == chain::TxKind::StampAnchor) {
                const Json p = tx.payload_json();
                anchored[field<std::string>(p, "agency")].push_back(stamp_from_anchor(p));
            }
    for (const auto& [agency, sub] : subs_) {
        if (auto v = sub.verify(); !v.valid)
            return {false, agency + " sub-chain: height " + std::to_string(v.first_bad_height) + " " +
                               std::string(chain::to_string(v.reason))};
        std::vector<std::vector<Bytes>> items;
        for (const auto& b : sub.blocks()) items.push_back(block_items(b));
        const auto& stamps = anchored[agency];
        if (stamps.size() != items.size())
            return {false, agency + ": " + std::to_string(items.size()) + " sub-chain blocks but " +
                               std::to_string(stamps.size()) + " anchored stamps"};
        if (auto bad = crypto::verify_stamp_chain(items, stamps))
            return {false, agency + ": stamp " + std::to_string(*bad) + " does not re-derive"};
    }
    for (const auto& [agency, stamps] : anchored)
        if (!subs_.contains(agency)) return {false, agency + ": anchored stamps without a sub-chain"};
    return {};
}

TsaLedger TsaNetwork::replay() const {
    std::vector<chain::Transaction> all;
    for (const auto& b : main_.blocks()) all.insert(all.end(), b.txs.begin(), b.txs.end());
    for (const auto& [agency, sub] : subs_)
        for (const auto& b : sub.blocks()) all.insert(all.end(), b.txs.begin(), b.txs.end());
    return TsaLedger::replay(all, operator_key_);
}

} // namespace ledgerstack::tsa
