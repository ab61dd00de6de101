#include "ledgerstack/contracts.hpp"

#include <charconv>
#include <optional>

#include "ledgerstack/bank_ledger.hpp"
#include "ledgerstack/error.hpp"
#include "ledgerstack/escrow.hpp"
#include "ledgerstack/json_util.hpp"
#include "ledgerstack/settlement.hpp"

namespace ledgerstack::contracts {

namespace {

/// Metered view of one instance's storage. Works on a staged copy; the caller
/// commits it only when the whole call succeeded.
class Context {
public:
    Context(std::map<std::string, Bytes>& storage, const StepBudget& budget, std::vector<StorageAccess>& trace)
        : storage_(storage), limit_(budget.limit), used_(budget.used), trace_(trace) {}

    void charge(std::uint64_t steps) {
        if (steps > limit_ - used_)
            throw Error(ErrorCode::OutOfSteps, "needs " + std::to_string(used_ + steps) + " of " + std::to_string(limit_));
        used_ += steps;
    }

    std::optional<Bytes> read(const std::string& key) {
        charge(kStorageAccessCost);
        trace_.push_back({false, key});
        auto it = storage_.find(key);
        if (it == storage_.end()) return std::nullopt;
        return it->second;
    }

    void write(const std::string& key, Bytes value) {
        charge(kStorageAccessCost);
        trace_.push_back({true, key});
        storage_[key] = std::move(value);
    }

    std::int64_t read_int(const std::string& key) {
        auto v = read(key);
        if (!v) throw Error(ErrorCode::ContractError, "storage key '" + key + "' missing");
        std::int64_t out = 0;
        const char* first = reinterpret_cast<const char*>(v->data());
        auto [ptr, ec] = std::from_chars(first, first + v->size(), out);
        if (ec != std::errc{} || ptr != first + v->size())
            throw Error(ErrorCode::ContractError, "storage key '" + key + "' is not an integer");
        return out;
    }
    void write_int(const std::string& key, std::int64_t v) { write(key, to_bytes(std::to_string(v))); }

    std::string read_text(const std::string& key) {
        auto v = read(key);
        if (!v) throw Error(ErrorCode::ContractError, "storage key '" + key + "' missing");
        return std::string(v->begin(), v->end());
    }
    void write_text(const std::string& key, std::string_view v) { write(key, to_bytes(v)); }

    Json read_json(const std::string& key) { return Json::parse(read_text(key)); }
    void write_json(const std::string& key, const Json& v) { write_text(key, canonical_json(v)); }

    [[nodiscard]] std::uint64_t used() const noexcept { return used_; }

private:
    std::map<std::string, Bytes>& storage_;
    std::uint64_t limit_;
    std::uint64_t used_;
    std::vector<StorageAccess>& trace_;
};

struct CallEnv {
    Context& ctx;
    const Hash32& self;
    bool destroy = false;
};

using DeployFn = void (*)(CallEnv&, const Json& init);
using MethodFn = Json (*)(CallEnv&, const Json& args);

struct CodeImpl {
    CodeInfo info;
    DeployFn deploy;
    std::vector<MethodFn> methods; ///< parallel to info.methods
};

std::uint64_t array_size(const Json& args, const char* key) {
    if (!args.is_object()) return 0;
    auto it = args.find(key);
    return it != args.end() && it->is_array() ? it->size() : 0;
}

auto constant(std::uint64_t n) {
    return [n](const Json&) { return n; };
}

// --- counter ----------------------------------------------------------------

void counter_deploy(CallEnv& e, const Json& init) {
    const auto start = field_or<std::int64_t>(init, "start", 0);
    if (start < 0) throw Error(ErrorCode::InvalidParams, "start must be non-negative");
    e.ctx.write_int("count", start);
}

Json counter_inc(CallEnv& e, const Json&) {
    const auto n = e.ctx.read_int("count") + 1;
    e.ctx.write_int("count", n);
    return Json{{"count", n}};
}

Json counter_add(CallEnv& e, const Json& args) {
    const auto by = field<std::int64_t>(args, "n");
    const auto n = e.ctx.read_int("count") + by;
    e.ctx.write_int("count", n);
    return Json{{"count", n}};
}

Json counter_get(CallEnv& e, const Json&) { return Json{{"count", e.ctx.read_int("count")}}; }

Json self_destroy(CallEnv& e, const Json&) {
    e.destroy = true;
    return Json{{"destroyed", true}};
}

// --- conditional_payment ----------------------------------------------------

void conditional_deploy(CallEnv& e, const Json& init) {
    const auto payer = field<std::string>(init, "payer");
    const auto payee = field<std::string>(init, "payee");
    const auto amount = field<Minor>(init, "amount");
    if (amount <= 0) throw Error(ErrorCode::InvalidParams, "amount must be positive");
    if (payer.empty() || payee.empty() || payer == payee) throw Error(ErrorCode::InvalidParams, "payer and payee must differ");
    e.ctx.write_text("payer", payer);
    e.ctx.write_text("payee", payee);
    e.ctx.write_int("amount", amount);
    e.ctx.write_int("paid", 0);
}

/// The condition arrives as an argument recorded in the invoking
/// transaction; the contract never looks outside its own storage.
Json conditional_trigger(CallEnv& e, const Json& args) {
    const bool condition = field<bool>(args, "condition");
    if (e.ctx.read_int("paid") != 0) throw Error(ErrorCode::ContractError, "payment already made");
    Json out{{"payer", e.ctx.read_text("payer")},
             {"payee", e.ctx.read_text("payee")},
             {"amount", e.ctx.read_int("amount")},
             {"transferred", condition}};
    if (condition) e.ctx.write_int("paid", 1);
    return out;
}

// --- zba_sweep --------------------------------------------------------------

void sweep_deploy(CallEnv& e, const Json& init) {
    const auto main = field<std::string>(init, "main");
    if (main.empty()) throw Error(ErrorCode::InvalidParams, "main account id is empty");
    e.ctx.write_text("main", main);
    e.ctx.write_int("sweeps", 0);
}

Json sweep_run(CallEnv& e, const Json& args) {
    const auto list = field<Json>(args, "accounts");
    if (!list.is_array()) throw Error(ErrorCode::InvalidParams, "accounts must be an array");
    e.ctx.charge(list.size());
    std::vector<SweepAccount> accounts;
    for (const auto& a : list)
        accounts.push_back({field<std::string>(a, "id"), field<std::string>(a, "kind"), field<Minor>(a, "balance"),
                            field_or<Minor>(a, "cap", 0)});
    const auto main = e.ctx.read_text("main");
    const auto index = e.ctx.read_int("sweeps");
    e.ctx.write_int("sweeps", index + 1);
    Json transfers = Json::array();
    for (const auto& t : plan_sweep(main, accounts))
        transfers.push_back({{"from", t.from}, {"to", t.to}, {"amount", t.amount}});
    return Json{{"sweep_index", index}, {"transfers", transfers}};
}

// --- ifrs9_classify ---------------------------------------------------------

void no_init(CallEnv&, const Json& init) {
    if (!init.is_null() && !(init.is_object() && init.empty()))
        throw Error(ErrorCode::InvalidParams, "this contract takes no init parameters");
}

Json ifrs9_classify_method(CallEnv& e, const Json& args) {
    const auto asset = field<std::string>(args, "asset_id");
    const bool sppi = field<bool>(args, "sppi_pass");
    const auto model = bank::business_model_from_string(field<std::string>(args, "business_model"));
    const auto category = std::string(bank::to_string(bank::classify_ifrs9(sppi, model)));
    e.ctx.write_text("class:" + asset, category);
    return Json{{"asset_id", asset}, {"category", category}};
}

Json ifrs9_get(CallEnv& e, const Json& args) {
    const auto asset = field<std::string>(args, "asset_id");
    auto v = e.ctx.read("class:" + asset);
    if (!v) throw Error(ErrorCode::ContractError, "asset " + asset + " is unclassified");
    return Json{{"asset_id", asset}, {"category", std::string(v->begin(), v->end())}};
}

// --- net --------------------------------------------------------------------

void net_deploy(CallEnv& e, const Json& init) {
    no_init(e, init);
    e.ctx.write_int("runs", 0);
}

Json net_run(CallEnv& e, const Json& args) {
    const auto list = field<Json>(args, "trades");
    if (!list.is_array()) throw Error(ErrorCode::InvalidParams, "trades must be an array");
    e.ctx.charge(list.size());
    std::vector<settlement::Trade> trades;
    for (const auto& t : list) {
        trades.push_back(settlement::Trade::from_json(t));
        settlement::validate(trades.back());
    }
    const auto runs = e.ctx.read_int("runs");
    e.ctx.write_int("runs", runs + 1);
    Json positions = Json::array();
    for (const auto& p : settlement::net_positions(trades))
        positions.push_back(
            {{"member", p.member}, {"asset", p.asset}, {"net_quantity", p.net_quantity}, {"net_cash", p.net_cash}});
    return Json{{"run", runs}, {"positions", positions}};
}

// --- settle -----------------------------------------------------------------

void settle_deploy(CallEnv& e, const Json& init) {
    const auto holdings = settlement::holdings_from_json(field<Json>(init, "holdings"));
    e.ctx.write_json("holdings", settlement::to_json(holdings));
}

Json settle_run(CallEnv& e, const Json& args) {
    const auto& in = field<Json>(args, "instruction");
    auto ins = settlement::SettlementInstruction::make(
        field<std::string>(in, "id"), field<std::string>(in, "from"), field<std::string>(in, "to"),
        field<std::string>(in, "asset"), field<std::int64_t>(in, "quantity"), field_or<Minor>(in, "cash", 0),
        settlement::settle_mode_from_string(field_or<std::string>(in, "mode", "dvp")), field_or<std::int64_t>(in, "trade_day", 0),
        field_or<std::int64_t>(in, "due_day", 0), field_or<Minor>(in, "notional", 0));
    auto holdings = settlement::holdings_from_json(e.ctx.read_json("holdings"));
    try {
        if (ins.mode == settlement::SettleMode::Dvp)
            settlement::settle_dvp(holdings, ins);
        else
            settlement::settle_fop(holdings, ins);
    } catch (const Error& err) {
        if (err.code() != ErrorCode::InsufficientAsset && err.code() != ErrorCode::InsufficientCash) throw;
        return Json{{"id", ins.id}, {"status", "failed"}, {"failure", ins.failure}};
    }
    e.ctx.write_json("holdings", settlement::to_json(holdings));
    return Json{{"id", ins.id}, {"status", "settled"}};
}

Json settle_holdings(CallEnv& e, const Json&) { return e.ctx.read_json("holdings"); }

// --- escrow -----------------------------------------------------------------

void escrow_deploy(CallEnv& e, const Json& init) {
    auto c = escrow::make_escrow(e.self, crypto::PublicKey::from_hex(field<std::string>(init, "buyer")),
                                 crypto::PublicKey::from_hex(field<std::string>(init, "seller")),
                                 crypto::PublicKey::from_hex(field<std::string>(init, "arbiter")),
                                 field<Minor>(init, "amount"), field<Minor>(init, "fee"));
    e.ctx.write_json("state", c.to_json());
}

Json escrow_result(const escrow::EscrowContract& c, const std::vector<escrow::Payout>& payouts) {
    Json list = Json::array();
    for (const auto& p : payouts) list.push_back({{"to", p.to.hex()}, {"amount", p.amount}, {"role", p.role}});
    return Json{{"state", escrow::to_string(c.state)}, {"payouts", list}};
}

Json escrow_sign(CallEnv& e, const Json& args) {
    auto c = escrow::EscrowContract::from_json(e.ctx.read_json("state"));
    auto payouts = escrow::sign_disposition(c, crypto::PublicKey::from_hex(field<std::string>(args, "signer")),
                                            escrow::disposition_from_string(field<std::string>(args, "disposition")),
                                            crypto::Signature::from_hex(field<std::string>(args, "signature")));
    e.ctx.write_json("state", c.to_json());
    return escrow_result(c, payouts);
}

Json escrow_finalize(CallEnv& e, const Json&) {
    auto c = escrow::EscrowContract::from_json(e.ctx.read_json("state"));
    auto payouts = escrow::finalize(c);
    e.ctx.write_json("state", c.to_json());
    return escrow_result(c, payouts);
}

Json escrow_get(CallEnv& e, const Json&) { return e.ctx.read_json("state"); }

// ---------------------------------------------------------------------------

const std::vector<CodeImpl>& registry() {
    static const std::vector<CodeImpl> codes = [] {
        const auto k = kInvokeFixedCost;
        std::vector<CodeImpl> v;
        v.push_back({{"counter",
                      "integer counter with self-destruct",
                      "10 + 1 write",
                      {{"inc", "10 + 1 read + 1 write", constant(k + 2)},
                       {"add", "10 + 1 read + 1 write; args {n}", constant(k + 2)},
                       {"get", "10 + 1 read", constant(k + 1)},
                       {"destroy", "10", constant(k)}}},
                     counter_deploy,
                     {counter_inc, counter_add, counter_get, self_destroy}});
        v.push_back({{"conditional_payment",
                      "pays amount from payer to payee once, if the supplied condition holds",
                      "10 + 4 writes; init {payer, payee, amount}",
                      {{"trigger", "10 + 4 reads + 1 write if paid; args {condition}", constant(k + 5)},
                       {"destroy", "10", constant(k)}}},
                     conditional_deploy,
                     {conditional_trigger, self_destroy}});
        v.push_back({{"zba_sweep",
                      "end-of-day sweep plan into the main account",
                      "10 + 2 writes; init {main}",
                      {{"sweep", "10 + 1 per account + 2 reads + 1 write; args {accounts}",
                        [k](const Json& a) { return k + 3 + array_size(a, "accounts"); }}}},
                     sweep_deploy,
                     {sweep_run}});
        v.push_back({{"ifrs9_classify",
                      "records the measurement category of financial assets",
                      "10",
                      {{"classify", "10 + 1 write; args {asset_id, sppi_pass, business_model}", constant(k + 1)},
                       {"get", "10 + 1 read; args {asset_id}", constant(k + 1)}}},
                     no_init,
                     {ifrs9_classify_method, ifrs9_get}});
        v.push_back({{"net",
                      "multilateral net positions of a trade batch",
                      "10 + 1 write",
                      {{"net", "10 + 1 per trade + 1 read + 1 write; args {trades}",
                        [k](const Json& a) { return k + 2 + array_size(a, "trades"); }}}},
                     net_deploy,
                     {net_run}});
        v.push_back({{"settle",
                      "settles instructions against the holdings it custodies",
                      "10 + 1 write; init {holdings}",
                      {{"settle", "10 + 1 read + 1 write if settled; args {instruction}", constant(k + 2)},
                       {"holdings", "10 + 1 read", constant(k + 1)}}},
                     settle_deploy,
                     {settle_run, settle_holdings}});
        v.push_back({{"escrow",
                      "2-of-3 escrow state machine",
                      "10 + 1 write; init {buyer, seller, arbiter, amount, fee}",
                      {{"sign", "10 + 1 read + 1 write; args {signer, disposition, signature}", constant(k + 2)},
                       {"finalize", "10 + 1 read + 1 write", constant(k + 2)},
                       {"get", "10 + 1 read", constant(k + 1)}}},
                     escrow_deploy,
                     {escrow_sign, escrow_finalize, escrow_get}});
        return v;
    }();
    return codes;
}

const CodeImpl* find_impl(std::string_view code_id) {
    for (const auto& c : registry())
        if (c.info.code_id == code_id) return &c;
    return nullptr;
}

Json storage_json(const std::map<std::string, Bytes>& storage) {
    Json out = Json::object();
    for (const auto& [k, v] : storage) out[k] = to_hex(v);
    return out;
}

} // namespace

// ---------------------------------------------------------------------------

const ContractInstance& ContractState::at(const Hash32& address) const {
    auto it = instances_.find(address);
    if (it == instances_.end()) throw Error(ErrorCode::UnknownContract, address.hex());
    return it->second;
}

Json ContractState::to_json() const {
    Json list = Json::array();
    for (const auto& [addr, inst] : instances_)
        list.push_back({{"address", addr.hex()},
                        {"code_id", inst.code_id},
                        {"alive", inst.alive},
                        {"deploy_height", inst.deploy_height},
                        {"storage", storage_json(inst.storage)}});
    return Json{{"height", height_}, {"instances", list}};
}

Bytes ContractState::serialize() const { return to_bytes(canonical_json(to_json())); }

Hash32 derive_address(std::string_view code_id, const Json& init, std::uint64_t height) {
    Bytes pre = to_bytes(code_id);
    append(pre, as_bytes(canonical_json(init.is_null() ? Json::object() : init)));
    put_u64_be(pre, height);
    return crypto::sha256d(pre);
}

Hash32 deploy(ContractState& state, std::string_view code_id, const Json& init, StepBudget& budget) {
    const CodeImpl* impl = find_impl(code_id);
    if (!impl) throw Error(ErrorCode::UnknownCode, std::string(code_id));
    const Hash32 address = derive_address(code_id, init, state.height_);
    if (state.instances_.contains(address)) throw Error(ErrorCode::AddressCollision, address.hex());

    ContractInstance inst;
    inst.address = address;
    inst.code_id = std::string(code_id);
    inst.deploy_height = state.height_;
    std::vector<StorageAccess> trace;
    Context ctx(inst.storage, budget, trace);
    ctx.charge(kInvokeFixedCost);
    CallEnv env{ctx, address};
    try {
        impl->deploy(env, init.is_null() ? Json::object() : init);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::OutOfSteps) throw;
        throw Error(ErrorCode::InvalidParams, std::string(code_id) + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidParams, std::string(code_id) + ": " + e.what());
    }
    budget.used = ctx.used();
    state.instances_.emplace(address, std::move(inst));
    return address;
}

InvokeResult invoke(ContractState& state, const Hash32& address, std::string_view method, const Json& args,
                    StepBudget& budget) {
    auto it = state.instances_.find(address);
    if (it == state.instances_.end()) throw Error(ErrorCode::UnknownContract, address.hex());
    ContractInstance& inst = it->second;
    if (!inst.alive) throw Error(ErrorCode::Dead, address.hex());
    const CodeImpl* impl = find_impl(inst.code_id);

    std::size_t index = impl->info.methods.size();
    for (std::size_t i = 0; i < impl->info.methods.size(); ++i)
        if (impl->info.methods[i].name == method) index = i;

    InvokeResult out;
    auto staged = inst.storage;
    Context ctx(staged, budget, out.trace);
    CallEnv env{ctx, address};
    const std::uint64_t before = budget.used;
    try {
        ctx.charge(kInvokeFixedCost);
        if (index == impl->info.methods.size())
            throw Error(ErrorCode::ContractError, inst.code_id + " has no method '" + std::string(method) + "'");
        out.result = impl->methods[index](env, args.is_null() ? Json::object() : args);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::OutOfSteps || e.code() == ErrorCode::ContractError) throw;
        throw Error(ErrorCode::ContractError, e.what());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ContractError, e.what());
    }
    // Success: commit storage, liveness and budget together.
    inst.storage = std::move(staged);
    if (env.destroy) inst.alive = false;
    budget.used = ctx.used();
    out.steps_used = budget.used - before;
    return out;
}

const std::vector<CodeInfo>& catalog() {
    static const std::vector<CodeInfo> infos = [] {
        std::vector<CodeInfo> v;
        for (const auto& c : registry()) v.push_back(c.info);
        return v;
    }();
    return infos;
}

const CodeInfo* find_code(std::string_view code_id) {
    const CodeImpl* impl = find_impl(code_id);
    return impl ? &impl->info : nullptr;
}

Json catalog_json() {
    Json out = Json::array();
    for (const auto& c : catalog()) {
        Json methods = Json::array();
        for (const auto& m : c.methods) methods.push_back({{"name", m.name}, {"cost", m.cost}});
        out.push_back({{"code_id", c.code_id},
                       {"description", c.description},
                       {"deploy_cost", c.deploy_cost},
                       {"methods", methods}});
    }
    return out;
}

std::vector<SweepTransfer> plan_sweep(const std::string& main_id, const std::vector<SweepAccount>& accounts) {
    std::vector<SweepTransfer> out;
    for (const auto& a : accounts) {
        if (a.id == main_id || a.kind == "main" || a.kind == "subsidiary") continue;
        if (a.kind == "zba" || a.kind == "transit" || a.kind == "correspondent") {
            if (a.balance > 0) out.push_back({a.id, main_id, a.balance});
        } else if (a.kind == "imprest") {
            if (a.balance > a.cap) out.push_back({a.id, main_id, a.balance - a.cap});
        } else {
            throw Error(ErrorCode::InvalidParams, "account kind '" + a.kind + "'");
        }
    }
    return out;
}

} // namespace ledgerstack::contracts
