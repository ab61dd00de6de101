#include "ledgerstack/settlement.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <set>
#include <sstream>

#include "ledgerstack/error.hpp"
#include "ledgerstack/json_util.hpp"

namespace ledgerstack::settlement {

namespace {

constexpr std::uint64_t kSecondsPerDay = 86400;

std::int64_t parse_i64(const std::string& s, std::size_t line_no, const char* what) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
    return v;
}

Account* find_account(Holdings& h, const std::string& id) {
    auto it = h.find(id);
    return it == h.end() ? nullptr : &it->second;
}

std::int64_t asset_of(const Account* a, const std::string& asset) {
    if (!a) return 0;
    auto it = a->assets.find(asset);
    return it == a->assets.end() ? 0 : it->second;
}

[[noreturn]] void fail(SettlementInstruction& ins, ErrorCode code, const std::string& detail) {
    ins.status = Status::Failed;
    ins.failure = std::string(error_name(code));
    throw Error(code, ins.id + ": " + detail);
}

void check_pending(const SettlementInstruction& ins, SettleMode expected) {
    if (ins.mode != expected)
        throw Error(ErrorCode::WrongSettlementMode, ins.id + " is " + std::string(to_string(ins.mode)));
    if (ins.status != Status::Pending) throw Error(ErrorCode::NotPending, ins.id + " is " + std::string(to_string(ins.status)));
}

} // namespace

// ---------------------------------------------------------------------------

Json Trade::to_json() const {
    return Json{{"id", id},         {"buyer", buyer}, {"seller", seller},      {"asset", asset},
                {"quantity", quantity}, {"price", price}, {"trade_day", trade_day}, {"superseded", superseded}};
}

Trade Trade::from_json(const Json& j) {
    Trade t;
    t.id = field<std::string>(j, "id");
    t.buyer = field<std::string>(j, "buyer");
    t.seller = field<std::string>(j, "seller");
    t.asset = field<std::string>(j, "asset");
    t.quantity = field<std::int64_t>(j, "quantity");
    t.price = field<Minor>(j, "price");
    t.trade_day = field_or<std::int64_t>(j, "trade_day", 0);
    t.superseded = field_or<bool>(j, "superseded", false);
    return t;
}

void validate(const Trade& t) {
    if (t.quantity <= 0) throw Error(ErrorCode::NonPositiveQuantity, "trade " + t.id);
    if (t.price <= 0) throw Error(ErrorCode::InvalidParams, "trade " + t.id + " needs a positive price");
    if (t.buyer.empty() || t.seller.empty() || t.buyer == t.seller)
        throw Error(ErrorCode::InvalidParams, "trade " + t.id + " needs distinct buyer and seller");
    if (t.asset.empty()) throw Error(ErrorCode::InvalidParams, "trade " + t.id + " names no asset");
}

std::vector<Trade> read_trades_csv(std::istream& in) {
    std::vector<Trade> out;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header_seen) {
            header_seen = true;
            if (line.rfind("id,", 0) == 0) continue;
        }
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ss(line);
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 7) throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected 7 columns");
        Trade t;
        t.id = cells[0];
        t.buyer = cells[1];
        t.seller = cells[2];
        t.asset = cells[3];
        t.quantity = parse_i64(cells[4], line_no, "qty");
        t.price = parse_i64(cells[5], line_no, "price");
        t.trade_day = parse_i64(cells[6], line_no, "day");
        validate(t);
        out.push_back(std::move(t));
    }
    return out;
}

std::string_view to_string(OrderSide s) noexcept { return s == OrderSide::Buy ? "buy" : "sell"; }

OrderSide order_side_from_string(std::string_view s) {
    if (s == "buy") return OrderSide::Buy;
    if (s == "sell") return OrderSide::Sell;
    throw Error(ErrorCode::InvalidParams, "order side '" + std::string(s) + "'");
}

std::vector<Trade> OrderBook::submit(Order order) {
    if (order.quantity <= 0) throw Error(ErrorCode::NonPositiveQuantity, "order " + order.id);
    if (order.price <= 0) throw Error(ErrorCode::InvalidParams, "order " + order.id + " needs a positive price");
    if (order.member.empty() || order.asset.empty())
        throw Error(ErrorCode::InvalidParams, "order " + order.id + " needs a member and an asset");

    auto& side = books_[order.asset];
    const bool buy = order.side == OrderSide::Buy;
    auto& opposite = buy ? side.asks : side.bids;
    std::vector<Trade> trades;

    for (auto it = opposite.begin(); it != opposite.end() && order.quantity > 0;) {
        const Order& resting = it->order;
        const bool crosses = buy ? resting.price <= order.price : resting.price >= order.price;
        if (!crosses) break;
        if (resting.member == order.member) {
            ++it;
            continue;
        }
        const std::int64_t fill = std::min(order.quantity, resting.quantity);
        Trade t;
        t.id = order.id + "x" + resting.id;
        t.buyer = buy ? order.member : resting.member;
        t.seller = buy ? resting.member : order.member;
        t.asset = order.asset;
        t.quantity = fill;
        t.price = resting.price;
        t.trade_day = order.day;
        trades.push_back(std::move(t));
        order.quantity -= fill;
        it->order.quantity -= fill;
        if (it->order.quantity == 0)
            it = opposite.erase(it);
        else
            ++it;
    }

    if (order.quantity > 0) {
        auto& own = buy ? side.bids : side.asks;
        RestingOrder r{std::move(order), seq_++};
        // Best price first; equal prices keep arrival order.
        auto pos = std::find_if(own.begin(), own.end(), [&](const RestingOrder& o) {
            return buy ? o.order.price < r.order.price : o.order.price > r.order.price;
        });
        own.insert(pos, std::move(r));
    }
    return trades;
}

std::vector<RestingOrder> OrderBook::bids(const std::string& asset) const {
    auto it = books_.find(asset);
    return it == books_.end() ? std::vector<RestingOrder>{} : it->second.bids;
}

std::vector<RestingOrder> OrderBook::asks(const std::string& asset) const {
    auto it = books_.find(asset);
    return it == books_.end() ? std::vector<RestingOrder>{} : it->second.asks;
}

// ---------------------------------------------------------------------------

std::pair<Trade, Trade> novate(Trade& trade, const std::string& ccp_id) {
    if (trade.superseded) throw Error(ErrorCode::AlreadyNovated, "trade " + trade.id);
    if (ccp_id == trade.buyer || ccp_id == trade.seller) throw Error(ErrorCode::CcpIsParty, ccp_id);
    Trade sell_leg = trade;
    sell_leg.id = trade.id + "/s";
    sell_leg.buyer = ccp_id;
    Trade buy_leg = trade;
    buy_leg.id = trade.id + "/b";
    buy_leg.seller = ccp_id;
    trade.superseded = true;
    return {std::move(sell_leg), std::move(buy_leg)};
}

std::vector<NetPosition> net_positions(std::span<const Trade> trades) {
    std::map<std::pair<std::string, std::string>, NetPosition> acc;
    for (const auto& t : trades) {
        auto& b = acc[{t.buyer, t.asset}];
        b.member = t.buyer;
        b.asset = t.asset;
        b.net_quantity += t.quantity;
        b.net_cash -= t.notional();
        auto& s = acc[{t.seller, t.asset}];
        s.member = t.seller;
        s.asset = t.asset;
        s.net_quantity -= t.quantity;
        s.net_cash += t.notional();
    }
    std::vector<NetPosition> out;
    out.reserve(acc.size());
    for (auto& [k, v] : acc) out.push_back(std::move(v));
    return out;
}

std::vector<BilateralNet> bilateral_net(std::span<const Trade> trades) {
    std::map<std::tuple<std::string, std::string, std::string>, BilateralNet> acc;
    for (const auto& t : trades) {
        const auto& a = std::min(t.buyer, t.seller);
        const auto& b = std::max(t.buyer, t.seller);
        auto& n = acc[{a, b, t.asset}];
        n.a = a;
        n.b = b;
        n.asset = t.asset;
        const Minor sign = t.buyer == a ? 1 : -1;
        n.quantity += sign * t.quantity;
        n.cash -= sign * t.notional();
        n.gross_notional += t.notional();
    }
    std::vector<BilateralNet> out;
    for (auto& [k, v] : acc) out.push_back(std::move(v));
    return out;
}

Json ObligationTotals::to_json() const {
    return Json{{"gross_quantity", gross_quantity},
                {"gross_cash", gross_cash},
                {"net_quantity", net_quantity},
                {"net_cash", net_cash}};
}

ObligationTotals obligation_totals(std::span<const Trade> trades) {
    ObligationTotals o;
    for (const auto& t : trades) {
        o.gross_quantity += 2 * t.quantity;
        o.gross_cash += 2 * t.notional();
    }
    for (const auto& p : net_positions(trades)) {
        o.net_quantity += p.net_quantity < 0 ? -p.net_quantity : p.net_quantity;
        o.net_cash += p.net_cash < 0 ? -p.net_cash : p.net_cash;
    }
    return o;
}

// ---------------------------------------------------------------------------

std::string_view to_string(SettleMode m) noexcept { return m == SettleMode::Dvp ? "dvp" : "fop"; }

SettleMode settle_mode_from_string(std::string_view s) {
    if (s == "dvp") return SettleMode::Dvp;
    if (s == "fop") return SettleMode::Fop;
    throw Error(ErrorCode::InvalidParams, "settlement mode '" + std::string(s) + "'");
}

std::string_view to_string(Status s) noexcept {
    switch (s) {
    case Status::Pending: return "pending";
    case Status::Settled: return "settled";
    case Status::Failed: return "failed";
    }
    return "?";
}

SettlementInstruction SettlementInstruction::make(std::string id, std::string from, std::string to, std::string asset,
                                                  std::int64_t quantity, Minor cash, SettleMode mode,
                                                  std::int64_t trade_day, std::int64_t due_day, Minor notional) {
    if (quantity <= 0) throw Error(ErrorCode::NonPositiveQuantity, "instruction " + id);
    if (from.empty() || to.empty() || from == to) throw Error(ErrorCode::InvalidParams, "instruction " + id + " parties");
    if (mode == SettleMode::Fop && cash != 0)
        throw Error(ErrorCode::InvalidParams, "free-of-payment instruction " + id + " carries cash");
    SettlementInstruction ins;
    ins.id = std::move(id);
    ins.from = std::move(from);
    ins.to = std::move(to);
    ins.asset = std::move(asset);
    ins.quantity = quantity;
    ins.cash = cash;
    ins.mode = mode;
    ins.trade_day = trade_day;
    ins.due_day = due_day;
    ins.notional = notional;
    return ins;
}

Json SettlementInstruction::to_json() const {
    Json j{{"id", id},           {"from", from},         {"to", to},           {"asset", asset},
           {"quantity", quantity}, {"cash", cash},       {"mode", to_string(mode)}, {"trade_day", trade_day},
           {"due_day", due_day},   {"notional", notional}, {"status", to_string(status)}};
    if (!failure.empty()) j["failure"] = failure;
    return j;
}

Json PaymentInstruction::to_json() const {
    Json j{{"id", id}, {"payer", payer}, {"payee", payee}, {"amount", amount}, {"due_day", due_day},
           {"status", to_string(status)}};
    if (!for_instruction.empty()) j["for_instruction"] = for_instruction;
    if (!failure.empty()) j["failure"] = failure;
    return j;
}

void settle_dvp(Holdings& holdings, SettlementInstruction& ins) {
    check_pending(ins, SettleMode::Dvp);
    Account* deliverer = find_account(holdings, ins.from);
    Account* receiver = find_account(holdings, ins.to);
    // The cash leg runs opposite to the asset leg unless netting left the
    // deliverer owing cash as well.
    Account* payer = ins.cash >= 0 ? receiver : deliverer;
    const Minor cash = ins.cash >= 0 ? ins.cash : -ins.cash;

    if (asset_of(deliverer, ins.asset) < ins.quantity)
        fail(ins, ErrorCode::InsufficientAsset, ins.from + " lacks " + std::to_string(ins.quantity) + " " + ins.asset);
    if (cash > 0 && (!payer || payer->cash < cash))
        fail(ins, ErrorCode::InsufficientCash, (ins.cash >= 0 ? ins.to : ins.from) + " lacks " + std::to_string(cash));

    // Both checks passed; from here on nothing can fail.
    Account& to = holdings[ins.to];
    Account& from = holdings.at(ins.from);
    from.assets[ins.asset] -= ins.quantity;
    to.assets[ins.asset] += ins.quantity;
    if (ins.cash >= 0) {
        to.cash -= ins.cash;
        from.cash += ins.cash;
    } else {
        from.cash -= cash;
        to.cash += cash;
    }
    ins.status = Status::Settled;
}

void settle_fop(Holdings& holdings, SettlementInstruction& ins) {
    check_pending(ins, SettleMode::Fop);
    Account* deliverer = find_account(holdings, ins.from);
    if (asset_of(deliverer, ins.asset) < ins.quantity)
        fail(ins, ErrorCode::InsufficientAsset, ins.from + " lacks " + std::to_string(ins.quantity) + " " + ins.asset);
    Account& to = holdings[ins.to];
    holdings.at(ins.from).assets[ins.asset] -= ins.quantity;
    to.assets[ins.asset] += ins.quantity;
    ins.status = Status::Settled;
}

void settle_payment(Holdings& holdings, PaymentInstruction& p) {
    if (p.status != Status::Pending) throw Error(ErrorCode::NotPending, p.id);
    Account* payer = find_account(holdings, p.payer);
    if (!payer || payer->cash < p.amount) {
        p.status = Status::Failed;
        p.failure = std::string(error_name(ErrorCode::InsufficientCash));
        throw Error(ErrorCode::InsufficientCash, p.id + ": " + p.payer + " lacks " + std::to_string(p.amount));
    }
    Account& payee = holdings[p.payee];
    holdings.at(p.payer).cash -= p.amount;
    payee.cash += p.amount;
    p.status = Status::Settled;
}

std::vector<std::string> unpaid_deliveries(std::span<const SettlementInstruction> instructions,
                                           std::span<const PaymentInstruction> payments) {
    std::set<std::string> paid;
    for (const auto& p : payments)
        if (p.status == Status::Settled && !p.for_instruction.empty()) paid.insert(p.for_instruction);
    std::set<std::string> expecting;
    for (const auto& p : payments)
        if (!p.for_instruction.empty()) expecting.insert(p.for_instruction);
    std::vector<std::string> out;
    for (const auto& ins : instructions)
        if (ins.mode == SettleMode::Fop && ins.status == Status::Settled && expecting.contains(ins.id) &&
            !paid.contains(ins.id))
            out.push_back(ins.id);
    return out;
}

Json to_json(const Holdings& h) {
    Json out = Json::object();
    for (const auto& [member, acct] : h) {
        Json assets = Json::object();
        for (const auto& [asset, qty] : acct.assets) assets[asset] = qty;
        out[member] = Json{{"cash", acct.cash}, {"assets", assets}};
    }
    return out;
}

Holdings holdings_from_json(const Json& j) {
    Holdings h;
    if (!j.is_object()) throw Error(ErrorCode::ParseError, "holdings must be an object");
    for (const auto& [member, acct] : j.items()) {
        Account a;
        a.cash = field_or<Minor>(acct, "cash", 0);
        if (acct.contains("assets"))
            for (const auto& [asset, qty] : acct["assets"].items()) a.assets[asset] = qty.get<std::int64_t>();
        h[member] = std::move(a);
    }
    return h;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ClearingMode m) noexcept {
    switch (m) {
    case ClearingMode::Bilateral: return "bilateral";
    case ClearingMode::Ccp: return "ccp";
    case ClearingMode::Consortium: return "consortium";
    }
    return "?";
}

ClearingMode clearing_mode_from_string(std::string_view s) {
    if (s == "bilateral") return ClearingMode::Bilateral;
    if (s == "ccp") return ClearingMode::Ccp;
    if (s == "consortium") return ClearingMode::Consortium;
    throw Error(ErrorCode::InvalidParams, "clearing mode '" + std::string(s) + "'");
}

std::string_view to_string(NettingMode m) noexcept {
    return m == NettingMode::Multilateral ? "multilateral" : "bilateral";
}

NettingMode netting_mode_from_string(std::string_view s) {
    if (s == "multilateral") return NettingMode::Multilateral;
    if (s == "bilateral") return NettingMode::Bilateral;
    throw Error(ErrorCode::InvalidParams, "netting mode '" + std::string(s) + "'");
}

CycleKeys derive_cycle_keys(std::string_view seed_text) {
    CycleKeys keys;
    const std::string base(seed_text);
    for (int i = 0; i < 3; ++i) {
        keys.exchange.push_back(crypto::keygen_from_text(base + "/exchange/" + std::to_string(i)));
        keys.clearing.push_back(crypto::keygen_from_text(base + "/clearing/" + std::to_string(i)));
        keys.settlement.push_back(crypto::keygen_from_text(base + "/settlement/" + std::to_string(i)));
    }
    keys.operator_key = crypto::keygen_from_text(base + "/operator");
    return keys;
}

Json CycleReport::to_json() const {
    Json days = Json::array();
    for (const auto& d : per_day)
        days.push_back({{"day", d.day},
                        {"exposure", d.exposure},
                        {"pending", d.pending},
                        {"settled", d.settled},
                        {"failed", d.failed}});
    Json ins = Json::array();
    for (const auto& i : instructions) ins.push_back(i.to_json());
    Json pays = Json::array();
    for (const auto& p : payments) pays.push_back(p.to_json());
    Json pos = Json::array();
    for (const auto& p : positions)
        pos.push_back({{"member", p.member}, {"asset", p.asset}, {"net_quantity", p.net_quantity}, {"net_cash", p.net_cash}});
    auto stats = [](const ChainStats& s) { return Json{{"blocks", s.blocks}, {"txs", s.txs}, {"valid", s.valid}}; };
    return Json{{"per_day", days},
                {"total_exposure", total_exposure},
                {"instructions", ins},
                {"payments", pays},
                {"unpaid_deliveries", unpaid},
                {"net_positions", pos},
                {"obligations", obligations.to_json()},
                {"final_holdings", settlement::to_json(final_holdings)},
                {"chains", {{"exchange", stats(exchange)}, {"clearing", stats(clearing)}, {"settlement", stats(settlement)}}}};
}

namespace {

chain::ChainConfig quorum_config(const std::vector<chain::KeyPair>& keys, std::uint32_t m) {
    chain::ChainConfig c;
    c.mode = chain::ConsensusMode::Quorum;
    for (const auto& k : keys) c.validators.push_back(k.public_key);
    c.quorum_m = m;
    c.validate();
    return c;
}

/// Clearing output for one trading day.
struct Cleared {
    std::vector<Trade> novated;
    std::vector<SettlementInstruction> instructions;
    std::vector<PaymentInstruction> payments;
};

class DayClearer {
public:
    DayClearer(const CycleConfig& cfg, std::int64_t day) : cfg_(cfg), day_(day) {}

    void obligation(const std::string& from, const std::string& to, const std::string& asset, std::int64_t qty,
                    Minor cash, Minor notional) {
        const std::string id = "d" + std::to_string(day_) + "/i" + std::to_string(out.instructions.size());
        if (cfg_.settle_mode == SettleMode::Dvp) {
            out.instructions.push_back(SettlementInstruction::make(id, from, to, asset, qty, cash, SettleMode::Dvp, day_,
                                                                   day_ + cfg_.lag_days, notional));
            return;
        }
        out.instructions.push_back(
            SettlementInstruction::make(id, from, to, asset, qty, 0, SettleMode::Fop, day_, day_ + cfg_.lag_days, notional));
        if (cash != 0) payment(cash > 0 ? to : from, cash > 0 ? from : to, cash > 0 ? cash : -cash, id);
    }

    void payment(const std::string& payer, const std::string& payee, Minor amount, const std::string& for_id = {}) {
        PaymentInstruction p;
        p.id = "d" + std::to_string(day_) + "/p" + std::to_string(out.payments.size());
        p.payer = payer;
        p.payee = payee;
        p.amount = amount;
        p.due_day = day_ + cfg_.lag_days;
        p.for_instruction = for_id;
        out.payments.push_back(std::move(p));
    }

    void bilateral(std::span<const Trade> trades) {
        for (const auto& n : bilateral_net(trades)) {
            if (n.quantity > 0)
                obligation(n.b, n.a, n.asset, n.quantity, -n.cash, n.gross_notional);
            else if (n.quantity < 0)
                obligation(n.a, n.b, n.asset, -n.quantity, n.cash, n.gross_notional);
            else if (n.cash != 0)
                payment(n.cash < 0 ? n.a : n.b, n.cash < 0 ? n.b : n.a, n.cash < 0 ? -n.cash : n.cash);
        }
    }

    /// Every member settles its net position against `agent`.
    void multilateral(std::span<const Trade> trades, const std::string& agent) {
        std::map<std::pair<std::string, std::string>, Minor> gross;
        for (const auto& t : trades) {
            gross[{t.buyer, t.asset}] += t.notional();
            gross[{t.seller, t.asset}] += t.notional();
        }
        for (const auto& p : net_positions(trades)) {
            if (p.member == agent) continue;
            const Minor notional = gross[{p.member, p.asset}];
            if (p.net_quantity > 0)
                obligation(agent, p.member, p.asset, p.net_quantity, -p.net_cash, notional);
            else if (p.net_quantity < 0)
                obligation(p.member, agent, p.asset, -p.net_quantity, p.net_cash, notional);
            else if (p.net_cash != 0)
                payment(p.net_cash < 0 ? p.member : agent, p.net_cash < 0 ? agent : p.member,
                        p.net_cash < 0 ? -p.net_cash : p.net_cash);
        }
    }

    Cleared out;

private:
    const CycleConfig& cfg_;
    std::int64_t day_;
};

Holdings default_endowment(std::span<const Trade> trades, const CycleConfig& cfg) {
    Minor cash = 0;
    std::map<std::string, std::int64_t> assets;
    std::set<std::string> members{cfg.ccp_id, cfg.consortium_id};
    for (const auto& t : trades) {
        cash += t.notional();
        assets[t.asset] += t.quantity;
        members.insert(t.buyer);
        members.insert(t.seller);
    }
    Holdings h;
    for (const auto& m : members) h[m] = Account{cash, assets};
    return h;
}

} // namespace

CycleReport run_cycle(std::vector<Trade> trades, const CycleConfig& config, const CycleKeys& keys) {
    if (config.lag_days < 0) throw Error(ErrorCode::InvalidParams, "lag_days must be non-negative");
    std::set<std::string> ids;
    for (auto& t : trades) {
        validate(t);
        if (!ids.insert(t.id).second) throw Error(ErrorCode::DuplicateId, "trade " + t.id);
        if (t.trade_day < 0) throw Error(ErrorCode::InvalidParams, "trade " + t.id + " has a negative day");
        t.superseded = false;
    }
    std::stable_sort(trades.begin(), trades.end(),
                     [](const Trade& a, const Trade& b) { return a.trade_day < b.trade_day; });

    CycleReport report;
    chain::Chain exchange(quorum_config(keys.exchange, config.quorum));
    chain::Chain clearing(quorum_config(keys.clearing, config.quorum));
    chain::Chain settlement_chain(quorum_config(keys.settlement, config.quorum));
    chain::TxQueue exchange_txs("exchange", keys.operator_key);
    chain::TxQueue clearing_txs("clearing", keys.operator_key);
    chain::TxQueue settlement_txs("settlement", keys.operator_key);

    Holdings holdings = config.holdings ? *config.holdings : default_endowment(trades, config);
    report.positions = net_positions(trades);
    report.obligations = obligation_totals(trades);

    if (!trades.empty()) {
        const std::int64_t first = trades.front().trade_day;
        const std::int64_t last = trades.back().trade_day + config.lag_days;
        std::size_t next_trade = 0;

        for (std::int64_t day = first; day <= last; ++day) {
            const auto wall = static_cast<std::uint64_t>(day) * kSecondsPerDay;

            // Exchange: the day's trades become a verified block.
            std::vector<Trade> today;
            while (next_trade < trades.size() && trades[next_trade].trade_day == day) today.push_back(trades[next_trade++]);
            if (!today.empty()) {
                for (const auto& t : today) exchange_txs.emit(chain::TxKind::Trade, t.to_json());
                chain::seal_block(exchange, exchange_txs.drain(), wall, keys.exchange);

                // Clearing, triggered by the finalized exchange block.
                DayClearer clearer(config, day);
                switch (config.mode) {
                case ClearingMode::Bilateral: clearer.bilateral(today); break;
                case ClearingMode::Ccp: {
                    for (auto& t : today) {
                        auto [s, b] = novate(t, config.ccp_id);
                        clearing_txs.emit(chain::TxKind::Novation,
                                          Json{{"original", t.id}, {"legs", {s.to_json(), b.to_json()}}});
                        clearer.out.novated.push_back(std::move(s));
                        clearer.out.novated.push_back(std::move(b));
                    }
                    clearer.multilateral(clearer.out.novated, config.ccp_id);
                    break;
                }
                case ClearingMode::Consortium:
                    if (config.consortium_netting == NettingMode::Bilateral)
                        clearer.bilateral(today);
                    else
                        clearer.multilateral(today, config.consortium_id);
                    break;
                }
                for (const auto& i : clearer.out.instructions) clearing_txs.emit(chain::TxKind::Instruction, i.to_json());
                for (const auto& p : clearer.out.payments) clearing_txs.emit(chain::TxKind::Instruction, p.to_json());
                if (!clearing_txs.pending().empty()) chain::seal_block(clearing, clearing_txs.drain(), wall, keys.clearing);
                for (auto& i : clearer.out.instructions) report.instructions.push_back(std::move(i));
                for (auto& p : clearer.out.payments) report.payments.push_back(std::move(p));
            }

            // Settlement of everything due today: deliveries first, then the
            // separate cash payments.
            for (auto& ins : report.instructions) {
                if (ins.due_day != day || ins.status != Status::Pending) continue;
                try {
                    if (ins.mode == SettleMode::Dvp)
                        settle_dvp(holdings, ins);
                    else
                        settle_fop(holdings, ins);
                } catch (const Error&) {
                    // The instruction carries the failure; holdings are unchanged.
                }
                settlement_txs.emit(chain::TxKind::SettlementResult,
                                    Json{{"id", ins.id}, {"status", to_string(ins.status)}, {"failure", ins.failure}});
            }
            for (auto& p : report.payments) {
                if (p.due_day != day || p.status != Status::Pending) continue;
                try {
                    settle_payment(holdings, p);
                } catch (const Error&) {
                }
                settlement_txs.emit(chain::TxKind::SettlementResult,
                                    Json{{"id", p.id}, {"status", to_string(p.status)}, {"failure", p.failure}});
            }
            if (!settlement_txs.pending().empty())
                chain::seal_block(settlement_chain, settlement_txs.drain(), wall, keys.settlement);

            DayExposure e;
            e.day = day;
            for (const auto& ins : report.instructions) {
                if (ins.trade_day > day) continue;
                switch (ins.status) {
                case Status::Pending: ++e.pending; break;
                case Status::Settled: ++e.settled; break;
                case Status::Failed: ++e.failed; break;
                }
                if (ins.status != Status::Settled) e.exposure += ins.notional;
            }
            report.total_exposure += e.exposure;
            report.per_day.push_back(e);
        }
    }

    report.unpaid = unpaid_deliveries(report.instructions, report.payments);
    report.final_holdings = std::move(holdings);
    auto stats = [](const chain::Chain& c) { return ChainStats{c.size(), c.tx_total(), c.verify().valid}; };
    report.exchange = stats(exchange);
    report.clearing = stats(clearing);
    report.settlement = stats(settlement_chain);
    return report;
}

} // namespace ledgerstack::settlement
