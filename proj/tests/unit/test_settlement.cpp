#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "ledgerstack/settlement.hpp"
#include "test_util.hpp"

using namespace ledgerstack;
using namespace ledgerstack::settlement;

namespace {

Trade trade(std::string id, std::string buyer, std::string seller, std::string asset, std::int64_t qty, Minor price,
            std::int64_t day = 0) {
    Trade t;
    t.id = std::move(id);
    t.buyer = std::move(buyer);
    t.seller = std::move(seller);
    t.asset = std::move(asset);
    t.quantity = qty;
    t.price = price;
    t.trade_day = day;
    return t;
}

Order order(std::string id, std::string member, OrderSide side, std::int64_t qty, Minor price) {
    return Order{std::move(id), std::move(member), side, "X", qty, price, 0};
}

std::vector<Trade> random_trades(std::mt19937_64& rng, int n, int days = 1) {
    const std::vector<std::string> members{"A", "B", "C", "D", "E"};
    const std::vector<std::string> assets{"X", "Y", "Z"};
    std::vector<Trade> out;
    for (int i = 0; i < n; ++i) {
        const auto b = rng() % members.size();
        auto s = rng() % members.size();
        if (s == b) s = (s + 1) % members.size();
        out.push_back(trade("t" + std::to_string(i), members[b], members[s], assets[rng() % assets.size()],
                            1 + static_cast<std::int64_t>(rng() % 100), 1 + static_cast<Minor>(rng() % 50),
                            static_cast<std::int64_t>(rng() % days)));
    }
    return out;
}

std::map<std::string, std::int64_t> asset_totals(const Holdings& h) {
    std::map<std::string, std::int64_t> out;
    for (const auto& [m, a] : h) {
        out["$cash"] += a.cash;
        for (const auto& [asset, q] : a.assets) out[asset] += q;
    }
    return out;
}

CycleKeys keys() {
    static const CycleKeys k = derive_cycle_keys("settlement-test");
    return k;
}

std::vector<Trade> constant_flow(int days) {
    std::vector<Trade> out;
    for (int d = 0; d < days; ++d) {
        out.push_back(trade("a" + std::to_string(d), "A", "B", "X", 10, 10, d));
        out.push_back(trade("b" + std::to_string(d), "B", "C", "Y", 5, 20, d));
        out.push_back(trade("c" + std::to_string(d), "C", "A", "Z", 4, 10, d));
    }
    return out;
}

} // namespace

TEST_CASE("trade validation and csv") {
    CHECK_NOTHROW(validate(trade("t", "A", "B", "X", 1, 1)));
    CHECK_ERROR(validate(trade("t", "A", "A", "X", 1, 1)), InvalidParams);
    CHECK_ERROR(validate(trade("t", "A", "B", "X", 0, 1)), NonPositiveQuantity);
    CHECK_ERROR(validate(trade("t", "A", "B", "X", 1, 0)), InvalidParams);
    CHECK(trade("t", "A", "B", "X", 7, 3).notional() == 21);

    std::istringstream csv("id,buyer,seller,asset,qty,price,day\nt1,A,B,X,10,5,0\nt2,B,A,X,4,5,1\n");
    const auto ts = read_trades_csv(csv);
    REQUIRE(ts.size() == 2);
    CHECK(ts[1] == trade("t2", "B", "A", "X", 4, 5, 1));
    std::istringstream bad("id,buyer,seller,asset,qty,price,day\nt1,A,B,X,ten,5,0\n");
    CHECK_ERROR(read_trades_csv(bad), ParseError);

    std::ifstream bundled(std::string(LEDGERSTACK_SOURCE_DIR) + "/scenarios/trades_constant.csv");
    REQUIRE(bundled.good());
    const auto constant = read_trades_csv(bundled);
    CHECK(constant.size() == 30);
}

TEST_CASE("order matching") {
    SUBCASE("a crossing order fills") {
        OrderBook book;
        CHECK(book.submit(order("s1", "B", OrderSide::Sell, 10, 5)).empty());
        const auto t = book.submit(order("b1", "A", OrderSide::Buy, 10, 5));
        REQUIRE(t.size() == 1);
        CHECK(t[0].quantity == 10);
        CHECK(t[0].buyer == "A");
        CHECK(t[0].seller == "B");
        CHECK(book.asks("X").empty());
        CHECK(book.bids("X").empty());
    }
    SUBCASE("no cross, the order rests") {
        OrderBook book;
        (void)book.submit(order("s1", "B", OrderSide::Sell, 10, 6));
        CHECK(book.submit(order("b1", "A", OrderSide::Buy, 10, 5)).empty());
        REQUIRE(book.bids("X").size() == 1);
        CHECK(book.bids("X")[0].order.quantity == 10);
    }
    SUBCASE("time priority at one price") {
        OrderBook book;
        (void)book.submit(order("s1", "B", OrderSide::Sell, 4, 5));
        (void)book.submit(order("s2", "C", OrderSide::Sell, 6, 5));
        const auto t = book.submit(order("b1", "A", OrderSide::Buy, 10, 5));
        REQUIRE(t.size() == 2);
        CHECK(t[0].seller == "B");
        CHECK(t[0].quantity == 4);
        CHECK(t[1].seller == "C");
        CHECK(t[1].quantity == 6);
    }
    SUBCASE("price priority and the resting price") {
        OrderBook book;
        (void)book.submit(order("s1", "B", OrderSide::Sell, 5, 7));
        (void)book.submit(order("s2", "C", OrderSide::Sell, 5, 6));
        const auto t = book.submit(order("b1", "A", OrderSide::Buy, 7, 8));
        REQUIRE(t.size() == 2);
        CHECK(t[0].price == 6);
        CHECK(t[1].price == 7);
        CHECK(t[1].quantity == 2);
        CHECK(book.asks("X")[0].order.quantity == 3);
    }
    SUBCASE("no self trade") {
        OrderBook book;
        (void)book.submit(order("s1", "A", OrderSide::Sell, 5, 5));
        (void)book.submit(order("s2", "B", OrderSide::Sell, 5, 5));
        const auto t = book.submit(order("b1", "A", OrderSide::Buy, 5, 5));
        REQUIRE(t.size() == 1);
        CHECK(t[0].seller == "B");
    }
    OrderBook book;
    CHECK_ERROR(book.submit(order("z", "A", OrderSide::Buy, 0, 5)), NonPositiveQuantity);
    CHECK_ERROR(book.submit(order("z", "A", OrderSide::Buy, 1, 0)), InvalidParams);
}

TEST_CASE("novation") {
    auto t = trade("t1", "B", "A", "X", 10, 3);
    auto [s, b] = novate(t, "CCP");
    CHECK(s.seller == "A");
    CHECK(s.buyer == "CCP");
    CHECK(b.seller == "CCP");
    CHECK(b.buyer == "B");
    CHECK(s.quantity == 10);
    CHECK(b.price == 3);
    CHECK(t.superseded);
    CHECK_ERROR(novate(t, "CCP"), AlreadyNovated);
    auto u = trade("t2", "CCP", "A", "X", 1, 1);
    CHECK_ERROR(novate(u, "CCP"), CcpIsParty);
    const std::vector<Trade> legs{s, b};
    for (const auto& p : net_positions(legs))
        if (p.member == "CCP") CHECK(p == NetPosition{"CCP", "X", 0, 0});
}

TEST_CASE("novation is neutral for members") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        auto trades = random_trades(rng, 30);
        std::vector<Trade> legs;
        for (auto t : trades) {
            auto [s, b] = novate(t, "CCP");
            legs.push_back(s);
            legs.push_back(b);
        }
        std::vector<NetPosition> members;
        for (const auto& p : net_positions(legs)) {
            if (p.member == "CCP") {
                CHECK(p.net_quantity == 0);
                CHECK(p.net_cash == 0);
            } else {
                members.push_back(p);
            }
        }
        CHECK(members == net_positions(trades));
    }
}

TEST_CASE("net positions") {
    const std::vector<Trade> ts{trade("1", "A", "B", "X", 100, 5), trade("2", "B", "A", "X", 40, 5)};
    const auto p = net_positions(ts);
    REQUIRE(p.size() == 2);
    CHECK(p[0] == NetPosition{"A", "X", 60, -300});
    CHECK(p[1] == NetPosition{"B", "X", -60, 300});
    CHECK(net_positions({}).empty());

    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        const auto trades = random_trades(rng, 50);
        const auto pos = net_positions(trades);
        std::map<std::string, std::pair<std::int64_t, Minor>> per_asset;
        for (const auto& n : pos) {
            // Brute force: scan all trades for this member and asset.
            std::int64_t q = 0;
            Minor c = 0;
            for (const auto& t : trades) {
                if (t.asset != n.asset) continue;
                if (t.buyer == n.member) q += t.quantity, c -= t.quantity * t.price;
                if (t.seller == n.member) q -= t.quantity, c += t.quantity * t.price;
            }
            CHECK(n.net_quantity == q);
            CHECK(n.net_cash == c);
            per_asset[n.asset].first += n.net_quantity;
            per_asset[n.asset].second += n.net_cash;
        }
        for (const auto& [asset, sums] : per_asset) {
            CHECK(sums.first == 0);
            CHECK(sums.second == 0);
        }
        const auto o = obligation_totals(trades);
        CHECK(o.gross_quantity >= o.net_quantity);
        CHECK(o.gross_cash >= o.net_cash);
        // Bilateral netting sits between gross and multilateral net.
        std::int64_t bilateral_q = 0;
        for (const auto& b : bilateral_net(trades)) bilateral_q += 2 * (b.quantity < 0 ? -b.quantity : b.quantity);
        CHECK(o.gross_quantity >= bilateral_q);
        CHECK(bilateral_q >= o.net_quantity);
    }
}

TEST_CASE("delivery versus payment") {
    Holdings h{{"S", Account{0, {{"X", 10}}}}, {"B", Account{100, {}}}};
    auto ins = SettlementInstruction::make("i1", "S", "B", "X", 10, 60, SettleMode::Dvp, 0, 0, 60);
    settle_dvp(h, ins);
    CHECK(ins.status == Status::Settled);
    CHECK(h.at("S").cash == 60);
    CHECK(h.at("B").assets.at("X") == 10);
    CHECK_ERROR(settle_dvp(h, ins), NotPending);

    Holdings poor{{"S", Account{0, {{"X", 10}}}}, {"B", Account{50, {}}}};
    const auto snapshot = poor;
    auto short_cash = SettlementInstruction::make("i2", "S", "B", "X", 10, 60, SettleMode::Dvp, 0, 0, 60);
    CHECK_ERROR(settle_dvp(poor, short_cash), InsufficientCash);
    CHECK(poor == snapshot);
    CHECK(short_cash.status == Status::Failed);
    CHECK(short_cash.failure == "InsufficientCash");

    auto short_asset = SettlementInstruction::make("i3", "S", "B", "X", 11, 10, SettleMode::Dvp, 0, 0, 10);
    CHECK_ERROR(settle_dvp(poor, short_asset), InsufficientAsset);
    CHECK(poor == snapshot);

    CHECK_ERROR(SettlementInstruction::make("i4", "S", "B", "X", 0, 10, SettleMode::Dvp, 0, 0, 0), NonPositiveQuantity);
    auto fop = SettlementInstruction::make("i5", "S", "B", "X", 1, 0, SettleMode::Fop, 0, 0, 0);
    CHECK_ERROR(settle_dvp(poor, fop), WrongSettlementMode);
}

TEST_CASE("free of payment") {
    Holdings h{{"S", Account{0, {{"X", 10}}}}, {"B", Account{100, {}}}};
    auto ins = SettlementInstruction::make("f1", "S", "B", "X", 4, 0, SettleMode::Fop, 0, 0, 40);
    settle_fop(h, ins);
    CHECK(h.at("B").assets.at("X") == 4);
    CHECK(h.at("B").cash == 100);
    CHECK(h.at("S").cash == 0);

    PaymentInstruction pay;
    pay.id = "p1";
    pay.payer = "B";
    pay.payee = "S";
    pay.amount = 40;
    pay.for_instruction = "f1";
    const std::vector<SettlementInstruction> inss{ins};
    CHECK(unpaid_deliveries(inss, std::vector<PaymentInstruction>{pay}) == std::vector<std::string>{"f1"});
    settle_payment(h, pay);
    CHECK(unpaid_deliveries(inss, std::vector<PaymentInstruction>{pay}).empty());
    CHECK(h.at("S").cash == 40);

    const auto snapshot = h;
    auto big = SettlementInstruction::make("f2", "S", "B", "X", 7, 0, SettleMode::Fop, 0, 0, 0);
    CHECK_ERROR(settle_fop(h, big), InsufficientAsset);
    CHECK(h == snapshot);
    PaymentInstruction over = pay;
    over.id = "p2";
    over.status = Status::Pending;
    over.amount = 1000;
    CHECK_ERROR(settle_payment(h, over), InsufficientCash);
    CHECK(h == snapshot);
}

TEST_CASE("randomized settlement is all-or-nothing and conserves holdings") {
    std::mt19937_64 rng(4242);
    const std::vector<std::string> members{"A", "B", "C"};
    Holdings h;
    for (const auto& m : members) h[m] = Account{static_cast<Minor>(rng() % 500), {{"X", static_cast<std::int64_t>(rng() % 50)}}};
    const auto totals = asset_totals(h);
    for (int i = 0; i < 3000; ++i) {
        const auto fi = rng() % 3;
        const auto& from = members[fi];
        const auto& to = members[(fi + 1 + rng() % 2) % 3];
        const auto before = h;
        auto ins = SettlementInstruction::make("i" + std::to_string(i), from, to, "X", 1 + static_cast<std::int64_t>(rng() % 30),
                                               static_cast<Minor>(rng() % 400) - 100, SettleMode::Dvp, 0, 0, 0);
        const auto err = testutil::error_of([&] { settle_dvp(h, ins); });
        const bool asset_moved = h.at(from).assets["X"] != before.at(from).assets.at("X");
        const bool cash_moved = h.at(from).cash != before.at(from).cash;
        if (err) {
            CHECK(h == before);
        } else {
            CHECK(asset_moved);
            CHECK(cash_moved == (ins.cash != 0));
        }
        REQUIRE(asset_totals(h) == totals);
    }
}

TEST_CASE("settlement cycle exposure") {
    const auto trades = constant_flow(10);
    // 100 + 100 + 40 per day
    const Minor n = 240;
    std::vector<Minor> totals;
    for (std::int64_t lag = 0; lag <= 3; ++lag) {
        CycleConfig cfg;
        cfg.lag_days = lag;
        const auto r = run_cycle(trades, cfg, keys());
        CAPTURE(lag);
        for (const auto& d : r.per_day)
            if (d.day >= lag && d.day < 10) CHECK(d.exposure == lag * n);
        CHECK(r.total_exposure == lag * n * 10);
        CHECK(r.exchange.valid);
        CHECK(r.clearing.valid);
        CHECK(r.settlement.valid);
        CHECK(r.exchange.blocks == 10);
        for (const auto& ins : r.instructions) CHECK(ins.status == Status::Settled);
        totals.push_back(r.total_exposure);
    }
    CHECK(totals[0] == 0);
    CHECK(totals[2] * 3 == totals[3] * 2);

    CycleConfig ccp;
    ccp.lag_days = 2;
    ccp.mode = ClearingMode::Ccp;
    const auto r = run_cycle(trades, ccp, keys());
    CHECK(r.total_exposure == 2 * 2 * n * 10);
    CHECK(r.clearing.txs > 0);

    CycleConfig neg;
    neg.lag_days = -1;
    CHECK_ERROR(run_cycle(trades, neg, keys()), InvalidParams);
    CHECK(run_cycle({}, CycleConfig{}, keys()).per_day.empty());
}

TEST_CASE("exposure is monotone in lag on random flows") {
    std::mt19937_64 rng(606);
    for (int trial = 0; trial < 10; ++trial) {
        const auto trades = random_trades(rng, 40, 6);
        for (const auto mode : {ClearingMode::Bilateral, ClearingMode::Ccp, ClearingMode::Consortium}) {
            Minor prev = -1;
            for (std::int64_t lag = 0; lag <= 4; ++lag) {
                CycleConfig cfg;
                cfg.lag_days = lag;
                cfg.mode = mode;
                const auto r = run_cycle(trades, cfg, keys());
                CHECK(r.total_exposure >= prev);
                prev = r.total_exposure;
            }
        }
    }
}

TEST_CASE("cycle with scarce holdings and free of payment") {
    const std::vector<Trade> trades{trade("t1", "A", "B", "X", 10, 5, 0), trade("t2", "C", "B", "X", 10, 5, 0)};
    CycleConfig cfg;
    cfg.lag_days = 1;
    cfg.settle_mode = SettleMode::Fop;
    cfg.holdings = Holdings{{"A", Account{0, {}}}, {"B", Account{0, {{"X", 20}}}}, {"C", Account{50, {}}}};
    const auto r = run_cycle(trades, cfg, keys());
    const std::vector<std::string> unpaid{r.unpaid.begin(), r.unpaid.end()};
    // A cannot pay, so its delivery went out free and stays unpaid.
    REQUIRE(unpaid.size() == 1);
    CHECK(r.final_holdings.at("A").assets.at("X") == 10);
    CHECK(r.final_holdings.at("B").cash == 50);
    CHECK(asset_totals(r.final_holdings) == asset_totals(*cfg.holdings));

    cfg.settle_mode = SettleMode::Dvp;
    const auto dvp = run_cycle(trades, cfg, keys());
    std::size_t failed = 0;
    for (const auto& i : dvp.instructions) failed += i.status == Status::Failed;
    CHECK(failed == 1);
    CHECK_FALSE(dvp.final_holdings.at("A").assets.contains("X"));
    CHECK(dvp.per_day.back().exposure == 50);
}

TEST_CASE("consortium netting modes") {
    std::mt19937_64 rng(9);
    const auto trades = random_trades(rng, 25, 3);
    CycleConfig multi;
    multi.mode = ClearingMode::Consortium;
    CycleConfig bi = multi;
    bi.consortium_netting = NettingMode::Bilateral;
    const auto m = run_cycle(trades, multi, keys());
    const auto b = run_cycle(trades, bi, keys());
    CHECK(netting_mode_from_string("bilateral") == NettingMode::Bilateral);
    for (const auto& i : m.instructions) CHECK((i.from == "CONSORTIUM" || i.to == "CONSORTIUM"));
    for (const auto& i : b.instructions) CHECK((i.from != "CONSORTIUM" && i.to != "CONSORTIUM"));
    CHECK(asset_totals(m.final_holdings) == asset_totals(b.final_holdings));
    CHECK(run_cycle(trades, multi, keys()).to_json() == m.to_json());
}
