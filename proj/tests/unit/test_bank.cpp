#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "ledgerstack/bank_ledger.hpp"
#include "test_util.hpp"

using namespace ledgerstack;
using namespace ledgerstack::bank;

namespace {

chain::KeyPair op_key() { return crypto::keygen_from_text("bank-test/operator"); }

PrimeEntry prime(Book book, std::int64_t date, std::string cp, Minor amount,
                 CashDirection dir = CashDirection::Receipt) {
    PrimeEntry e;
    e.book = book;
    e.date = date;
    e.counterparty = std::move(cp);
    e.amount = amount;
    e.memo = "m";
    e.direction = dir;
    return e;
}

Minor tb_sum(const BankLedger& l) {
    Minor s = 0;
    for (const auto& [id, b] : l.trial_balance()) s += b;
    return s;
}

/// A random day of trade: credit sales and purchases, returns, and cash
/// settling them, all within what each counterparty owes or is owed.
void random_day(BankLedger& l, std::mt19937_64& rng, std::int64_t day, std::map<std::string, Minor>& owed_by,
                std::map<std::string, Minor>& owed_to) {
    const std::vector<std::string> customers{"acme", "bolt", "crux"};
    const std::vector<std::string> suppliers{"delta", "echo"};
    for (int i = 0; i < 15; ++i) {
        const Minor amt = 1 + static_cast<Minor>(rng() % 500);
        const auto& c = customers[rng() % customers.size()];
        const auto& s = suppliers[rng() % suppliers.size()];
        switch (rng() % 6) {
        case 0: l.capture(prime(Book::SalesDay, day, c, amt)); owed_by[c] += amt; break;
        case 1: l.capture(prime(Book::PurchaseDay, day, s, amt)); owed_to[s] += amt; break;
        case 2:
            if (owed_by[c] >= amt) { l.capture(prime(Book::SalesReturns, day, c, amt)); owed_by[c] -= amt; }
            break;
        case 3:
            if (owed_by[c] >= amt) { l.capture(prime(Book::Cash, day, c, amt)); owed_by[c] -= amt; }
            break;
        case 4:
            if (owed_to[s] >= amt) { l.capture(prime(Book::Cash, day, s, amt, CashDirection::Payment)); owed_to[s] -= amt; }
            break;
        case 5:
            l.capture(prime(Book::PettyCash, day, "float", amt, rng() % 2 ? CashDirection::Receipt : CashDirection::Payment));
            break;
        }
    }
    (void)l.summarize_day(day);
}

} // namespace

TEST_CASE("prime entry books") {
    PrimeBooks books;
    auto p = books.post(prime(Book::SalesDay, 1, "acme", 100));
    CHECK(p.book_length == 1);
    CHECK_FALSE(p.double_entry_eligible);
    CHECK(books.post(prime(Book::Cash, 1, "acme", 5)).double_entry_eligible);
    CHECK(books.post(prime(Book::PettyCash, 1, "float", 5)).double_entry_eligible);
    CHECK_ERROR(books.post(prime(Book::SalesDay, 1, "acme", 0)), NonPositiveAmount);
    CHECK_ERROR(book_from_string("diary"), UnknownBook);
    CHECK(books.total() == 3);
    CHECK(books.entries_on(Book::SalesDay, 2).empty());

    BankLedger l(op_key());
    const auto tb = l.trial_balance();
    l.capture(prime(Book::SalesDay, 1, "acme", 100));
    CHECK(l.books().entries(Book::SalesDay).size() == 1);
    CHECK(l.trial_balance() == tb);
    CHECK(l.journal().empty());
}

TEST_CASE("summarize and post") {
    BankLedger l(op_key());
    l.capture(prime(Book::SalesDay, 3, "acme", 60));
    l.capture(prime(Book::SalesDay, 3, "bolt", 40));
    l.capture(prime(Book::PurchaseDay, 3, "delta", 30));
    CHECK(l.summarize_day(2).empty());
    const auto posted = l.summarize_day(3);
    REQUIRE(posted.size() == 2);
    CHECK(posted[0].lines == std::vector<JournalLine>{{"receivables", EntrySide::Debit, 100}, {"sales", EntrySide::Credit, 100}});
    CHECK(posted[1].lines == std::vector<JournalLine>{{"purchases", EntrySide::Debit, 30}, {"payables", EntrySide::Credit, 30}});
    CHECK(l.accounts().at("receivables").balance == 100);
    CHECK(l.accounts().at("sales").balance == -100);
    CHECK(l.subledger_balances(ControlFor::Receivables) == std::map<std::string, Minor>{{"acme", 60}, {"bolt", 40}});
    CHECK(l.subledger_balances(ControlFor::Payables) == std::map<std::string, Minor>{{"delta", 30}});
    CHECK(l.reconcile_subledger(ControlFor::Receivables).ok);
    CHECK(l.reconcile_subledger(ControlFor::Payables).ok);
    CHECK(l.summarize_day(3).empty());
    CHECK(tb_sum(l) == 0);

    // Cash receipts settle receivables, payments settle payables.
    l.capture(prime(Book::Cash, 4, "acme", 60));
    l.capture(prime(Book::Cash, 4, "delta", 30, CashDirection::Payment));
    const auto cash = l.summarize_day(4);
    REQUIRE(cash.size() == 1);
    CHECK(l.accounts().at("cash").balance == 30);
    CHECK(l.subledger_balances(ControlFor::Receivables).at("acme") == 0);
    CHECK(l.subledger_balances(ControlFor::Payables).at("delta") == 0);
    CHECK(l.reconcile_subledger(ControlFor::Receivables).ok);
    CHECK(l.reconcile_subledger(ControlFor::Payables).ok);
}

TEST_CASE("journal entries") {
    BankLedger l(op_key());
    CHECK(tb_sum(l) == 0);
    for (const auto& [id, b] : l.trial_balance()) CHECK(b == 0);

    const auto before = l.gl_json();
    CHECK_ERROR(l.post_journal(1, {{"cash", EntrySide::Debit, 10}, {"sales", EntrySide::Credit, 9}}, "x"), Unbalanced);
    CHECK_ERROR(l.post_journal(1, {{"cash", EntrySide::Debit, 10}}, "x"), Unbalanced);
    CHECK_ERROR(l.post_journal(1, {{"cash", EntrySide::Debit, 10}, {"nowhere", EntrySide::Credit, 10}}, "x"), UnknownAccount);
    CHECK_ERROR(l.post_journal(1, {{"cash", EntrySide::Debit, 0}, {"sales", EntrySide::Credit, 0}}, "x"), NonPositiveAmount);
    CHECK_ERROR(l.post_journal(1, {{"receivables", EntrySide::Debit, 5}, {"sales", EntrySide::Credit, 5}}, "x"), InvalidParams);
    CHECK(l.gl_json() == before);

    const auto& e = l.post_journal(1, {{"receivables", EntrySide::Debit, 5}, {"sales", EntrySide::Credit, 5}}, "sale", "acme");
    const auto id = e.id;
    CHECK(l.reconcile_subledger(ControlFor::Receivables).ok);

    // A correction is a reversal plus a repost; the original remains.
    const auto& r = l.reverse(id, 2);
    CHECK(r.reverses == id);
    CHECK(l.journal().size() == 2);
    CHECK(l.journal()[0].lines[0].amount == 5);
    CHECK(l.accounts().at("receivables").balance == 0);
    CHECK(l.subledger_balances(ControlFor::Receivables).at("acme") == 0);
    CHECK_ERROR(l.reverse(id, 3), InvalidParams);
    CHECK_ERROR(l.reverse(99, 3), InvalidParams);
    CHECK(tb_sum(l) == 0);
}

TEST_CASE("reconciliation detects an injected row") {
    BankLedger l(op_key());
    l.capture(prime(Book::SalesDay, 0, "acme", 70));
    (void)l.summarize_day(0);
    l.inject_subledger_row_for_testing(ControlFor::Receivables, {0, "ghost", 13, 0});
    auto r = l.reconcile_subledger(ControlFor::Receivables);
    CHECK_FALSE(r.ok);
    CHECK(r.control_total == 70);
    CHECK(r.subledger_total == 83);
    CHECK(l.reconcile_subledger(ControlFor::Payables).ok);
    CHECK_ERROR(l.reconcile_subledger(ControlFor::None), InvalidParams);
}

TEST_CASE("randomized days keep the books balanced and reconciled") {
    std::mt19937_64 rng(5150);
    for (int trial = 0; trial < 20; ++trial) {
        BankLedger l(op_key());
        std::map<std::string, Minor> owed_by, owed_to;
        for (std::int64_t day = 0; day < 10; ++day) {
            random_day(l, rng, day, owed_by, owed_to);
            CHECK(tb_sum(l) == 0);
            CHECK(l.reconcile_subledger(ControlFor::Receivables).ok);
            CHECK(l.reconcile_subledger(ControlFor::Payables).ok);
        }
        for (const auto& [cp, v] : owed_by) CHECK(l.subledger_balances(ControlFor::Receivables)[cp] == v);

        // Replaying the prime entries recorded on chain rebuilds the same GL.
        BankLedger replayed(op_key());
        PrimeBooks books;
        std::set<std::int64_t> days;
        for (const auto& tx : l.transactions().pending()) {
            if (tx.kind != chain::TxKind::PrimeEntry) continue;
            auto e = PrimeEntry::from_json(tx.payload_json());
            days.insert(e.date);
            books.post(std::move(e));
        }
        for (auto d : days) (void)replayed.summarize_and_post(books, d);
        CHECK(replayed.gl_json() == l.gl_json());
    }
}

TEST_CASE("ifrs 9 classification table") {
    CHECK(classify_ifrs9(false, BusinessModel::HoldToCollect) == Ifrs9Category::Fvtpl);
    CHECK(classify_ifrs9(false, BusinessModel::HoldToCollectAndSell) == Ifrs9Category::Fvtpl);
    CHECK(classify_ifrs9(false, BusinessModel::Other) == Ifrs9Category::Fvtpl);
    CHECK(classify_ifrs9(true, BusinessModel::HoldToCollect) == Ifrs9Category::AmortizedCost);
    CHECK(classify_ifrs9(true, BusinessModel::HoldToCollectAndSell) == Ifrs9Category::Fvoci);
    CHECK(classify_ifrs9(true, BusinessModel::Other) == Ifrs9Category::Fvtpl);
    CHECK(business_model_from_string("hold_to_collect_and_sell") == BusinessModel::HoldToCollectAndSell);
    CHECK(to_string(Ifrs9Category::Fvoci) == "fvoci");

    BankLedger l(op_key());
    l.classify("bond", true, BusinessModel::HoldToCollect);
    l.classify("bond", true, BusinessModel::Other);
    CHECK(l.classifications().at("bond").category == Ifrs9Category::Fvtpl);
    const auto txs = l.transactions().pending();
    REQUIRE(txs.size() == 2);
    CHECK(txs[0].kind == chain::TxKind::Ifrs9Classify);
    CHECK(txs[1].payload_json()["previous"] == "amortized_cost");
}

TEST_CASE("expected credit loss") {
    for (int stage = 1; stage <= 3; ++stage) CHECK(ecl_provision(0, 0.3, 0.6, 0.9, stage) == 0);
    CHECK(ecl_provision(10000, 0.02, 0.10, 0.5, 1) == 100);
    CHECK(ecl_provision(10000, 0.02, 0.10, 0.5, 2) == 500);
    CHECK(ecl_provision(10000, 0.02, 0.10, 0.5, 3) == 500);
    CHECK(ecl_provision(3, 0.5, 0.5, 1.0, 1) == 2); // 1.5 rounds up
    CHECK(ecl_provision(1, 0.49, 0.49, 1.0, 1) == 0);
    CHECK_ERROR(ecl_provision(100, 1.01, 0.5, 0.5, 1), InvalidProbability);
    CHECK_ERROR(ecl_provision(100, 0.1, -0.1, 0.5, 2), InvalidProbability);
    CHECK_ERROR(ecl_provision(100, 0.1, 0.5, 2.0, 2), InvalidProbability);
    CHECK_ERROR(ecl_provision(-1, 0.1, 0.5, 0.5, 1), InvalidParams);
    CHECK_ERROR(ecl_provision(100, 0.1, 0.5, 0.5, 4), InvalidParams);
    CHECK(round_half_up(2.5L) == 3);
    CHECK(round_half_up(2.4999L) == 2);

    BankLedger l(op_key());
    CHECK(l.update_provision("loan", 10000, 0.02, 0.10, 0.5, 1, 1) == 100);
    CHECK(l.accounts().at("loss_allowance").balance == -100);
    CHECK(l.update_provision("loan", 10000, 0.02, 0.10, 0.5, 2, 2) == 500);
    CHECK(l.accounts().at("impairment_expense").balance == 500);
    CHECK(l.update_provision("loan", 10000, 0.02, 0.10, 0.5, 1, 3) == 100);
    CHECK(l.accounts().at("loss_allowance").balance == -100);
    CHECK(l.journal().size() == 3);
    CHECK(tb_sum(l) == 0);
}

TEST_CASE("ecl is monotone in every input") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const Minor e = static_cast<Minor>(rng() % 1'000'000);
        const double p12 = u(rng), lgd = u(rng);
        const double plife = p12 + (1.0 - p12) * u(rng);
        const auto base = ecl_provision(e, p12, plife, lgd, 1);
        CHECK(ecl_provision(e + 1 + static_cast<Minor>(rng() % 1000), p12, plife, lgd, 1) >= base);
        CHECK(ecl_provision(e, p12 + (1.0 - p12) * u(rng), plife, lgd, 1) >= base);
        CHECK(ecl_provision(e, p12, plife, lgd + (1.0 - lgd) * u(rng), 1) >= base);
        CHECK(ecl_provision(e, p12, plife, lgd, 2) >= base);
        CHECK(ecl_provision(e, p12, plife, lgd, 3) >= ecl_provision(e, p12, plife, lgd, 2));
    }
}

TEST_CASE("depreciation") {
    DepreciableAsset a{1000, 0, 4, 0};
    for (std::uint32_t k = 0; k < 4; ++k) {
        a.periods_elapsed = k;
        CHECK(depreciate(a) == 250);
    }
    DepreciableAsset b{100, 0, 3, 0};
    std::vector<Minor> charges;
    for (std::uint32_t k = 0; k < 3; ++k) {
        b.periods_elapsed = k;
        charges.push_back(depreciate(b));
    }
    CHECK(charges == std::vector<Minor>{33, 33, 34});
    a.periods_elapsed = 4;
    CHECK_ERROR(depreciate(a), FullyDepreciated);
    CHECK_ERROR(depreciate({100, 200, 3, 0}), InvalidParams);
    CHECK_ERROR(depreciate({100, 0, 0, 0}), InvalidParams);

    std::mt19937_64 rng(8);
    for (int i = 0; i < 300; ++i) {
        const Minor cost = 1 + static_cast<Minor>(rng() % 100000);
        const Minor salvage = static_cast<Minor>(rng() % cost);
        const auto life = 1 + static_cast<std::uint32_t>(rng() % 40);
        Minor total = 0;
        for (std::uint32_t k = 0; k < life; ++k) total += depreciate({cost, salvage, life, k});
        CHECK(total == cost - salvage);
    }

    BankLedger l(op_key());
    l.register_property("hq", 100, 0, 3);
    CHECK(l.depreciate_property("hq", 1) == 33);
    CHECK(l.depreciate_property("hq", 2) == 33);
    CHECK(l.depreciate_property("hq", 3) == 34);
    CHECK_ERROR(l.depreciate_property("hq", 4), FullyDepreciated);
    CHECK(l.accounts().at("accumulated_depreciation").balance == -100);
    CHECK(tb_sum(l) == 0);
}

TEST_CASE("capital instruments") {
    BankLedger l(op_key());
    l.issue_instrument({"note1", InstrumentKind::NotesPayable, "pension_fund", 365, 450, 5000, 0}, 1);
    l.issue_instrument({"bond1", InstrumentKind::BondsPayable, "market", 3650, 300, 20000, 0}, 1);
    l.issue_instrument({"ord", InstrumentKind::Stock, "founders", 0, 0, 1000, 0}, 1);
    CHECK(l.accounts().at("notes_payable").balance == -5000);
    CHECK(l.accounts().at("bonds_payable").balance == -20000);
    CHECK(l.accounts().at("share_capital").balance == -1000);
    CHECK(l.accounts().at("cash").balance == 26000);
    l.repay_instrument("note1", 2000, 30);
    CHECK(l.instruments().at("note1").current_balance == 3000);
    CHECK(l.instruments().at("note1").original_balance == 5000);
    CHECK_ERROR(l.repay_instrument("note1", 3001, 31), InvalidParams);
    CHECK_ERROR(l.repay_instrument("nope", 1, 31), UnknownAccount);
    CHECK_ERROR(l.issue_instrument({"note1", InstrumentKind::NotesPayable, "x", 1, 1, 5, 0}, 2), DuplicateId);
    CHECK(tb_sum(l) == 0);
}

TEST_CASE("posting map config file") {
    std::ifstream f(std::string(LEDGERSTACK_SOURCE_DIR) + "/config/posting_map.json");
    REQUIRE(f.good());
    const auto map = posting_map_from_json(Json::parse(f));
    CHECK(map == default_posting_map());
    CHECK(posting_map_from_json(to_json(map)) == map);
    PostingMap broken = map;
    broken[0].debit = "no_such_account";
    CHECK_ERROR(BankLedger(op_key(), broken), UnknownAccount);
}

TEST_CASE("prime csv import") {
    std::istringstream ok("book,date,counterparty,amount,memo\nsales_day,1,acme,100,invoice 7\ncash,2,acme,40,part,receipt\n");
    const auto rows = read_prime_csv(ok);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].amount == 100);
    CHECK(rows[1].book == Book::Cash);
    std::istringstream bad_book("book,date,counterparty,amount,memo\ndiary,1,a,1,m\n");
    CHECK_ERROR(read_prime_csv(bad_book), UnknownBook);
    std::istringstream bad_amount("book,date,counterparty,amount,memo\nsales_day,1,a,x,m\n");
    CHECK_ERROR(read_prime_csv(bad_amount), ParseError);
    std::istringstream zero("book,date,counterparty,amount,memo\nsales_day,1,a,0,m\n");
    CHECK_ERROR(read_prime_csv(zero), NonPositiveAmount);
}
