#include "ledgerstack/bank_ledger.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <sstream>

#include "ledgerstack/error.hpp"
#include "ledgerstack/json_util.hpp"

namespace ledgerstack::bank {

namespace {

template <class E, std::size_t N>
E parse_enum(std::string_view s, const std::pair<E, std::string_view> (&table)[N], ErrorCode code, const char* what) {
    for (const auto& [value, name] : table)
        if (name == s) return value;
    throw Error(code, std::string("unknown ") + what + " '" + std::string(s) + "'");
}

template <class E, std::size_t N>
std::string_view enum_name(E e, const std::pair<E, std::string_view> (&table)[N]) noexcept {
    for (const auto& [value, name] : table)
        if (value == e) return name;
    return "?";
}

constexpr std::pair<Book, std::string_view> kBookNames[] = {
    {Book::SalesDay, "sales_day"}, {Book::PurchaseDay, "purchase_day"},
    {Book::SalesReturns, "sales_returns"}, {Book::PurchaseReturns, "purchase_returns"},
    {Book::Cash, "cash"}, {Book::PettyCash, "petty_cash"}, {Book::Journal, "journal"}};

constexpr std::pair<CashDirection, std::string_view> kDirectionNames[] = {{CashDirection::Receipt, "receipt"},
                                                                         {CashDirection::Payment, "payment"}};

constexpr std::pair<Category, std::string_view> kCategoryNames[] = {{Category::Asset, "asset"},
                                                                   {Category::Liability, "liability"},
                                                                   {Category::Equity, "equity"},
                                                                   {Category::Income, "income"},
                                                                   {Category::Expense, "expense"}};

constexpr std::pair<ControlFor, std::string_view> kControlNames[] = {
    {ControlFor::None, "none"}, {ControlFor::Receivables, "receivables"}, {ControlFor::Payables, "payables"}};

constexpr std::pair<BusinessModel, std::string_view> kModelNames[] = {
    {BusinessModel::HoldToCollect, "hold_to_collect"},
    {BusinessModel::HoldToCollectAndSell, "hold_to_collect_and_sell"},
    {BusinessModel::Other, "other"}};

constexpr std::pair<Ifrs9Category, std::string_view> kIfrsNames[] = {
    {Ifrs9Category::AmortizedCost, "amortized_cost"}, {Ifrs9Category::Fvoci, "fvoci"}, {Ifrs9Category::Fvtpl, "fvtpl"}};

constexpr std::pair<InstrumentKind, std::string_view> kInstrumentNames[] = {
    {InstrumentKind::NotesPayable, "notes_payable"},
    {InstrumentKind::BondsPayable, "bonds_payable"},
    {InstrumentKind::Stock, "stock"}};

constexpr std::pair<EntrySide, std::string_view> kSideNames[] = {{EntrySide::Debit, "debit"},
                                                                {EntrySide::Credit, "credit"}};

const char* instrument_account(InstrumentKind k) {
    switch (k) {
    case InstrumentKind::NotesPayable: return "notes_payable";
    case InstrumentKind::BondsPayable: return "bonds_payable";
    case InstrumentKind::Stock: return "share_capital";
    }
    return "notes_payable";
}

Minor signed_effect(const JournalLine& l) { return l.side == EntrySide::Debit ? l.amount : -l.amount; }

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::int64_t parse_i64(const std::string& s, std::size_t line_no, const char* what) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
    return v;
}

} // namespace

std::string_view to_string(Book b) noexcept { return enum_name(b, kBookNames); }
Book book_from_string(std::string_view s) { return parse_enum(s, kBookNames, ErrorCode::UnknownBook, "book"); }
std::string_view to_string(CashDirection d) noexcept { return enum_name(d, kDirectionNames); }
CashDirection cash_direction_from_string(std::string_view s) {
    return parse_enum(s, kDirectionNames, ErrorCode::ParseError, "cash direction");
}
std::string_view to_string(Category c) noexcept { return enum_name(c, kCategoryNames); }
std::string_view to_string(ControlFor c) noexcept { return enum_name(c, kControlNames); }
ControlFor control_for_from_string(std::string_view s) {
    return parse_enum(s, kControlNames, ErrorCode::ParseError, "subledger");
}
std::string_view to_string(BusinessModel m) noexcept { return enum_name(m, kModelNames); }
BusinessModel business_model_from_string(std::string_view s) {
    return parse_enum(s, kModelNames, ErrorCode::InvalidParams, "business model");
}
std::string_view to_string(Ifrs9Category c) noexcept { return enum_name(c, kIfrsNames); }
std::string_view to_string(InstrumentKind k) noexcept { return enum_name(k, kInstrumentNames); }
InstrumentKind instrument_kind_from_string(std::string_view s) {
    return parse_enum(s, kInstrumentNames, ErrorCode::InvalidParams, "instrument kind");
}

// ---------------------------------------------------------------------------

Json PrimeEntry::to_json() const {
    Json j{{"book", to_string(book)}, {"date", date},     {"counterparty", counterparty},
           {"amount", amount},        {"memo", memo}};
    if (is_double_entry_book(book)) j["direction"] = to_string(direction);
    if (book == Book::Journal) {
        j["debit_account"] = debit_account;
        j["credit_account"] = credit_account;
    }
    return j;
}

PrimeEntry PrimeEntry::from_json(const Json& j) {
    PrimeEntry e;
    e.book = book_from_string(field<std::string>(j, "book"));
    e.date = field<std::int64_t>(j, "date");
    e.counterparty = field_or<std::string>(j, "counterparty", "");
    e.amount = field<Minor>(j, "amount");
    e.memo = field_or<std::string>(j, "memo", "");
    e.direction = cash_direction_from_string(field_or<std::string>(j, "direction", "receipt"));
    e.debit_account = field_or<std::string>(j, "debit_account", "");
    e.credit_account = field_or<std::string>(j, "credit_account", "");
    return e;
}

PostedPrime PrimeBooks::post(PrimeEntry entry) {
    if (entry.amount <= 0)
        throw Error(ErrorCode::NonPositiveAmount, "prime entry amount " + std::to_string(entry.amount));
    if (entry.book == Book::Journal) {
        if (entry.debit_account.empty() || entry.credit_account.empty() || entry.debit_account == entry.credit_account)
            throw Error(ErrorCode::InvalidParams, "journal entries name two distinct accounts");
    }
    auto& book = books_[entry.book];
    const bool eligible = is_double_entry_book(entry.book);
    book.push_back(std::move(entry));
    return {book.size(), eligible};
}

std::span<const PrimeEntry> PrimeBooks::entries(Book b) const {
    auto it = books_.find(b);
    if (it == books_.end()) return {};
    return it->second;
}

std::vector<PrimeEntry> PrimeBooks::entries_on(Book b, std::int64_t date) const {
    std::vector<PrimeEntry> out;
    for (const auto& e : entries(b))
        if (e.date == date) out.push_back(e);
    return out;
}

std::set<std::int64_t> PrimeBooks::dates() const {
    std::set<std::int64_t> out;
    for (const auto& [b, list] : books_)
        for (const auto& e : list) out.insert(e.date);
    return out;
}

std::size_t PrimeBooks::total() const noexcept {
    std::size_t n = 0;
    for (const auto& [b, list] : books_) n += list.size();
    return n;
}

std::vector<PrimeEntry> read_prime_csv(std::istream& in) {
    std::vector<PrimeEntry> out;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header_seen) {
            header_seen = true;
            if (line.rfind("book,", 0) == 0) continue;
        }
        auto cells = split_csv(line);
        if (cells.size() < 5 || cells.size() > 8)
            throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected 5 to 8 columns");
        PrimeEntry e;
        e.book = book_from_string(cells[0]);
        e.date = parse_i64(cells[1], line_no, "date");
        e.counterparty = cells[2];
        e.amount = parse_i64(cells[3], line_no, "amount");
        e.memo = cells[4];
        if (cells.size() > 5 && !cells[5].empty()) e.direction = cash_direction_from_string(cells[5]);
        if (cells.size() > 6) e.debit_account = cells[6];
        if (cells.size() > 7) e.credit_account = cells[7];
        try {
            PrimeBooks{}.post(e);
        } catch (const Error& err) {
            throw Error(err.code(), "line " + std::to_string(line_no) + ": " + err.detail());
        }
        out.push_back(std::move(e));
    }
    return out;
}

// ---------------------------------------------------------------------------

const PostingMap& default_posting_map() {
    static const PostingMap map = {
        {Book::SalesDay, CashDirection::Receipt, "receivables", "sales"},
        {Book::PurchaseDay, CashDirection::Receipt, "purchases", "payables"},
        {Book::SalesReturns, CashDirection::Receipt, "sales_returns", "receivables"},
        {Book::PurchaseReturns, CashDirection::Receipt, "payables", "purchase_returns"},
        {Book::Cash, CashDirection::Receipt, "cash", "receivables"},
        {Book::Cash, CashDirection::Payment, "payables", "cash"},
        {Book::PettyCash, CashDirection::Receipt, "petty_cash", "cash"},
        {Book::PettyCash, CashDirection::Payment, "sundry_expenses", "petty_cash"},
    };
    return map;
}

PostingMap posting_map_from_json(const Json& j) {
    PostingMap map;
    for (const auto& r : field<Json>(j, "rules")) {
        PostingRule rule;
        rule.book = book_from_string(field<std::string>(r, "book"));
        rule.direction = cash_direction_from_string(field_or<std::string>(r, "direction", "receipt"));
        rule.debit = field<std::string>(r, "debit");
        rule.credit = field<std::string>(r, "credit");
        map.push_back(std::move(rule));
    }
    return map;
}

Json to_json(const PostingMap& map) {
    Json rules = Json::array();
    for (const auto& r : map)
        rules.push_back(
            {{"book", to_string(r.book)}, {"direction", to_string(r.direction)}, {"debit", r.debit}, {"credit", r.credit}});
    return Json{{"rules", rules}};
}

Json ReconcileResult::to_json() const {
    return Json{{"ok", ok}, {"control_total", control_total}, {"subledger_total", subledger_total}};
}

Json JournalEntry::to_json() const {
    Json ls = Json::array();
    for (const auto& l : lines) ls.push_back({{"account", l.account}, {"side", enum_name(l.side, kSideNames)}, {"amount", l.amount}});
    Json j{{"id", id}, {"date", date}, {"lines", ls}, {"memo", memo}};
    if (!counterparty.empty()) j["counterparty"] = counterparty;
    if (reverses) j["reverses"] = *reverses;
    return j;
}

Json CapitalInstrument::to_json() const {
    return Json{{"id", id},
                {"kind", to_string(kind)},
                {"holder", holder},
                {"maturity_day", maturity_day},
                {"rate_bps", rate_bps},
                {"original_balance", original_balance},
                {"current_balance", current_balance}};
}

// ---------------------------------------------------------------------------

Minor round_half_up(long double x) {
    // The relative nudge keeps exact halves that binary arithmetic lands just
    // below (e.g. 0.5 computed as 0.49999999999999994) on the upper side.
    return static_cast<Minor>(std::floor(x + 0.5L + x * 1e-12L));
}

Minor ecl_provision(Minor exposure, double pd_12m, double pd_lifetime, double lgd, int stage) {
    auto unit = [](double p) { return p >= 0.0 && p <= 1.0; }; // false for NaN
    if (!unit(pd_12m) || !unit(pd_lifetime) || !unit(lgd))
        throw Error(ErrorCode::InvalidProbability, "pd and lgd must lie in [0, 1]");
    if (exposure < 0) throw Error(ErrorCode::InvalidParams, "negative exposure");
    if (stage < 1 || stage > 3) throw Error(ErrorCode::InvalidParams, "stage must be 1, 2 or 3");
    const double pd = stage == 1 ? pd_12m : pd_lifetime;
    return round_half_up(static_cast<long double>(exposure) * pd * lgd);
}

Minor depreciate(const DepreciableAsset& a) {
    if (a.life_periods == 0) throw Error(ErrorCode::InvalidParams, "life_periods must be positive");
    if (a.cost < 0 || a.salvage < 0 || a.salvage > a.cost)
        throw Error(ErrorCode::InvalidParams, "need 0 <= salvage <= cost");
    if (a.periods_elapsed >= a.life_periods)
        throw Error(ErrorCode::FullyDepreciated,
                    "period " + std::to_string(a.periods_elapsed + 1) + " of life " + std::to_string(a.life_periods));
    const Minor base = (a.cost - a.salvage) / a.life_periods;
    if (a.periods_elapsed + 1 == a.life_periods) return (a.cost - a.salvage) - base * (a.life_periods - 1);
    return base;
}

// ---------------------------------------------------------------------------

std::vector<GlAccount> default_chart() {
    using C = Category;
    return {
        {"cash", C::Asset, ControlFor::None, 0},
        {"petty_cash", C::Asset, ControlFor::None, 0},
        {"receivables", C::Asset, ControlFor::Receivables, 0},
        {"loss_allowance", C::Asset, ControlFor::None, 0},
        {"financial_assets", C::Asset, ControlFor::None, 0},
        {"property_plant_equipment", C::Asset, ControlFor::None, 0},
        {"accumulated_depreciation", C::Asset, ControlFor::None, 0},
        {"payables", C::Liability, ControlFor::Payables, 0},
        {"notes_payable", C::Liability, ControlFor::None, 0},
        {"bonds_payable", C::Liability, ControlFor::None, 0},
        {"share_capital", C::Equity, ControlFor::None, 0},
        {"retained_earnings", C::Equity, ControlFor::None, 0},
        {"sales", C::Income, ControlFor::None, 0},
        {"sales_returns", C::Income, ControlFor::None, 0},
        {"purchases", C::Expense, ControlFor::None, 0},
        {"purchase_returns", C::Expense, ControlFor::None, 0},
        {"sundry_expenses", C::Expense, ControlFor::None, 0},
        {"impairment_expense", C::Expense, ControlFor::None, 0},
        {"depreciation_expense", C::Expense, ControlFor::None, 0},
    };
}

BankLedger::BankLedger(chain::KeyPair operator_key, PostingMap map)
    : map_(std::move(map)), txs_("bank", std::move(operator_key)) {
    for (auto& a : default_chart()) accounts_.emplace(a.id, a);
    for (const auto& r : map_) {
        if (!accounts_.contains(r.debit) || !accounts_.contains(r.credit))
            throw Error(ErrorCode::UnknownAccount, "posting map names an account outside the chart");
    }
}

void BankLedger::add_account(GlAccount account) {
    if (accounts_.contains(account.id)) throw Error(ErrorCode::DuplicateId, "account " + account.id);
    account.balance = 0;
    accounts_.emplace(account.id, std::move(account));
}

ControlFor BankLedger::control_of(const std::string& account) const {
    auto it = accounts_.find(account);
    return it == accounts_.end() ? ControlFor::None : it->second.control_for;
}

const PostingRule& BankLedger::rule_for(Book book, CashDirection direction) const {
    if (!is_double_entry_book(book)) direction = CashDirection::Receipt;
    for (const auto& r : map_)
        if (r.book == book && r.direction == direction) return r;
    throw Error(ErrorCode::UnknownBook,
                "no posting rule for " + std::string(to_string(book)) + "/" + std::string(to_string(direction)));
}

void BankLedger::check_lines(const std::vector<JournalLine>& lines) const {
    if (lines.size() < 2) throw Error(ErrorCode::Unbalanced, "an entry needs at least two lines");
    Minor debits = 0, credits = 0;
    for (const auto& l : lines) {
        if (!accounts_.contains(l.account)) throw Error(ErrorCode::UnknownAccount, l.account);
        if (l.amount <= 0) throw Error(ErrorCode::NonPositiveAmount, "line on " + l.account);
        (l.side == EntrySide::Debit ? debits : credits) += l.amount;
    }
    if (debits != credits)
        throw Error(ErrorCode::Unbalanced, "debits " + std::to_string(debits) + " != credits " + std::to_string(credits));
}

const JournalEntry& BankLedger::commit(JournalEntry entry, std::vector<std::pair<ControlFor, SubledgerRow>> rows) {
    entry.id = journal_.size();
    for (const auto& l : entry.lines) accounts_.at(l.account).balance += signed_effect(l);
    for (auto& [which, row] : rows) {
        row.entry_id = entry.id;
        (which == ControlFor::Receivables ? receivables_ : payables_).push_back(std::move(row));
    }
    journal_.push_back(std::move(entry));
    txs_.emit(chain::TxKind::GlPost, journal_.back().to_json());
    return journal_.back();
}

/// Subledger movement implied by one line on a control account.
static std::optional<std::pair<ControlFor, Minor>> subledger_effect(ControlFor control, const JournalLine& l) {
    switch (control) {
    case ControlFor::None: return std::nullopt;
    case ControlFor::Receivables: return std::pair{control, signed_effect(l)};
    case ControlFor::Payables: return std::pair{control, -signed_effect(l)};
    }
    return std::nullopt;
}

const JournalEntry& BankLedger::post_journal(std::int64_t date, std::vector<JournalLine> lines, std::string memo,
                                             std::string counterparty) {
    check_lines(lines);
    std::vector<std::pair<ControlFor, SubledgerRow>> rows;
    for (const auto& l : lines) {
        if (auto eff = subledger_effect(control_of(l.account), l)) {
            if (counterparty.empty())
                throw Error(ErrorCode::InvalidParams, "a posting to control account " + l.account + " needs a counterparty");
            rows.push_back({eff->first, SubledgerRow{date, counterparty, eff->second, 0}});
        }
    }
    JournalEntry e;
    e.date = date;
    e.lines = std::move(lines);
    e.memo = std::move(memo);
    e.counterparty = std::move(counterparty);
    return commit(std::move(e), std::move(rows));
}

const JournalEntry& BankLedger::reverse(std::uint64_t entry_id, std::int64_t date, std::string memo) {
    if (entry_id >= journal_.size()) throw Error(ErrorCode::InvalidParams, "no journal entry " + std::to_string(entry_id));
    if (reversed_.contains(entry_id)) throw Error(ErrorCode::InvalidParams, "entry already reversed");
    const JournalEntry& original = journal_[entry_id];
    JournalEntry e;
    e.date = date;
    e.memo = std::move(memo);
    e.counterparty = original.counterparty;
    e.reverses = entry_id;
    for (auto l : original.lines) {
        l.side = l.side == EntrySide::Debit ? EntrySide::Credit : EntrySide::Debit;
        e.lines.push_back(std::move(l));
    }
    std::vector<std::pair<ControlFor, SubledgerRow>> rows;
    for (auto which : {ControlFor::Receivables, ControlFor::Payables})
        for (const auto& r : which == ControlFor::Receivables ? receivables_ : payables_)
            if (r.entry_id == entry_id) rows.push_back({which, SubledgerRow{date, r.counterparty, -r.amount, 0}});
    reversed_.insert(entry_id);
    return commit(std::move(e), std::move(rows));
}

PostedPrime BankLedger::capture(PrimeEntry entry) {
    if (entry.book == Book::Journal) {
        for (const auto* acct : {&entry.debit_account, &entry.credit_account})
            if (!acct->empty() && !accounts_.contains(*acct)) throw Error(ErrorCode::UnknownAccount, *acct);
    }
    Json payload = entry.to_json();
    auto posted = books_.post(std::move(entry));
    txs_.emit(chain::TxKind::PrimeEntry, std::move(payload));
    return posted;
}

std::vector<JournalEntry> BankLedger::summarize_and_post(const PrimeBooks& books, std::int64_t date) {
    std::vector<JournalEntry> out;
    for (Book book : kAllBooks) {
        if (summarized_.contains({book, date})) continue;
        const auto entries = books.entries_on(book, date);
        if (entries.empty()) continue;

        // Accumulate per (account, side) in first-seen order so the entry is
        // deterministic and carries one line per account movement.
        std::vector<JournalLine> lines;
        std::vector<std::pair<ControlFor, SubledgerRow>> rows;
        auto add = [&](const std::string& account, EntrySide side, Minor amount, const std::string& counterparty) {
            auto it = std::find_if(lines.begin(), lines.end(),
                                   [&](const JournalLine& l) { return l.account == account && l.side == side; });
            if (it == lines.end())
                lines.push_back({account, side, amount});
            else
                it->amount += amount;
            const JournalLine probe{account, side, amount};
            if (auto eff = subledger_effect(control_of(account), probe))
                rows.push_back({eff->first, SubledgerRow{date, counterparty, eff->second, 0}});
        };
        for (const auto& e : entries) {
            std::string debit = e.debit_account, credit = e.credit_account;
            if (book != Book::Journal) {
                const auto& rule = rule_for(book, e.direction);
                debit = rule.debit;
                credit = rule.credit;
            }
            add(debit, EntrySide::Debit, e.amount, e.counterparty);
            add(credit, EntrySide::Credit, e.amount, e.counterparty);
        }
        check_lines(lines);
        JournalEntry je;
        je.date = date;
        je.lines = std::move(lines);
        je.memo = std::string(to_string(book)) + " day total";
        out.push_back(commit(std::move(je), std::move(rows)));
        summarized_.insert({book, date});
    }
    return out;
}

std::map<std::string, Minor> BankLedger::trial_balance() const {
    std::map<std::string, Minor> out;
    for (const auto& [id, a] : accounts_) out[id] = a.balance;
    return out;
}

std::span<const SubledgerRow> BankLedger::subledger(ControlFor which) const {
    switch (which) {
    case ControlFor::Receivables: return receivables_;
    case ControlFor::Payables: return payables_;
    case ControlFor::None: break;
    }
    return {};
}

std::map<std::string, Minor> BankLedger::subledger_balances(ControlFor which) const {
    std::map<std::string, Minor> out;
    for (const auto& r : subledger(which)) out[r.counterparty] += r.amount;
    return out;
}

ReconcileResult BankLedger::reconcile_subledger(ControlFor which) const {
    if (which == ControlFor::None) throw Error(ErrorCode::InvalidParams, "reconcile receivables or payables");
    ReconcileResult r;
    for (const auto& [id, a] : accounts_)
        if (a.control_for == which) r.control_total += which == ControlFor::Receivables ? a.balance : -a.balance;
    for (const auto& row : subledger(which)) r.subledger_total += row.amount;
    r.ok = r.control_total == r.subledger_total;
    return r;
}

void BankLedger::inject_subledger_row_for_testing(ControlFor which, SubledgerRow row) {
    if (which == ControlFor::Receivables) receivables_.push_back(std::move(row));
    if (which == ControlFor::Payables) payables_.push_back(std::move(row));
}

Ifrs9Classification BankLedger::classify(const std::string& asset_id, bool sppi_pass, BusinessModel model) {
    Ifrs9Classification c{sppi_pass, model, classify_ifrs9(sppi_pass, model)};
    Json payload{{"asset_id", asset_id},
                 {"sppi_pass", sppi_pass},
                 {"business_model", to_string(model)},
                 {"category", to_string(c.category)}};
    if (auto it = classes_.find(asset_id); it != classes_.end()) payload["previous"] = to_string(it->second.category);
    classes_[asset_id] = c;
    txs_.emit(chain::TxKind::Ifrs9Classify, std::move(payload));
    return c;
}

Minor BankLedger::update_provision(const std::string& asset_id, Minor exposure, double pd_12m, double pd_lifetime,
                                   double lgd, int stage, std::int64_t date) {
    const Minor target = ecl_provision(exposure, pd_12m, pd_lifetime, lgd, stage);
    auto& rec = provisions_[asset_id];
    rec.asset_id = asset_id;
    const Minor delta = target - rec.allowance;
    if (delta > 0) {
        post_journal(date,
                     {{"impairment_expense", EntrySide::Debit, delta}, {"loss_allowance", EntrySide::Credit, delta}},
                     "ecl provision " + asset_id);
    } else if (delta < 0) {
        post_journal(date,
                     {{"loss_allowance", EntrySide::Debit, -delta}, {"impairment_expense", EntrySide::Credit, -delta}},
                     "ecl release " + asset_id);
    }
    rec.allowance = target;
    rec.stage = stage;
    return target;
}

void BankLedger::register_property(const std::string& id, Minor cost, Minor salvage, std::uint32_t life_periods) {
    if (properties_.contains(id)) throw Error(ErrorCode::DuplicateId, "property " + id);
    DepreciableAsset a{cost, salvage, life_periods, 0};
    (void)depreciate(a); // validates the parameters
    if (cost == 0) throw Error(ErrorCode::InvalidParams, "property cost must be positive");
    post_journal(0, {{"property_plant_equipment", EntrySide::Debit, cost}, {"cash", EntrySide::Credit, cost}},
                 "acquire " + id);
    properties_.emplace(id, a);
}

Minor BankLedger::depreciate_property(const std::string& id, std::int64_t date) {
    auto it = properties_.find(id);
    if (it == properties_.end()) throw Error(ErrorCode::UnknownAccount, "property " + id);
    const Minor amount = depreciate(it->second);
    if (amount > 0) {
        post_journal(date,
                     {{"depreciation_expense", EntrySide::Debit, amount},
                      {"accumulated_depreciation", EntrySide::Credit, amount}},
                     "depreciation " + id);
    }
    ++it->second.periods_elapsed;
    return amount;
}

void BankLedger::issue_instrument(CapitalInstrument instrument, std::int64_t date) {
    if (instruments_.contains(instrument.id)) throw Error(ErrorCode::DuplicateId, "instrument " + instrument.id);
    if (instrument.original_balance <= 0) throw Error(ErrorCode::NonPositiveAmount, "instrument " + instrument.id);
    instrument.current_balance = instrument.original_balance;
    post_journal(date,
                 {{"cash", EntrySide::Debit, instrument.original_balance},
                  {instrument_account(instrument.kind), EntrySide::Credit, instrument.original_balance}},
                 "issue " + instrument.id);
    instruments_.emplace(instrument.id, std::move(instrument));
}

void BankLedger::repay_instrument(const std::string& id, Minor amount, std::int64_t date) {
    auto it = instruments_.find(id);
    if (it == instruments_.end()) throw Error(ErrorCode::UnknownAccount, "instrument " + id);
    if (amount <= 0) throw Error(ErrorCode::NonPositiveAmount, "repayment");
    if (amount > it->second.current_balance) throw Error(ErrorCode::InvalidParams, "repayment exceeds balance");
    post_journal(date,
                 {{instrument_account(it->second.kind), EntrySide::Debit, amount}, {"cash", EntrySide::Credit, amount}},
                 "repay " + id);
    it->second.current_balance -= amount;
}

Json BankLedger::gl_json() const {
    Json accts = Json::array();
    for (const auto& [id, a] : accounts_)
        accts.push_back({{"id", id},
                         {"category", to_string(a.category)},
                         {"control_for", to_string(a.control_for)},
                         {"balance", a.balance}});
    Json journal = Json::array();
    for (const auto& e : journal_) journal.push_back(e.to_json());
    Json subs = Json::object();
    for (auto which : {ControlFor::Receivables, ControlFor::Payables}) {
        Json m = Json::object();
        for (const auto& [cp, bal] : subledger_balances(which)) m[cp] = bal;
        subs[std::string(to_string(which))] = m;
    }
    return Json{{"accounts", accts}, {"journal", journal}, {"subledgers", subs}};
}

Json BankLedger::trial_balance_json() const {
    Json balances = Json::object();
    Minor sum = 0;
    for (const auto& [id, bal] : trial_balance()) {
        balances[id] = bal;
        sum += bal;
    }
    return Json{{"balances", balances}, {"sum", sum}};
}

} // namespace ledgerstack::bank
