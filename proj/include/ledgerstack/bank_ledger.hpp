#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ledgerstack/bytes.hpp"
#include "ledgerstack/chain.hpp"

namespace ledgerstack::bank {

// ---------------------------------------------------------------------------
// Books of prime entry

enum class Book : std::uint8_t { SalesDay, PurchaseDay, SalesReturns, PurchaseReturns, Cash, PettyCash, Journal };

inline constexpr Book kAllBooks[] = {Book::SalesDay, Book::PurchaseDay, Book::SalesReturns, Book::PurchaseReturns,
                                     Book::Cash,     Book::PettyCash,   Book::Journal};

[[nodiscard]] std::string_view to_string(Book b) noexcept;
/// Throws Error(UnknownBook).
[[nodiscard]] Book book_from_string(std::string_view s);

/// Cash and petty cash books are themselves part of the double-entry system.
[[nodiscard]] constexpr bool is_double_entry_book(Book b) noexcept { return b == Book::Cash || b == Book::PettyCash; }

/// Money in or out; meaningful for the cash and petty cash books only.
enum class CashDirection : std::uint8_t { Receipt, Payment };

[[nodiscard]] std::string_view to_string(CashDirection d) noexcept;
[[nodiscard]] CashDirection cash_direction_from_string(std::string_view s);

struct PrimeEntry {
    Book book = Book::SalesDay;
    std::int64_t date = 0;
    std::string counterparty;
    Minor amount = 0;
    std::string memo;
    CashDirection direction = CashDirection::Receipt;
    /// Journal book only: the two accounts the entry moves between.
    std::string debit_account;
    std::string credit_account;

    [[nodiscard]] Json to_json() const;
    /// Throws Error(UnknownBook | ParseError).
    [[nodiscard]] static PrimeEntry from_json(const Json& j);
    bool operator==(const PrimeEntry&) const = default;
};

struct PostedPrime {
    std::size_t book_length = 0;
    bool double_entry_eligible = false;
};

class PrimeBooks {
public:
    /// Throws Error(NonPositiveAmount | InvalidParams).
    PostedPrime post(PrimeEntry entry);

    [[nodiscard]] std::span<const PrimeEntry> entries(Book b) const;
    [[nodiscard]] std::vector<PrimeEntry> entries_on(Book b, std::int64_t date) const;
    [[nodiscard]] std::set<std::int64_t> dates() const;
    [[nodiscard]] std::size_t total() const noexcept;

private:
    std::map<Book, std::vector<PrimeEntry>> books_;
};

inline PostedPrime post_prime_entry(PrimeBooks& books, PrimeEntry entry) { return books.post(std::move(entry)); }

/// CSV with a header row: book,date,counterparty,amount,memo and optionally
/// direction,debit_account,credit_account. Throws Error(ParseError) naming
/// the line, or the validation error of the offending entry.
[[nodiscard]] std::vector<PrimeEntry> read_prime_csv(std::istream& in);

// ---------------------------------------------------------------------------
// General ledger

enum class Category : std::uint8_t { Asset, Liability, Equity, Income, Expense };
enum class ControlFor : std::uint8_t { None, Receivables, Payables };

[[nodiscard]] std::string_view to_string(Category c) noexcept;
[[nodiscard]] std::string_view to_string(ControlFor c) noexcept;
[[nodiscard]] ControlFor control_for_from_string(std::string_view s);

struct GlAccount {
    std::string id;
    Category category = Category::Asset;
    ControlFor control_for = ControlFor::None;
    Minor balance = 0; ///< debit-positive
};

enum class EntrySide : std::uint8_t { Debit, Credit };

struct JournalLine {
    std::string account;
    EntrySide side = EntrySide::Debit;
    Minor amount = 0;
    bool operator==(const JournalLine&) const = default;
};

struct JournalEntry {
    std::uint64_t id = 0;
    std::int64_t date = 0;
    std::vector<JournalLine> lines;
    std::string memo;
    std::string counterparty; ///< required when a line hits a control account
    std::optional<std::uint64_t> reverses;

    [[nodiscard]] Json to_json() const;
    bool operator==(const JournalEntry&) const = default;
};

/// Per-counterparty movement on a receivables or payables subledger. The
/// amount is signed in the subledger's natural direction: positive means the
/// counterparty owes more (receivables) or is owed more (payables).
struct SubledgerRow {
    std::int64_t date = 0;
    std::string counterparty;
    Minor amount = 0;
    std::uint64_t entry_id = 0;
    bool operator==(const SubledgerRow&) const = default;
};

struct PostingRule {
    Book book = Book::SalesDay;
    CashDirection direction = CashDirection::Receipt;
    std::string debit;
    std::string credit;
    bool operator==(const PostingRule&) const = default;
};

using PostingMap = std::vector<PostingRule>;

/// The built-in book to account pair table; config/posting_map.json carries
/// the same table.
[[nodiscard]] const PostingMap& default_posting_map();
[[nodiscard]] PostingMap posting_map_from_json(const Json& j);
[[nodiscard]] Json to_json(const PostingMap& map);

struct ReconcileResult {
    bool ok = true;
    Minor control_total = 0;
    Minor subledger_total = 0;
    [[nodiscard]] Json to_json() const;
};

// ---------------------------------------------------------------------------
// IFRS 9

enum class BusinessModel : std::uint8_t { HoldToCollect, HoldToCollectAndSell, Other };
enum class Ifrs9Category : std::uint8_t { AmortizedCost, Fvoci, Fvtpl };

[[nodiscard]] std::string_view to_string(BusinessModel m) noexcept;
[[nodiscard]] BusinessModel business_model_from_string(std::string_view s);
[[nodiscard]] std::string_view to_string(Ifrs9Category c) noexcept;

[[nodiscard]] constexpr Ifrs9Category classify_ifrs9(bool sppi_pass, BusinessModel model) noexcept {
    if (!sppi_pass) return Ifrs9Category::Fvtpl;
    switch (model) {
    case BusinessModel::HoldToCollect: return Ifrs9Category::AmortizedCost;
    case BusinessModel::HoldToCollectAndSell: return Ifrs9Category::Fvoci;
    case BusinessModel::Other: return Ifrs9Category::Fvtpl;
    }
    return Ifrs9Category::Fvtpl;
}

struct Ifrs9Classification {
    bool sppi_pass = false;
    BusinessModel business_model = BusinessModel::Other;
    Ifrs9Category category = Ifrs9Category::Fvtpl;
};

/// Half-up rounding to an integer (non-negative inputs).
[[nodiscard]] Minor round_half_up(long double x);

/// Stage 1 uses the 12-month PD, stages 2 and 3 the lifetime PD. Throws
/// Error(InvalidProbability) for pd or lgd outside [0, 1] and
/// Error(InvalidParams) for a negative exposure or a stage outside 1..3.
[[nodiscard]] Minor ecl_provision(Minor exposure, double pd_12m, double pd_lifetime, double lgd, int stage);

// ---------------------------------------------------------------------------
// Property and capital records

struct DepreciableAsset {
    Minor cost = 0;
    Minor salvage = 0;
    std::uint32_t life_periods = 0;
    std::uint32_t periods_elapsed = 0;
};

/// Straight-line charge for the next period; the last period absorbs the
/// rounding remainder. Throws Error(FullyDepreciated | InvalidParams).
[[nodiscard]] Minor depreciate(const DepreciableAsset& asset);

enum class InstrumentKind : std::uint8_t { NotesPayable, BondsPayable, Stock };

[[nodiscard]] std::string_view to_string(InstrumentKind k) noexcept;
[[nodiscard]] InstrumentKind instrument_kind_from_string(std::string_view s);

struct CapitalInstrument {
    std::string id;
    InstrumentKind kind = InstrumentKind::NotesPayable;
    std::string holder;
    std::int64_t maturity_day = 0;
    std::uint32_t rate_bps = 0;
    Minor original_balance = 0;
    Minor current_balance = 0;
    [[nodiscard]] Json to_json() const;
};

struct ProvisionRecord {
    std::string asset_id;
    int stage = 1;
    Minor allowance = 0;
};

// ---------------------------------------------------------------------------

/// Single-writer ledger. Every accepted mutation is also emitted as a chain
/// transaction through `transactions()`.
class BankLedger {
public:
    BankLedger(chain::KeyPair operator_key, PostingMap map = default_posting_map());

    /// Throws Error(DuplicateId).
    void add_account(GlAccount account);

    /// Throws Error(Unbalanced | UnknownAccount | NonPositiveAmount |
    /// InvalidParams). Nothing is changed on failure.
    const JournalEntry& post_journal(std::int64_t date, std::vector<JournalLine> lines, std::string memo,
                                     std::string counterparty = {});

    /// Posts the mirror image of an earlier entry; the original stays.
    const JournalEntry& reverse(std::uint64_t entry_id, std::int64_t date, std::string memo = "reversal");

    /// Appends to the ledger's own prime books and emits a prime_entry
    /// transaction. No GL effect.
    PostedPrime capture(PrimeEntry entry);
    [[nodiscard]] const PrimeBooks& books() const noexcept { return books_; }

    /// One balanced entry per non-empty book for `date`, posting the day's
    /// totals. A (book, date) pair is summarized at most once; repeats post
    /// nothing.
    std::vector<JournalEntry> summarize_and_post(const PrimeBooks& books, std::int64_t date);
    std::vector<JournalEntry> summarize_day(std::int64_t date) { return summarize_and_post(books_, date); }

    [[nodiscard]] std::map<std::string, Minor> trial_balance() const;
    [[nodiscard]] ReconcileResult reconcile_subledger(ControlFor which) const;

    /// Records the category and emits an ifrs9_classify transaction.
    Ifrs9Classification classify(const std::string& asset_id, bool sppi_pass, BusinessModel model);
    /// Reclassification goes through the same path; the earlier decision
    /// stays on chain.
    [[nodiscard]] const std::map<std::string, Ifrs9Classification>& classifications() const noexcept { return classes_; }

    /// Brings the asset's loss allowance to the computed provision by posting
    /// the difference. Returns the new allowance.
    Minor update_provision(const std::string& asset_id, Minor exposure, double pd_12m, double pd_lifetime, double lgd,
                           int stage, std::int64_t date);
    [[nodiscard]] const std::map<std::string, ProvisionRecord>& provisions() const noexcept { return provisions_; }

    void register_property(const std::string& id, Minor cost, Minor salvage, std::uint32_t life_periods);
    /// Posts one period's depreciation and returns the amount.
    Minor depreciate_property(const std::string& id, std::int64_t date);
    [[nodiscard]] const std::map<std::string, DepreciableAsset>& properties() const noexcept { return properties_; }

    /// Records the instrument and posts the proceeds: Dr cash / Cr the
    /// instrument's GL account.
    void issue_instrument(CapitalInstrument instrument, std::int64_t date);
    void repay_instrument(const std::string& id, Minor amount, std::int64_t date);
    [[nodiscard]] const std::map<std::string, CapitalInstrument>& instruments() const noexcept { return instruments_; }

    /// Test hook: appends a raw subledger row without a GL posting.
    void inject_subledger_row_for_testing(ControlFor which, SubledgerRow row);

    [[nodiscard]] const std::map<std::string, GlAccount>& accounts() const noexcept { return accounts_; }
    [[nodiscard]] std::span<const JournalEntry> journal() const noexcept { return journal_; }
    [[nodiscard]] std::span<const SubledgerRow> subledger(ControlFor which) const;
    [[nodiscard]] std::map<std::string, Minor> subledger_balances(ControlFor which) const;
    [[nodiscard]] const PostingMap& posting_map() const noexcept { return map_; }

    [[nodiscard]] chain::TxQueue& transactions() noexcept { return txs_; }
    [[nodiscard]] const chain::TxQueue& transactions() const noexcept { return txs_; }

    [[nodiscard]] Json gl_json() const;
    [[nodiscard]] Json trial_balance_json() const;

private:
    const PostingRule& rule_for(Book book, CashDirection direction) const;
    void check_lines(const std::vector<JournalLine>& lines) const;
    const JournalEntry& commit(JournalEntry entry, std::vector<std::pair<ControlFor, SubledgerRow>> rows);
    [[nodiscard]] ControlFor control_of(const std::string& account) const;

    PrimeBooks books_;

    PostingMap map_;
    std::map<std::string, GlAccount> accounts_;
    std::vector<JournalEntry> journal_;
    std::vector<SubledgerRow> receivables_;
    std::vector<SubledgerRow> payables_;
    std::set<std::pair<Book, std::int64_t>> summarized_;
    std::map<std::string, Ifrs9Classification> classes_;
    std::map<std::string, ProvisionRecord> provisions_;
    std::map<std::string, DepreciableAsset> properties_;
    std::map<std::string, CapitalInstrument> instruments_;
    std::set<std::uint64_t> reversed_;
    chain::TxQueue txs_;
};

/// The chart of accounts every ledger starts with.
[[nodiscard]] std::vector<GlAccount> default_chart();

} // namespace ledgerstack::bank
