#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ledgerstack/bytes.hpp"
#include "ledgerstack/chain.hpp"

namespace ledgerstack::settlement {

// ---------------------------------------------------------------------------
// Trades and matching

struct Trade {
    std::string id;
    std::string buyer;
    std::string seller;
    std::string asset;
    std::int64_t quantity = 0;
    Minor price = 0;
    std::int64_t trade_day = 0;
    bool superseded = false;

    [[nodiscard]] Minor notional() const noexcept { return quantity * price; }
    [[nodiscard]] Json to_json() const;
    [[nodiscard]] static Trade from_json(const Json& j);
    bool operator==(const Trade&) const = default;
};

/// Throws Error(InvalidParams | NonPositiveQuantity) when the invariants
/// (distinct members, positive quantity and price) fail.
void validate(const Trade& t);

/// CSV with a header row: id,buyer,seller,asset,qty,price,day.
[[nodiscard]] std::vector<Trade> read_trades_csv(std::istream& in);

enum class OrderSide : std::uint8_t { Buy, Sell };

[[nodiscard]] std::string_view to_string(OrderSide s) noexcept;
[[nodiscard]] OrderSide order_side_from_string(std::string_view s);

struct Order {
    std::string id;
    std::string member;
    OrderSide side = OrderSide::Buy;
    std::string asset;
    std::int64_t quantity = 0;
    Minor price = 0;
    std::int64_t day = 0;
};

struct RestingOrder {
    Order order;
    std::uint64_t seq = 0; ///< arrival order, the time in price-time priority
};

/// Per-asset limit order book with price-time priority. A trade executes at
/// the resting order's price. An incoming order never matches the same
/// member's resting orders; it skips over them.
class OrderBook {
public:
    /// Throws Error(NonPositiveQuantity | InvalidParams).
    std::vector<Trade> submit(Order order);

    [[nodiscard]] std::vector<RestingOrder> bids(const std::string& asset) const;
    [[nodiscard]] std::vector<RestingOrder> asks(const std::string& asset) const;

private:
    struct Side {
        std::vector<RestingOrder> bids; ///< best first
        std::vector<RestingOrder> asks; ///< best first
    };
    std::map<std::string, Side> books_;
    std::uint64_t seq_ = 0;
};

inline std::vector<Trade> match_orders(OrderBook& book, Order order) { return book.submit(std::move(order)); }

// ---------------------------------------------------------------------------
// Clearing

/// seller -> CCP and CCP -> buyer, ids "<id>/s" and "<id>/b". Marks the
/// original superseded. Throws Error(CcpIsParty | AlreadyNovated).
std::pair<Trade, Trade> novate(Trade& trade, const std::string& ccp_id);

struct NetPosition {
    std::string member;
    std::string asset;
    std::int64_t net_quantity = 0; ///< bought minus sold
    Minor net_cash = 0;            ///< received minus paid
    bool operator==(const NetPosition&) const = default;
};

/// One entry per (member, asset) that appears in any trade, sorted by
/// (member, asset). Positions that net to zero are kept.
[[nodiscard]] std::vector<NetPosition> net_positions(std::span<const Trade> trades);

/// Net obligations between one unordered pair of members in one asset, from
/// `a`'s side (a < b).
struct BilateralNet {
    std::string a;
    std::string b;
    std::string asset;
    std::int64_t quantity = 0; ///< a receives
    Minor cash = 0;            ///< a receives
    Minor gross_notional = 0;
};

[[nodiscard]] std::vector<BilateralNet> bilateral_net(std::span<const Trade> trades);

struct ObligationTotals {
    std::int64_t gross_quantity = 0; ///< each trade counted once per side
    Minor gross_cash = 0;
    std::int64_t net_quantity = 0; ///< Σ |net_quantity| over positions
    Minor net_cash = 0;
    [[nodiscard]] Json to_json() const;
};

[[nodiscard]] ObligationTotals obligation_totals(std::span<const Trade> trades);

// ---------------------------------------------------------------------------
// Settlement

enum class SettleMode : std::uint8_t { Dvp, Fop };
enum class Status : std::uint8_t { Pending, Settled, Failed };

[[nodiscard]] std::string_view to_string(SettleMode m) noexcept;
[[nodiscard]] SettleMode settle_mode_from_string(std::string_view s);
[[nodiscard]] std::string_view to_string(Status s) noexcept;

/// `from` delivers `quantity` of `asset` to `to`; in DvP `to` pays `cash`
/// to `from` in the same step. Negative cash flows the other way.
struct SettlementInstruction {
    std::string id;
    std::string from;
    std::string to;
    std::string asset;
    std::int64_t quantity = 0;
    Minor cash = 0;
    SettleMode mode = SettleMode::Dvp;
    std::int64_t trade_day = 0;
    std::int64_t due_day = 0;
    Minor notional = 0; ///< gross traded notional this instruction covers
    Status status = Status::Pending;
    std::string failure;

    /// Throws Error(NonPositiveQuantity | InvalidParams).
    [[nodiscard]] static SettlementInstruction make(std::string id, std::string from, std::string to, std::string asset,
                                                    std::int64_t quantity, Minor cash, SettleMode mode,
                                                    std::int64_t trade_day, std::int64_t due_day, Minor notional);
    [[nodiscard]] Json to_json() const;
};

/// A cash-only obligation: left over when netting cancels the asset leg, or
/// the separate payment behind a free-of-payment delivery.
struct PaymentInstruction {
    std::string id;
    std::string payer;
    std::string payee;
    Minor amount = 0;
    std::int64_t due_day = 0;
    std::string for_instruction; ///< FoP delivery it pays for, if any
    Status status = Status::Pending;
    std::string failure;
    [[nodiscard]] Json to_json() const;
};

struct Account {
    Minor cash = 0;
    std::map<std::string, std::int64_t> assets;
    bool operator==(const Account&) const = default;
};

using Holdings = std::map<std::string, Account>;

/// Both legs or neither. On a shortfall the instruction is marked failed and
/// Error(InsufficientAsset | InsufficientCash) is thrown with holdings
/// unchanged. Throws Error(WrongSettlementMode | NotPending) on misuse.
void settle_dvp(Holdings& holdings, SettlementInstruction& instruction);

/// Asset leg only. Throws Error(InsufficientAsset) with holdings unchanged.
void settle_fop(Holdings& holdings, SettlementInstruction& instruction);

/// Throws Error(InsufficientCash) with holdings unchanged.
void settle_payment(Holdings& holdings, PaymentInstruction& payment);

/// FoP deliveries that settled without a settled payment referencing them.
[[nodiscard]] std::vector<std::string> unpaid_deliveries(std::span<const SettlementInstruction> instructions,
                                                         std::span<const PaymentInstruction> payments);

[[nodiscard]] Json to_json(const Holdings& h);
[[nodiscard]] Holdings holdings_from_json(const Json& j);

// ---------------------------------------------------------------------------
// Pipeline

enum class ClearingMode : std::uint8_t { Bilateral, Ccp, Consortium };
enum class NettingMode : std::uint8_t { Multilateral, Bilateral };

[[nodiscard]] std::string_view to_string(ClearingMode m) noexcept;
[[nodiscard]] ClearingMode clearing_mode_from_string(std::string_view s);
[[nodiscard]] std::string_view to_string(NettingMode m) noexcept;
[[nodiscard]] NettingMode netting_mode_from_string(std::string_view s);

struct CycleKeys {
    std::vector<chain::KeyPair> exchange;
    std::vector<chain::KeyPair> clearing;
    std::vector<chain::KeyPair> settlement;
    chain::KeyPair operator_key;
};

/// Three validators per chain, 2-of-3 quorum, all derived from `seed_text`.
[[nodiscard]] CycleKeys derive_cycle_keys(std::string_view seed_text);

struct CycleConfig {
    std::int64_t lag_days = 0;
    ClearingMode mode = ClearingMode::Bilateral;
    NettingMode consortium_netting = NettingMode::Multilateral;
    SettleMode settle_mode = SettleMode::Dvp;
    std::string ccp_id = "CCP";
    std::string consortium_id = "CONSORTIUM";
    /// Without explicit holdings every participant is endowed with enough
    /// cash and assets to cover the whole trade set.
    std::optional<Holdings> holdings;
    std::uint32_t quorum = 2;
};

struct DayExposure {
    std::int64_t day = 0;
    Minor exposure = 0; ///< Σ notional still unsettled at the end of the day
    std::size_t pending = 0;
    std::size_t settled = 0;
    std::size_t failed = 0;
};

struct ChainStats {
    std::size_t blocks = 0;
    std::size_t txs = 0;
    bool valid = true;
};

struct CycleReport {
    std::vector<DayExposure> per_day;
    Minor total_exposure = 0; ///< Σ notional × days outstanding
    std::vector<SettlementInstruction> instructions;
    std::vector<PaymentInstruction> payments;
    std::vector<std::string> unpaid;
    std::vector<NetPosition> positions;
    ObligationTotals obligations;
    Holdings final_holdings;
    ChainStats exchange;
    ChainStats clearing;
    ChainStats settlement;

    [[nodiscard]] Json to_json() const;
};

/// Trades are block-verified on the exchange chain on their trade day,
/// cleared and netted on the clearing chain the same day, and settled on the
/// settlement chain at the end of trade_day + lag_days.
/// Throws Error(InvalidParams) for a negative lag or invalid trades.
[[nodiscard]] CycleReport run_cycle(std::vector<Trade> trades, const CycleConfig& config, const CycleKeys& keys);

} // namespace ledgerstack::settlement
