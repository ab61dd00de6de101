#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ledgerstack/bytes.hpp"
#include "ledgerstack/chain.hpp"
#include "ledgerstack/contracts.hpp"
#include "ledgerstack/crypto.hpp"

/*! \file
 * \brief Treasury single account.
 *
 * One main account consolidates the cash of every transaction account under
 * it. At end of day the zba_sweep contract plans the transfers back to main:
 * zero-balance, transit and correspondent accounts empty fully, imprest
 * accounts down to their cap, subsidiary accounts keep their balance and are
 * only netted in the consolidated position.
 */

namespace ledgerstack::tsa {

enum class AccountKind : std::uint8_t { Main, Subsidiary, Zba, Imprest, Transit, Correspondent };

[[nodiscard]] std::string_view to_string(AccountKind k) noexcept;
[[nodiscard]] AccountKind account_kind_from_string(std::string_view s);

struct TsaAccount {
    std::string id;
    AccountKind kind = AccountKind::Zba;
    Minor balance = 0;
    std::optional<Minor> cap; ///< imprest only
    std::string parent;       ///< main account id; empty for main
    std::string agency;       ///< owning agency; defaults to the account id
    bool operator==(const TsaAccount&) const = default;
};

struct BufferCheck {
    bool ok = true;
    Minor shortfall = 0;
};

struct DayReport {
    std::uint64_t day = 0; ///< the day that was closed
    Minor consolidated = 0;
    std::map<std::string, Minor> per_account;
    std::optional<Minor> shortfall;
    std::vector<contracts::SweepTransfer> transfers;
    [[nodiscard]] Json to_json() const;
};

/// Single-writer ledger. Every balance-changing call emits exactly one
/// transaction (a sweep emits its contract invoke, one per transfer and a
/// day close), so a replay of those transactions rebuilds the same state.
class TsaLedger {
public:
    explicit TsaLedger(chain::KeyPair operator_key, Minor buffer_requirement = 0);

    /// The main account must come first. Throws Error(DuplicateId | SecondMain
    /// | NoMainAccount | CapMissing | InvalidParams).
    void open_account(const std::string& id, AccountKind kind, std::optional<Minor> cap = std::nullopt,
                      std::string agency = {});

    /// Throws Error(UnknownAccount | NonPositiveAmount).
    void record_receipt(const std::string& id, Minor amount);
    /// Throws Error(UnknownAccount | NonPositiveAmount | Overdraft).
    void record_disbursement(const std::string& id, Minor amount);

    /// Runs the zba_sweep contract, applies its transfers and advances the day.
    /// Throws Error(NoMainAccount) before the main account exists.
    std::vector<contracts::SweepTransfer> end_of_day_sweep();

    void set_buffer_requirement(Minor amount);
    [[nodiscard]] BufferCheck check_buffer() const;
    [[nodiscard]] Minor consolidated_position() const;

    [[nodiscard]] const std::map<std::string, TsaAccount>& accounts() const noexcept { return accounts_; }
    [[nodiscard]] const TsaAccount& account(const std::string& id) const;
    [[nodiscard]] std::uint64_t day() const noexcept { return day_; }
    [[nodiscard]] Minor buffer_requirement() const noexcept { return buffer_; }
    [[nodiscard]] const std::string& main_id() const noexcept { return main_; }
    [[nodiscard]] const contracts::ContractState& contract_state() const noexcept { return contracts_; }
    [[nodiscard]] std::optional<crypto::Hash32> sweep_address() const noexcept { return sweep_address_; }

    [[nodiscard]] chain::TxQueue& transactions() noexcept { return txs_; }
    [[nodiscard]] const chain::TxQueue& transactions() const noexcept { return txs_; }

    /// Accounts, day, buffer and contract state; equal ledgers give equal JSON.
    [[nodiscard]] Json state_json() const;
    [[nodiscard]] DayReport report(std::vector<contracts::SweepTransfer> transfers = {}) const;

    /// Rebuilds a ledger from its "tsa" stream transactions in any order;
    /// they are applied by sequence number. Throws Error(ParseError) on a gap
    /// or a transaction that does not apply.
    [[nodiscard]] static TsaLedger replay(std::span<const chain::Transaction> txs, chain::KeyPair operator_key);

private:
    TsaAccount& mut(const std::string& id);
    void apply_transfer(const contracts::SweepTransfer& t);

    std::map<std::string, TsaAccount> accounts_;
    std::string main_;
    Minor buffer_ = 0;
    std::uint64_t day_ = 0;
    contracts::ContractState contracts_;
    std::optional<crypto::Hash32> sweep_address_;
    chain::TxQueue txs_;
};

// ---------------------------------------------------------------------------
// Chain placement

/// Centralized: one chain carries everything. Distributed: each agency keeps
/// its own sub-chain for receipts and disbursements; the main chain carries
/// account openings, sweeps and a daily period stamp per active agency.
enum class Architecture : std::uint8_t { Centralized, Distributed };

[[nodiscard]] std::string_view to_string(Architecture a) noexcept;
[[nodiscard]] Architecture architecture_from_string(std::string_view s);

struct TsaVerdict {
    bool valid = true;
    std::string detail;
    [[nodiscard]] Json to_json() const;
};

class TsaNetwork {
public:
    /// Validator and operator keys are derived from `seed_text`.
    TsaNetwork(Architecture arch, std::string_view seed_text, Minor buffer_requirement = 0);

    [[nodiscard]] TsaLedger& ledger() noexcept { return ledger_; }
    [[nodiscard]] const TsaLedger& ledger() const noexcept { return ledger_; }
    [[nodiscard]] Architecture architecture() const noexcept { return arch_; }

    /// Sweeps, then seals the day's transactions onto the chains.
    DayReport close_day(std::uint64_t wall_time);

    /// Seals pending transactions without sweeping (e.g. before an export).
    void flush(std::uint64_t wall_time);

    [[nodiscard]] const chain::Chain& main_chain() const noexcept { return main_; }
    [[nodiscard]] const std::map<std::string, chain::Chain>& sub_chains() const noexcept { return subs_; }
    [[nodiscard]] const std::map<std::string, std::vector<crypto::PeriodStamp>>& stamps() const noexcept { return stamps_; }

    /// All chains verify and every anchored stamp re-derives from its agency
    /// sub-chain.
    [[nodiscard]] TsaVerdict verify() const;

    /// The ledger rebuilt from the chains alone.
    [[nodiscard]] TsaLedger replay() const;

private:
    void seal(std::uint64_t wall_time);

    Architecture arch_;
    std::vector<chain::KeyPair> validators_;
    chain::KeyPair operator_key_;
    TsaLedger ledger_;
    chain::Chain main_;
    std::map<std::string, chain::Chain> subs_;
    std::map<std::string, std::vector<crypto::PeriodStamp>> stamps_;
    chain::TxQueue anchors_;
};

} // namespace ledgerstack::tsa
