#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ledgerstack/bytes.hpp"
#include "ledgerstack/crypto.hpp"

namespace ledgerstack::contracts {

using crypto::Hash32;

/// Cost schedule shared by every catalog contract.
inline constexpr std::uint64_t kInvokeFixedCost = 10;
inline constexpr std::uint64_t kStorageAccessCost = 1;

struct StepBudget {
    std::uint64_t limit = 0;
    std::uint64_t used = 0;
};

struct StorageAccess {
    bool write = false;
    std::string key;
};

struct InvokeResult {
    Json result;
    std::uint64_t steps_used = 0;
    std::vector<StorageAccess> trace; ///< every metered storage access, in order
};

struct ContractInstance {
    Hash32 address;
    std::string code_id;
    std::map<std::string, Bytes> storage;
    bool alive = true;
    std::uint64_t deploy_height = 0;
    bool operator==(const ContractInstance&) const = default;
};

/// The set of deployed instances. The height feeds address derivation and is
/// set by whoever drives the chain.
class ContractState {
public:
    [[nodiscard]] std::uint64_t height() const noexcept { return height_; }
    void set_height(std::uint64_t h) noexcept { height_ = h; }

    [[nodiscard]] const std::map<Hash32, ContractInstance>& instances() const noexcept { return instances_; }
    [[nodiscard]] bool contains(const Hash32& address) const { return instances_.contains(address); }
    /// Throws Error(UnknownContract).
    [[nodiscard]] const ContractInstance& at(const Hash32& address) const;

    /// Canonical bytes of the whole state; equal states give equal bytes.
    [[nodiscard]] Bytes serialize() const;
    [[nodiscard]] Json to_json() const;

    bool operator==(const ContractState&) const = default;

private:
    friend Hash32 deploy(ContractState&, std::string_view, const Json&, StepBudget&);
    friend InvokeResult invoke(ContractState&, const Hash32&, std::string_view, const Json&, StepBudget&);

    std::uint64_t height_ = 0;
    std::map<Hash32, ContractInstance> instances_;
};

/// sha256d(code_id ∥ canonical init JSON ∥ height as 8 bytes big-endian).
[[nodiscard]] Hash32 derive_address(std::string_view code_id, const Json& init, std::uint64_t height);

/// Throws Error(UnknownCode | InvalidParams | OutOfSteps | AddressCollision);
/// state and budget are untouched on failure.
Hash32 deploy(ContractState& state, std::string_view code_id, const Json& init, StepBudget& budget);

/// Applies one method atomically. Throws Error(UnknownContract | Dead |
/// OutOfSteps | ContractError); state and budget are untouched on failure.
/// A handler's own errors surface as ContractError.
InvokeResult invoke(ContractState& state, const Hash32& address, std::string_view method, const Json& args,
                    StepBudget& budget);

// ---------------------------------------------------------------------------
// Catalog

struct MethodInfo {
    std::string name;
    std::string cost; ///< human-readable cost model
    /// Static upper bound on the steps one call may use, from its args.
    std::function<std::uint64_t(const Json& args)> max_steps;
};

struct CodeInfo {
    std::string code_id;
    std::string description;
    std::string deploy_cost;
    std::vector<MethodInfo> methods;
};

[[nodiscard]] const std::vector<CodeInfo>& catalog();
[[nodiscard]] const CodeInfo* find_code(std::string_view code_id);
[[nodiscard]] Json catalog_json();

// ---------------------------------------------------------------------------
// Sweep planning used by the zba_sweep contract.

struct SweepAccount {
    std::string id;
    std::string kind; ///< main | subsidiary | zba | imprest | transit | correspondent
    Minor balance = 0;
    Minor cap = 0;
};

struct SweepTransfer {
    std::string from;
    std::string to;
    Minor amount = 0;
    bool operator==(const SweepTransfer&) const = default;
};

/// zba, transit and correspondent balances move in full to main; imprest
/// balances move only their excess over cap; main and subsidiary stay put.
[[nodiscard]] std::vector<SweepTransfer> plan_sweep(const std::string& main_id, const std::vector<SweepAccount>& accounts);

} // namespace ledgerstack::contracts
