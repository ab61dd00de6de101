#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ledgerstack {

/// Every failure the engine can raise. The names are stable: they are printed
/// by the CLI and matched by scenario `expected` blocks.
enum class ErrorCode {
    // crypto
    EmptyLeaves,
    BadIndex,
    ClockRegression,
    InvalidSeed,
    BadHex,
    // chain
    DoubleSpend,
    BadTxSignature,
    QuorumNotMet,
    UnknownValidator,
    BadApprovalSignature,
    StaleParent,
    NonceSpaceExhausted,
    InvalidConfig,
    WrongMode,
    PowTargetMissed,
    InvalidBlock,
    EmptyChain,
    ChainInvalid,
    // integrity
    UnknownEntity,
    AlreadyConstrained,
    SeparationOfDuty,
    // contracts
    UnknownCode,
    InvalidParams,
    OutOfSteps,
    ContractError,
    Dead,
    AddressCollision,
    // tsa
    DuplicateId,
    CapMissing,
    SecondMain,
    NoMainAccount,
    Overdraft,
    NonPositiveAmount,
    UnknownAccount,
    // bank ledger
    UnknownBook,
    Unbalanced,
    InvalidProbability,
    FullyDepreciated,
    // settlement
    CcpIsParty,
    AlreadyNovated,
    NonPositiveQuantity,
    InsufficientAsset,
    InsufficientCash,
    WrongSettlementMode,
    NotPending,
    // escrow
    DuplicateKey,
    InsufficientFunds,
    FeeTooLarge,
    NotParty,
    BadSignature,
    AlreadyFinal,
    ConflictingSignature,
    NotReady,
    UnknownContract,
    // scenario / io
    ParseError,
    AssertionFailed,
    IoError,
};

std::string_view error_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail)
        : std::runtime_error(std::string(error_name(code)) + (detail.empty() ? "" : ": " + detail)),
          code_(code),
          detail_(detail) {}

    explicit Error(ErrorCode code) : Error(code, std::string{}) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }
    [[nodiscard]] std::string_view name() const noexcept { return error_name(code_); }
    [[nodiscard]] const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

} // namespace ledgerstack
