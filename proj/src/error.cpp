#include "ledgerstack/error.hpp"

namespace ledgerstack {

std::string_view error_name(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::EmptyLeaves: return "EmptyLeaves";
    case ErrorCode::BadIndex: return "BadIndex";
    case ErrorCode::ClockRegression: return "ClockRegression";
    case ErrorCode::InvalidSeed: return "InvalidSeed";
    case ErrorCode::BadHex: return "BadHex";
    case ErrorCode::DoubleSpend: return "DoubleSpend";
    case ErrorCode::BadTxSignature: return "BadTxSignature";
    case ErrorCode::QuorumNotMet: return "QuorumNotMet";
    case ErrorCode::UnknownValidator: return "UnknownValidator";
    case ErrorCode::BadApprovalSignature: return "BadApprovalSignature";
    case ErrorCode::StaleParent: return "StaleParent";
    case ErrorCode::NonceSpaceExhausted: return "NonceSpaceExhausted";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::WrongMode: return "WrongMode";
    case ErrorCode::PowTargetMissed: return "PowTargetMissed";
    case ErrorCode::InvalidBlock: return "InvalidBlock";
    case ErrorCode::EmptyChain: return "EmptyChain";
    case ErrorCode::ChainInvalid: return "ChainInvalid";
    case ErrorCode::UnknownEntity: return "UnknownEntity";
    case ErrorCode::AlreadyConstrained: return "AlreadyConstrained";
    case ErrorCode::SeparationOfDuty: return "SeparationOfDuty";
    case ErrorCode::UnknownCode: return "UnknownCode";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::OutOfSteps: return "OutOfSteps";
    case ErrorCode::ContractError: return "ContractError";
    case ErrorCode::Dead: return "Dead";
    case ErrorCode::AddressCollision: return "AddressCollision";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::CapMissing: return "CapMissing";
    case ErrorCode::SecondMain: return "SecondMain";
    case ErrorCode::NoMainAccount: return "NoMainAccount";
    case ErrorCode::Overdraft: return "Overdraft";
    case ErrorCode::NonPositiveAmount: return "NonPositiveAmount";
    case ErrorCode::UnknownAccount: return "UnknownAccount";
    case ErrorCode::UnknownBook: return "UnknownBook";
    case ErrorCode::Unbalanced: return "Unbalanced";
    case ErrorCode::InvalidProbability: return "InvalidProbability";
    case ErrorCode::FullyDepreciated: return "FullyDepreciated";
    case ErrorCode::CcpIsParty: return "CcpIsParty";
    case ErrorCode::AlreadyNovated: return "AlreadyNovated";
    case ErrorCode::NonPositiveQuantity: return "NonPositiveQuantity";
    case ErrorCode::InsufficientAsset: return "InsufficientAsset";
    case ErrorCode::InsufficientCash: return "InsufficientCash";
    case ErrorCode::WrongSettlementMode: return "WrongSettlementMode";
    case ErrorCode::NotPending: return "NotPending";
    case ErrorCode::DuplicateKey: return "DuplicateKey";
    case ErrorCode::InsufficientFunds: return "InsufficientFunds";
    case ErrorCode::FeeTooLarge: return "FeeTooLarge";
    case ErrorCode::NotParty: return "NotParty";
    case ErrorCode::BadSignature: return "BadSignature";
    case ErrorCode::AlreadyFinal: return "AlreadyFinal";
    case ErrorCode::ConflictingSignature: return "ConflictingSignature";
    case ErrorCode::NotReady: return "NotReady";
    case ErrorCode::UnknownContract: return "UnknownContract";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::AssertionFailed: return "AssertionFailed";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

} // namespace ledgerstack
