#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ledgerstack/bytes.hpp"
#include "ledgerstack/chain.hpp"
#include "ledgerstack/crypto.hpp"

/*! \file
 * \brief 2-of-3 escrow between a buyer, a seller and an arbiter.
 *
 * Each party signs a disposition (pay the seller, or refund the buyer) bound
 * to the escrow address. Two distinct parties agreeing on one disposition
 * finalize it. The arbiter earns its fee only when its signature is one of
 * the two.
 */

namespace ledgerstack::escrow {

using crypto::Hash32;
using crypto::KeyPair;
using crypto::PublicKey;
using crypto::Signature;

enum class State : std::uint8_t { Funded, Released, Refunded, Arbitrated };
enum class Disposition : std::uint8_t { ToSeller, ToBuyer };

[[nodiscard]] std::string_view to_string(State s) noexcept;
[[nodiscard]] std::string_view to_string(Disposition d) noexcept;
[[nodiscard]] Disposition disposition_from_string(std::string_view s);

struct DispositionSignature {
    PublicKey signer;
    Disposition disposition = Disposition::ToSeller;
    Signature signature;
    bool operator==(const DispositionSignature&) const = default;
};

struct Payout {
    PublicKey to;
    Minor amount = 0;
    std::string role; ///< buyer | seller | arbiter
    bool operator==(const Payout&) const = default;
};

struct EscrowContract {
    Hash32 address;
    PublicKey buyer;
    PublicKey seller;
    PublicKey arbiter;
    Minor amount = 0;
    Minor fee = 0;
    State state = State::Funded;
    std::vector<DispositionSignature> signatures;
    std::vector<Payout> payouts; ///< filled once terminal

    [[nodiscard]] bool terminal() const noexcept { return state != State::Funded; }
    [[nodiscard]] bool is_party(const PublicKey& k) const { return k == buyer || k == seller || k == arbiter; }
    [[nodiscard]] std::string role_of(const PublicKey& k) const;

    [[nodiscard]] Json to_json() const;
    [[nodiscard]] static EscrowContract from_json(const Json& j);
    bool operator==(const EscrowContract&) const = default;
};

/// The signed message: address ∥ "to_seller" or "to_buyer".
[[nodiscard]] Bytes disposition_message(const Hash32& address, Disposition d);
[[nodiscard]] Signature sign_disposition_message(const KeyPair& key, const Hash32& address, Disposition d);

/// Validates the terms only. Throws Error(DuplicateKey | NonPositiveAmount |
/// FeeTooLarge).
[[nodiscard]] EscrowContract make_escrow(const Hash32& address, PublicKey buyer, PublicKey seller, PublicKey arbiter,
                                         Minor amount, Minor fee);

/// {buyer, seller, arbiter, amount, fee} with keys as hex; what the escrow
/// address is derived from.
[[nodiscard]] Json escrow_terms_json(const PublicKey& buyer, const PublicKey& seller, const PublicKey& arbiter,
                                     Minor amount, Minor fee);

using Balances = std::map<PublicKey, Minor>;

/// Locks `amount` from the buyer's balance. Throws as make_escrow, plus
/// Error(InsufficientFunds); balances are untouched on failure.
[[nodiscard]] EscrowContract open_escrow(Balances& balances, const Hash32& address, PublicKey buyer, PublicKey seller,
                                         PublicKey arbiter, Minor amount, Minor fee);

/// Two distinct keys agree on some disposition.
[[nodiscard]] bool ready(const EscrowContract& c);

/// Records a signature and finalizes on the second agreeing key. Signing the
/// same disposition twice is a no-op. Throws Error(AlreadyFinal | NotParty |
/// BadSignature | ConflictingSignature); the contract is untouched on
/// failure. Returns the payouts when this call finalized, else empty.
std::vector<Payout> sign_disposition(EscrowContract& c, const PublicKey& signer, Disposition d, const Signature& sig);

/// Throws Error(AlreadyFinal | NotReady).
std::vector<Payout> finalize(EscrowContract& c);

void apply_payouts(Balances& balances, std::span<const Payout> payouts);

/// Balances plus contracts, with every accepted step published as a chain
/// transaction.
class EscrowBook {
public:
    explicit EscrowBook(KeyPair publisher);

    void credit(const PublicKey& who, Minor amount);
    [[nodiscard]] Minor balance(const PublicKey& who) const;
    [[nodiscard]] const Balances& balances() const noexcept { return balances_; }

    /// The address is derived from the terms and `height`, as for any
    /// catalog contract deployment.
    const EscrowContract& open(const PublicKey& buyer, const PublicKey& seller, const PublicKey& arbiter, Minor amount,
                               Minor fee, std::uint64_t height);
    std::vector<Payout> sign(const Hash32& address, const PublicKey& signer, Disposition d, const Signature& sig);
    std::vector<Payout> finalize(const Hash32& address);

    /// Throws Error(UnknownContract).
    [[nodiscard]] const EscrowContract& at(const Hash32& address) const;
    [[nodiscard]] const std::map<Hash32, EscrowContract>& contracts() const noexcept { return contracts_; }
    /// Amount locked across all non-terminal contracts.
    [[nodiscard]] Minor locked() const;

    [[nodiscard]] chain::TxQueue& transactions() noexcept { return txs_; }
    [[nodiscard]] const chain::TxQueue& transactions() const noexcept { return txs_; }

private:
    EscrowContract& mut(const Hash32& address);
    void publish_payouts(const EscrowContract& c, const std::vector<Payout>& payouts);

    Balances balances_;
    std::map<Hash32, EscrowContract> contracts_;
    chain::TxQueue txs_;
};

} // namespace ledgerstack::escrow
