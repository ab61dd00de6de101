#include "ledgerstack/escrow.hpp"

#include <algorithm>
#include <set>

#include "ledgerstack/contracts.hpp"
#include "ledgerstack/error.hpp"
#include "ledgerstack/json_util.hpp"

namespace ledgerstack::escrow {

std::string_view to_string(State s) noexcept {
    switch (s) {
    case State::Funded: return "funded";
    case State::Released: return "released";
    case State::Refunded: return "refunded";
    case State::Arbitrated: return "arbitrated";
    }
    return "?";
}

std::string_view to_string(Disposition d) noexcept { return d == Disposition::ToSeller ? "to_seller" : "to_buyer"; }

Disposition disposition_from_string(std::string_view s) {
    if (s == "to_seller") return Disposition::ToSeller;
    if (s == "to_buyer") return Disposition::ToBuyer;
    throw Error(ErrorCode::InvalidParams, "disposition '" + std::string(s) + "'");
}

namespace {

State state_from_string(std::string_view s) {
    for (State st : {State::Funded, State::Released, State::Refunded, State::Arbitrated})
        if (to_string(st) == s) return st;
    throw Error(ErrorCode::ParseError, "escrow state '" + std::string(s) + "'");
}

std::set<PublicKey> signers_for(const EscrowContract& c, Disposition d) {
    std::set<PublicKey> out;
    for (const auto& s : c.signatures)
        if (s.disposition == d) out.insert(s.signer);
    return out;
}

} // namespace

std::string EscrowContract::role_of(const PublicKey& k) const {
    if (k == buyer) return "buyer";
    if (k == seller) return "seller";
    if (k == arbiter) return "arbiter";
    return "";
}

Json EscrowContract::to_json() const {
    Json sigs = Json::array();
    for (const auto& s : signatures)
        sigs.push_back({{"signer", s.signer.hex()}, {"disposition", to_string(s.disposition)}, {"signature", s.signature.hex()}});
    Json pays = Json::array();
    for (const auto& p : payouts) pays.push_back({{"to", p.to.hex()}, {"amount", p.amount}, {"role", p.role}});
    return Json{{"address", address.hex()}, {"buyer", buyer.hex()},     {"seller", seller.hex()},
                {"arbiter", arbiter.hex()}, {"amount", amount},         {"fee", fee},
                {"state", to_string(state)}, {"signatures", sigs},      {"payouts", pays}};
}

EscrowContract EscrowContract::from_json(const Json& j) {
    EscrowContract c;
    c.address = Hash32::from_hex(field<std::string>(j, "address"));
    c.buyer = PublicKey::from_hex(field<std::string>(j, "buyer"));
    c.seller = PublicKey::from_hex(field<std::string>(j, "seller"));
    c.arbiter = PublicKey::from_hex(field<std::string>(j, "arbiter"));
    c.amount = field<Minor>(j, "amount");
    c.fee = field<Minor>(j, "fee");
    c.state = state_from_string(field<std::string>(j, "state"));
    for (const auto& s : field_or<Json>(j, "signatures", Json::array()))
        c.signatures.push_back({PublicKey::from_hex(field<std::string>(s, "signer")),
                                disposition_from_string(field<std::string>(s, "disposition")),
                                Signature::from_hex(field<std::string>(s, "signature"))});
    for (const auto& p : field_or<Json>(j, "payouts", Json::array()))
        c.payouts.push_back({PublicKey::from_hex(field<std::string>(p, "to")), field<Minor>(p, "amount"),
                             field<std::string>(p, "role")});
    return c;
}

Bytes disposition_message(const Hash32& address, Disposition d) {
    Bytes msg(address.bytes.begin(), address.bytes.end());
    append(msg, as_bytes(to_string(d)));
    return msg;
}

Signature sign_disposition_message(const KeyPair& key, const Hash32& address, Disposition d) {
    return crypto::sign(key.secret, disposition_message(address, d));
}

EscrowContract make_escrow(const Hash32& address, PublicKey buyer, PublicKey seller, PublicKey arbiter, Minor amount,
                           Minor fee) {
    if (buyer == seller || buyer == arbiter || seller == arbiter)
        throw Error(ErrorCode::DuplicateKey, "buyer, seller and arbiter keys must differ");
    if (amount <= 0) throw Error(ErrorCode::NonPositiveAmount, "escrow amount " + std::to_string(amount));
    if (fee < 0 || fee >= amount)
        throw Error(ErrorCode::FeeTooLarge, "fee " + std::to_string(fee) + " against amount " + std::to_string(amount));
    EscrowContract c;
    c.address = address;
    c.buyer = std::move(buyer);
    c.seller = std::move(seller);
    c.arbiter = std::move(arbiter);
    c.amount = amount;
    c.fee = fee;
    return c;
}

Json escrow_terms_json(const PublicKey& buyer, const PublicKey& seller, const PublicKey& arbiter, Minor amount,
                       Minor fee) {
    return Json{{"buyer", buyer.hex()}, {"seller", seller.hex()}, {"arbiter", arbiter.hex()}, {"amount", amount}, {"fee", fee}};
}

EscrowContract open_escrow(Balances& balances, const Hash32& address, PublicKey buyer, PublicKey seller,
                           PublicKey arbiter, Minor amount, Minor fee) {
    auto c = make_escrow(address, std::move(buyer), std::move(seller), std::move(arbiter), amount, fee);
    auto it = balances.find(c.buyer);
    const Minor have = it == balances.end() ? 0 : it->second;
    if (have < amount)
        throw Error(ErrorCode::InsufficientFunds, "buyer holds " + std::to_string(have) + ", needs " + std::to_string(amount));
    it->second -= amount;
    return c;
}

bool ready(const EscrowContract& c) {
    return signers_for(c, Disposition::ToSeller).size() >= 2 || signers_for(c, Disposition::ToBuyer).size() >= 2;
}

std::vector<Payout> sign_disposition(EscrowContract& c, const PublicKey& signer, Disposition d, const Signature& sig) {
    if (c.terminal()) throw Error(ErrorCode::AlreadyFinal, std::string(to_string(c.state)));
    if (!c.is_party(signer)) throw Error(ErrorCode::NotParty, signer.hex());
    if (!crypto::verify(signer, disposition_message(c.address, d), sig))
        throw Error(ErrorCode::BadSignature, c.role_of(signer) + " on " + std::string(to_string(d)));
    for (const auto& s : c.signatures) {
        if (s.signer != signer) continue;
        if (s.disposition == d) return {};
        throw Error(ErrorCode::ConflictingSignature, c.role_of(signer) + " already signed " +
                                                         std::string(to_string(s.disposition)));
    }
    c.signatures.push_back({signer, d, sig});
    if (ready(c)) return finalize(c);
    return {};
}

std::vector<Payout> finalize(EscrowContract& c) {
    if (c.terminal()) throw Error(ErrorCode::AlreadyFinal, std::string(to_string(c.state)));
    for (Disposition d : {Disposition::ToSeller, Disposition::ToBuyer}) {
        const auto signers = signers_for(c, d);
        if (signers.size() < 2) continue;
        const bool to_seller = d == Disposition::ToSeller;
        const PublicKey& winner = to_seller ? c.seller : c.buyer;
        const std::string role = to_seller ? "seller" : "buyer";
        std::vector<Payout> out;
        if (signers.contains(c.arbiter)) {
            out.push_back({winner, c.amount - c.fee, role});
            if (c.fee > 0) out.push_back({c.arbiter, c.fee, "arbiter"});
            c.state = State::Arbitrated;
        } else {
            out.push_back({winner, c.amount, role});
            c.state = to_seller ? State::Released : State::Refunded;
        }
        c.payouts = out;
        return out;
    }
    throw Error(ErrorCode::NotReady, "no two parties agree yet");
}

void apply_payouts(Balances& balances, std::span<const Payout> payouts) {
    for (const auto& p : payouts) balances[p.to] += p.amount;
}

// ---------------------------------------------------------------------------

EscrowBook::EscrowBook(KeyPair publisher) : txs_("escrow", std::move(publisher)) {}

void EscrowBook::credit(const PublicKey& who, Minor amount) {
    if (amount <= 0) throw Error(ErrorCode::NonPositiveAmount, "credit " + std::to_string(amount));
    balances_[who] += amount;
}

Minor EscrowBook::balance(const PublicKey& who) const {
    auto it = balances_.find(who);
    return it == balances_.end() ? 0 : it->second;
}

const EscrowContract& EscrowBook::open(const PublicKey& buyer, const PublicKey& seller, const PublicKey& arbiter,
                                       Minor amount, Minor fee, std::uint64_t height) {
    const Json terms = escrow_terms_json(buyer, seller, arbiter, amount, fee);
    const Hash32 address = contracts::derive_address("escrow", terms, height);
    if (contracts_.contains(address)) throw Error(ErrorCode::AddressCollision, address.hex());
    auto c = open_escrow(balances_, address, buyer, seller, arbiter, amount, fee);
    Json payload = terms;
    payload["address"] = address.hex();
    payload["height"] = height;
    txs_.emit(chain::TxKind::EscrowOpen, std::move(payload));
    return contracts_.emplace(address, std::move(c)).first->second;
}

EscrowContract& EscrowBook::mut(const Hash32& address) {
    auto it = contracts_.find(address);
    if (it == contracts_.end()) throw Error(ErrorCode::UnknownContract, address.hex());
    return it->second;
}

const EscrowContract& EscrowBook::at(const Hash32& address) const {
    auto it = contracts_.find(address);
    if (it == contracts_.end()) throw Error(ErrorCode::UnknownContract, address.hex());
    return it->second;
}

Minor EscrowBook::locked() const {
    Minor sum = 0;
    for (const auto& [a, c] : contracts_)
        if (!c.terminal()) sum += c.amount;
    return sum;
}

void EscrowBook::publish_payouts(const EscrowContract& c, const std::vector<Payout>& payouts) {
    apply_payouts(balances_, payouts);
    Json list = Json::array();
    for (const auto& p : payouts) list.push_back({{"to", p.to.hex()}, {"amount", p.amount}, {"role", p.role}});
    txs_.emit(chain::TxKind::EscrowPayout,
              Json{{"address", c.address.hex()}, {"state", to_string(c.state)}, {"payouts", list}});
}

std::vector<Payout> EscrowBook::sign(const Hash32& address, const PublicKey& signer, Disposition d, const Signature& sig) {
    EscrowContract& c = mut(address);
    const auto before = c.signatures.size();
    auto payouts = sign_disposition(c, signer, d, sig);
    if (c.signatures.size() != before)
        txs_.emit(chain::TxKind::EscrowSign, Json{{"address", address.hex()},
                                                  {"signer", signer.hex()},
                                                  {"disposition", to_string(d)},
                                                  {"signature", sig.hex()}});
    if (!payouts.empty()) publish_payouts(c, payouts);
    return payouts;
}

std::vector<Payout> EscrowBook::finalize(const Hash32& address) {
    EscrowContract& c = mut(address);
    auto payouts = escrow::finalize(c);
    publish_payouts(c, payouts);
    return payouts;
}

} // namespace ledgerstack::escrow
