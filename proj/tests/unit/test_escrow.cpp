#include <algorithm>
#include <array>
#include <optional>

#include "doctest.h"
#include "ledgerstack/contracts.hpp"
#include "ledgerstack/escrow.hpp"
#include "test_util.hpp"

using namespace ledgerstack;
using namespace ledgerstack::escrow;

namespace {

struct Parties {
    KeyPair buyer = crypto::keygen_from_text("escrow-test/buyer");
    KeyPair seller = crypto::keygen_from_text("escrow-test/seller");
    KeyPair arbiter = crypto::keygen_from_text("escrow-test/arbiter");
    KeyPair outsider = crypto::keygen_from_text("escrow-test/outsider");
};

const Parties& parties() {
    static const Parties p;
    return p;
}

const Hash32 kAddress = crypto::sha256d("escrow-test/address");

EscrowContract fresh(Minor amount = 1000, Minor fee = 30) {
    const auto& p = parties();
    return make_escrow(kAddress, p.buyer.public_key, p.seller.public_key, p.arbiter.public_key, amount, fee);
}

std::vector<Payout> sign_as(EscrowContract& c, const KeyPair& k, Disposition d) {
    return sign_disposition(c, k.public_key, d, sign_disposition_message(k, c.address, d));
}

Minor total(std::span<const Payout> ps) {
    Minor s = 0;
    for (const auto& p : ps) s += p.amount;
    return s;
}

} // namespace

TEST_CASE("terms") {
    const auto& p = parties();
    CHECK_ERROR(make_escrow(kAddress, p.buyer.public_key, p.buyer.public_key, p.arbiter.public_key, 10, 1), DuplicateKey);
    CHECK_ERROR(make_escrow(kAddress, p.buyer.public_key, p.seller.public_key, p.seller.public_key, 10, 1), DuplicateKey);
    CHECK_ERROR(make_escrow(kAddress, p.buyer.public_key, p.seller.public_key, p.arbiter.public_key, 0, 0),
                NonPositiveAmount);
    CHECK_ERROR(make_escrow(kAddress, p.buyer.public_key, p.seller.public_key, p.arbiter.public_key, 10, 10), FeeTooLarge);
    CHECK_ERROR(make_escrow(kAddress, p.buyer.public_key, p.seller.public_key, p.arbiter.public_key, 10, -1), FeeTooLarge);
    CHECK_NOTHROW((void)make_escrow(kAddress, p.buyer.public_key, p.seller.public_key, p.arbiter.public_key, 10, 9));

    Bytes expected(kAddress.bytes.begin(), kAddress.bytes.end());
    append(expected, as_bytes(std::string_view("to_buyer")));
    CHECK(disposition_message(kAddress, Disposition::ToBuyer) == expected);
    CHECK(disposition_from_string("to_seller") == Disposition::ToSeller);
    CHECK_ERROR(disposition_from_string("to_arbiter"), InvalidParams);

    const auto c = fresh();
    CHECK(EscrowContract::from_json(c.to_json()) == c);
}

TEST_CASE("the three paths") {
    const auto& p = parties();
    SUBCASE("buyer and seller release") {
        auto c = fresh();
        CHECK(sign_as(c, p.buyer, Disposition::ToSeller).empty());
        CHECK_FALSE(ready(c));
        const auto out = sign_as(c, p.seller, Disposition::ToSeller);
        CHECK(c.state == State::Released);
        REQUIRE(out.size() == 1);
        CHECK(out[0] == Payout{p.seller.public_key, 1000, "seller"});
    }
    SUBCASE("buyer and seller refund") {
        auto c = fresh();
        (void)sign_as(c, p.seller, Disposition::ToBuyer);
        const auto out = sign_as(c, p.buyer, Disposition::ToBuyer);
        CHECK(c.state == State::Refunded);
        CHECK(out == std::vector<Payout>{{p.buyer.public_key, 1000, "buyer"}});
    }
    SUBCASE("the arbiter breaks a dispute") {
        auto c = fresh();
        (void)sign_as(c, p.buyer, Disposition::ToBuyer);
        (void)sign_as(c, p.seller, Disposition::ToSeller);
        CHECK_FALSE(ready(c));
        CHECK_ERROR(finalize(c), NotReady);
        const auto out = sign_as(c, p.arbiter, Disposition::ToSeller);
        CHECK(c.state == State::Arbitrated);
        CHECK(out == std::vector<Payout>{{p.seller.public_key, 970, "seller"}, {p.arbiter.public_key, 30, "arbiter"}});
        CHECK(c.payouts == out);
    }
    SUBCASE("a zero fee arbitration pays only the winner") {
        auto c = fresh(500, 0);
        (void)sign_as(c, p.arbiter, Disposition::ToBuyer);
        const auto out = sign_as(c, p.buyer, Disposition::ToBuyer);
        CHECK(out == std::vector<Payout>{{p.buyer.public_key, 500, "buyer"}});
    }
}

TEST_CASE("signature checks leave the contract untouched") {
    const auto& p = parties();
    auto c = fresh();
    (void)sign_as(c, p.buyer, Disposition::ToSeller);
    const auto before = c;
    CHECK_ERROR(sign_as(c, p.outsider, Disposition::ToSeller), NotParty);
    CHECK_ERROR(sign_disposition(c, p.seller.public_key, Disposition::ToSeller,
                                 sign_disposition_message(p.seller, c.address, Disposition::ToBuyer)),
                BadSignature);
    CHECK_ERROR(sign_disposition(c, p.seller.public_key, Disposition::ToSeller,
                                 sign_disposition_message(p.arbiter, c.address, Disposition::ToSeller)),
                BadSignature);
    // A signature for another escrow does not carry over.
    CHECK_ERROR(sign_disposition(c, p.seller.public_key, Disposition::ToSeller,
                                 sign_disposition_message(p.seller, crypto::sha256d("other"), Disposition::ToSeller)),
                BadSignature);
    CHECK_ERROR(sign_as(c, p.buyer, Disposition::ToBuyer), ConflictingSignature);
    CHECK(sign_as(c, p.buyer, Disposition::ToSeller).empty());
    CHECK(c == before);
}

TEST_CASE("every signing order finalizes exactly at the second agreeing key") {
    const auto& p = parties();
    const std::array<const KeyPair*, 3> keys{&p.buyer, &p.seller, &p.arbiter};
    int sequences = 0;
    // Each party abstains (0), signs to_seller (1) or to_buyer (2); then every
    // order of the signers is tried.
    for (int code = 0; code < 27; ++code) {
        std::array<int, 3> choice{code % 3, code / 3 % 3, code / 9};
        std::vector<int> signers;
        for (int i = 0; i < 3; ++i)
            if (choice[i]) signers.push_back(i);
        std::sort(signers.begin(), signers.end());
        do {
            ++sequences;
            auto c = fresh();
            std::array<int, 3> count{0, 0, 0};
            std::optional<Disposition> decided;
            bool arbiter_in = false;
            std::array<bool, 3> signed_for_seller{}, signed_for_buyer{};
            std::vector<Payout> paid;
            for (int who : signers) {
                const auto d = choice[who] == 1 ? Disposition::ToSeller : Disposition::ToBuyer;
                if (decided) {
                    CHECK_ERROR(sign_as(c, *keys[who], d), AlreadyFinal);
                    continue;
                }
                auto out = sign_as(c, *keys[who], d);
                (d == Disposition::ToSeller ? signed_for_seller : signed_for_buyer)[who] = true;
                if (++count[choice[who]] == 2) {
                    decided = d;
                    const auto& side = d == Disposition::ToSeller ? signed_for_seller : signed_for_buyer;
                    arbiter_in = side[2];
                    paid = out;
                } else {
                    CHECK(out.empty());
                }
            }
            CHECK(c.terminal() == decided.has_value());
            CHECK(ready(c) == decided.has_value());
            if (!decided) {
                CHECK(c.state == State::Funded);
                CHECK_ERROR(finalize(c), NotReady);
                continue;
            }
            CHECK(total(paid) == 1000);
            const bool to_seller = *decided == Disposition::ToSeller;
            const auto& winner = to_seller ? p.seller.public_key : p.buyer.public_key;
            CHECK(paid[0].to == winner);
            if (arbiter_in) {
                CHECK(c.state == State::Arbitrated);
                CHECK(paid.size() == 2);
                CHECK(paid[1] == Payout{p.arbiter.public_key, 30, "arbiter"});
            } else {
                CHECK(c.state == (to_seller ? State::Released : State::Refunded));
                CHECK(paid.size() == 1);
            }
            CHECK_ERROR(finalize(c), AlreadyFinal);
        } while (std::next_permutation(signers.begin(), signers.end()));
    }
    // 1 + 3·2 + 3·4·2 + 8·6 orderings over the 27 choices
    CHECK(sequences == 79);
}

TEST_CASE("escrow book conserves funds") {
    const auto& p = parties();
    EscrowBook book(crypto::keygen_from_text("escrow-test/publisher"));
    book.credit(p.buyer.public_key, 5000);
    CHECK_ERROR(book.credit(p.buyer.public_key, 0), NonPositiveAmount);
    auto supply = [&] {
        Minor s = book.locked();
        for (const auto& [k, v] : book.balances()) s += v;
        return s;
    };
    const auto& c1 = book.open(p.buyer.public_key, p.seller.public_key, p.arbiter.public_key, 1000, 50, 0);
    const Hash32 a1 = c1.address;
    CHECK(a1 == contracts::derive_address("escrow", escrow_terms_json(p.buyer.public_key, p.seller.public_key,
                                                                       p.arbiter.public_key, 1000, 50), 0));
    CHECK_ERROR(book.open(p.buyer.public_key, p.seller.public_key, p.arbiter.public_key, 1000, 50, 0), AddressCollision);
    const Hash32 a2 = book.open(p.buyer.public_key, p.seller.public_key, p.arbiter.public_key, 1000, 50, 1).address;
    CHECK(book.balance(p.buyer.public_key) == 3000);
    CHECK(book.locked() == 2000);
    CHECK(supply() == 5000);
    CHECK_ERROR(book.open(p.buyer.public_key, p.seller.public_key, p.arbiter.public_key, 4000, 0, 2), InsufficientFunds);
    CHECK(book.balance(p.buyer.public_key) == 3000);
    CHECK_ERROR((void)book.at(crypto::sha256d("none")), UnknownContract);

    auto sign = [&](const Hash32& a, const KeyPair& k, Disposition d) {
        return book.sign(a, k.public_key, d, sign_disposition_message(k, a, d));
    };
    (void)sign(a1, p.buyer, Disposition::ToSeller);
    (void)sign(a1, p.buyer, Disposition::ToSeller); // repeated, not republished
    (void)sign(a1, p.seller, Disposition::ToSeller);
    CHECK(book.balance(p.seller.public_key) == 1000);
    CHECK(supply() == 5000);
    (void)sign(a2, p.seller, Disposition::ToBuyer);
    (void)sign(a2, p.arbiter, Disposition::ToBuyer);
    CHECK(book.balance(p.buyer.public_key) == 3950);
    CHECK(book.balance(p.arbiter.public_key) == 50);
    CHECK(book.locked() == 0);
    CHECK(supply() == 5000);
    CHECK_ERROR(book.finalize(a2), AlreadyFinal);
    CHECK_ERROR(sign(a2, p.buyer, Disposition::ToBuyer), AlreadyFinal);

    std::vector<chain::TxKind> kinds;
    for (const auto& tx : book.transactions().pending()) kinds.push_back(tx.kind);
    using K = chain::TxKind;
    CHECK(kinds == std::vector<K>{K::EscrowOpen, K::EscrowOpen, K::EscrowSign, K::EscrowSign, K::EscrowPayout,
                                  K::EscrowSign, K::EscrowSign, K::EscrowPayout});
}
