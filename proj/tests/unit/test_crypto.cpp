#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "ledgerstack/bytes.hpp"
#include "ledgerstack/crypto.hpp"
#include "reference_sha256.hpp"
#include "test_util.hpp"

using namespace ledgerstack;
using namespace ledgerstack::crypto;

namespace {

Hash32 from_digest(const refsha::Digest& d) {
    Hash32 h;
    h.bytes = d;
    return h;
}

Hash32 ref_pair(const Hash32& l, const Hash32& r) {
    std::vector<std::uint8_t> cat(l.bytes.begin(), l.bytes.end());
    cat.insert(cat.end(), r.bytes.begin(), r.bytes.end());
    return from_digest(refsha::sha256d(cat.data(), cat.size()));
}

// Level-by-level root with the last node duplicated on odd levels, written
// against the reference hash only.
Hash32 ref_root(std::vector<Hash32> level) {
    while (level.size() > 1) {
        if (level.size() % 2) level.push_back(level.back());
        std::vector<Hash32> next;
        for (std::size_t i = 0; i < level.size(); i += 2) next.push_back(ref_pair(level[i], level[i + 1]));
        level = std::move(next);
    }
    return level.front();
}

std::vector<Hash32> random_leaves(std::mt19937_64& rng, std::size_t n) {
    std::vector<Hash32> out(n);
    for (auto& h : out)
        for (auto& b : h.bytes) b = static_cast<Byte>(rng());
    return out;
}

Bytes random_bytes(std::mt19937_64& rng, std::size_t n) {
    Bytes out(n);
    for (auto& b : out) b = static_cast<Byte>(rng());
    return out;
}

} // namespace

TEST_CASE("sha256 known answers") {
    CHECK(sha256(as_bytes("abc")).hex() == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256(ByteView{}).hex() == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256d("").hex() == "5df6e0e2761359d30a8275058e299fcc0381534545f55cf43e41983f5d4c9456");
    CHECK(sha256d("abc").hex() == refsha::hex(refsha::sha256d("abc")));
    CHECK(sha256d("abc") == sha256(sha256(as_bytes("abc")).view()));
}

TEST_CASE("sha256d agrees with the reference on lengths around block boundaries") {
    std::mt19937_64 rng(7);
    for (std::size_t len : {0, 1, 3, 31, 32, 55, 56, 57, 63, 64, 65, 119, 120, 127, 128, 129, 1000, 4096}) {
        const auto data = random_bytes(rng, len);
        CAPTURE(len);
        CHECK(sha256d(data).hex() == refsha::hex(refsha::sha256d(data.data(), data.size())));
        CHECK(sha256d(data) == sha256d(data));
    }
}

TEST_CASE("sha256d has no collisions on 10^4 distinct inputs") {
    std::set<Hash32> seen;
    for (int i = 0; i < 10000; ++i) seen.insert(sha256d("input-" + std::to_string(i)));
    CHECK(seen.size() == 10000);
}

TEST_CASE("Hash32 hex round trip") {
    const auto h = sha256d("x");
    CHECK(Hash32::from_hex(h.hex()) == h);
    CHECK(h.hex().size() == 64);
    CHECK(Hash32::zero().is_zero());
    CHECK_ERROR(Hash32::from_hex("abcd"), BadHex);
    CHECK_ERROR(from_hex("zz"), BadHex);
    CHECK_ERROR(from_hex("abc"), BadHex);
}

TEST_CASE("merkle_root small cases") {
    const auto h1 = sha256d("1"), h2 = sha256d("2"), h3 = sha256d("3");
    std::vector<Hash32> one{h1}, two{h1, h2}, three{h1, h2, h3};
    CHECK(merkle_root(one) == h1);
    CHECK(merkle_root(two) == ref_pair(h1, h2));
    CHECK(merkle_root(three) == ref_pair(ref_pair(h1, h2), ref_pair(h3, h3)));
    CHECK(hash_pair(h1, h2) == ref_pair(h1, h2));
    CHECK_ERROR(merkle_root(std::vector<Hash32>{}), EmptyLeaves);
}

TEST_CASE("merkle_root matches the reference tree for 1..40 leaves") {
    std::mt19937_64 rng(11);
    for (std::size_t n = 1; n <= 40; ++n) {
        const auto leaves = random_leaves(rng, n);
        CAPTURE(n);
        CHECK(merkle_root(leaves) == ref_root(leaves));
    }
}

TEST_CASE("merkle_root is sensitive to leaf order") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        auto leaves = random_leaves(rng, 8);
        const auto root = merkle_root(leaves);
        const auto i = rng() % 8;
        auto j = rng() % 8;
        if (j == i) j = (j + 1) % 8;
        std::swap(leaves[i], leaves[j]);
        CHECK(merkle_root(leaves) != root);
    }
}

TEST_CASE("merkle proofs verify for every index and have log depth") {
    std::mt19937_64 rng(17);
    for (std::size_t n = 1; n <= 33; ++n) {
        const auto leaves = random_leaves(rng, n);
        const auto root = merkle_root(leaves);
        for (std::size_t i = 0; i < n; ++i) {
            const auto proof = merkle_prove(leaves, i);
            CAPTURE(n);
            CAPTURE(i);
            CHECK(proof.leaf_index == i);
            CHECK(proof.path.size() == merkle_depth(n));
            CHECK(merkle_verify(root, leaves[i], proof));
            CHECK(merkle_verify(root, leaves[i], proof, n));
        }
    }
    CHECK(merkle_depth(1) == 0);
    CHECK(merkle_depth(2) == 1);
    CHECK(merkle_depth(5) == 3);
}

TEST_CASE("merkle proof shapes and errors") {
    const auto h = sha256d("only");
    std::vector<Hash32> one{h};
    const auto p = merkle_prove(one, 0);
    CHECK(p.path.empty());
    CHECK(merkle_verify(h, h, p));

    std::mt19937_64 rng(19);
    const auto four = random_leaves(rng, 4);
    const auto p2 = merkle_prove(four, 2);
    REQUIRE(p2.path.size() == 2);
    CHECK(p2.path[0].sibling == four[3]);
    CHECK(p2.path[0].side == Side::Right);
    CHECK(p2.path[1].sibling == ref_pair(four[0], four[1]));
    CHECK(p2.path[1].side == Side::Left);
    CHECK(ref_pair(p2.path[1].sibling, ref_pair(four[2], p2.path[0].sibling)) == merkle_root(four));

    CHECK_ERROR(merkle_prove(four, 4), BadIndex);
    CHECK_ERROR(merkle_prove(std::vector<Hash32>{}, 0), EmptyLeaves);
}

TEST_CASE("every single-bit flip of a 4-leaf proof fails") {
    std::mt19937_64 rng(23);
    const auto leaves = random_leaves(rng, 4);
    const auto root = merkle_root(leaves);
    for (std::size_t i = 0; i < 4; ++i) {
        const auto proof = merkle_prove(leaves, i);
        for (std::size_t step = 0; step < proof.path.size(); ++step) {
            for (std::size_t bit = 0; bit < 256; ++bit) {
                auto bad = proof;
                bad.path[step].sibling.bytes[bit / 8] ^= static_cast<Byte>(1u << (bit % 8));
                CHECK_FALSE(merkle_verify(root, leaves[i], bad));
            }
            auto flipped = proof;
            flipped.path[step].side = flipped.path[step].side == Side::Left ? Side::Right : Side::Left;
            CHECK_FALSE(merkle_verify(root, leaves[i], flipped));
        }
        for (std::size_t bit = 0; bit < 256; ++bit) {
            auto leaf = leaves[i];
            leaf.bytes[bit / 8] ^= static_cast<Byte>(1u << (bit % 8));
            CHECK_FALSE(merkle_verify(root, leaf, proof));
        }
    }
}

TEST_CASE("random forgeries against a 4-leaf tree never verify") {
    std::mt19937_64 rng(29);
    const auto leaves = random_leaves(rng, 4);
    const auto root = merkle_root(leaves);
    int accepted = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        MerkleProof forged;
        forged.leaf_index = rng() % 4;
        const auto depth = rng() % 3;
        for (std::size_t d = 0; d < depth; ++d) {
            // Mix honest siblings with random ones so that near misses are tried.
            Hash32 s = (rng() % 2) ? leaves[rng() % 4] : random_leaves(rng, 1)[0];
            forged.path.push_back({s, (rng() % 2) ? Side::Left : Side::Right});
        }
        auto leaf = random_leaves(rng, 1)[0];
        if (std::find(leaves.begin(), leaves.end(), leaf) != leaves.end()) continue;
        if (merkle_verify(root, leaf, forged, 4)) ++accepted;
    }
    CHECK(accepted == 0);

    // An interior node presented as a leaf with a short path is rejected once
    // the leaf count is pinned.
    MerkleProof short_path{0, {{ref_pair(leaves[2], leaves[3]), Side::Right}}};
    const auto interior = ref_pair(leaves[0], leaves[1]);
    CHECK(merkle_verify(root, interior, short_path));
    CHECK_FALSE(merkle_verify(root, interior, short_path, 4));
}

TEST_CASE("Ed25519 matches the RFC 8032 first test vector") {
    const auto kp = keygen(from_hex("9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60"));
    CHECK(kp.public_key.hex() == "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a");
    const auto sig = sign(kp.secret, ByteView{});
    CHECK(sig.hex() ==
          "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065224901555fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b");
    CHECK(verify(kp.public_key, ByteView{}, sig));
}

TEST_CASE("signatures round trip and reject the wrong message or key") {
    const auto a = keygen_from_text("alice");
    const auto b = keygen_from_text("bob");
    const auto m = to_bytes("pay bob 5");
    const auto sig = sign(a.secret, m);
    CHECK(sig.bytes.size() == kSignatureSize);
    CHECK(a.public_key.bytes.size() == kPublicKeySize);
    CHECK(verify(a.public_key, m, sig));
    CHECK_FALSE(verify(a.public_key, to_bytes("pay bob 6"), sig));
    CHECK_FALSE(verify(b.public_key, m, sig));
    CHECK(keygen_from_text("alice").public_key == a.public_key);
    CHECK(sign(a.secret, m) == sig);

    // Malformed inputs give false rather than aborting.
    CHECK_FALSE(verify(PublicKey{}, m, sig));
    CHECK_FALSE(verify(a.public_key, m, Signature{}));
    CHECK_FALSE(verify(PublicKey{Bytes(31, 1)}, m, sig));
    CHECK_FALSE(verify(a.public_key, m, Signature{Bytes(65, 0)}));
    CHECK_ERROR(keygen(Bytes(31, 0)), InvalidSeed);
    CHECK_ERROR(keygen(Bytes(33, 0)), InvalidSeed);
}

TEST_CASE("signatures fail on every single-bit flip of a short message") {
    const auto a = keygen_from_text("flip");
    const auto m = to_bytes("abcd");
    const auto sig = sign(a.secret, m);
    for (std::size_t bit = 0; bit < m.size() * 8; ++bit) {
        auto bad = m;
        bad[bit / 8] ^= static_cast<Byte>(1u << (bit % 8));
        CHECK_FALSE(verify(a.public_key, bad, sig));
    }
    for (std::size_t bit = 0; bit < sig.bytes.size() * 8; bit += 7) {
        auto bad = sig;
        bad.bytes[bit / 8] ^= static_cast<Byte>(1u << (bit % 8));
        CHECK_FALSE(verify(a.public_key, m, bad));
    }
}

TEST_CASE("period stamps") {
    const std::vector<Bytes> items{to_bytes("receipt 1")};
    const auto first = stamp_period(items, std::nullopt, 100);
    CHECK(first.period_index == 0);
    CHECK(first.prev_stamp.is_zero());
    CHECK(first.items_root == sha256d(items[0]));
    CHECK(first.stamp == ref_pair(sha256d(items[0]), Hash32::zero()));

    const auto second = stamp_period(items, first, 100);
    CHECK(second.period_index == 1);
    CHECK(second.prev_stamp == first.stamp);
    CHECK(second.stamp != first.stamp);

    CHECK_ERROR(stamp_period(items, second, 99), ClockRegression);
    CHECK_ERROR(stamp_period(std::vector<Bytes>{}, first, 200), EmptyLeaves);
}

TEST_CASE("a stamp chain re-derives from its items and localizes edits") {
    std::vector<std::vector<Bytes>> periods = {
        {to_bytes("a"), to_bytes("b")}, {to_bytes("c")}, {to_bytes("d"), to_bytes("e"), to_bytes("f")}};
    std::vector<PeriodStamp> stamps;
    std::optional<PeriodStamp> prev;
    for (std::size_t i = 0; i < periods.size(); ++i) {
        prev = stamp_period(periods[i], prev, 10 * i);
        stamps.push_back(*prev);
    }
    CHECK_FALSE(verify_stamp_chain(periods, stamps).has_value());

    auto edited = periods;
    edited[1][0] = to_bytes("C");
    CHECK(verify_stamp_chain(edited, stamps) == std::optional<std::size_t>(1));

    auto reordered = stamps;
    std::swap(reordered[1], reordered[2]);
    CHECK(verify_stamp_chain(periods, reordered).has_value());
}
