#include <algorithm>
#include <bit>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "ledgerstack/chain.hpp"
#include "reference_sha256.hpp"
#include "test_util.hpp"

using namespace ledgerstack;
using namespace ledgerstack::chain;
using crypto::Hash32;

namespace {

struct Fixture {
    std::vector<KeyPair> validators;
    KeyPair author = crypto::keygen_from_text("chain-test/author");
    KeyPair outsider = crypto::keygen_from_text("chain-test/outsider");
    ChainConfig config;

    explicit Fixture(std::uint32_t m = 2, std::uint32_t n = 3) {
        for (std::uint32_t i = 0; i < n; ++i) {
            validators.push_back(crypto::keygen_from_text("chain-test/v" + std::to_string(i)));
            config.validators.push_back(validators.back().public_key);
        }
        config.quorum_m = m;
    }

    Transaction tx(int n) const { return make_transaction(TxKind::Generic, Json{{"n", n}}, author); }

    std::vector<Transaction> txs(int first, int count) const {
        std::vector<Transaction> out;
        for (int i = 0; i < count; ++i) out.push_back(tx(first + i));
        return out;
    }

    Chain build(std::size_t blocks, int txs_per_block = 3) const {
        Chain c(config);
        for (std::size_t h = 0; h < blocks; ++h)
            seal_block(c, txs(static_cast<int>(h) * 100, txs_per_block), 10 * (h + 1), validators);
        return c;
    }
};

ChainConfig pow_config(std::uint32_t bits) {
    ChainConfig c;
    c.mode = ConsensusMode::Pow;
    c.pow_target_bits = bits;
    return c;
}

} // namespace

TEST_CASE("header serialization layout") {
    BlockHeader h;
    const auto genesis = serialize_header(h);
    REQUIRE(genesis.size() == 92);
    CHECK(std::all_of(genesis.begin(), genesis.begin() + 8, [](Byte b) { return b == 0; }));

    h.height = 1;
    const auto one = serialize_header(h);
    CHECK(Bytes(one.begin(), one.begin() + 8) == Bytes{0, 0, 0, 0, 0, 0, 0, 1});

    BlockHeader a = h, b = h;
    a.nonce = 5;
    b.nonce = 6;
    const auto sa = serialize_header(a), sb = serialize_header(b);
    CHECK(Bytes(sa.begin(), sa.begin() + 84) == Bytes(sb.begin(), sb.begin() + 84));
    CHECK(Bytes(sa.begin() + 84, sa.end()) != Bytes(sb.begin() + 84, sb.end()));

    BlockHeader full{0x0102030405060708, crypto::sha256d("p"), crypto::sha256d("m"), 0x1122334455667788, 0xaabbccdd, 9};
    const auto bytes = serialize_header(full);
    CHECK(bytes[0] == 0x01);
    CHECK(bytes[7] == 0x08);
    CHECK(bytes[72] == 0x11);
    CHECK(bytes[80] == 0xaa);
    CHECK(bytes[91] == 9);
    CHECK(deserialize_header(bytes) == full);
    CHECK_ERROR(deserialize_header(Bytes(91, 0)), InvalidBlock);

    // Block id is the reference double hash of the 92 bytes.
    CHECK(header_id(full).hex() == refsha::hex(refsha::sha256d(bytes.data(), bytes.size())));
}

TEST_CASE("transaction ids and signatures") {
    Fixture f;
    const auto t = f.tx(1);
    CHECK(t.signature_valid());
    CHECK(t.payload == "{\"n\":1}");
    CHECK(t.id() == crypto::sha256d(t.signing_bytes()));
    CHECK(f.tx(1).id() == t.id());
    CHECK(f.tx(2).id() != t.id());

    // Key order in the payload does not change the canonical bytes.
    const auto x = make_transaction(TxKind::Generic, Json::parse(R"({"b":1,"a":2})"), f.author);
    const auto y = make_transaction(TxKind::Generic, Json::parse(R"({"a":2,"b":1})"), f.author);
    CHECK(x.id() == y.id());

    auto forged = t;
    forged.payload = "{\"n\":2}";
    CHECK_FALSE(forged.signature_valid());
    CHECK(to_string(TxKind::TsaReceipt) == "tsa_receipt");
    CHECK(tx_kind_from_string("escrow_payout") == TxKind::EscrowPayout);
    CHECK_ERROR(tx_kind_from_string("nope"), ParseError);
    CHECK(transaction_from_json(to_json(t)) == t);
}

TEST_CASE("build_block") {
    Fixture f;
    const auto one = build_block({f.tx(1)}, Hash32::zero(), 0, 5);
    CHECK(one.header.merkle_root == f.tx(1).id());
    CHECK(one.header.tx_count == 1);
    CHECK(one.header.nonce == 0);
    CHECK(one.approvals.empty());

    const auto three = build_block(f.txs(0, 3), Hash32::zero(), 0, 5);
    const std::vector<Hash32> ids{f.tx(0).id(), f.tx(1).id(), f.tx(2).id()};
    CHECK(three.header.merkle_root == crypto::hash_pair(crypto::hash_pair(ids[0], ids[1]), crypto::hash_pair(ids[2], ids[2])));

    CHECK(build_block({}, Hash32::zero(), 0, 5).header.merkle_root.is_zero());
    CHECK_ERROR(build_block({f.tx(1), f.tx(1)}, Hash32::zero(), 0, 5), DoubleSpend);
    auto bad = f.tx(3);
    bad.signature.bytes[0] ^= 1;
    CHECK_ERROR(build_block({bad}, Hash32::zero(), 0, 5), BadTxSignature);
    std::set<Hash32> history{f.tx(4).id()};
    CHECK_ERROR(build_block({f.tx(4)}, Hash32::zero(), 0, 5, &history), DoubleSpend);
}

TEST_CASE("config validation") {
    Fixture f;
    ChainConfig c = f.config;
    c.quorum_m = 0;
    CHECK_ERROR(c.validate(), InvalidConfig);
    c.quorum_m = 4;
    CHECK_ERROR(c.validate(), InvalidConfig);
    c.quorum_m = 3;
    CHECK_NOTHROW(c.validate());
    c.validators.push_back(c.validators[0]);
    CHECK_ERROR(c.validate(), InvalidConfig);
    CHECK_ERROR(Chain(ChainConfig{}), InvalidConfig);
    CHECK_ERROR(pow_config(0).validate(), InvalidConfig);
    CHECK_ERROR(pow_config(25).validate(), InvalidConfig);
    CHECK_NOTHROW(pow_config(24).validate());
    CHECK(ChainConfig::from_json(f.config.to_json()).to_json() == f.config.to_json());
}

TEST_CASE("quorum append") {
    Fixture f;
    Chain c(f.config);
    auto b0 = c.build_next(f.txs(0, 2), 10);

    SUBCASE("two distinct validators") {
        c.approve_and_append(b0, {approve(b0, f.validators[0]), approve(b0, f.validators[2])});
        CHECK(c.size() == 1);
        CHECK(c.tip_id() == b0.id());
    }
    SUBCASE("the same validator twice") {
        CHECK_ERROR(c.approve_and_append(b0, {approve(b0, f.validators[1]), approve(b0, f.validators[1])}), QuorumNotMet);
        CHECK(c.empty());
    }
    SUBCASE("a key outside the validator set") {
        CHECK_ERROR(c.approve_and_append(b0, {approve(b0, f.validators[0]), approve(b0, f.outsider)}), UnknownValidator);
        CHECK(c.empty());
    }
    SUBCASE("a bad approval signature") {
        auto a = approve(b0, f.validators[1]);
        a.signature.bytes[5] ^= 0x40;
        CHECK_ERROR(c.approve_and_append(b0, {approve(b0, f.validators[0]), a}), BadApprovalSignature);
        CHECK(c.empty());
    }
    SUBCASE("a stale parent") {
        c.approve_and_append(b0, {approve(b0, f.validators[0]), approve(b0, f.validators[1])});
        auto fork = build_block(f.txs(50, 1), Hash32::zero(), 0, 20);
        CHECK_ERROR(c.approve_and_append(fork, {approve(fork, f.validators[0]), approve(fork, f.validators[1])}), StaleParent);
        auto wrong_height = build_block(f.txs(60, 1), c.tip_id(), 5, 20);
        CHECK_ERROR(c.approve_and_append(wrong_height, {}), StaleParent);
        CHECK(c.size() == 1);
    }
    SUBCASE("clock regression and replays") {
        c.approve_and_append(b0, {approve(b0, f.validators[0]), approve(b0, f.validators[1])});
        auto early = c.build_next(f.txs(70, 1), 9);
        CHECK_ERROR(c.approve_and_append(early, {approve(early, f.validators[0]), approve(early, f.validators[1])}),
                    ClockRegression);
        CHECK_ERROR(c.build_next({f.tx(0)}, 20), DoubleSpend);
    }
    SUBCASE("pow blocks are refused") {
        CHECK_ERROR(c.append_mined(b0), WrongMode);
    }
}

TEST_CASE("quorum monotonicity and append-only growth") {
    Fixture f(2, 4);
    Chain c(f.config);
    for (int h = 0; h < 6; ++h) {
        auto b = c.build_next(f.txs(h * 10, 2), 10 + h);
        // Every superset of a sufficient approval set is also accepted.
        for (unsigned mask = 0; mask < 16; ++mask) {
            std::vector<Approval> approvals;
            for (unsigned v = 0; v < 4; ++v)
                if (mask & (1u << v)) approvals.push_back(approve(b, f.validators[v]));
            Chain trial = c;
            const bool ok = !testutil::error_of([&] { trial.approve_and_append(b, approvals); }).has_value();
            CHECK(ok == (std::popcount(mask) >= 2));
        }
        const std::vector<Block> before(c.blocks().begin(), c.blocks().end());
        c.approve_and_append(b, {approve(b, f.validators[h % 4]), approve(b, f.validators[(h + 1) % 4])});
        REQUIRE(c.size() == before.size() + 1);
        CHECK(std::equal(before.begin(), before.end(), c.blocks().begin()));
    }
    CHECK(c.verify().valid);
}

TEST_CASE("proof of work") {
    BlockHeader h;
    h.wall_time = 1;
    CHECK(mine_pow(h, 0) == 0);
    const auto n8 = mine_pow(h, 8);
    h.nonce = n8;
    CHECK(header_id(h).bytes[0] == 0);
    // Nonces found by an independent brute force over the same 92 bytes.
    h.nonce = 0;
    CHECK(n8 == 112);
    CHECK(mine_pow(h, 12) == 535);
    h.wall_time = 7;
    CHECK(mine_pow(h, 16) == 62718);

    Hash32 z;
    CHECK(leading_zero_bits(z) == 256);
    z.bytes[0] = 0x10;
    CHECK(leading_zero_bits(z) == 3);

    Chain c(pow_config(10));
    seal_block(c, {}, 1, {});
    seal_block(c, {make_transaction(TxKind::Generic, Json{{"k", 1}}, crypto::keygen_from_text("m"))}, 2, {});
    CHECK(c.verify().valid);
    auto under = c.build_next({}, 3);
    for (std::uint64_t n = 0;; ++n) {
        under.header.nonce = n;
        if (!meets_target(under.header, 10)) break;
    }
    CHECK_ERROR(c.append_mined(under), PowTargetMissed);
    CHECK_ERROR(c.approve_and_append(under, {}), WrongMode);

    // Verifying a mined block costs exactly one double hash of its header.
    const auto& mined = c.blocks()[1].header;
    const auto before = crypto::sha256d_count();
    CHECK(meets_target(mined, 10));
    CHECK(crypto::sha256d_count() - before == 1);
}

TEST_CASE("verify_chain localizes tampering") {
    Fixture f;
    const Chain c = f.build(3);
    CHECK(c.verify().valid);

    std::vector<Block> blocks(c.blocks().begin(), c.blocks().end());
    SUBCASE("a payload byte in block 1") {
        blocks[1].txs[0].payload[2] ^= 1;
        const auto v = verify_chain(blocks, f.config);
        CHECK_FALSE(v.valid);
        CHECK(v.first_bad_height == 1);
        CHECK(v.reason == Failure::MerkleMismatch);
    }
    SUBCASE("block 1 replaced by a fully re-approved variant") {
        auto variant = build_block(f.txs(900, 2), blocks[0].id(), 1, blocks[1].header.wall_time);
        variant.approvals = {approve(variant, f.validators[0]), approve(variant, f.validators[1])};
        blocks[1] = variant;
        const auto v = verify_chain(blocks, f.config);
        CHECK(v.first_bad_height == 2);
        CHECK(v.reason == Failure::LinkBroken);
    }
    SUBCASE("a dropped approval") {
        blocks[2].approvals.resize(1);
        const auto v = verify_chain(blocks, f.config);
        CHECK(v.first_bad_height == 2);
        CHECK(v.reason == Failure::QuorumNotMet);
    }
    SUBCASE("a transaction replayed in a later block") {
        auto replay = build_block({blocks[0].txs[0]}, blocks[1].id(), 2, blocks[2].header.wall_time);
        replay.approvals = {approve(replay, f.validators[0]), approve(replay, f.validators[1])};
        blocks[2] = replay;
        const auto v = verify_chain(blocks, f.config);
        CHECK(v.first_bad_height == 2);
        CHECK(v.reason == Failure::DuplicateTx);
    }
    SUBCASE("a forged signature with a consistent merkle root") {
        auto t = f.tx(555);
        t.signature = crypto::sign(f.outsider.secret, t.signing_bytes());
        auto b = build_block({}, blocks[1].id(), 2, blocks[2].header.wall_time);
        b.txs = {t};
        b.header.tx_count = 1;
        b.header.merkle_root = t.id();
        b.approvals = {approve(b, f.validators[0]), approve(b, f.validators[1])};
        blocks[2] = b;
        CHECK(verify_chain(blocks, f.config).reason == Failure::BadTxSignature);
    }
}

TEST_CASE("tamper localization on random single-byte mutations") {
    Fixture f;
    const Chain c = f.build(10, 2);
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<Block> blocks(c.blocks().begin(), c.blocks().end());
        const auto k = rng() % blocks.size();
        auto& tx = blocks[k].txs[rng() % blocks[k].txs.size()];
        const auto pick = rng() % 3;
        if (pick == 0) tx.payload[rng() % tx.payload.size()] ^= static_cast<char>(1 + rng() % 255);
        else if (pick == 1) tx.signature.bytes[rng() % tx.signature.bytes.size()] ^= static_cast<Byte>(1 + rng() % 255);
        else tx.author.bytes[rng() % tx.author.bytes.size()] ^= static_cast<Byte>(1 + rng() % 255);
        const auto v = verify_chain(blocks, f.config);
        CAPTURE(trial);
        CHECK_FALSE(v.valid);
        CHECK(v.first_bad_height <= k);
    }
}

TEST_CASE("export and import round trip") {
    Fixture f;
    const Chain c = f.build(5);
    std::stringstream s;
    export_chain(c.blocks(), s);
    const auto text = s.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);

    std::istringstream in(text);
    const auto imported = import_chain(in, f.config);
    CHECK(imported.verdict.valid);
    REQUIRE(imported.blocks.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(imported.blocks[i].id() == c.blocks()[i].id());
    CHECK(std::equal(imported.blocks.begin(), imported.blocks.end(), c.blocks().begin()));
    CHECK(Chain::from_blocks(f.config, imported.blocks).tip_id() == c.tip_id());

    std::istringstream empty("");
    CHECK_ERROR(import_chain(empty, f.config), EmptyChain);
    std::istringstream junk("{not json\n");
    CHECK_ERROR(import_chain(junk, f.config), ParseError);

    // A changed merkle root changes the recomputed id, which no longer matches
    // the stated block id or the next block's link.
    auto lines = text;
    const auto pos = lines.find("\"merkle_root\":\"", lines.find('\n') + 1) + 15;
    lines[pos] = lines[pos] == '0' ? '1' : '0';
    std::istringstream tampered(lines);
    const auto bad = import_chain(tampered, f.config);
    CHECK_FALSE(bad.verdict.valid);
    CHECK(bad.verdict.first_bad_height == 1);
    CHECK_ERROR(Chain::from_blocks(f.config, bad.blocks), ChainInvalid);
}

TEST_CASE("TxQueue numbers its stream") {
    TxQueue q("tsa", crypto::keygen_from_text("queue"));
    const auto& a = q.emit(TxKind::TsaReceipt, Json{{"amount", 5}});
    CHECK(a.payload_json()["seq"] == 0);
    CHECK(a.payload_json()["stream"] == "tsa");
    const auto id_a = a.id();
    const auto b_id = q.emit(TxKind::TsaReceipt, Json{{"amount", 5}}).id();
    CHECK(id_a != b_id);
    CHECK(q.pending().size() == 2);
    CHECK(q.emitted() == 2);
    const auto drained = q.drain();
    CHECK(drained.size() == 2);
    CHECK(q.pending().empty());
    q.resume_at(10);
    CHECK(q.emit(TxKind::Generic, Json::object()).payload_json()["seq"] == 10);
}
