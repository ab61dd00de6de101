#include "ledgerstack/crypto.hpp"

#include <memory>

#include <openssl/evp.h>

#include "ledgerstack/error.hpp"

namespace ledgerstack::crypto {

namespace {

thread_local std::uint64_t g_sha256d_calls = 0;

struct PkeyDeleter {
    void operator()(EVP_PKEY* p) const noexcept { EVP_PKEY_free(p); }
};
struct MdCtxDeleter {
    void operator()(EVP_MD_CTX* p) const noexcept { EVP_MD_CTX_free(p); }
};
using PkeyPtr = std::unique_ptr<EVP_PKEY, PkeyDeleter>;
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;

PkeyPtr private_key(const SecretKey& secret) {
    PkeyPtr key(EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, secret.seed.data(), secret.seed.size()));
    if (!key) throw Error(ErrorCode::InvalidSeed, "ed25519 key construction failed");
    return key;
}

} // namespace

Hash32 Hash32::from_hex(std::string_view hex) {
    const Bytes raw = ledgerstack::from_hex(hex);
    if (raw.size() != 32) throw Error(ErrorCode::BadHex, "expected 64 hex characters");
    Hash32 h;
    std::copy(raw.begin(), raw.end(), h.bytes.begin());
    return h;
}

bool Hash32::is_zero() const noexcept {
    for (Byte b : bytes)
        if (b != 0) return false;
    return true;
}

Hash32 sha256(ByteView data) {
    Hash32 out;
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), out.bytes.data(), &len, EVP_sha256(), nullptr) != 1 || len != 32)
        throw std::runtime_error("EVP_Digest(sha256) failed");
    return out;
}

Hash32 sha256d(ByteView data) {
    ++g_sha256d_calls;
    const Hash32 first = sha256(data);
    return sha256(first.bytes);
}

Hash32 hash_pair(const Hash32& left, const Hash32& right) {
    std::array<Byte, 64> buf{};
    std::copy(left.bytes.begin(), left.bytes.end(), buf.begin());
    std::copy(right.bytes.begin(), right.bytes.end(), buf.begin() + 32);
    return sha256d(buf);
}

std::uint64_t sha256d_count() noexcept { return g_sha256d_calls; }

// ---------------------------------------------------------------------------

Hash32 merkle_root(std::span<const Hash32> leaves) {
    if (leaves.empty()) throw Error(ErrorCode::EmptyLeaves);
    std::vector<Hash32> level(leaves.begin(), leaves.end());
    while (level.size() > 1) {
        if (level.size() % 2 != 0) level.push_back(level.back());
        std::vector<Hash32> next;
        next.reserve(level.size() / 2);
        for (std::size_t i = 0; i < level.size(); i += 2) next.push_back(hash_pair(level[i], level[i + 1]));
        level = std::move(next);
    }
    return level.front();
}

MerkleProof merkle_prove(std::span<const Hash32> leaves, std::size_t index) {
    if (leaves.empty()) throw Error(ErrorCode::EmptyLeaves);
    if (index >= leaves.size())
        throw Error(ErrorCode::BadIndex, std::to_string(index) + " >= " + std::to_string(leaves.size()));

    MerkleProof proof{index, {}};
    std::vector<Hash32> level(leaves.begin(), leaves.end());
    std::size_t pos = index;
    while (level.size() > 1) {
        if (level.size() % 2 != 0) level.push_back(level.back());
        if (pos % 2 == 0)
            proof.path.push_back({level[pos + 1], Side::Right});
        else
            proof.path.push_back({level[pos - 1], Side::Left});

        std::vector<Hash32> next;
        next.reserve(level.size() / 2);
        for (std::size_t i = 0; i < level.size(); i += 2) next.push_back(hash_pair(level[i], level[i + 1]));
        level = std::move(next);
        pos /= 2;
    }
    return proof;
}

bool merkle_verify(const Hash32& root, const Hash32& leaf, const MerkleProof& proof) {
    Hash32 acc = leaf;
    std::size_t pos = proof.leaf_index;
    for (const auto& step : proof.path) {
        // The side must agree with the index bit, otherwise one proof could be
        // replayed for a different position.
        const bool is_right_child = (pos % 2) == 1;
        if (is_right_child != (step.side == Side::Left)) return false;
        acc = step.side == Side::Left ? hash_pair(step.sibling, acc) : hash_pair(acc, step.sibling);
        pos /= 2;
    }
    return pos == 0 && acc == root;
}

std::size_t merkle_depth(std::size_t leaf_count) noexcept {
    std::size_t depth = 0;
    for (std::size_t width = leaf_count; width > 1; width = (width + 1) / 2) ++depth;
    return depth;
}

bool merkle_verify(const Hash32& root, const Hash32& leaf, const MerkleProof& proof, std::size_t leaf_count) {
    if (leaf_count == 0 || proof.leaf_index >= leaf_count) return false;
    if (proof.path.size() != merkle_depth(leaf_count)) return false;
    return merkle_verify(root, leaf, proof);
}

// ---------------------------------------------------------------------------

KeyPair keygen(ByteView seed) {
    if (seed.size() != kSeedSize)
        throw Error(ErrorCode::InvalidSeed, "seed must be 32 bytes, got " + std::to_string(seed.size()));
    KeyPair kp;
    std::copy(seed.begin(), seed.end(), kp.secret.seed.begin());
    auto key = private_key(kp.secret);
    std::size_t len = kPublicKeySize;
    kp.public_key.bytes.resize(kPublicKeySize);
    if (EVP_PKEY_get_raw_public_key(key.get(), kp.public_key.bytes.data(), &len) != 1 || len != kPublicKeySize)
        throw Error(ErrorCode::InvalidSeed, "public key derivation failed");
    return kp;
}

KeyPair keygen_from_text(std::string_view text) { return keygen(sha256(as_bytes(text)).bytes); }

Signature sign(const SecretKey& secret, ByteView message) {
    auto key = private_key(secret);
    MdCtxPtr ctx(EVP_MD_CTX_new());
    if (!ctx || EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, key.get()) != 1)
        throw std::runtime_error("EVP_DigestSignInit failed");
    Signature sig;
    sig.bytes.resize(kSignatureSize);
    std::size_t len = kSignatureSize;
    if (EVP_DigestSign(ctx.get(), sig.bytes.data(), &len, message.data(), message.size()) != 1 ||
        len != kSignatureSize)
        throw std::runtime_error("EVP_DigestSign failed");
    return sig;
}

bool verify(const PublicKey& public_key, ByteView message, const Signature& signature) noexcept {
    if (public_key.bytes.size() != kPublicKeySize || signature.bytes.size() != kSignatureSize) return false;
    PkeyPtr key(EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, public_key.bytes.data(),
                                            public_key.bytes.size()));
    if (!key) return false;
    MdCtxPtr ctx(EVP_MD_CTX_new());
    if (!ctx || EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, key.get()) != 1) return false;
    return EVP_DigestVerify(ctx.get(), signature.bytes.data(), signature.bytes.size(), message.data(),
                            message.size()) == 1;
}

// ---------------------------------------------------------------------------

PeriodStamp stamp_period(std::span<const Bytes> items, const std::optional<PeriodStamp>& prev,
                         std::uint64_t wall_time) {
    if (items.empty()) throw Error(ErrorCode::EmptyLeaves, "period has no items");
    if (prev && wall_time < prev->wall_time)
        throw Error(ErrorCode::ClockRegression,
                    std::to_string(wall_time) + " < " + std::to_string(prev->wall_time));

    std::vector<Hash32> leaves;
    leaves.reserve(items.size());
    for (const auto& item : items) leaves.push_back(sha256d(item));

    PeriodStamp out;
    out.period_index = prev ? prev->period_index + 1 : 0;
    out.items_root = merkle_root(leaves);
    out.prev_stamp = prev ? prev->stamp : Hash32::zero();
    out.stamp = hash_pair(out.items_root, out.prev_stamp);
    out.wall_time = wall_time;
    return out;
}

std::optional<std::size_t> verify_stamp_chain(std::span<const std::vector<Bytes>> items_per_period,
                                              std::span<const PeriodStamp> stamps) {
    std::optional<PeriodStamp> prev;
    const std::size_t n = std::max(items_per_period.size(), stamps.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (i >= items_per_period.size() || i >= stamps.size()) return i;
        PeriodStamp expected;
        try {
            expected = stamp_period(items_per_period[i], prev, stamps[i].wall_time);
        } catch (const Error&) {
            return i;
        }
        if (expected != stamps[i]) return i;
        prev = stamps[i];
    }
    return std::nullopt;
}

Json to_json(const PeriodStamp& s) {
    return Json{{"period_index", s.period_index},
                {"items_root", s.items_root.hex()},
                {"prev_stamp", s.prev_stamp.hex()},
                {"stamp", s.stamp.hex()},
                {"wall_time", s.wall_time}};
}

} // namespace ledgerstack::crypto
