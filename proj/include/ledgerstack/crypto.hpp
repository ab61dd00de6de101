#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ledgerstack/bytes.hpp"

namespace ledgerstack::crypto {

/// A 32-byte digest. Rendered as 64 lowercase hex characters everywhere.
struct Hash32 {
    std::array<Byte, 32> bytes{};

    [[nodiscard]] static Hash32 zero() noexcept { return {}; }
    [[nodiscard]] static Hash32 from_hex(std::string_view hex);

    [[nodiscard]] std::string hex() const { return to_hex(bytes); }
    [[nodiscard]] ByteView view() const noexcept { return bytes; }
    [[nodiscard]] bool is_zero() const noexcept;

    auto operator<=>(const Hash32&) const = default;
};

[[nodiscard]] Hash32 sha256(ByteView data);
[[nodiscard]] Hash32 sha256d(ByteView data);
[[nodiscard]] inline Hash32 sha256d(std::string_view data) { return sha256d(as_bytes(data)); }

/// sha256d(left ∥ right), the interior-node rule of the Merkle tree.
[[nodiscard]] Hash32 hash_pair(const Hash32& left, const Hash32& right);

/// Number of sha256d evaluations performed on the calling thread. Tests use it
/// to pin verification cost.
[[nodiscard]] std::uint64_t sha256d_count() noexcept;

// ---------------------------------------------------------------------------
// Merkle trees. Odd levels duplicate their last node.

enum class Side : std::uint8_t { Left, Right };

struct MerkleStep {
    Hash32 sibling;
    Side side; ///< which side the sibling sits on
    bool operator==(const MerkleStep&) const = default;
};

struct MerkleProof {
    std::size_t leaf_index = 0;
    std::vector<MerkleStep> path;
    bool operator==(const MerkleProof&) const = default;
};

/// Throws Error(EmptyLeaves) on an empty list.
[[nodiscard]] Hash32 merkle_root(std::span<const Hash32> leaves);

/// Throws Error(EmptyLeaves) or Error(BadIndex).
[[nodiscard]] MerkleProof merkle_prove(std::span<const Hash32> leaves, std::size_t index);

[[nodiscard]] bool merkle_verify(const Hash32& root, const Hash32& leaf, const MerkleProof& proof);

/// Also pins the path length to ceil(log2(leaf_count)), which rules out
/// presenting an interior node as a leaf.
[[nodiscard]] bool merkle_verify(const Hash32& root, const Hash32& leaf, const MerkleProof& proof,
                                 std::size_t leaf_count);

[[nodiscard]] std::size_t merkle_depth(std::size_t leaf_count) noexcept;

// ---------------------------------------------------------------------------
// Signatures: Ed25519, deterministic from a 32-byte seed.

inline constexpr std::size_t kSeedSize = 32;
inline constexpr std::size_t kPublicKeySize = 32;
inline constexpr std::size_t kSignatureSize = 64;

/// Public keys and signatures hold arbitrary bytes so that malformed values
/// read from files can be represented; verify() rejects them.
struct PublicKey {
    Bytes bytes;
    [[nodiscard]] std::string hex() const { return to_hex(bytes); }
    [[nodiscard]] static PublicKey from_hex(std::string_view hex) { return {ledgerstack::from_hex(hex)}; }
    auto operator<=>(const PublicKey&) const = default;
};

struct Signature {
    Bytes bytes;
    [[nodiscard]] std::string hex() const { return to_hex(bytes); }
    [[nodiscard]] static Signature from_hex(std::string_view hex) { return {ledgerstack::from_hex(hex)}; }
    auto operator<=>(const Signature&) const = default;
};

struct SecretKey {
    std::array<Byte, kSeedSize> seed{};
    bool operator==(const SecretKey&) const = default;
};

struct KeyPair {
    SecretKey secret;
    PublicKey public_key;
};

/// Throws Error(InvalidSeed) unless seed is exactly 32 bytes.
[[nodiscard]] KeyPair keygen(ByteView seed);

/// Convenience for scenarios: seed = sha256(text).
[[nodiscard]] KeyPair keygen_from_text(std::string_view text);

[[nodiscard]] Signature sign(const SecretKey& secret, ByteView message);

/// Never throws; malformed key or signature bytes give false.
[[nodiscard]] bool verify(const PublicKey& public_key, ByteView message, const Signature& signature) noexcept;

// ---------------------------------------------------------------------------
// Period time stamping: each period's items are hashed into a Merkle root,
// which is hashed together with the previous period's stamp.

struct PeriodStamp {
    std::uint64_t period_index = 0;
    Hash32 items_root;
    Hash32 prev_stamp;
    Hash32 stamp;
    std::uint64_t wall_time = 0;
    bool operator==(const PeriodStamp&) const = default;
};

/// With no predecessor the stamp is the first of its chain: period_index 0,
/// prev_stamp all zero. Throws Error(EmptyLeaves) for no items and
/// Error(ClockRegression) when wall_time < prev->wall_time.
[[nodiscard]] PeriodStamp stamp_period(std::span<const Bytes> items, const std::optional<PeriodStamp>& prev,
                                       std::uint64_t wall_time);

/// Recomputes a stamp chain from the raw per-period items. Returns the index
/// of the first stamp that does not match, or nullopt when the whole chain
/// re-derives.
[[nodiscard]] std::optional<std::size_t> verify_stamp_chain(std::span<const std::vector<Bytes>> items_per_period,
                                                            std::span<const PeriodStamp> stamps);

Json to_json(const PeriodStamp& stamp);

} // namespace ledgerstack::crypto
