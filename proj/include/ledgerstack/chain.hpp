#pragma once

#include <cstdint>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ledgerstack/bytes.hpp"
#include "ledgerstack/crypto.hpp"

namespace ledgerstack::chain {

using crypto::Hash32;
using crypto::KeyPair;
using crypto::PublicKey;
using crypto::Signature;

/// Application tag carried by every transaction.
enum class TxKind : std::uint8_t {
    Generic,
    TsaOpen,
    TsaReceipt,
    TsaDisbursement,
    TsaTransfer,
    TsaDayClose,
    StampAnchor,
    PrimeEntry,
    GlPost,
    Ifrs9Classify,
    Trade,
    Novation,
    Instruction,
    SettlementResult,
    EscrowOpen,
    EscrowSign,
    EscrowPayout,
    ContractDeploy,
    ContractInvoke,
};

[[nodiscard]] std::string_view to_string(TxKind kind) noexcept;
/// Throws Error(ParseError) for an unknown tag.
[[nodiscard]] TxKind tx_kind_from_string(std::string_view name);

/// A signed record. `payload` holds canonical JSON text; the id and the
/// signature both cover the same preimage, which excludes the signature.
struct Transaction {
    TxKind kind = TxKind::Generic;
    std::string payload;
    PublicKey author;
    Signature signature;

    /// u8 len(kind) ∥ kind ∥ u8 len(author) ∥ author ∥ payload
    [[nodiscard]] Bytes signing_bytes() const;
    [[nodiscard]] Hash32 id() const;
    [[nodiscard]] bool signature_valid() const;
    [[nodiscard]] Json payload_json() const { return Json::parse(payload); }

    bool operator==(const Transaction&) const = default;
};

[[nodiscard]] Transaction make_transaction(TxKind kind, const Json& payload, const KeyPair& author);

inline constexpr std::size_t kHeaderSize = 8 + 32 + 32 + 8 + 4 + 8;

struct BlockHeader {
    std::uint64_t height = 0;
    Hash32 prev_hash;
    Hash32 merkle_root;
    std::uint64_t wall_time = 0;
    std::uint32_t tx_count = 0;
    std::uint64_t nonce = 0;
    bool operator==(const BlockHeader&) const = default;
};

/// Fixed 92-byte big-endian layout: height, prev_hash, merkle_root,
/// wall_time, tx_count, nonce.
[[nodiscard]] Bytes serialize_header(const BlockHeader& header);
/// Throws Error(InvalidBlock) unless given exactly 92 bytes.
[[nodiscard]] BlockHeader deserialize_header(ByteView bytes);
[[nodiscard]] Hash32 header_id(const BlockHeader& header);

struct Approval {
    PublicKey validator;
    Signature signature; ///< over the 32 block id bytes
    bool operator==(const Approval&) const = default;
};

struct Block {
    BlockHeader header;
    std::vector<Transaction> txs;
    std::vector<Approval> approvals;

    [[nodiscard]] Hash32 id() const { return header_id(header); }
    bool operator==(const Block&) const = default;
};

/// Merkle root over tx ids; an empty block commits to 32 zero bytes.
[[nodiscard]] Hash32 transactions_root(std::span<const Transaction> txs);

enum class ConsensusMode : std::uint8_t { Quorum, Pow };

struct ChainConfig {
    ConsensusMode mode = ConsensusMode::Quorum;
    std::vector<PublicKey> validators;
    std::uint32_t quorum_m = 1;
    std::uint32_t pow_target_bits = 8;

    /// Throws Error(InvalidConfig).
    void validate() const;
    [[nodiscard]] bool is_validator(const PublicKey& key) const;

    [[nodiscard]] Json to_json() const;
    [[nodiscard]] static ChainConfig from_json(const Json& j);
};

/// Throws Error(DoubleSpend) on a tx id repeated inside `txs` or already in
/// `history`, Error(BadTxSignature) on an invalid signature.
[[nodiscard]] Block build_block(std::vector<Transaction> txs, const Hash32& prev_block_id, std::uint64_t height,
                                std::uint64_t wall_time, const std::set<Hash32>* history = nullptr);

[[nodiscard]] Approval approve(const Block& block, const KeyPair& validator);

[[nodiscard]] unsigned leading_zero_bits(const Hash32& h) noexcept;

/// One sha256d of the serialized header.
[[nodiscard]] bool meets_target(const BlockHeader& header, unsigned target_bits);

/// Smallest nonce, searched upward from 0, whose header hash has
/// `target_bits` leading zero bits.
[[nodiscard]] std::uint64_t mine_pow(BlockHeader header, unsigned target_bits);

enum class Failure : std::uint8_t {
    None,
    HeightMismatch,
    LinkBroken,
    ClockRegression,
    TxCountMismatch,
    MerkleMismatch,
    BadTxSignature,
    DuplicateTx,
    QuorumNotMet,
    UnknownValidator,
    BadApprovalSignature,
    PowTargetMissed,
    BlockIdMismatch,
};

[[nodiscard]] std::string_view to_string(Failure f) noexcept;

struct ChainVerdict {
    bool valid = true;
    std::uint64_t first_bad_height = 0;
    Failure reason = Failure::None;
    std::string detail;

    [[nodiscard]] static ChainVerdict ok() { return {}; }
    [[nodiscard]] static ChainVerdict invalid(std::uint64_t height, Failure reason, std::string detail = {}) {
        return {false, height, reason, std::move(detail)};
    }
    [[nodiscard]] Json to_json() const;
};

/// Walks from genesis and reports the lowest failing height.
[[nodiscard]] ChainVerdict verify_chain(std::span<const Block> blocks, const ChainConfig& config);

/// An append-only sequence of blocks. Appends must be externally serialized;
/// const members may run concurrently with each other.
class Chain {
public:
    explicit Chain(ChainConfig config);

    /// Rebuilds a chain from already-sealed blocks; throws Error(ChainInvalid)
    /// naming the first bad height.
    [[nodiscard]] static Chain from_blocks(ChainConfig config, std::vector<Block> blocks);

    [[nodiscard]] const ChainConfig& config() const noexcept { return config_; }
    [[nodiscard]] std::span<const Block> blocks() const noexcept { return blocks_; }
    [[nodiscard]] std::size_t size() const noexcept { return blocks_.size(); }
    [[nodiscard]] bool empty() const noexcept { return blocks_.empty(); }
    [[nodiscard]] Hash32 tip_id() const;
    [[nodiscard]] std::uint64_t next_height() const noexcept { return blocks_.size(); }
    [[nodiscard]] bool contains_tx(const Hash32& tx_id) const { return tx_ids_.contains(tx_id); }
    [[nodiscard]] std::size_t tx_total() const noexcept { return tx_ids_.size(); }

    [[nodiscard]] Block build_next(std::vector<Transaction> txs, std::uint64_t wall_time) const;

    /// Quorum mode. Appends iff at least quorum_m distinct configured
    /// validators signed the block id; otherwise the chain is unchanged.
    /// Throws Error(WrongMode | StaleParent | ClockRegression | InvalidBlock |
    /// DoubleSpend | BadTxSignature | UnknownValidator |
    /// BadApprovalSignature | QuorumNotMet).
    void approve_and_append(Block block, std::vector<Approval> approvals);

    /// PoW mode. Throws Error(WrongMode | PowTargetMissed | StaleParent ...).
    void append_mined(Block block);

    [[nodiscard]] ChainVerdict verify() const { return verify_chain(blocks_, config_); }

private:
    friend const Block& seal_block(Chain&, std::vector<Transaction>, std::uint64_t, std::span<const KeyPair>);

    /// `tx_signatures_checked` skips re-verifying signatures that build_next
    /// has just verified.
    void check_extends_tip(const Block& block, bool tx_signatures_checked = false) const;
    void append_approved(Block block);
    void commit(Block block);

    ChainConfig config_;
    std::vector<Block> blocks_;
    std::set<Hash32> tx_ids_;
};

/// Signs and buffers the transactions an application module emits until the
/// driver seals them into a block. Each payload gets "stream" and a
/// per-queue "seq", so that repeated identical operations still have distinct
/// ids and a replay can order them.
class TxQueue {
public:
    TxQueue(std::string stream, KeyPair author);

    const Transaction& emit(TxKind kind, Json payload);
    [[nodiscard]] std::vector<Transaction> drain();
    [[nodiscard]] std::span<const Transaction> pending() const noexcept { return pending_; }
    [[nodiscard]] std::uint64_t emitted() const noexcept { return seq_; }
    /// Continue numbering after a replay of `seq` earlier transactions.
    void resume_at(std::uint64_t seq) noexcept { seq_ = seq; }
    [[nodiscard]] const PublicKey& author() const noexcept { return author_.public_key; }

private:
    std::string stream_;
    KeyPair author_;
    std::uint64_t seq_ = 0;
    std::vector<Transaction> pending_;
};

/// Simulator convenience: builds the next block, then either approves it with
/// every given key or mines it, and appends. Returns the appended block.
const Block& seal_block(Chain& chain, std::vector<Transaction> txs, std::uint64_t wall_time,
                        std::span<const KeyPair> validator_keys);

// ---------------------------------------------------------------------------
// JSON-lines export: one block per line, txs inline, block_id redundant.

[[nodiscard]] Json to_json(const Transaction& tx);
[[nodiscard]] Transaction transaction_from_json(const Json& j);
[[nodiscard]] Json to_json(const Block& block);

struct ParsedBlock {
    Block block;
    Hash32 stated_id;
};
[[nodiscard]] ParsedBlock block_from_json(const Json& j);

void export_chain(std::span<const Block> blocks, std::ostream& out);

struct ImportedChain {
    std::vector<Block> blocks;
    ChainVerdict verdict;
};

/// Throws Error(EmptyChain) for a file with no blocks and Error(ParseError)
/// naming the line for malformed input. Tampering shows up in the verdict.
[[nodiscard]] ImportedChain import_chain(std::istream& in, const ChainConfig& config);

} // namespace ledgerstack::chain
