#include "ledgerstack/chain.hpp"

#include <array>
#include <istream>
#include <limits>
#include <ostream>
#include <utility>

#include "ledgerstack/error.hpp"

namespace ledgerstack::chain {

namespace {

constexpr std::array<std::pair<TxKind, std::string_view>, 19> kKindNames = {{
    {TxKind::Generic, "generic"},
    {TxKind::TsaOpen, "tsa_open"},
    {TxKind::TsaReceipt, "tsa_receipt"},
    {TxKind::TsaDisbursement, "tsa_disbursement"},
    {TxKind::TsaTransfer, "tsa_transfer"},
    {TxKind::TsaDayClose, "tsa_day_close"},
    {TxKind::StampAnchor, "stamp_anchor"},
    {TxKind::PrimeEntry, "prime_entry"},
    {TxKind::GlPost, "gl_post"},
    {TxKind::Ifrs9Classify, "ifrs9_classify"},
    {TxKind::Trade, "trade"},
    {TxKind::Novation, "novation"},
    {TxKind::Instruction, "instruction"},
    {TxKind::SettlementResult, "settlement_result"},
    {TxKind::EscrowOpen, "escrow_open"},
    {TxKind::EscrowSign, "escrow_sign"},
    {TxKind::EscrowPayout, "escrow_payout"},
    {TxKind::ContractDeploy, "contract_deploy"},
    {TxKind::ContractInvoke, "contract_invoke"},
}};

} // namespace

std::string_view to_string(TxKind kind) noexcept {
    for (const auto& [k, name] : kKindNames)
        if (k == kind) return name;
    return "generic";
}

TxKind tx_kind_from_string(std::string_view name) {
    for (const auto& [k, n] : kKindNames)
        if (n == name) return k;
    throw Error(ErrorCode::ParseError, "unknown transaction kind '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

Bytes Transaction::signing_bytes() const {
    const std::string_view kind_name = to_string(kind);
    Bytes out;
    out.reserve(2 + kind_name.size() + author.bytes.size() + payload.size());
    out.push_back(static_cast<Byte>(kind_name.size()));
    append(out, as_bytes(kind_name));
    out.push_back(static_cast<Byte>(std::min<std::size_t>(author.bytes.size(), 255)));
    append(out, ByteView(author.bytes).first(std::min<std::size_t>(author.bytes.size(), 255)));
    append(out, as_bytes(payload));
    return out;
}

Hash32 Transaction::id() const { return crypto::sha256d(signing_bytes()); }

bool Transaction::signature_valid() const { return crypto::verify(author, signing_bytes(), signature); }

Transaction make_transaction(TxKind kind, const Json& payload, const KeyPair& author) {
    Transaction tx;
    tx.kind = kind;
    tx.payload = canonical_json(payload);
    tx.author = author.public_key;
    tx.signature = crypto::sign(author.secret, tx.signing_bytes());
    return tx;
}

// ---------------------------------------------------------------------------

Bytes serialize_header(const BlockHeader& h) {
    Bytes out;
    out.reserve(kHeaderSize);
    put_u64_be(out, h.height);
    append(out, h.prev_hash.view());
    append(out, h.merkle_root.view());
    put_u64_be(out, h.wall_time);
    put_u32_be(out, h.tx_count);
    put_u64_be(out, h.nonce);
    return out;
}

BlockHeader deserialize_header(ByteView bytes) {
    if (bytes.size() != kHeaderSize)
        throw Error(ErrorCode::InvalidBlock, "header must be 92 bytes, got " + std::to_string(bytes.size()));
    BlockHeader h;
    h.height = get_u64_be(bytes, 0);
    std::copy_n(bytes.begin() + 8, 32, h.prev_hash.bytes.begin());
    std::copy_n(bytes.begin() + 40, 32, h.merkle_root.bytes.begin());
    h.wall_time = get_u64_be(bytes, 72);
    h.tx_count = get_u32_be(bytes, 80);
    h.nonce = get_u64_be(bytes, 84);
    return h;
}

Hash32 header_id(const BlockHeader& header) { return crypto::sha256d(serialize_header(header)); }

Hash32 transactions_root(std::span<const Transaction> txs) {
    if (txs.empty()) return Hash32::zero();
    std::vector<Hash32> ids;
    ids.reserve(txs.size());
    for (const auto& tx : txs) ids.push_back(tx.id());
    return crypto::merkle_root(ids);
}

// ---------------------------------------------------------------------------

void ChainConfig::validate() const {
    if (mode == ConsensusMode::Quorum) {
        if (validators.empty()) throw Error(ErrorCode::InvalidConfig, "quorum mode needs validators");
        if (quorum_m < 1 || quorum_m > validators.size())
            throw Error(ErrorCode::InvalidConfig, "quorum_m must be in [1, " + std::to_string(validators.size()) + "]");
        std::set<PublicKey> distinct(validators.begin(), validators.end());
        if (distinct.size() != validators.size()) throw Error(ErrorCode::InvalidConfig, "duplicate validator key");
    } else {
        if (pow_target_bits < 1 || pow_target_bits > 24)
            throw Error(ErrorCode::InvalidConfig, "pow_target_bits must be in [1, 24]");
    }
}

bool ChainConfig::is_validator(const PublicKey& key) const {
    for (const auto& v : validators)
        if (v == key) return true;
    return false;
}

Json ChainConfig::to_json() const {
    Json vals = Json::array();
    for (const auto& v : validators) vals.push_back(v.hex());
    return Json{{"mode", mode == ConsensusMode::Quorum ? "quorum" : "pow"},
                {"validators", vals},
                {"quorum_m", quorum_m},
                {"pow_target_bits", pow_target_bits}};
}

ChainConfig ChainConfig::from_json(const Json& j) {
    try {
        ChainConfig c;
        const std::string mode = j.value("mode", "quorum");
        if (mode == "quorum")
            c.mode = ConsensusMode::Quorum;
        else if (mode == "pow")
            c.mode = ConsensusMode::Pow;
        else
            throw Error(ErrorCode::InvalidConfig, "unknown mode '" + mode + "'");
        for (const auto& v : j.value("validators", Json::array())) c.validators.push_back(PublicKey::from_hex(v.get<std::string>()));
        c.quorum_m = j.value("quorum_m", 1u);
        c.pow_target_bits = j.value("pow_target_bits", 8u);
        c.validate();
        return c;
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, e.what());
    }
}

// ---------------------------------------------------------------------------

Block build_block(std::vector<Transaction> txs, const Hash32& prev_block_id, std::uint64_t height,
                  std::uint64_t wall_time, const std::set<Hash32>* history) {
    std::set<Hash32> seen;
    for (const auto& tx : txs) {
        const Hash32 id = tx.id();
        if (!seen.insert(id).second || (history != nullptr && history->contains(id)))
            throw Error(ErrorCode::DoubleSpend, "transaction " + id.hex() + " would be recorded more than once");
        if (!tx.signature_valid()) throw Error(ErrorCode::BadTxSignature, "transaction " + id.hex());
    }
    if (txs.size() > std::numeric_limits<std::uint32_t>::max())
        throw Error(ErrorCode::InvalidBlock, "too many transactions");

    Block block;
    block.header.height = height;
    block.header.prev_hash = prev_block_id;
    block.header.merkle_root = transactions_root(txs);
    block.header.wall_time = wall_time;
    block.header.tx_count = static_cast<std::uint32_t>(txs.size());
    block.header.nonce = 0;
    block.txs = std::move(txs);
    return block;
}

Approval approve(const Block& block, const KeyPair& validator) {
    const Hash32 id = block.id();
    return {validator.public_key, crypto::sign(validator.secret, id.view())};
}

unsigned leading_zero_bits(const Hash32& h) noexcept {
    unsigned bits = 0;
    for (Byte b : h.bytes) {
        if (b == 0) {
            bits += 8;
            continue;
        }
        for (int i = 7; i >= 0 && ((b >> i) & 1) == 0; --i) ++bits;
        break;
    }
    return bits;
}

bool meets_target(const BlockHeader& header, unsigned target_bits) {
    return leading_zero_bits(header_id(header)) >= target_bits;
}

std::uint64_t mine_pow(BlockHeader header, unsigned target_bits) {
    if (target_bits > 256) throw Error(ErrorCode::InvalidConfig, "target_bits > 256");
    std::uint64_t nonce = 0;
    while (true) {
        header.nonce = nonce;
        if (meets_target(header, target_bits)) return nonce;
        if (nonce == std::numeric_limits<std::uint64_t>::max()) break;
        ++nonce;
    }
    throw Error(ErrorCode::NonceSpaceExhausted);
}

// ---------------------------------------------------------------------------

std::string_view to_string(Failure f) noexcept {
    switch (f) {
    case Failure::None: return "None";
    case Failure::HeightMismatch: return "HeightMismatch";
    case Failure::LinkBroken: return "LinkBroken";
    case Failure::ClockRegression: return "ClockRegression";
    case Failure::TxCountMismatch: return "TxCountMismatch";
    case Failure::MerkleMismatch: return "MerkleMismatch";
    case Failure::BadTxSignature: return "BadTxSignature";
    case Failure::DuplicateTx: return "DuplicateTx";
    case Failure::QuorumNotMet: return "QuorumNotMet";
    case Failure::UnknownValidator: return "UnknownValidator";
    case Failure::BadApprovalSignature: return "BadApprovalSignature";
    case Failure::PowTargetMissed: return "PowTargetMissed";
    case Failure::BlockIdMismatch: return "BlockIdMismatch";
    }
    return "None";
}

Json ChainVerdict::to_json() const {
    if (valid) return Json{{"valid", true}};
    Json j{{"valid", false}, {"first_bad_height", first_bad_height}, {"reason", to_string(reason)}};
    if (!detail.empty()) j["detail"] = detail;
    return j;
}

namespace {

/// Approval check shared by append and verification. Returns Failure::None or
/// the first problem, with the distinct valid count in `distinct_out`.
Failure check_approvals(const Block& block, const ChainConfig& config, std::size_t& distinct_out,
                        std::string& detail) {
    const Hash32 id = block.id();
    std::set<PublicKey> signers;
    for (const auto& a : block.approvals) {
        if (!config.is_validator(a.validator)) {
            detail = "approval from " + a.validator.hex();
            return Failure::UnknownValidator;
        }
        if (!crypto::verify(a.validator, id.view(), a.signature)) {
            detail = "approval from " + a.validator.hex();
            return Failure::BadApprovalSignature;
        }
        signers.insert(a.validator);
    }
    distinct_out = signers.size();
    if (distinct_out < config.quorum_m) {
        detail = std::to_string(distinct_out) + " of " + std::to_string(config.quorum_m) + " required approvals";
        return Failure::QuorumNotMet;
    }
    return Failure::None;
}

} // namespace

ChainVerdict verify_chain(std::span<const Block> blocks, const ChainConfig& config) {
    std::set<Hash32> seen;
    Hash32 prev_id = Hash32::zero();
    std::uint64_t prev_time = 0;
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        const Block& b = blocks[k];
        const BlockHeader& h = b.header;
        if (h.height != k) return ChainVerdict::invalid(k, Failure::HeightMismatch);
        if (h.prev_hash != prev_id) return ChainVerdict::invalid(k, Failure::LinkBroken);
        if (k > 0 && h.wall_time < prev_time) return ChainVerdict::invalid(k, Failure::ClockRegression);
        if (h.tx_count != b.txs.size()) return ChainVerdict::invalid(k, Failure::TxCountMismatch);
        if (h.merkle_root != transactions_root(b.txs)) return ChainVerdict::invalid(k, Failure::MerkleMismatch);
        for (const auto& tx : b.txs) {
            if (!tx.signature_valid()) return ChainVerdict::invalid(k, Failure::BadTxSignature, tx.id().hex());
            if (!seen.insert(tx.id()).second) return ChainVerdict::invalid(k, Failure::DuplicateTx, tx.id().hex());
        }
        if (config.mode == ConsensusMode::Quorum) {
            std::size_t distinct = 0;
            std::string detail;
            const Failure f = check_approvals(b, config, distinct, detail);
            if (f != Failure::None) return ChainVerdict::invalid(k, f, detail);
        } else if (!meets_target(h, config.pow_target_bits)) {
            return ChainVerdict::invalid(k, Failure::PowTargetMissed);
        }
        prev_id = b.id();
        prev_time = h.wall_time;
    }
    return ChainVerdict::ok();
}

// ---------------------------------------------------------------------------

Chain::Chain(ChainConfig config) : config_(std::move(config)) { config_.validate(); }

Chain Chain::from_blocks(ChainConfig config, std::vector<Block> blocks) {
    Chain c(std::move(config));
    const ChainVerdict v = verify_chain(blocks, c.config_);
    if (!v.valid)
        throw Error(ErrorCode::ChainInvalid, "height " + std::to_string(v.first_bad_height) + ": " +
                                                 std::string(to_string(v.reason)));
    for (auto& b : blocks) c.commit(std::move(b));
    return c;
}

Hash32 Chain::tip_id() const { return blocks_.empty() ? Hash32::zero() : blocks_.back().id(); }

Block Chain::build_next(std::vector<Transaction> txs, std::uint64_t wall_time) const {
    return build_block(std::move(txs), tip_id(), next_height(), wall_time, &tx_ids_);
}

void Chain::check_extends_tip(const Block& block, bool tx_signatures_checked) const {
    const BlockHeader& h = block.header;
    if (h.prev_hash != tip_id() || h.height != next_height())
        throw Error(ErrorCode::StaleParent, "block at height " + std::to_string(h.height) + " does not extend tip " +
                                                tip_id().hex());
    if (!blocks_.empty() && h.wall_time < blocks_.back().header.wall_time)
        throw Error(ErrorCode::ClockRegression, "block time precedes tip");
    if (h.tx_count != block.txs.size()) throw Error(ErrorCode::InvalidBlock, "tx_count mismatch");
    if (h.merkle_root != transactions_root(block.txs)) throw Error(ErrorCode::InvalidBlock, "merkle root mismatch");

    std::set<Hash32> seen;
    for (const auto& tx : block.txs) {
        const Hash32 id = tx.id();
        if (!seen.insert(id).second || tx_ids_.contains(id))
            throw Error(ErrorCode::DoubleSpend, "transaction " + id.hex() + " would be recorded more than once");
        if (!tx_signatures_checked && !tx.signature_valid())
            throw Error(ErrorCode::BadTxSignature, "transaction " + id.hex());
    }
}

void Chain::commit(Block block) {
    for (const auto& tx : block.txs) tx_ids_.insert(tx.id());
    blocks_.push_back(std::move(block));
}

void Chain::approve_and_append(Block block, std::vector<Approval> approvals) {
    if (config_.mode != ConsensusMode::Quorum) throw Error(ErrorCode::WrongMode, "chain is in pow mode");
    check_extends_tip(block);
    block.approvals = std::move(approvals);
    append_approved(std::move(block));
}

void Chain::append_approved(Block block) {
    std::size_t distinct = 0;
    std::string detail;
    switch (check_approvals(block, config_, distinct, detail)) {
    case Failure::None: break;
    case Failure::UnknownValidator: throw Error(ErrorCode::UnknownValidator, detail);
    case Failure::BadApprovalSignature: throw Error(ErrorCode::BadApprovalSignature, detail);
    default: throw Error(ErrorCode::QuorumNotMet, detail);
    }
    commit(std::move(block));
}

void Chain::append_mined(Block block) {
    if (config_.mode != ConsensusMode::Pow) throw Error(ErrorCode::WrongMode, "chain is in quorum mode");
    check_extends_tip(block);
    if (!meets_target(block.header, config_.pow_target_bits))
        throw Error(ErrorCode::PowTargetMissed, "nonce " + std::to_string(block.header.nonce));
    block.approvals.clear();
    commit(std::move(block));
}

TxQueue::TxQueue(std::string stream, KeyPair author) : stream_(std::move(stream)), author_(std::move(author)) {}

const Transaction& TxQueue::emit(TxKind kind, Json payload) {
    payload["stream"] = stream_;
    payload["seq"] = seq_++;
    pending_.push_back(make_transaction(kind, payload, author_));
    return pending_.back();
}

std::vector<Transaction> TxQueue::drain() { return std::exchange(pending_, {}); }

const Block& seal_block(Chain& chain, std::vector<Transaction> txs, std::uint64_t wall_time,
                        std::span<const KeyPair> validator_keys) {
    Block block = chain.build_next(std::move(txs), wall_time);
    if (chain.config().mode == ConsensusMode::Quorum) {
        chain.check_extends_tip(block, true);
        block.approvals.reserve(validator_keys.size());
        for (const auto& key : validator_keys) block.approvals.push_back(approve(block, key));
        chain.append_approved(std::move(block));
    } else {
        block.header.nonce = mine_pow(block.header, chain.config().pow_target_bits);
        chain.append_mined(std::move(block));
    }
    return chain.blocks().back();
}

// ---------------------------------------------------------------------------

Json to_json(const Transaction& tx) {
    return Json{{"tx_id", tx.id().hex()},
                {"kind", to_string(tx.kind)},
                {"payload", Json::parse(tx.payload)},
                {"author", tx.author.hex()},
                {"signature", tx.signature.hex()}};
}

Transaction transaction_from_json(const Json& j) {
    Transaction tx;
    tx.kind = tx_kind_from_string(j.at("kind").get<std::string>());
    tx.payload = canonical_json(j.at("payload"));
    tx.author = PublicKey::from_hex(j.at("author").get<std::string>());
    tx.signature = Signature::from_hex(j.at("signature").get<std::string>());
    return tx;
}

Json to_json(const Block& block) {
    const BlockHeader& h = block.header;
    Json txs = Json::array();
    for (const auto& tx : block.txs) txs.push_back(to_json(tx));
    Json approvals = Json::array();
    for (const auto& a : block.approvals)
        approvals.push_back(Json{{"validator", a.validator.hex()}, {"signature", a.signature.hex()}});
    return Json{{"block_id", block.id().hex()},
                {"header",
                 {{"height", h.height},
                  {"prev_hash", h.prev_hash.hex()},
                  {"merkle_root", h.merkle_root.hex()},
                  {"wall_time", h.wall_time},
                  {"tx_count", h.tx_count},
                  {"nonce", h.nonce}}},
                {"txs", txs},
                {"approvals", approvals}};
}

ParsedBlock block_from_json(const Json& j) {
    ParsedBlock out;
    const Json& h = j.at("header");
    out.block.header.height = h.at("height").get<std::uint64_t>();
    out.block.header.prev_hash = Hash32::from_hex(h.at("prev_hash").get<std::string>());
    out.block.header.merkle_root = Hash32::from_hex(h.at("merkle_root").get<std::string>());
    out.block.header.wall_time = h.at("wall_time").get<std::uint64_t>();
    out.block.header.tx_count = h.at("tx_count").get<std::uint32_t>();
    out.block.header.nonce = h.at("nonce").get<std::uint64_t>();
    for (const auto& tx : j.at("txs")) out.block.txs.push_back(transaction_from_json(tx));
    for (const auto& a : j.at("approvals"))
        out.block.approvals.push_back({PublicKey::from_hex(a.at("validator").get<std::string>()),
                                       Signature::from_hex(a.at("signature").get<std::string>())});
    out.stated_id = Hash32::from_hex(j.at("block_id").get<std::string>());
    return out;
}

void export_chain(std::span<const Block> blocks, std::ostream& out) {
    for (const auto& b : blocks) out << canonical_json(to_json(b)) << '\n';
}

ImportedChain import_chain(std::istream& in, const ChainConfig& config) {
    ImportedChain result;
    std::optional<ChainVerdict> id_failure;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ParsedBlock parsed;
        try {
            parsed = block_from_json(Json::parse(line));
        } catch (const Json::exception& e) {
            throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!id_failure && parsed.stated_id != parsed.block.id())
            id_failure = ChainVerdict::invalid(result.blocks.size(), Failure::BlockIdMismatch,
                                               "stated " + parsed.stated_id.hex());
        result.blocks.push_back(std::move(parsed.block));
    }
    if (result.blocks.empty()) throw Error(ErrorCode::EmptyChain);

    result.verdict = verify_chain(result.blocks, config);
    if (id_failure && (result.verdict.valid || id_failure->first_bad_height < result.verdict.first_bad_height))
        result.verdict = *id_failure;
    return result;
}

} // namespace ledgerstack::chain
