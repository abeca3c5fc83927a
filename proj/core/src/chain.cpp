#include "cifuv/chain.hpp"

#include <algorithm>
#include <stdexcept>

namespace cifuv::chain {

namespace {

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void put_u64_be(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8)
        out.push_back(static_cast<std::uint8_t>(v >> shift));
}

void put_hash(std::vector<std::uint8_t>& out, const Hash256& h) {
    out.insert(out.end(), h.bytes.begin(), h.bytes.end());
}

// Work per block; difficulty_bits is capped well below 64 so sums cannot
// overflow in any toy-scale scenario.
constexpr std::uint32_t kMaxDifficultyBits = 48;

std::uint64_t block_work(std::uint32_t difficulty_bits) {
    return std::uint64_t(1) << difficulty_bits;
}

constexpr std::uint64_t kMaxNonceTrials = std::uint64_t(1) << 40;

} // namespace

// ---- encodings -------------------------------------------------------------

std::vector<std::uint8_t> Transaction::encode() const {
    std::vector<std::uint8_t> out;
    out.reserve(4 + payload.size() + 1 + (cross_ref ? 64 : 0));
    put_u32_be(out, static_cast<std::uint32_t>(payload.size()));
    out.insert(out.end(), payload.begin(), payload.end());
    out.push_back(cross_ref ? 1 : 0);
    if (cross_ref) {
        put_hash(out, cross_ref->guest_chain_id);
        put_hash(out, cross_ref->guest_tx_id);
    }
    return out;
}

Hash256 Transaction::id() const { return sha256(encode()); }

Transaction Transaction::from_string(std::string_view payload,
                                     std::optional<CrossRef> cross_ref) {
    Transaction tx;
    tx.payload.assign(payload.begin(), payload.end());
    tx.cross_ref = cross_ref;
    return tx;
}

std::vector<std::uint8_t> BlockHeader::encode() const {
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderWireSize);
    put_u64_be(out, height);
    put_hash(out, prev_hash);
    put_hash(out, merkle_root);
    put_u32_be(out, difficulty_bits);
    put_u64_be(out, nonce);
    put_u64_be(out, timestamp);
    return out;
}

Hash256 BlockHeader::hash() const { return sha256(encode()); }

std::vector<std::uint8_t> Block::encode() const {
    std::vector<std::uint8_t> out = header.encode();
    put_u32_be(out, static_cast<std::uint32_t>(txs.size()));
    for (const auto& tx : txs) {
        auto enc = tx.encode();
        out.insert(out.end(), enc.begin(), enc.end());
    }
    return out;
}

// ---- merkle -----------------------------------------------------------------

Hash256 merkle_root_of_ids(std::span<const Hash256> leaves) {
    if (leaves.empty())
        throw std::invalid_argument("merkle tree needs at least one leaf");
    std::vector<Hash256> level(leaves.begin(), leaves.end());
    while (level.size() > 1) {
        if (level.size() % 2 == 1) level.push_back(level.back());
        std::vector<Hash256> next;
        next.reserve(level.size() / 2);
        for (std::size_t i = 0; i < level.size(); i += 2)
            next.push_back(sha256_pair(level[i], level[i + 1]));
        level = std::move(next);
    }
    return level.front();
}

Hash256 merkle_root(std::span<const Transaction> txs) {
    std::vector<Hash256> ids;
    ids.reserve(txs.size());
    for (const auto& tx : txs) ids.push_back(tx.id());
    return merkle_root_of_ids(ids);
}

MerkleProof merkle_prove(std::span<const Transaction> txs, std::size_t index) {
    if (index >= txs.size())
        throw std::invalid_argument("merkle proof index out of range");
    std::vector<Hash256> level;
    level.reserve(txs.size());
    for (const auto& tx : txs) level.push_back(tx.id());

    MerkleProof proof;
    proof.leaf = level[index];
    std::size_t pos = index;
    while (level.size() > 1) {
        if (level.size() % 2 == 1) level.push_back(level.back());
        std::size_t sibling = pos ^ 1;
        proof.path.push_back({level[sibling], sibling < pos});
        std::vector<Hash256> next;
        next.reserve(level.size() / 2);
        for (std::size_t i = 0; i < level.size(); i += 2)
            next.push_back(sha256_pair(level[i], level[i + 1]));
        level = std::move(next);
        pos /= 2;
    }
    return proof;
}

bool verify_merkle(const Hash256& root, const MerkleProof& proof) {
    Hash256 acc = proof.leaf;
    for (const auto& step : proof.path)
        acc = step.sibling_on_left ? sha256_pair(step.sibling, acc)
                                   : sha256_pair(acc, step.sibling);
    return acc == root;
}

// ---- proof of work ----------------------------------------------------------

bool satisfies_pow(const BlockHeader& header) {
    if (header.difficulty_bits > kMaxDifficultyBits) return false;
    return leading_zero_bits(header.hash()) >=
           static_cast<int>(header.difficulty_bits);
}

Block mine_block(const BlockHeader& parent, std::vector<Transaction> txs,
                 std::uint32_t difficulty_bits, SplitMix64& rng,
                 std::optional<std::uint64_t> timestamp) {
    if (difficulty_bits > kMaxDifficultyBits)
        throw std::invalid_argument("difficulty_bits too large");
    Block block;
    block.header.height = parent.height + 1;
    block.header.prev_hash = parent.hash();
    block.header.merkle_root = merkle_root(txs);
    block.header.difficulty_bits = difficulty_bits;
    block.header.timestamp = timestamp.value_or(parent.timestamp + 1);
    block.txs = std::move(txs);

    for (std::uint64_t trial = 0; trial < kMaxNonceTrials; ++trial) {
        block.header.nonce = rng.next();
        if (satisfies_pow(block.header)) return block;
    }
    throw std::runtime_error("mining failed: nonce trial budget exhausted");
}

Block mine_genesis(std::vector<Transaction> txs, std::uint32_t difficulty_bits,
                   SplitMix64& rng, std::uint64_t timestamp) {
    if (difficulty_bits > kMaxDifficultyBits)
        throw std::invalid_argument("difficulty_bits too large");
    Block genesis;
    genesis.header.height = 0;
    genesis.header.prev_hash = Hash256::zero();
    genesis.header.merkle_root = merkle_root(txs);
    genesis.header.difficulty_bits = difficulty_bits;
    genesis.header.timestamp = timestamp;
    genesis.txs = std::move(txs);
    for (std::uint64_t trial = 0; trial < kMaxNonceTrials; ++trial) {
        genesis.header.nonce = rng.next();
        if (satisfies_pow(genesis.header)) return genesis;
    }
    throw std::runtime_error("mining failed: nonce trial budget exhausted");
}

bool verify_header(const BlockHeader& header, const BlockHeader& parent) {
    if (!satisfies_pow(header)) return false;
    if (header.prev_hash != parent.hash()) return false;
    if (header.height != parent.height + 1) return false;
    return true;
}

bool verify_header_chain(std::span<const BlockHeader> headers) {
    if (headers.empty()) return false;
    const BlockHeader& genesis = headers.front();
    if (genesis.height != 0 || !genesis.prev_hash.is_zero()) return false;
    if (!satisfies_pow(genesis)) return false;
    for (std::size_t i = 1; i < headers.size(); ++i)
        if (!verify_header(headers[i], headers[i - 1])) return false;
    return true;
}

bool verify_chain(std::span<const Block> blocks) {
    std::vector<BlockHeader> headers;
    headers.reserve(blocks.size());
    for (const auto& b : blocks) headers.push_back(b.header);
    if (!verify_header_chain(headers)) return false;
    for (const auto& b : blocks) {
        if (b.txs.empty()) return false;
        if (merkle_root(b.txs) != b.header.merkle_root) return false;
    }
    return true;
}

Hash256 chain_id(const BlockHeader& genesis_header) {
    if (genesis_header.height != 0 || !genesis_header.prev_hash.is_zero())
        throw std::invalid_argument("chain_id requires a genesis block");
    return genesis_header.hash();
}

Hash256 chain_id(const Block& genesis) { return chain_id(genesis.header); }

BlockchainQuintuple make_quintuple(std::span<const BlockHeader> canonical_headers,
                                   std::uint32_t difficulty_bits) {
    if (canonical_headers.empty())
        throw std::invalid_argument("quintuple needs at least the genesis header");
    BlockchainQuintuple q;
    q.id = chain_id(canonical_headers.front());
    q.consensus = ConsensusDescriptor{"pow-sha256", difficulty_bits};
    q.headers.assign(canonical_headers.begin(), canonical_headers.end());
    return q;
}

// ---- chain state ------------------------------------------------------------

Chain::Chain(Block genesis) {
    if (genesis.header.height != 0 || !genesis.header.prev_hash.is_zero())
        throw std::invalid_argument("genesis must have height 0 and zero prev_hash");
    if (!satisfies_pow(genesis.header))
        throw std::invalid_argument("genesis fails proof of work");
    if (merkle_root(genesis.txs) != genesis.header.merkle_root)
        throw std::invalid_argument("genesis merkle root mismatch");
    genesis_hash_ = genesis.header.hash();
    insert(genesis.header, std::move(genesis.txs));
}

Chain Chain::from_header(const BlockHeader& genesis_header) {
    if (genesis_header.height != 0 || !genesis_header.prev_hash.is_zero())
        throw std::invalid_argument("genesis must have height 0 and zero prev_hash");
    if (!satisfies_pow(genesis_header))
        throw std::invalid_argument("genesis fails proof of work");
    Chain chain;
    chain.genesis_hash_ = genesis_header.hash();
    chain.insert(genesis_header, std::nullopt);
    return chain;
}

void Chain::insert(BlockHeader header, std::optional<std::vector<Transaction>> txs) {
    const Hash256 h = header.hash();
    Entry e;
    e.cumulative_work = block_work(header.difficulty_bits);
    if (header.height > 0) {
        auto parent_it = entries_.find(header.prev_hash);
        e.cumulative_work += parent_it->second.cumulative_work;
        // parent stops being a tip
        std::erase(tips_, header.prev_hash);
    }
    e.header = std::move(header);
    e.arrival = arrival_counter_++;
    if (txs) {
        for (const auto& tx : *txs) tx_index_.emplace(tx.id(), h);
        e.txs = std::move(txs);
    }
    const std::uint64_t work = e.cumulative_work;
    entries_.emplace(h, std::move(e));
    tips_.push_back(h);

    // Strictly-greater work switches the canonical tip; ties keep first-seen.
    if (canonical_tip_.is_zero() || work > entries_.at(canonical_tip_).cumulative_work)
        canonical_tip_ = h;
}

void Chain::extend(Block block) {
    const auto parent_it = entries_.find(block.header.prev_hash);
    if (parent_it == entries_.end())
        throw std::invalid_argument("orphan rejected: unknown parent block");
    if (!verify_header(block.header, parent_it->second.header))
        throw std::invalid_argument("block fails header verification");
    if (block.txs.empty() || merkle_root(block.txs) != block.header.merkle_root)
        throw std::invalid_argument("block merkle commitment mismatch");
    if (contains(block.header.hash())) return; // duplicate delivery is a no-op
    insert(block.header, std::move(block.txs));
}

void Chain::extend_header(const BlockHeader& header) {
    const auto parent_it = entries_.find(header.prev_hash);
    if (parent_it == entries_.end())
        throw std::invalid_argument("orphan rejected: unknown parent header");
    if (!verify_header(header, parent_it->second.header))
        throw std::invalid_argument("header fails verification");
    if (contains(header.hash())) return;
    insert(header, std::nullopt);
}

const Chain::Entry& Chain::entry(const Hash256& h) const {
    auto it = entries_.find(h);
    if (it == entries_.end()) throw std::invalid_argument("unknown block hash");
    return it->second;
}

std::uint64_t Chain::tip_height() const { return entry(canonical_tip_).header.height; }

std::uint64_t Chain::cumulative_work_at_tip() const {
    return entry(canonical_tip_).cumulative_work;
}

bool Chain::contains(const Hash256& block_hash) const {
    return entries_.contains(block_hash);
}

const BlockHeader* Chain::header(const Hash256& block_hash) const {
    auto it = entries_.find(block_hash);
    return it == entries_.end() ? nullptr : &it->second.header;
}

const std::vector<Transaction>* Chain::body(const Hash256& block_hash) const {
    auto it = entries_.find(block_hash);
    if (it == entries_.end() || !it->second.txs) return nullptr;
    return &*it->second.txs;
}

void Chain::attach_body(const Hash256& block_hash, std::vector<Transaction> txs) {
    auto it = entries_.find(block_hash);
    if (it == entries_.end()) throw std::invalid_argument("unknown block hash");
    if (merkle_root(txs) != it->second.header.merkle_root)
        throw std::invalid_argument("body does not match header merkle root");
    for (const auto& tx : txs) tx_index_.emplace(tx.id(), block_hash);
    it->second.txs = std::move(txs);
}

bool Chain::on_canonical(const Hash256& block_hash) const {
    auto it = entries_.find(block_hash);
    if (it == entries_.end()) return false;
    const std::uint64_t h = it->second.header.height;
    const BlockHeader* canonical = canonical_header_at(h);
    return canonical != nullptr && canonical->hash() == block_hash;
}

const BlockHeader* Chain::canonical_header_at(std::uint64_t height) const {
    const Entry* e = &entry(canonical_tip_);
    if (height > e->header.height) return nullptr;
    while (e->header.height > height) e = &entry(e->header.prev_hash);
    return &e->header;
}

std::vector<BlockHeader> Chain::canonical_headers() const {
    std::vector<BlockHeader> out;
    const Entry* e = &entry(canonical_tip_);
    out.reserve(e->header.height + 1);
    for (;;) {
        out.push_back(e->header);
        if (e->header.height == 0) break;
        e = &entry(e->header.prev_hash);
    }
    std::reverse(out.begin(), out.end());
    return out;
}

std::vector<Block> Chain::canonical_blocks() const {
    std::vector<Block> out;
    const Entry* e = &entry(canonical_tip_);
    out.reserve(e->header.height + 1);
    for (;;) {
        if (!e->txs)
            throw std::runtime_error("canonical block is header-only");
        out.push_back(Block{e->header, *e->txs});
        if (e->header.height == 0) break;
        e = &entry(e->header.prev_hash);
    }
    std::reverse(out.begin(), out.end());
    return out;
}

std::optional<Chain::TxLocation> Chain::locate_tx(const Hash256& tx_id) const {
    auto it = tx_index_.find(tx_id);
    if (it == tx_index_.end()) return std::nullopt;
    return TxLocation{it->second, entry(it->second).header.height};
}

} // namespace cifuv::chain
