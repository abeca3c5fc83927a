#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cifuv/hash.hpp"
#include "cifuv/rng.hpp"

// Toy proof-of-work blockchain primitives shared by host and guest chains:
// transactions with optional cross-chain references, Merkle trees over
// transaction ids, leading-zero-bit PoW headers, cumulative-work fork
// choice, and the blockchain quintuple used for cross-chain verification.
//
// Canonical wire encoding (bit-exact; host and guest must hash identically):
//   integers     big-endian, fixed width
//   header       height u64 | prev_hash 32 | merkle_root 32 |
//                difficulty_bits u32 | nonce u64 | timestamp u64   (92 bytes)
//   transaction  payload_len u32 | payload | has_cross_ref u8 |
//                [guest_chain_id 32 | guest_tx_id 32]
//   block        header | tx_count u32 | transactions
// header hash = sha256(header encoding); tx id = sha256(tx encoding).

namespace cifuv::chain {

struct CrossRef {
    Hash256 guest_chain_id;
    Hash256 guest_tx_id;

    friend bool operator==(const CrossRef&, const CrossRef&) = default;
};

struct Transaction {
    std::vector<std::uint8_t> payload;
    std::optional<CrossRef> cross_ref;

    std::vector<std::uint8_t> encode() const;
    Hash256 id() const; // content hash of the encoding

    static Transaction from_string(std::string_view payload,
                                   std::optional<CrossRef> cross_ref = std::nullopt);

    friend bool operator==(const Transaction&, const Transaction&) = default;
};

struct BlockHeader {
    std::uint64_t height = 0;
    Hash256 prev_hash;
    Hash256 merkle_root;
    std::uint32_t difficulty_bits = 0; // required leading zero bits of the header hash
    std::uint64_t nonce = 0;
    std::uint64_t timestamp = 0; // simulated ticks, not wall clock

    std::vector<std::uint8_t> encode() const;
    Hash256 hash() const;

    friend bool operator==(const BlockHeader&, const BlockHeader&) = default;
};

inline constexpr std::size_t kHeaderWireSize = 8 + 32 + 32 + 4 + 8 + 8;

struct Block {
    BlockHeader header;
    std::vector<Transaction> txs;

    std::vector<std::uint8_t> encode() const;

    friend bool operator==(const Block&, const Block&) = default;
};

// ---- Merkle tree over transaction ids ------------------------------------
//
// Binary tree; odd layers duplicate their last node; a single-leaf tree's
// root is the leaf itself (no self-hash).

struct MerkleStep {
    Hash256 sibling;
    bool sibling_on_left = false;

    friend bool operator==(const MerkleStep&, const MerkleStep&) = default;
};

struct MerkleProof {
    Hash256 leaf;
    std::vector<MerkleStep> path;

    friend bool operator==(const MerkleProof&, const MerkleProof&) = default;
};

Hash256 merkle_root_of_ids(std::span<const Hash256> leaves);
Hash256 merkle_root(std::span<const Transaction> txs);
MerkleProof merkle_prove(std::span<const Transaction> txs, std::size_t index);
bool verify_merkle(const Hash256& root, const MerkleProof& proof);

// ---- Proof of work --------------------------------------------------------

bool satisfies_pow(const BlockHeader& header);

// Nonce search with rng-drawn candidates; throws std::runtime_error when the
// trial budget is exhausted (unreachable at toy difficulties).
Block mine_block(const BlockHeader& parent, std::vector<Transaction> txs,
                 std::uint32_t difficulty_bits, SplitMix64& rng,
                 std::optional<std::uint64_t> timestamp = std::nullopt);

Block mine_genesis(std::vector<Transaction> txs, std::uint32_t difficulty_bits,
                   SplitMix64& rng, std::uint64_t timestamp = 0);

// PoW bits + parent linkage + height increment.
bool verify_header(const BlockHeader& header, const BlockHeader& parent);

// Genesis shape (height 0, zero prev_hash, PoW) + pairwise header checks.
bool verify_header_chain(std::span<const BlockHeader> headers);

// verify_header_chain plus each block's Merkle commitment.
bool verify_chain(std::span<const Block> blocks);

// Identity of a chain: hash of its genesis header.
// Throws std::invalid_argument when the block is not a genesis block.
Hash256 chain_id(const BlockHeader& genesis_header);
Hash256 chain_id(const Block& genesis);

// ---- Blockchain quintuple --------------------------------------------------

struct ConsensusDescriptor {
    std::string algorithm = "pow-sha256";
    std::uint32_t difficulty_bits = 12; // toy default

    friend bool operator==(const ConsensusDescriptor&, const ConsensusDescriptor&) = default;
};

// The verification bundle for a guest chain: identity, consensus descriptor
// (the verification method), the chain of headers, and whichever transactions
// the verification needs (full per-height lists, or none when Merkle proofs
// travel separately).
struct BlockchainQuintuple {
    Hash256 id;
    ConsensusDescriptor consensus;
    std::vector<BlockHeader> headers;
    std::map<std::uint64_t, std::vector<Transaction>> transactions;
};

BlockchainQuintuple make_quintuple(std::span<const BlockHeader> canonical_headers,
                                   std::uint32_t difficulty_bits);

// ---- Chain state with fork choice ------------------------------------------
//
// Stores every block (or bare header) ever accepted, keyed by header hash;
// the canonical tip maximizes cumulative work (sum of 2^difficulty_bits),
// ties broken by first arrival. Single-writer; readers take value snapshots.

class Chain {
public:
    explicit Chain(Block genesis);
    static Chain from_header(const BlockHeader& genesis_header);

    // Throws std::invalid_argument when the parent is unknown (orphan) or the
    // block/header fails verification against its parent.
    void extend(Block block);
    void extend_header(const BlockHeader& header);

    const Hash256& genesis_hash() const { return genesis_hash_; }
    const Hash256& canonical_tip() const { return canonical_tip_; }
    std::uint64_t tip_height() const;
    std::uint64_t cumulative_work_at_tip() const;
    std::size_t block_count() const { return entries_.size(); }

    bool contains(const Hash256& block_hash) const;
    const BlockHeader* header(const Hash256& block_hash) const;
    const std::vector<Transaction>* body(const Hash256& block_hash) const;
    void attach_body(const Hash256& block_hash, std::vector<Transaction> txs);

    bool on_canonical(const Hash256& block_hash) const;
    // Canonical header at `height`, genesis..tip; nullptr when above the tip.
    const BlockHeader* canonical_header_at(std::uint64_t height) const;

    std::vector<BlockHeader> canonical_headers() const;
    // Throws std::runtime_error when a canonical block is header-only.
    std::vector<Block> canonical_blocks() const;

    const std::vector<Hash256>& tips() const { return tips_; }

    struct TxLocation {
        Hash256 block_hash;
        std::uint64_t height = 0;
    };
    // Searches the bodies this chain stores; canonical-ness is judged
    // separately via on_canonical(location.block_hash).
    std::optional<TxLocation> locate_tx(const Hash256& tx_id) const;

private:
    struct Entry {
        BlockHeader header;
        std::optional<std::vector<Transaction>> txs;
        std::uint64_t cumulative_work = 0;
        std::uint64_t arrival = 0;
    };

    Chain() = default;
    void insert(BlockHeader header, std::optional<std::vector<Transaction>> txs);
    const Entry& entry(const Hash256& h) const;

    Hash256 genesis_hash_;
    Hash256 canonical_tip_;
    std::unordered_map<Hash256, Entry, Hash256Hasher> entries_;
    std::vector<Hash256> tips_; // leaves, in first-seen order
    std::unordered_map<Hash256, Hash256, Hash256Hasher> tx_index_; // tx id -> block hash
    std::uint64_t arrival_counter_ = 0;
};

} // namespace cifuv::chain
