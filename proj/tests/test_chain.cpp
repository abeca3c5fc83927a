#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cifuv/chain.hpp"
#include "cifuv/hash.hpp"
#include "cifuv/rng.hpp"

using namespace cifuv;
using namespace cifuv::chain;

namespace {

Transaction tx_of(const std::string& payload) { return Transaction::from_string(payload); }

std::vector<Transaction> txs_of(std::initializer_list<const char*> payloads) {
    std::vector<Transaction> txs;
    for (auto p : payloads) txs.push_back(tx_of(p));
    return txs;
}

std::vector<Transaction> numbered_txs(int count, int salt = 0) {
    std::vector<Transaction> txs;
    for (int i = 0; i < count; ++i)
        txs.push_back(tx_of("tx-" + std::to_string(salt) + "-" + std::to_string(i)));
    return txs;
}

// Reference Merkle tree, written independently of the library: recursive,
// duplicating the last node of odd levels, single leaf is its own root.
Hash256 reference_root(std::vector<Hash256> level) {
    if (level.size() == 1) return level[0];
    if (level.size() % 2 == 1) level.push_back(level.back());
    std::vector<Hash256> up;
    for (std::size_t i = 0; i + 1 < level.size(); i += 2)
        up.push_back(sha256_pair(level[i], level[i + 1]));
    return reference_root(std::move(up));
}

Chain build_chain(int blocks, std::uint32_t bits, std::uint64_t seed,
                  int txs_per_block = 3) {
    SplitMix64 rng(seed);
    Chain chain(mine_genesis(numbered_txs(txs_per_block, 0), bits, rng));
    for (int h = 1; h <= blocks; ++h) {
        const BlockHeader* tip = chain.header(chain.canonical_tip());
        chain.extend(mine_block(*tip, numbered_txs(txs_per_block, h), bits, rng));
    }
    return chain;
}

} // namespace

TEST_CASE("sha256 matches the NIST example vectors") {
    CHECK(sha256(std::string_view{}).hex() ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256(std::string_view{"abc"}).hex() ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256(std::string_view{
              "abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq"})
              .hex() ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
    std::string million(1'000'000, 'a');
    CHECK(sha256(std::string_view{million}).hex() ==
          "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0");
}

TEST_CASE("leading zero bits") {
    Hash256 h;
    CHECK(leading_zero_bits(h) == 256);
    h.bytes[0] = 0x80;
    CHECK(leading_zero_bits(h) == 0);
    h.bytes[0] = 0x01;
    CHECK(leading_zero_bits(h) == 7);
    h.bytes[0] = 0x00;
    h.bytes[1] = 0x10;
    CHECK(leading_zero_bits(h) == 11);
}

TEST_CASE("hash hex round trip") {
    SplitMix64 rng(1);
    Hash256 h;
    for (auto& b : h.bytes) b = static_cast<std::uint8_t>(rng.next());
    auto parsed = Hash256::from_hex(h.hex());
    REQUIRE(parsed.has_value());
    CHECK(*parsed == h);
    CHECK_FALSE(Hash256::from_hex("xyz").has_value());
    CHECK_FALSE(Hash256::from_hex(h.hex().substr(1)).has_value());
}

TEST_CASE("canonical encodings are the documented fixed layouts") {
    BlockHeader header;
    header.height = 0x0102030405060708ull;
    header.prev_hash.bytes.fill(0xaa);
    header.merkle_root.bytes.fill(0xbb);
    header.difficulty_bits = 0x0c;
    header.nonce = 0x1122334455667788ull;
    header.timestamp = 0x99;

    // Built by hand, field by field, big-endian.
    std::vector<std::uint8_t> expected = {1, 2, 3, 4, 5, 6, 7, 8};
    expected.insert(expected.end(), 32, 0xaa);
    expected.insert(expected.end(), 32, 0xbb);
    expected.insert(expected.end(), {0, 0, 0, 0x0c});
    expected.insert(expected.end(), {0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77, 0x88});
    expected.insert(expected.end(), {0, 0, 0, 0, 0, 0, 0, 0x99});

    CHECK(header.encode() == expected);
    CHECK(header.encode().size() == kHeaderWireSize);
    CHECK(header.hash() == sha256(header.encode()));

    Transaction plain = tx_of("abc");
    std::vector<std::uint8_t> tx_expected = {0, 0, 0, 3, 'a', 'b', 'c', 0};
    CHECK(plain.encode() == tx_expected);
    CHECK(plain.id() == sha256(plain.encode()));

    Transaction with_ref = plain;
    with_ref.cross_ref = CrossRef{};
    with_ref.cross_ref->guest_chain_id.bytes.fill(0x01);
    with_ref.cross_ref->guest_tx_id.bytes.fill(0x02);
    std::vector<std::uint8_t> ref_expected = {0, 0, 0, 3, 'a', 'b', 'c', 1};
    ref_expected.insert(ref_expected.end(), 32, 0x01);
    ref_expected.insert(ref_expected.end(), 32, 0x02);
    CHECK(with_ref.encode() == ref_expected);
    CHECK(with_ref.id() != plain.id());

    Block block{header, {plain}};
    std::vector<std::uint8_t> block_expected = expected;
    block_expected.insert(block_expected.end(), {0, 0, 0, 1});
    block_expected.insert(block_expected.end(), tx_expected.begin(), tx_expected.end());
    CHECK(block.encode() == block_expected);
}

TEST_CASE("merkle root of a single transaction is its id") {
    auto txs = txs_of({"solo"});
    CHECK(merkle_root(txs) == txs[0].id());
    CHECK(merkle_prove(txs, 0).path.empty());
    CHECK(verify_merkle(merkle_root(txs), merkle_prove(txs, 0)));
}

TEST_CASE("merkle root is order sensitive") {
    auto ab = txs_of({"a", "b"});
    auto ba = txs_of({"b", "a"});
    CHECK(merkle_root(ab) != merkle_root(ba));
}

TEST_CASE("merkle trees match the reference construction for sizes 1..64") {
    for (int n = 1; n <= 64; ++n) {
        auto txs = numbered_txs(n, 1000 + n);
        std::vector<Hash256> ids;
        for (const auto& t : txs) ids.push_back(t.id());
        CHECK(merkle_root(txs) == reference_root(ids));

        const int expected_len = n == 1 ? 0 : static_cast<int>(std::ceil(std::log2(n)));
        const Hash256 root = merkle_root(txs);
        for (int i = 0; i < n; ++i) {
            auto proof = merkle_prove(txs, static_cast<std::size_t>(i));
            CHECK(static_cast<int>(proof.path.size()) == expected_len);
            CHECK(verify_merkle(root, proof));
        }
    }
}

TEST_CASE("five leaves give three-step proofs") {
    auto txs = numbered_txs(5, 7);
    for (int i = 0; i < 5; ++i)
        CHECK(merkle_prove(txs, static_cast<std::size_t>(i)).path.size() == 3);
}

TEST_CASE("corrupted proofs do not verify") {
    auto txs = numbered_txs(8, 2);
    const Hash256 root = merkle_root(txs);
    auto proof = merkle_prove(txs, 3);

    auto corrupt_sibling = proof;
    corrupt_sibling.path[1].sibling.bytes[0] ^= 0x01;
    CHECK_FALSE(verify_merkle(root, corrupt_sibling));

    auto corrupt_side = proof;
    corrupt_side.path[0].sibling_on_left = !corrupt_side.path[0].sibling_on_left;
    CHECK_FALSE(verify_merkle(root, corrupt_side));

    auto corrupt_leaf = proof;
    corrupt_leaf.leaf.bytes[31] ^= 0x80;
    CHECK_FALSE(verify_merkle(root, corrupt_leaf));

    CHECK_THROWS_AS(merkle_prove(txs, 8), std::invalid_argument);
}

TEST_CASE("a proof from one tree fails against another tree's root") {
    SplitMix64 rng(3);
    for (int iter = 0; iter < 50; ++iter) {
        auto a = numbered_txs(2 + static_cast<int>(rng.next_below(30)), 100 + iter);
        auto b = numbered_txs(2 + static_cast<int>(rng.next_below(30)), 900 + iter);
        auto proof = merkle_prove(a, rng.next_below(a.size()));
        CHECK_FALSE(verify_merkle(merkle_root(b), proof));
    }
}

TEST_CASE("difficulty zero accepts the first nonce") {
    SplitMix64 rng(4);
    auto genesis = mine_genesis(txs_of({"g"}), 0, rng);
    SplitMix64 replay(4);
    CHECK(genesis.header.nonce == replay.next());
    CHECK(satisfies_pow(genesis.header));
}

TEST_CASE("mined blocks pass header verification") {
    SplitMix64 rng(5);
    auto genesis = mine_genesis(txs_of({"g"}), 8, rng);
    auto next = mine_block(genesis.header, txs_of({"a", "b"}), 8, rng);
    CHECK(verify_header(next.header, genesis.header));
    CHECK(next.header.height == 1);
    CHECK(next.header.prev_hash == genesis.header.hash());
    CHECK(next.header.merkle_root == merkle_root(next.txs));
}

TEST_CASE("difficulty 8 takes about 256 nonce trials on average") {
    double total_trials = 0;
    const int blocks = 1000;
    SplitMix64 setup(6);
    auto parent = mine_genesis(txs_of({"g"}), 0, setup);
    for (int i = 0; i < blocks; ++i) {
        const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(i);
        SplitMix64 rng(seed);
        auto block = mine_block(parent.header, numbered_txs(1, i), 8, rng);
        // Count trials by replaying the nonce stream.
        SplitMix64 replay(seed);
        int trials = 1;
        while (replay.next() != block.header.nonce) ++trials;
        total_trials += trials;
    }
    const double mean = total_trials / blocks;
    CHECK(mean > 256.0 * 0.8);
    CHECK(mean < 256.0 * 1.2);
}

TEST_CASE("verify_chain accepts an honestly mined chain") {
    Chain chain = build_chain(10, 8, 7);
    auto blocks = chain.canonical_blocks();
    CHECK(blocks.size() == 11);
    CHECK(verify_chain(blocks));
    CHECK(verify_header_chain(chain.canonical_headers()));
}

TEST_CASE("tampering with a payload byte breaks verification") {
    Chain chain = build_chain(10, 8, 8);
    auto blocks = chain.canonical_blocks();
    blocks[5].txs[1].payload[0] ^= 0x01;
    CHECK_FALSE(verify_chain(blocks));
}

TEST_CASE("re-mining a tampered block still breaks the next linkage") {
    Chain chain = build_chain(10, 8, 9);
    auto blocks = chain.canonical_blocks();
    SplitMix64 rng(99);
    blocks[5] = mine_block(blocks[4].header, txs_of({"tampered"}), 8, rng);
    CHECK(verify_header(blocks[5].header, blocks[4].header));
    CHECK_FALSE(verify_chain(blocks)); // block 6 no longer links
}

TEST_CASE("single random mutations falsify the chain") {
    Chain chain = build_chain(8, 12, 10);
    const auto pristine = chain.canonical_blocks();
    REQUIRE(verify_chain(pristine));
    SplitMix64 rng(11);
    for (int iter = 0; iter < 60; ++iter) {
        auto blocks = pristine;
        auto& victim = blocks[1 + rng.next_below(blocks.size() - 1)];
        switch (rng.next_below(5)) {
            case 0: victim.txs[0].payload.push_back(0x5a); break;
            case 1: victim.header.nonce ^= 1ull << rng.next_below(64); break;
            case 2: victim.header.prev_hash.bytes[rng.next_below(32)] ^= 0x10; break;
            case 3: victim.header.merkle_root.bytes[rng.next_below(32)] ^= 0x10; break;
            case 4: victim.header.height += 1; break;
        }
        CHECK_FALSE(verify_chain(blocks));
    }
}

TEST_CASE("chain ids are the genesis header hash") {
    SplitMix64 rng(12);
    auto g1 = mine_genesis(txs_of({"g"}), 8, rng, 0);
    auto g2 = mine_genesis(txs_of({"g"}), 8, rng, 1);
    CHECK(chain_id(g1) == g1.header.hash());
    CHECK(chain_id(g1) != chain_id(g2));
    auto again = g1;
    CHECK(chain_id(again) == chain_id(g1));

    auto child = mine_block(g1.header, txs_of({"a"}), 8, rng);
    CHECK_THROWS_AS(chain_id(child), std::invalid_argument);
}

TEST_CASE("extend grows the canonical chain") {
    Chain chain = build_chain(3, 8, 13);
    const auto before = chain.tip_height();
    SplitMix64 rng(14);
    chain.extend(mine_block(*chain.header(chain.canonical_tip()), txs_of({"x"}), 8, rng));
    CHECK(chain.tip_height() == before + 1);
}

TEST_CASE("equal-length side branches do not displace the first-seen tip") {
    Chain chain = build_chain(4, 8, 15);
    SplitMix64 rng(16);
    const Hash256 tip_before = chain.canonical_tip();
    // Fork off the parent of the tip: same height as the tip, same work.
    const BlockHeader* tip = chain.header(tip_before);
    const BlockHeader* parent = chain.header(tip->prev_hash);
    chain.extend(mine_block(*parent, txs_of({"rival"}), 8, rng));
    CHECK(chain.canonical_tip() == tip_before);
    CHECK(chain.tips().size() == 2);
}

TEST_CASE("a longer side branch rebranches the chain") {
    Chain chain = build_chain(4, 8, 17);
    SplitMix64 rng(18);
    const auto old_canonical = chain.canonical_headers();
    const Hash256 old_tip = chain.canonical_tip();

    // Build a fork from height 2 that ends up one block longer.
    const BlockHeader* base = chain.canonical_header_at(2);
    BlockHeader prev = *base;
    for (int i = 0; i < 3; ++i) {
        auto block = mine_block(prev, numbered_txs(1, 500 + i), 8, rng);
        prev = block.header;
        chain.extend(std::move(block));
    }

    CHECK(chain.tip_height() == 5);
    CHECK(chain.canonical_tip() != old_tip);
    CHECK_FALSE(chain.on_canonical(old_tip));
    CHECK(chain.on_canonical(old_canonical[2].hash()));
    CHECK(verify_header_chain(chain.canonical_headers()));
}

TEST_CASE("extending with an orphan is rejected") {
    Chain chain = build_chain(2, 8, 19);
    SplitMix64 rng(20);
    BlockHeader unknown_parent;
    unknown_parent.height = 7;
    unknown_parent.difficulty_bits = 0;
    auto orphan = mine_block(unknown_parent, txs_of({"o"}), 0, rng);
    CHECK_THROWS_AS(chain.extend(orphan), std::invalid_argument);
}

TEST_CASE("quintuple construction binds the genesis id") {
    Chain chain = build_chain(6, 8, 21);
    auto q = make_quintuple(chain.canonical_headers(), 8);
    CHECK(q.id == chain_id(*chain.canonical_header_at(0)));
    CHECK(q.consensus.algorithm == "pow-sha256");
    CHECK(q.headers.size() == 7);
    CHECK_THROWS_AS(make_quintuple({}, 8), std::invalid_argument);
}

TEST_CASE("locate_tx finds transactions in stored bodies") {
    Chain chain = build_chain(5, 8, 22);
    auto blocks = chain.canonical_blocks();
    const Hash256 wanted = blocks[3].txs[2].id();
    auto loc = chain.locate_tx(wanted);
    REQUIRE(loc.has_value());
    CHECK(loc->height == 3);
    CHECK(chain.on_canonical(loc->block_hash));
    CHECK_FALSE(chain.locate_tx(sha256(std::string_view{"nope"})).has_value());
}
