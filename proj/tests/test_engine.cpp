#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cifuv/engine.hpp"

using namespace cifuv;
using namespace cifuv::chain;
using namespace cifuv::engine;

namespace {

constexpr std::uint32_t kBits = 8;

std::vector<Transaction> numbered_txs(int count, int salt) {
    std::vector<Transaction> txs;
    for (int i = 0; i < count; ++i)
        txs.push_back(Transaction::from_string("tx-" + std::to_string(salt) + "-" +
                                               std::to_string(i)));
    return txs;
}

Chain build_guest(int blocks, std::uint64_t seed, int txs_per_block = 4) {
    SplitMix64 rng(seed);
    Chain chain(mine_genesis(numbered_txs(txs_per_block, 0), kBits, rng));
    for (int h = 1; h <= blocks; ++h)
        chain.extend(mine_block(*chain.header(chain.canonical_tip()),
                                numbered_txs(txs_per_block, h), kBits, rng));
    return chain;
}

struct Fixture {
    Chain guest;
    BlockchainQuintuple quintuple;
    Hash256 guest_id;
    Transaction tx;
    MerkleProof proof;
    std::uint64_t at_height;
    ConfirmationPolicy policy;
};

Fixture honest_fixture(int blocks = 12, std::uint64_t seed = 42,
                       std::uint64_t at_height = 3, std::size_t tx_index = 1) {
    Fixture f{build_guest(blocks, seed), {}, {}, {}, {}, at_height, {}};
    f.guest_id = chain_id(*f.guest.canonical_header_at(0));
    f.quintuple = make_quintuple(f.guest.canonical_headers(), kBits);
    const auto* body = f.guest.body(f.guest.canonical_header_at(at_height)->hash());
    f.tx = (*body)[tx_index];
    f.proof = merkle_prove(*body, tx_index);
    return f;
}

GuestVerifier verifier_for(const Fixture& f) {
    return GuestVerifier(f.quintuple.consensus);
}

} // namespace

// The host runs only the verification subset of a guest's consensus: a
// guest verifier with a mining entry point must not compile.
template <typename T>
concept ExposesMining = requires(T v) { v.mine(); } ||
                        requires(T v, chain::Chain c, SplitMix64 r) { v.mine_next(c, r); };
static_assert(!ExposesMining<GuestVerifier>);

TEST_CASE("full verification accepts the honest guest path") {
    auto f = honest_fixture();
    auto verdict = full_verify(f.quintuple, f.guest_id, f.tx, f.proof, f.at_height, f.policy);
    CHECK(verdict.accepted);
    CHECK_FALSE(verdict.failure.has_value());
}

TEST_CASE("an unexpected genesis is caught as the wrong chain") {
    auto f = honest_fixture();
    auto other = build_guest(12, 777);
    auto verdict = full_verify(f.quintuple, chain_id(*other.canonical_header_at(0)),
                               f.tx, f.proof, f.at_height, f.policy);
    CHECK_FALSE(verdict.accepted);
    CHECK(verdict.failure == FailureCause::WrongChainId);
}

TEST_CASE("a quintuple from a different chain fails identity first") {
    auto f = honest_fixture();
    auto fabricated = build_guest(12, 999);
    auto q = make_quintuple(fabricated.canonical_headers(), kBits);
    const auto* body = fabricated.body(fabricated.canonical_header_at(3)->hash());
    auto verdict = full_verify(q, f.guest_id, (*body)[0], merkle_prove(*body, 0), 3, f.policy);
    CHECK_FALSE(verdict.accepted);
    CHECK(verdict.failure == FailureCause::WrongChainId);
}

TEST_CASE("each failure cause is triggered by its minimal mutation") {
    auto f = honest_fixture();

    SUBCASE("invalid pow") {
        auto q = f.quintuple;
        q.headers[5].nonce ^= 1;
        auto verdict = full_verify(q, f.guest_id, f.tx, f.proof, f.at_height, f.policy);
        CHECK(verdict.failure == FailureCause::InvalidPow);
    }
    SUBCASE("dropped difficulty is an invalid pow too") {
        auto q = f.quintuple;
        SplitMix64 rng(1);
        auto easy = mine_block(q.headers[4], numbered_txs(1, 9), 0, rng);
        q.headers[5] = easy.header;
        auto verdict = full_verify(q, f.guest_id, f.tx, f.proof, f.at_height, f.policy);
        CHECK(verdict.failure == FailureCause::InvalidPow);
    }
    SUBCASE("broken linkage") {
        auto q = f.quintuple;
        SplitMix64 rng(2);
        // Height 5 re-mined with valid PoW; height 6 no longer links.
        auto replaced = mine_block(q.headers[4], numbered_txs(1, 50), kBits, rng);
        q.headers[5] = replaced.header;
        auto verdict = full_verify(q, f.guest_id, f.tx, f.proof, f.at_height, f.policy);
        CHECK(verdict.failure == FailureCause::BrokenLinkage);
    }
    SUBCASE("forged merkle proof") {
        auto proof = f.proof;
        proof.path[0].sibling.bytes[7] ^= 0x20;
        auto verdict = full_verify(f.quintuple, f.guest_id, f.tx, proof, f.at_height, f.policy);
        CHECK(verdict.failure == FailureCause::BadMerkleProof);
    }
    SUBCASE("tampered payload with a rebuilt leaf is a forged proof") {
        auto tampered = f.tx;
        tampered.payload[0] ^= 0x01;
        auto proof = f.proof;
        proof.leaf = tampered.id();
        auto verdict = full_verify(f.quintuple, f.guest_id, tampered, proof, f.at_height, f.policy);
        CHECK(verdict.failure == FailureCause::BadMerkleProof);
    }
    SUBCASE("a valid proof about some other tx is a missing inclusion") {
        const auto* body = f.guest.body(f.guest.canonical_header_at(f.at_height)->hash());
        auto other_proof = merkle_prove(*body, 2);
        auto verdict = full_verify(f.quintuple, f.guest_id, f.tx, other_proof,
                                   f.at_height, f.policy);
        CHECK(verdict.failure == FailureCause::TxNotIncluded);
    }
    SUBCASE("tampered payload with the untouched original proof is a missing inclusion") {
        auto tampered = f.tx;
        tampered.payload[0] ^= 0x01;
        auto verdict = full_verify(f.quintuple, f.guest_id, tampered, f.proof,
                                   f.at_height, f.policy);
        CHECK(verdict.failure == FailureCause::TxNotIncluded);
    }
    SUBCASE("too close to the tip") {
        auto shallow = honest_fixture(12, 42, 8, 1); // depth 4 < k_guest 6
        auto verdict = full_verify(shallow.quintuple, shallow.guest_id, shallow.tx,
                                   shallow.proof, shallow.at_height, shallow.policy);
        CHECK(verdict.failure == FailureCause::InsufficientConfirmations);
    }
    SUBCASE("exactly k_guest below the tip is accepted") {
        auto boundary = honest_fixture(12, 42, 6, 1); // depth 6 == k_guest
        auto verdict = full_verify(boundary.quintuple, boundary.guest_id, boundary.tx,
                                   boundary.proof, boundary.at_height, boundary.policy);
        CHECK(verdict.accepted);
    }
}

TEST_CASE("malformed quintuples raise a structural error, not a verdict") {
    auto f = honest_fixture();

    auto empty = f.quintuple;
    empty.headers.clear();
    CHECK_THROWS_AS(full_verify(empty, f.guest_id, f.tx, f.proof, 0, f.policy),
                    MalformedQuintuple);

    CHECK_THROWS_AS(full_verify(f.quintuple, f.guest_id, f.tx, f.proof,
                                f.quintuple.headers.size(), f.policy),
                    MalformedQuintuple);

    auto alien = f.quintuple;
    alien.consensus.algorithm = "pos-magic";
    CHECK_THROWS_AS(full_verify(alien, f.guest_id, f.tx, f.proof, f.at_height, f.policy),
                    MalformedQuintuple);

    auto inconsistent = f.quintuple;
    inconsistent.consensus.difficulty_bits = kBits + 1;
    CHECK_THROWS_AS(full_verify(inconsistent, f.guest_id, f.tx, f.proof, f.at_height,
                                f.policy),
                    MalformedQuintuple);
}

TEST_CASE("full-transactions verification mirrors the proof route") {
    auto f = honest_fixture();
    auto q = f.quintuple;
    const auto* body = f.guest.body(f.guest.canonical_header_at(f.at_height)->hash());
    q.transactions[f.at_height] = *body;

    CHECK(full_verify_with_txs(q, f.guest_id, f.tx, f.at_height, f.policy).accepted);

    auto absent = Transaction::from_string("never-there");
    auto verdict = full_verify_with_txs(q, f.guest_id, absent, f.at_height, f.policy);
    CHECK(verdict.failure == FailureCause::TxNotIncluded);

    auto tampered_list = q;
    tampered_list.transactions[f.at_height][0].payload.push_back(0x7f);
    verdict = full_verify_with_txs(tampered_list, f.guest_id, f.tx, f.at_height, f.policy);
    CHECK(verdict.failure == FailureCause::BadMerkleProof);

    auto missing = q;
    missing.transactions.clear();
    CHECK_THROWS_AS(full_verify_with_txs(missing, f.guest_id, f.tx, f.at_height, f.policy),
                    MalformedQuintuple);
}

TEST_CASE("first-time sync replicates an honest guest") {
    auto guest = build_guest(100, 7);
    DirectChannel channel(guest);
    SyncStats stats;
    auto state = first_time_sync(channel, chain_id(*guest.canonical_header_at(0)),
                                 GuestVerifier({"pow-sha256", kBits}), &stats);
    CHECK(state.mode == SyncMode::Keeping);
    CHECK(state.replica_tip_height() == 100);
    CHECK(stats.headers_accepted == 101);
    CHECK(state.replica->canonical_headers() == guest.canonical_headers());
}

TEST_CASE("first-time sync aborts at the first invalid header") {
    auto guest = build_guest(80, 8);
    auto headers = guest.canonical_headers();
    headers[50].nonce ^= 1; // destroys PoW at height 50

    struct TamperedChannel final : PeerChannel {
        std::vector<BlockHeader> headers;
        std::vector<BlockHeader> get_headers(std::uint64_t from, std::uint64_t max_count,
                                             std::span<const Hash256>) override {
            std::vector<BlockHeader> out;
            for (std::uint64_t h = from; h < headers.size() && out.size() < max_count; ++h)
                out.push_back(headers[h]);
            return out;
        }
        std::optional<Block> get_block(const Hash256&) override { return std::nullopt; }
    } channel;
    channel.headers = headers;

    try {
        first_time_sync(channel, chain_id(headers[0]), GuestVerifier({"pow-sha256", kBits}));
        FAIL("sync should have aborted");
    } catch (const SyncAborted& aborted) {
        CHECK(aborted.height == 50);
    }
}

TEST_CASE("a genesis-only guest syncs to height zero") {
    SplitMix64 rng(9);
    Chain guest(mine_genesis(numbered_txs(2, 0), kBits, rng));
    DirectChannel channel(guest);
    auto state = first_time_sync(channel, chain_id(*guest.canonical_header_at(0)),
                                 GuestVerifier({"pow-sha256", kBits}));
    CHECK(state.replica_tip_height() == 0);
    CHECK(state.mode == SyncMode::Keeping);
}

TEST_CASE("a guest with a different identity aborts at genesis") {
    auto guest = build_guest(10, 10);
    auto impostor = build_guest(10, 11);
    DirectChannel channel(impostor);
    CHECK_THROWS_AS(first_time_sync(channel, chain_id(*guest.canonical_header_at(0)),
                                    GuestVerifier({"pow-sha256", kBits})),
                    SyncAborted);
}

TEST_CASE("keep_sync transfers exactly the new headers") {
    auto guest = build_guest(30, 12);
    DirectChannel channel(guest);
    GuestVerifier verifier({"pow-sha256", kBits});
    auto state = first_time_sync(channel, chain_id(*guest.canonical_header_at(0)), verifier);

    SplitMix64 rng(13);
    for (int i = 0; i < 5; ++i)
        guest.extend(mine_block(*guest.header(guest.canonical_tip()),
                                numbered_txs(2, 100 + i), kBits, rng));

    SyncStats stats;
    keep_sync(state, channel, verifier, &stats);
    CHECK(stats.headers_received == 5);
    CHECK(stats.headers_accepted == 5);
    CHECK(state.replica->canonical_headers() == guest.canonical_headers());

    SyncStats idle;
    keep_sync(state, channel, verifier, &idle);
    CHECK(idle.headers_received == 0); // no guest progress, no transfer
}

TEST_CASE("keep_sync adopts a guest rebranch incrementally") {
    auto guest = build_guest(20, 14);
    DirectChannel channel(guest);
    GuestVerifier verifier({"pow-sha256", kBits});
    auto state = first_time_sync(channel, chain_id(*guest.canonical_header_at(0)), verifier);

    // Guest rebranches 3 deep and extends 4: fork point 17, new tip 24.
    SplitMix64 rng(15);
    BlockHeader fork_parent = *guest.canonical_header_at(17);
    for (int i = 0; i < 7; ++i) {
        auto block = mine_block(fork_parent, numbered_txs(2, 200 + i), kBits, rng);
        fork_parent = block.header;
        guest.extend(std::move(block));
    }
    REQUIRE(guest.tip_height() == 24);

    SyncStats stats;
    keep_sync(state, channel, verifier, &stats);
    CHECK(state.replica->canonical_headers() == guest.canonical_headers());
    CHECK(stats.headers_accepted == 7); // 3 replaced + 4 new
    CHECK(stats.headers_received <= 7); // locator keeps redundancy out
    CHECK(stats.rebranches == 1);
}

TEST_CASE("cross events confirm at the depth boundary and not before") {
    auto f = honest_fixture(20, 16, 5, 0);
    DirectChannel channel(f.guest);
    GuestVerifier verifier({"pow-sha256", kBits});
    auto state = first_time_sync(channel, f.guest_id, verifier);

    // Host chain carrying a cross-reference to the guest tx.
    SplitMix64 rng(17);
    Chain host(mine_genesis(numbered_txs(1, 900), kBits, rng));
    Transaction host_tx = Transaction::from_string(
        "host-ref", CrossRef{f.guest_id, f.tx.id()});
    const Hash256 host_tx_id = host_tx.id();
    host.extend(mine_block(*host.header(host.canonical_tip()), {host_tx}, kBits, rng));

    GuestTxObservation obs{f.guest_id, f.tx.id(), 5,
                           f.guest.canonical_header_at(5)->hash()};

    // Host depth 0 < k_host.
    CHECK(confirm_cross_event(host, state, host_tx_id, obs, f.policy) ==
          CrossEventStatus::Pending);

    for (int i = 0; i < 5; ++i)
        host.extend(mine_block(*host.header(host.canonical_tip()),
                               numbered_txs(1, 910 + i), kBits, rng));
    // Host depth 5, one short of k_host.
    CHECK(confirm_cross_event(host, state, host_tx_id, obs, f.policy) ==
          CrossEventStatus::Pending);

    host.extend(mine_block(*host.header(host.canonical_tip()),
                           numbered_txs(1, 916), kBits, rng));
    // Host depth now exactly 6; guest depth 15. Boundary is inclusive.
    CHECK(confirm_cross_event(host, state, host_tx_id, obs, f.policy) ==
          CrossEventStatus::Confirmed);

    CHECK_THROWS_AS(confirm_cross_event(host, state, sha256(std::string_view{"none"}),
                                        obs, f.policy),
                    std::invalid_argument);
}

TEST_CASE("a guest rebranch that evicts the observed block invalidates the event") {
    auto f = honest_fixture(10, 18, 8, 0);
    DirectChannel channel(f.guest);
    GuestVerifier verifier({"pow-sha256", kBits});
    auto state = first_time_sync(channel, f.guest_id, verifier);

    SplitMix64 rng(19);
    Chain host(mine_genesis(numbered_txs(1, 901), kBits, rng));
    Transaction host_tx = Transaction::from_string(
        "host-ref", CrossRef{f.guest_id, f.tx.id()});
    host.extend(mine_block(*host.header(host.canonical_tip()), {host_tx}, kBits, rng));
    for (int i = 0; i < 8; ++i)
        host.extend(mine_block(*host.header(host.canonical_tip()),
                               numbered_txs(1, 920 + i), kBits, rng));

    GuestTxObservation obs{f.guest_id, f.tx.id(), 8,
                           f.guest.canonical_header_at(8)->hash()};
    ConfirmationPolicy policy{2, 2};
    CHECK(confirm_cross_event(host, state, host_tx.id(), obs, policy) ==
          CrossEventStatus::Confirmed);

    // Guest rebranches below the observed height: fork at 7, 4 new blocks.
    BlockHeader fork_parent = *f.guest.canonical_header_at(7);
    for (int i = 0; i < 4; ++i) {
        auto block = mine_block(fork_parent, numbered_txs(2, 300 + i), kBits, rng);
        fork_parent = block.header;
        f.guest.extend(std::move(block));
    }
    keep_sync(state, channel, verifier);
    CHECK(confirm_cross_event(host, state, host_tx.id(), obs, policy) ==
          CrossEventStatus::Invalidated);
}

TEST_CASE("a host rebranch that evicts the host tx invalidates the event") {
    auto f = honest_fixture(20, 20, 5, 0);
    DirectChannel channel(f.guest);
    auto state = first_time_sync(channel, f.guest_id, GuestVerifier({"pow-sha256", kBits}));

    SplitMix64 rng(21);
    Chain host(mine_genesis(numbered_txs(1, 902), kBits, rng));
    const BlockHeader genesis = *host.canonical_header_at(0);
    Transaction host_tx = Transaction::from_string(
        "host-ref", CrossRef{f.guest_id, f.tx.id()});
    host.extend(mine_block(genesis, {host_tx}, kBits, rng));

    GuestTxObservation obs{f.guest_id, f.tx.id(), 5,
                           f.guest.canonical_header_at(5)->hash()};

    // A competing host branch without the tx overtakes.
    BlockHeader rival = genesis;
    for (int i = 0; i < 2; ++i) {
        auto block = mine_block(rival, numbered_txs(1, 930 + i), kBits, rng);
        rival = block.header;
        host.extend(std::move(block));
    }
    CHECK_FALSE(host.on_canonical(host.locate_tx(host_tx.id())->block_hash));
    CHECK(confirm_cross_event(host, state, host_tx.id(), obs, f.policy) ==
          CrossEventStatus::Invalidated);
}

TEST_CASE("the trusted relay baseline accepts fabricated guests") {
    RelayClaim fabricated;
    fabricated.claimed_guest_id = sha256(std::string_view{"no-such-chain"});
    fabricated.tx = Transaction::from_string("minted-from-thin-air");
    fabricated.validation = model::VerificationSpec{"relay-assertion", "take my word"};

    auto verdict = relay_trust_verify(fabricated, true);
    CHECK(verdict.accepted); // the invisible-system hole, by construction

    CHECK_FALSE(relay_trust_verify(fabricated, false).accepted);

    // The same fabricated claim cannot pass full verification: there is no
    // quintuple for a nonexistent chain, and any substitute quintuple fails
    // on identity.
    auto f = honest_fixture();
    auto verdict_full = full_verify(f.quintuple, fabricated.claimed_guest_id, fabricated.tx,
                                    f.proof, f.at_height, f.policy);
    CHECK_FALSE(verdict_full.accepted);
    CHECK(verdict_full.failure == FailureCause::WrongChainId);

    // Honest data passes both paths.
    RelayClaim honest;
    honest.claimed_guest_id = f.guest_id;
    honest.tx = f.tx;
    CHECK(relay_trust_verify(honest, true).accepted);
    CHECK(full_verify(f.quintuple, f.guest_id, f.tx, f.proof, f.at_height, f.policy).accepted);
}

TEST_CASE("consensus set registers verification-only guest entries") {
    ConsensusSet set;
    set.own.descriptor = {"pow-sha256", kBits};
    const Hash256 id = sha256(std::string_view{"guest"});
    set.register_guest(id, {"pow-sha256", 10});
    REQUIRE(set.find_guest(id) != nullptr);
    CHECK(set.find_guest(id)->descriptor().difficulty_bits == 10);
    CHECK(set.find_guest(sha256(std::string_view{"other"})) == nullptr);
    CHECK(set.find_guest(id)->spec().method_name == "pow-sha256");
    CHECK_THROWS_AS(set.register_guest(id, {"pos-magic", 0}), std::invalid_argument);
}

TEST_CASE("accepted verdicts are reproducible from raw bytes alone") {
    // Soundness: whatever full_verify accepts must re-verify from the wire
    // encodings with the static primitives, independent of engine state.
    auto f = honest_fixture();
    REQUIRE(full_verify(f.quintuple, f.guest_id, f.tx, f.proof, f.at_height, f.policy)
                .accepted);

    std::vector<BlockHeader> reencoded;
    for (const auto& h : f.quintuple.headers) {
        CHECK(h.encode().size() == kHeaderWireSize);
        reencoded.push_back(h);
    }
    CHECK(verify_header_chain(reencoded));
    CHECK(chain_id(reencoded.front()) == f.guest_id);
    CHECK(verify_merkle(reencoded[f.at_height].merkle_root, f.proof));
    CHECK(sha256(f.tx.encode()) == f.proof.leaf);
    CHECK(f.quintuple.headers.back().height - f.at_height >=
          static_cast<std::uint64_t>(f.policy.k_guest));
}

TEST_CASE("confirmed events stay confirmed in adversary-free continuations") {
    auto f = honest_fixture(20, 60, 5, 0);
    DirectChannel channel(f.guest);
    GuestVerifier verifier({"pow-sha256", kBits});
    auto state = first_time_sync(channel, f.guest_id, verifier);

    SplitMix64 rng(61);
    Chain host(mine_genesis(numbered_txs(1, 905), kBits, rng));
    Transaction host_tx = Transaction::from_string(
        "host-ref", CrossRef{f.guest_id, f.tx.id()});
    host.extend(mine_block(*host.header(host.canonical_tip()), {host_tx}, kBits, rng));
    for (int i = 0; i < 6; ++i)
        host.extend(mine_block(*host.header(host.canonical_tip()),
                               numbered_txs(1, 940 + i), kBits, rng));

    GuestTxObservation obs{f.guest_id, f.tx.id(), 5,
                           f.guest.canonical_header_at(5)->hash()};
    REQUIRE(confirm_cross_event(host, state, host_tx.id(), obs, f.policy) ==
            CrossEventStatus::Confirmed);

    // Random honest continuation: no fork ever forms, status never regresses.
    SplitMix64 schedule(62);
    for (int step = 0; step < 120; ++step) {
        switch (schedule.next_below(3)) {
            case 0:
                f.guest.extend(mine_block(*f.guest.header(f.guest.canonical_tip()),
                                          numbered_txs(1, 2000 + step), kBits, rng));
                break;
            case 1:
                host.extend(mine_block(*host.header(host.canonical_tip()),
                                       numbered_txs(1, 3000 + step), kBits, rng));
                break;
            case 2:
                keep_sync(state, channel, verifier);
                break;
        }
        CHECK(confirm_cross_event(host, state, host_tx.id(), obs, f.policy) ==
              CrossEventStatus::Confirmed);
    }
}

TEST_CASE("replica stays valid under arbitrary mine/sync interleavings") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        auto guest = build_guest(5, 1000 + seed);
        DirectChannel channel(guest);
        GuestVerifier verifier({"pow-sha256", kBits});
        auto state = first_time_sync(channel, chain_id(*guest.canonical_header_at(0)), verifier);

        SplitMix64 schedule(seed);
        SplitMix64 miner(5000 + seed);
        Chain host(mine_genesis(numbered_txs(1, 903), kBits, miner));
        for (int step = 0; step < 60; ++step) {
            switch (schedule.next_below(3)) {
                case 0: // guest mines
                    guest.extend(mine_block(*guest.header(guest.canonical_tip()),
                                            numbered_txs(1, step), kBits, miner));
                    break;
                case 1: // host mines its own chain
                    host.extend(mine_block(*host.header(host.canonical_tip()),
                                           numbered_txs(1, step), kBits, miner));
                    break;
                case 2: // host syncs
                    keep_sync(state, channel, verifier);
                    break;
            }
            CHECK(verify_header_chain(state.replica->canonical_headers()));
        }
        keep_sync(state, channel, verifier);
        CHECK(state.replica->canonical_headers() == guest.canonical_headers());
    }
}
