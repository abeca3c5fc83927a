#include "cifuv/engine.hpp"

#include <algorithm>

namespace cifuv::engine {

namespace {

constexpr const char* kPowAlgorithm = "pow-sha256";

// Shared by both full_verify routes: identity and consensus checks (steps 1
// and 2), plus structural validation. Returns nullopt when both pass.
std::optional<VerificationVerdict> check_identity_and_consensus(
    const chain::BlockchainQuintuple& q, const Hash256& expected_id,
    std::uint64_t at_height) {
    if (q.headers.empty())
        throw MalformedQuintuple("quintuple has no headers");
    if (q.consensus.algorithm != kPowAlgorithm)
        throw MalformedQuintuple("unsupported consensus algorithm: " +
                                 q.consensus.algorithm);
    if (at_height >= q.headers.size())
        throw MalformedQuintuple("at_height beyond the quintuple headers");
    if (q.consensus.difficulty_bits != q.headers.front().difficulty_bits)
        throw MalformedQuintuple("consensus descriptor inconsistent with genesis");

    // (1) identity: the genesis header must reproduce the expected chain id.
    const chain::BlockHeader& genesis = q.headers.front();
    if (genesis.height != 0 || !genesis.prev_hash.is_zero())
        return VerificationVerdict::reject(FailureCause::WrongChainId);
    if (chain::chain_id(genesis) != expected_id || q.id != expected_id)
        return VerificationVerdict::reject(FailureCause::WrongChainId);

    // (2) consensus: all PoW first, then linkage, so causes are deterministic.
    for (const auto& h : q.headers) {
        if (h.difficulty_bits != q.consensus.difficulty_bits ||
            !chain::satisfies_pow(h))
            return VerificationVerdict::reject(FailureCause::InvalidPow);
    }
    for (std::size_t i = 1; i < q.headers.size(); ++i) {
        if (q.headers[i].prev_hash != q.headers[i - 1].hash() ||
            q.headers[i].height != q.headers[i - 1].height + 1)
            return VerificationVerdict::reject(FailureCause::BrokenLinkage);
    }
    return std::nullopt;
}

std::optional<VerificationVerdict> check_depth(const chain::BlockchainQuintuple& q,
                                               std::uint64_t at_height,
                                               const ConfirmationPolicy& policy) {
    const std::uint64_t tip = q.headers.back().height;
    if (tip - at_height < static_cast<std::uint64_t>(policy.k_guest))
        return VerificationVerdict::reject(FailureCause::InsufficientConfirmations);
    return std::nullopt;
}

} // namespace

const char* to_string(FailureCause cause) {
    switch (cause) {
        case FailureCause::WrongChainId: return "wrong-chain-id";
        case FailureCause::InvalidPow: return "invalid-pow";
        case FailureCause::BrokenLinkage: return "broken-linkage";
        case FailureCause::BadMerkleProof: return "bad-merkle-proof";
        case FailureCause::TxNotIncluded: return "tx-not-included";
        case FailureCause::InsufficientConfirmations: return "insufficient-confirmations";
    }
    return "unknown";
}

const char* to_string(CrossEventStatus status) {
    switch (status) {
        case CrossEventStatus::Pending: return "pending";
        case CrossEventStatus::Confirmed: return "confirmed";
        case CrossEventStatus::Invalidated: return "invalidated";
    }
    return "unknown";
}

void ConfirmationPolicy::validate() const {
    if (k_host < 1 || k_guest < 1)
        throw std::invalid_argument("confirmation depths must be >= 1");
}

// ---- consensus set -----------------------------------------------------------

GuestVerifier::GuestVerifier(chain::ConsensusDescriptor descriptor)
    : descriptor_(std::move(descriptor)) {
    if (descriptor_.algorithm != kPowAlgorithm)
        throw std::invalid_argument("unsupported consensus algorithm: " +
                                    descriptor_.algorithm);
}

bool GuestVerifier::check_genesis(const chain::BlockHeader& genesis) const {
    return genesis.height == 0 && genesis.prev_hash.is_zero() &&
           genesis.difficulty_bits == descriptor_.difficulty_bits &&
           chain::satisfies_pow(genesis);
}

bool GuestVerifier::check_header(const chain::BlockHeader& header,
                                 const chain::BlockHeader& parent) const {
    return header.difficulty_bits == descriptor_.difficulty_bits &&
           chain::verify_header(header, parent);
}

bool GuestVerifier::check_merkle(const Hash256& root,
                                 const chain::MerkleProof& proof) const {
    return chain::verify_merkle(root, proof);
}

model::VerificationSpec GuestVerifier::spec() const {
    return model::VerificationSpec{descriptor_.algorithm, ""};
}

chain::Block FullConsensus::mine_next(const chain::Chain& chain,
                                      std::vector<chain::Transaction> txs,
                                      SplitMix64& rng,
                                      std::optional<std::uint64_t> timestamp) const {
    const chain::BlockHeader* tip = chain.header(chain.canonical_tip());
    return chain::mine_block(*tip, std::move(txs), descriptor.difficulty_bits, rng,
                             timestamp);
}

void ConsensusSet::register_guest(const Hash256& guest_id,
                                  chain::ConsensusDescriptor descriptor) {
    guest_verifiers.insert_or_assign(guest_id, GuestVerifier(std::move(descriptor)));
}

const GuestVerifier* ConsensusSet::find_guest(const Hash256& guest_id) const {
    auto it = guest_verifiers.find(guest_id);
    return it == guest_verifiers.end() ? nullptr : &it->second;
}

// ---- full verification -------------------------------------------------------

VerificationVerdict full_verify(const chain::BlockchainQuintuple& quintuple,
                                const Hash256& expected_id,
                                const chain::Transaction& tx,
                                const chain::MerkleProof& proof,
                                std::uint64_t at_height,
                                const ConfirmationPolicy& policy) {
    policy.validate();
    if (auto verdict = check_identity_and_consensus(quintuple, expected_id, at_height))
        return *verdict;

    // (3) proof folds to the committed root
    GuestVerifier verifier(quintuple.consensus);
    if (!verifier.check_merkle(quintuple.headers[at_height].merkle_root, proof))
        return VerificationVerdict::reject(FailureCause::BadMerkleProof);

    // (4) the proof is about this transaction
    if (tx.id() != proof.leaf)
        return VerificationVerdict::reject(FailureCause::TxNotIncluded);

    // (5) deep enough below the tip
    if (auto verdict = check_depth(quintuple, at_height, policy)) return *verdict;
    return VerificationVerdict::accept();
}

VerificationVerdict full_verify_with_txs(const chain::BlockchainQuintuple& quintuple,
                                         const Hash256& expected_id,
                                         const chain::Transaction& tx,
                                         std::uint64_t at_height,
                                         const ConfirmationPolicy& policy) {
    policy.validate();
    if (auto verdict = check_identity_and_consensus(quintuple, expected_id, at_height))
        return *verdict;

    auto it = quintuple.transactions.find(at_height);
    if (it == quintuple.transactions.end() || it->second.empty())
        throw MalformedQuintuple("full-transactions mode needs the tx list at at_height");

    // (3') the full list reproduces the committed root
    if (chain::merkle_root(it->second) != quintuple.headers[at_height].merkle_root)
        return VerificationVerdict::reject(FailureCause::BadMerkleProof);

    // (4') the transaction is in the list
    const Hash256 wanted = tx.id();
    const bool included = std::any_of(it->second.begin(), it->second.end(),
                                      [&](const chain::Transaction& t) {
                                          return t.id() == wanted;
                                      });
    if (!included) return VerificationVerdict::reject(FailureCause::TxNotIncluded);

    if (auto verdict = check_depth(quintuple, at_height, policy)) return *verdict;
    return VerificationVerdict::accept();
}

// ---- synchronization ---------------------------------------------------------

std::uint64_t SyncState::replica_tip_height() const {
    return replica ? replica->tip_height() : 0;
}

std::uint64_t accept_header_batch(SyncState& state, const GuestVerifier& verifier,
                                  std::span<const chain::BlockHeader> headers,
                                  SyncStats* stats) {
    if (stats) stats->headers_received += headers.size();
    std::uint64_t accepted = 0;
    std::size_t i = 0;

    if (!state.replica) {
        if (headers.empty()) return 0;
        const chain::BlockHeader& genesis = headers.front();
        if (!verifier.check_genesis(genesis) ||
            genesis.hash() != state.guest_id)
            throw SyncAborted(0, "guest genesis does not match the expected chain id");
        state.replica = chain::Chain::from_header(genesis);
        ++accepted;
        ++i;
    }

    chain::Chain& replica = *state.replica;
    const Hash256 tip_before = replica.canonical_tip();
    for (; i < headers.size(); ++i) {
        const chain::BlockHeader& h = headers[i];
        if (replica.contains(h.hash())) continue; // duplicate
        const chain::BlockHeader* parent = replica.header(h.prev_hash);
        if (parent == nullptr)
            throw SyncAborted(h.height, "header does not connect to the replica");
        if (!verifier.check_header(h, *parent))
            throw SyncAborted(h.height, "header fails the guest verification subset");
        replica.extend_header(h);
        ++accepted;
    }
    if (stats) {
        stats->headers_accepted += accepted;
        // Extension keeps the old tip on the canonical chain; a rebranch evicts it.
        if (replica.canonical_tip() != tip_before && !replica.on_canonical(tip_before))
            ++stats->rebranches;
    }
    return accepted;
}

std::vector<Hash256> sync_locator(const SyncState& state) {
    std::vector<Hash256> locator;
    if (!state.replica) return locator;
    const chain::Chain& replica = *state.replica;
    const std::uint64_t tip = replica.tip_height();
    std::uint64_t step = 1;
    std::uint64_t h = tip;
    for (;;) {
        locator.push_back(replica.canonical_header_at(h)->hash());
        if (h == 0) break;
        h = h > step ? h - step : 0;
        if (locator.size() > 8) step *= 2;
    }
    return locator;
}

std::vector<chain::BlockHeader> DirectChannel::get_headers(
    std::uint64_t from_height, std::uint64_t max_count,
    std::span<const Hash256> locator) {
    std::uint64_t start = from_height;
    for (const auto& h : locator) { // locator is ordered tip-first
        if (guest_->on_canonical(h)) {
            start = guest_->header(h)->height + 1;
            break;
        }
    }
    std::vector<chain::BlockHeader> out;
    const std::uint64_t tip = guest_->tip_height();
    for (std::uint64_t h = start; h <= tip && out.size() < max_count; ++h)
        out.push_back(*guest_->canonical_header_at(h));
    return out;
}

std::optional<chain::Block> DirectChannel::get_block(const Hash256& block_hash) {
    const chain::BlockHeader* header = guest_->header(block_hash);
    const std::vector<chain::Transaction>* body = guest_->body(block_hash);
    if (!header || !body) return std::nullopt;
    return chain::Block{*header, *body};
}

SyncState first_time_sync(PeerChannel& peer, const Hash256& guest_id,
                          const GuestVerifier& verifier, SyncStats* stats) {
    SyncState state;
    state.guest_id = guest_id;
    state.mode = SyncMode::FirstTime;
    for (;;) {
        const std::uint64_t from = state.replica ? state.replica_tip_height() + 1 : 0;
        if (stats) ++stats->requests_sent;
        auto batch = peer.get_headers(from, kHeaderBatchSize, sync_locator(state));
        if (batch.empty()) {
            if (!state.replica)
                throw SyncAborted(0, "peer served no genesis header");
            break;
        }
        accept_header_batch(state, verifier, batch, stats);
        if (batch.size() < kHeaderBatchSize) break;
    }
    state.mode = SyncMode::Keeping;
    return state;
}

void keep_sync(SyncState& state, PeerChannel& peer, const GuestVerifier& verifier,
               SyncStats* stats) {
    if (state.mode != SyncMode::Keeping)
        throw std::invalid_argument("keep_sync requires a completed first-time sync");
    for (;;) {
        if (stats) ++stats->requests_sent;
        auto batch = peer.get_headers(state.replica_tip_height() + 1, kHeaderBatchSize,
                                      sync_locator(state));
        if (batch.empty()) return; // no guest progress
        accept_header_batch(state, verifier, batch, stats);
        if (batch.size() < kHeaderBatchSize) return;
    }
}

// ---- cross-event confirmation -------------------------------------------------

CrossEventStatus confirm_cross_event(const chain::Chain& host_chain,
                                     const SyncState& state,
                                     const Hash256& host_tx_id,
                                     const GuestTxObservation& observation,
                                     const ConfirmationPolicy& policy) {
    policy.validate();
    const auto host_loc = host_chain.locate_tx(host_tx_id);
    if (!host_loc)
        throw std::invalid_argument("host tx is not recorded on the host chain");

    // Host side: eviction first, then depth.
    if (!host_chain.on_canonical(host_loc->block_hash))
        return CrossEventStatus::Invalidated;
    const std::uint64_t host_depth = host_chain.tip_height() - host_loc->height;

    // Guest side, against the pinned observation.
    if (!state.replica) return CrossEventStatus::Pending;
    const chain::Chain& replica = *state.replica;
    const chain::BlockHeader* at = replica.canonical_header_at(observation.height);
    if (at == nullptr || at->hash() != observation.block_hash)
        return CrossEventStatus::Invalidated; // observed block left the canonical chain
    const std::uint64_t guest_depth = replica.tip_height() - observation.height;

    if (host_depth >= static_cast<std::uint64_t>(policy.k_host) &&
        guest_depth >= static_cast<std::uint64_t>(policy.k_guest))
        return CrossEventStatus::Confirmed;
    return CrossEventStatus::Pending;
}

// ---- trusted-relay baseline ----------------------------------------------------

VerificationVerdict relay_trust_verify(const RelayClaim& claim, bool trusted_relay) {
    if (!trusted_relay) {
        // Without relay trust this baseline has no way to attribute the data
        // to the claimed chain at all.
        return VerificationVerdict::reject(FailureCause::WrongChainId);
    }
    // The relay's word is taken as-is; no consensus of the claimed guest runs.
    if (!claim.asserted_included)
        return VerificationVerdict::reject(FailureCause::TxNotIncluded);
    return VerificationVerdict::accept();
}

} // namespace cifuv::engine
