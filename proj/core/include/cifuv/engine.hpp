#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cifuv/chain.hpp"
#include "cifuv/model.hpp"

// Cross-chain full verification: a host maintains a verified replica of its
// guest chain and validates cross-chain data by running the guest's
// consensus-verification subset over the blockchain quintuple. Includes the
// first-time / keeping synchronization split, double-rebranch confirmation
// tracking, and the trusted-relay baseline the full verifier is contrasted
// against.

namespace cifuv::engine {

enum class FailureCause {
    WrongChainId,
    InvalidPow,
    BrokenLinkage,
    BadMerkleProof,
    TxNotIncluded,
    InsufficientConfirmations,
};

const char* to_string(FailureCause cause);

struct VerificationVerdict {
    bool accepted = false;
    std::optional<FailureCause> failure;

    static VerificationVerdict accept() { return {true, std::nullopt}; }
    static VerificationVerdict reject(FailureCause cause) { return {false, cause}; }

    friend bool operator==(const VerificationVerdict&, const VerificationVerdict&) = default;
};

// Confirmation depths (blocks mined on top) required on each side before a
// cross-chain event is final; rebranching can happen on both chains, so both
// must be waited out.
struct ConfirmationPolicy {
    int k_host = 6;
    int k_guest = 6;

    void validate() const;
};

// Raised when a quintuple is not even well-formed (empty, unknown consensus
// algorithm, descriptor inconsistent with genesis, height out of range) —
// distinct from a rejection verdict about well-formed adversarial data.
struct MalformedQuintuple : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// ---- consensus set -----------------------------------------------------------
//
// The host runs its own full consensus plus, per registered guest, only the
// guest's verification subset. GuestVerifier deliberately has no mining entry
// point: producing guest blocks through it is unrepresentable.

class GuestVerifier {
public:
    explicit GuestVerifier(chain::ConsensusDescriptor descriptor);

    const chain::ConsensusDescriptor& descriptor() const { return descriptor_; }

    // Genesis shape, PoW, and the fixed-difficulty rule.
    bool check_genesis(const chain::BlockHeader& genesis) const;
    // PoW + linkage + height increment + fixed-difficulty rule.
    bool check_header(const chain::BlockHeader& header,
                      const chain::BlockHeader& parent) const;
    bool check_merkle(const Hash256& root, const chain::MerkleProof& proof) const;

    // Validation-spec view of this verifier (method only, no data bound yet).
    model::VerificationSpec spec() const;

private:
    chain::ConsensusDescriptor descriptor_;
};

// Full capability for the host's own chain: the same verification subset
// plus mining.
struct FullConsensus {
    chain::ConsensusDescriptor descriptor;

    GuestVerifier verifier() const { return GuestVerifier(descriptor); }
    chain::Block mine_next(const chain::Chain& chain, std::vector<chain::Transaction> txs,
                           SplitMix64& rng,
                           std::optional<std::uint64_t> timestamp = std::nullopt) const;
};

struct ConsensusSet {
    FullConsensus own;
    std::map<Hash256, GuestVerifier> guest_verifiers;

    void register_guest(const Hash256& guest_id, chain::ConsensusDescriptor descriptor);
    const GuestVerifier* find_guest(const Hash256& guest_id) const;
};

// ---- full verification -------------------------------------------------------

// Verifies a transaction against a guest quintuple, in fixed order:
//   (1) identity   — chain id of the genesis header equals expected_id
//   (2) consensus  — every header passes PoW, then linkage, under the
//                    quintuple's consensus descriptor
//   (3) proof      — the Merkle proof folds to the root committed at at_height
//   (4) inclusion  — the proof's leaf is the transaction's id
//   (5) depth      — at_height is at least k_guest below the quintuple tip
// The first failed check decides the failure cause.
VerificationVerdict full_verify(const chain::BlockchainQuintuple& quintuple,
                                const Hash256& expected_id,
                                const chain::Transaction& tx,
                                const chain::MerkleProof& proof,
                                std::uint64_t at_height,
                                const ConfirmationPolicy& policy);

// Same checks for guests without a usable Merkle proof path: the quintuple
// must carry the full transaction list at at_height; inclusion is decided by
// recomputing the root from it.
VerificationVerdict full_verify_with_txs(const chain::BlockchainQuintuple& quintuple,
                                         const Hash256& expected_id,
                                         const chain::Transaction& tx,
                                         std::uint64_t at_height,
                                         const ConfirmationPolicy& policy);

// ---- synchronization ---------------------------------------------------------

enum class SyncMode { FirstTime, Keeping };

struct SyncState {
    Hash256 guest_id;
    SyncMode mode = SyncMode::FirstTime;
    std::optional<chain::Chain> replica; // guest headers (+ bodies on demand)

    std::uint64_t replica_tip_height() const;
};

struct SyncStats {
    std::uint64_t requests_sent = 0;
    std::uint64_t headers_received = 0;
    std::uint64_t headers_accepted = 0;
    std::uint64_t blocks_received = 0;
    std::uint64_t rebranches = 0;
};

struct SyncAborted : std::runtime_error {
    explicit SyncAborted(std::uint64_t height_, std::string why)
        : std::runtime_error(std::move(why)), height(height_) {}
    std::uint64_t height;
};

struct SyncTimeout : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Feeds one verified batch of headers into the replica. The first batch of a
// first-time sync must start at the guest genesis and match guest_id. Returns
// the number of headers newly accepted; throws SyncAborted at the first
// header that fails verification.
std::uint64_t accept_header_batch(SyncState& state, const GuestVerifier& verifier,
                                  std::span<const chain::BlockHeader> headers,
                                  SyncStats* stats = nullptr);

// Block locator for incremental sync: canonical hashes at exponentially
// spaced heights below the tip (tip, tip-1, tip-2, tip-4, ..., genesis), so a
// peer can answer with exactly the headers the replica is missing.
std::vector<Hash256> sync_locator(const SyncState& state);

// Transport used by the direct (non-simulated) sync drivers.
struct PeerChannel {
    virtual ~PeerChannel() = default;
    // Headers on the peer's canonical chain. When `locator` is non-empty the
    // peer starts after the highest locator entry it recognizes, else at
    // from_height. Never more than `max_count` headers.
    virtual std::vector<chain::BlockHeader> get_headers(std::uint64_t from_height,
                                                        std::uint64_t max_count,
                                                        std::span<const Hash256> locator) = 0;
    virtual std::optional<chain::Block> get_block(const Hash256& block_hash) = 0;
};

// In-process channel over a guest chain; used by tests and the direct driver.
class DirectChannel final : public PeerChannel {
public:
    explicit DirectChannel(const chain::Chain& guest) : guest_(&guest) {}

    std::vector<chain::BlockHeader> get_headers(std::uint64_t from_height,
                                                std::uint64_t max_count,
                                                std::span<const Hash256> locator) override;
    std::optional<chain::Block> get_block(const Hash256& block_hash) override;

private:
    const chain::Chain* guest_;
};

inline constexpr std::uint64_t kHeaderBatchSize = 500;

// Downloads and verifies genesis..tip; the returned state is in keeping mode.
SyncState first_time_sync(PeerChannel& peer, const Hash256& guest_id,
                          const GuestVerifier& verifier, SyncStats* stats = nullptr);

// Incremental synchronization: fetches only headers above the replica tip
// (plus fork ancestors after a guest rebranch).
void keep_sync(SyncState& state, PeerChannel& peer, const GuestVerifier& verifier,
               SyncStats* stats = nullptr);

// ---- cross-event confirmation -------------------------------------------------

// Pinned at the moment a guest tx passed full verification: which block, at
// which height, was canonical then. Eviction is detected against this pin.
struct GuestTxObservation {
    Hash256 guest_chain_id;
    Hash256 tx_id;
    std::uint64_t height = 0;
    Hash256 block_hash;
};

enum class CrossEventStatus { Pending, Confirmed, Invalidated };

const char* to_string(CrossEventStatus status);

// Current status of a cross-chain event: confirmed when the host tx is
// >= k_host deep on the host canonical chain and the observed guest tx is
// >= k_guest deep on the replica canonical chain; invalidated when either
// left its canonical chain; pending otherwise.
// Throws std::invalid_argument when the host tx is unknown to the host chain.
CrossEventStatus confirm_cross_event(const chain::Chain& host_chain,
                                     const SyncState& state,
                                     const Hash256& host_tx_id,
                                     const GuestTxObservation& observation,
                                     const ConfirmationPolicy& policy);

// ---- trusted-relay baseline ----------------------------------------------------

// What an intermediate system asserts about a guest transaction. `validation`
// records how the claim was checked; a relay assertion is not a validation by
// the origin chain's own method, which is exactly the weakness.
struct RelayClaim {
    Hash256 claimed_guest_id;
    chain::Transaction tx;
    bool asserted_included = true;
    model::VerificationSpec validation;
};

// The insecure baseline: accepts whatever a trusted relay asserts, running
// none of the guest's consensus verification. A guest chain that does not
// exist at all passes this check — the contrast full_verify exists for.
VerificationVerdict relay_trust_verify(const RelayClaim& claim, bool trusted_relay);

} // namespace cifuv::engine
