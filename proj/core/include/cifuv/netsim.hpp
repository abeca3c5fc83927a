#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "cifuv/chain.hpp"
#include "cifuv/engine.hpp"
#include "cifuv/rng.hpp"

// Deterministic discrete-event network: guest-chain nodes, the verifying
// host node, and adversaries (tampering/fabricating relays, a fork-building
// miner). Time is integer ticks; events execute in (tick, insertion) order,
// so identical (seed, scenario) always replays the identical trace.

namespace cifuv::netsim {

using NodeId = int;

// ---- messages ------------------------------------------------------------

struct GetHeadersMsg {
    std::uint64_t from_height = 0;
    std::uint64_t max_count = 0;
    std::vector<Hash256> locator; // tip-first canonical hashes
};

struct HeadersMsg {
    std::vector<chain::BlockHeader> headers;
    std::uint64_t tip_height = 0;
};

struct GetBlockMsg {
    Hash256 block_hash;
};

struct BlockMsg {
    chain::Block block;
};

struct InvMsg {
    Hash256 tip_hash;
    std::uint64_t tip_height = 0;
};

struct MineTickMsg {};

using Message =
    std::variant<GetHeadersMsg, HeadersMsg, GetBlockMsg, BlockMsg, InvMsg, MineTickMsg>;

const char* message_kind(const Message& message);
std::size_t message_wire_size(const Message& message);

struct Event {
    std::uint64_t at_tick = 0;
    std::uint64_t seq = 0; // insertion order, breaks same-tick ties
    NodeId target = -1;
    NodeId source = -1;
    Message message;
};

struct TraceRecord {
    std::uint64_t tick = 0;
    std::uint64_t seq = 0;
    NodeId from = -1;
    NodeId to = -1;
    std::string kind;
    std::size_t bytes = 0;
    std::string note;
};

// ---- simulation ------------------------------------------------------------

class Simulation;

class Node {
public:
    virtual ~Node() = default;
    virtual void on_message(Simulation& sim, const Event& event) = 0;

    NodeId id = -1;
};

class Simulation {
public:
    Simulation() = default;

    NodeId add_node(std::unique_ptr<Node> node);
    Node* node(NodeId id) { return nodes_.at(static_cast<std::size_t>(id)).get(); }
    std::size_t node_count() const { return nodes_.size(); }

    std::uint64_t now() const { return now_; }
    bool idle() const { return queue_.empty(); }

    void set_default_latency(std::uint64_t ticks) { default_latency_ = ticks; }
    void set_latency(NodeId a, NodeId b, std::uint64_t ticks);
    std::uint64_t latency(NodeId a, NodeId b) const;

    // Throws std::invalid_argument when tick < now().
    void schedule_at(std::uint64_t tick, NodeId target, NodeId source, Message message);
    // Delivery at now() + latency(from, to).
    void send(NodeId from, NodeId to, Message message);

    void run_until(std::uint64_t tick);
    // Drains everything already scheduled (mining pulses must have stopped).
    void run_to_quiescence(std::uint64_t safety_limit = 1'000'000);

    // Custom structured-log entry from a node (sync progress, verdicts,
    // confirmation transitions).
    void note(NodeId who, std::string kind, std::string detail);

    const std::vector<TraceRecord>& trace() const { return trace_; }
    std::string trace_json_lines() const;
    std::uint64_t bytes_between(NodeId from, NodeId to) const;

private:
    struct Ordering {
        bool operator()(const Event& a, const Event& b) const {
            if (a.at_tick != b.at_tick) return a.at_tick > b.at_tick;
            return a.seq > b.seq;
        }
    };

    void dispatch(const Event& event);

    std::vector<std::unique_ptr<Node>> nodes_;
    std::priority_queue<Event, std::vector<Event>, Ordering> queue_;
    std::uint64_t now_ = 0;
    std::uint64_t next_seq_ = 0;
    std::uint64_t default_latency_ = 1;
    std::map<std::pair<NodeId, NodeId>, std::uint64_t> latency_;
    std::map<std::pair<NodeId, NodeId>, std::uint64_t> bytes_;
    std::vector<TraceRecord> trace_;
};

// ---- scenario configuration ---------------------------------------------------

enum class VerifyMode { Cifuv, RelayTrust };

enum class RelayKind { Forward, Tamper, Fabricate, Silent };

enum class TamperKind {
    None,
    FlipTxPayloadByte,
    FlipHeaderNonce,
    FlipPrevHash,
    FlipMerkleRoot,
    TruncateHeaders,
    SubstituteTx,
};

struct TamperRule {
    TamperKind kind = TamperKind::None;
    std::uint64_t height = 0; // applies to the header/block at this height
    std::size_t tx_index = 0;
};

struct AdversaryConfig {
    RelayKind relay_kind = RelayKind::Forward;
    TamperRule tamper;
    double hash_share = 0.0;           // fork miner only
    std::uint64_t give_up_deficit = 6; // fork miner abandons this far behind
};

struct CrossEventSpec {
    std::uint64_t at_tick = 0;
    std::uint64_t guest_height = 0;
    std::size_t tx_index = 0;
};

struct ScenarioConfig {
    std::uint64_t seed = 1;
    std::uint64_t ticks = 200;
    std::uint32_t difficulty_bits = 12; // toy default; demos use lower for speed
    std::uint64_t latency = 1;

    // guest
    int premine = 10;
    double mine_prob = 0.5;
    int txs_per_block = 3;

    // host
    std::uint64_t sync_interval = 4;
    std::uint64_t mine_interval = 1;
    std::uint64_t timeout_ticks = 24;
    engine::ConfirmationPolicy policy;

    bool with_relay = false;
    RelayKind relay_kind = RelayKind::Forward;
    TamperRule tamper;

    bool with_fork_miner = false;
    double hash_share = 0.2;
    std::uint64_t give_up_deficit = 6;
    std::uint64_t fork_target_height = 0; // 0: the first cross event's height

    std::vector<CrossEventSpec> cross_events;

    static ScenarioConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct ScenarioResult {
    nlohmann::ordered_json summary;
    std::string trace_json_lines;

    std::map<std::string, int> verdicts; // "accepted" or failure cause name
    int confirmed = 0;
    int invalidated = 0;
    int still_pending = 0;
    int confirmed_then_evicted = 0;
    std::uint64_t sync_aborts = 0;
    std::uint64_t sync_timeouts = 0;
    engine::SyncStats sync_stats;
    bool replica_converged = false;
    std::uint64_t replica_height = 0;
    std::uint64_t guest_height = 0;
    std::uint64_t host_headers_bytes_in = 0;
};

ScenarioResult run_scenario(const ScenarioConfig& config, VerifyMode mode);

const char* to_string(VerifyMode mode);

} // namespace cifuv::netsim
