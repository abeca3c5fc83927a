#include "cifuv/netsim.hpp"

#include <algorithm>
#include <deque>
#include <stdexcept>

namespace cifuv::netsim {

using chain::Block;
using chain::BlockHeader;
using chain::Chain;
using chain::Transaction;

const char* to_string(VerifyMode mode) {
    return mode == VerifyMode::Cifuv ? "cifuv" : "relay-trust";
}

const char* message_kind(const Message& message) {
    switch (message.index()) {
        case 0: return "get-headers";
        case 1: return "headers";
        case 2: return "get-block";
        case 3: return "block";
        case 4: return "inv";
        case 5: return "mine-tick";
    }
    return "unknown";
}

std::size_t message_wire_size(const Message& message) {
    struct Sizer {
        std::size_t operator()(const GetHeadersMsg& m) const {
            return 16 + 32 * m.locator.size();
        }
        std::size_t operator()(const HeadersMsg& m) const {
            return 8 + chain::kHeaderWireSize * m.headers.size();
        }
        std::size_t operator()(const GetBlockMsg&) const { return 32; }
        std::size_t operator()(const BlockMsg& m) const { return m.block.encode().size(); }
        std::size_t operator()(const InvMsg&) const { return 40; }
        std::size_t operator()(const MineTickMsg&) const { return 0; }
    };
    return std::visit(Sizer{}, message);
}

// ---- simulation ------------------------------------------------------------

NodeId Simulation::add_node(std::unique_ptr<Node> node) {
    const NodeId id = static_cast<NodeId>(nodes_.size());
    node->id = id;
    nodes_.push_back(std::move(node));
    return id;
}

void Simulation::set_latency(NodeId a, NodeId b, std::uint64_t ticks) {
    latency_[{a, b}] = ticks;
    latency_[{b, a}] = ticks;
}

std::uint64_t Simulation::latency(NodeId a, NodeId b) const {
    auto it = latency_.find({a, b});
    return it == latency_.end() ? default_latency_ : it->second;
}

void Simulation::schedule_at(std::uint64_t tick, NodeId target, NodeId source,
                             Message message) {
    if (tick < now_)
        throw std::invalid_argument("cannot schedule an event into the past");
    queue_.push(Event{tick, next_seq_++, target, source, std::move(message)});
}

void Simulation::send(NodeId from, NodeId to, Message message) {
    schedule_at(now_ + latency(from, to), to, from, std::move(message));
}

void Simulation::dispatch(const Event& event) {
    now_ = event.at_tick;
    if (event.source != event.target) {
        const std::size_t bytes = message_wire_size(event.message);
        bytes_[{event.source, event.target}] += bytes;
        trace_.push_back(TraceRecord{event.at_tick, event.seq, event.source, event.target,
                                     message_kind(event.message), bytes, ""});
    }
    nodes_.at(static_cast<std::size_t>(event.target))->on_message(*this, event);
}

void Simulation::run_until(std::uint64_t tick) {
    while (!queue_.empty() && queue_.top().at_tick <= tick) {
        Event event = queue_.top();
        queue_.pop();
        dispatch(event);
    }
    now_ = std::max(now_, tick);
}

void Simulation::run_to_quiescence(std::uint64_t safety_limit) {
    std::uint64_t steps = 0;
    while (!queue_.empty()) {
        if (++steps > safety_limit)
            throw std::runtime_error("simulation did not quiesce");
        Event event = queue_.top();
        queue_.pop();
        dispatch(event);
    }
}

void Simulation::note(NodeId who, std::string kind, std::string detail) {
    trace_.push_back(TraceRecord{now_, next_seq_++, who, who, std::move(kind), 0,
                                 std::move(detail)});
}

std::string Simulation::trace_json_lines() const {
    std::string out;
    for (const auto& r : trace_) {
        nlohmann::ordered_json j;
        j["tick"] = r.tick;
        j["seq"] = r.seq;
        j["from"] = r.from;
        j["to"] = r.to;
        j["kind"] = r.kind;
        j["bytes"] = r.bytes;
        if (!r.note.empty()) j["note"] = r.note;
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::uint64_t Simulation::bytes_between(NodeId from, NodeId to) const {
    auto it = bytes_.find({from, to});
    return it == bytes_.end() ? 0 : it->second;
}

// ---- nodes -----------------------------------------------------------------

namespace {

std::vector<Transaction> filler_txs(const char* prefix, int count, std::uint64_t height,
                                    std::uint64_t salt) {
    std::vector<Transaction> txs;
    for (int i = 0; i < count; ++i)
        txs.push_back(Transaction::from_string(std::string(prefix) + "-" +
                                               std::to_string(height) + "-" +
                                               std::to_string(i) + "-" +
                                               std::to_string(salt)));
    return txs;
}

class GuestNode final : public Node {
public:
    GuestNode(Chain chain, std::uint32_t bits, double mine_prob, int txs_per_block,
              std::uint64_t mine_until, std::uint64_t rng_seed)
        : chain_(std::move(chain)),
          bits_(bits),
          mine_prob_(mine_prob),
          txs_per_block_(txs_per_block),
          mine_until_(mine_until),
          rng_(rng_seed) {}

    const Chain& chain() const { return chain_; }
    void set_watcher(NodeId watcher) { watcher_ = watcher; }

    void on_message(Simulation& sim, const Event& event) override {
        if (std::holds_alternative<MineTickMsg>(event.message)) {
            on_mine_tick(sim);
        } else if (const auto* get = std::get_if<GetHeadersMsg>(&event.message)) {
            sim.send(id, event.source, answer_headers(*get));
        } else if (const auto* get = std::get_if<GetBlockMsg>(&event.message)) {
            const BlockHeader* header = chain_.header(get->block_hash);
            const std::vector<Transaction>* body = chain_.body(get->block_hash);
            if (header && body)
                sim.send(id, event.source, BlockMsg{Block{*header, *body}});
            // unknown blocks stay unanswered; the requester times out
        } else if (const auto* blk = std::get_if<BlockMsg>(&event.message)) {
            on_block(sim, *blk);
        } else {
            sim.note(id, "protocol-error", message_kind(event.message));
        }
    }

private:
    void on_mine_tick(Simulation& sim) {
        if (rng_.bernoulli(mine_prob_)) {
            const BlockHeader* tip = chain_.header(chain_.canonical_tip());
            chain_.extend(chain::mine_block(
                *tip, filler_txs("g", txs_per_block_, tip->height + 1, sim.now()), bits_,
                rng_, sim.now()));
            if (watcher_ >= 0)
                sim.send(id, watcher_, InvMsg{chain_.canonical_tip(), chain_.tip_height()});
        }
        if (sim.now() + 1 <= mine_until_)
            sim.schedule_at(sim.now() + 1, id, id, MineTickMsg{});
    }

    HeadersMsg answer_headers(const GetHeadersMsg& get) const {
        std::uint64_t start = get.from_height;
        for (const auto& h : get.locator) { // locator is tip-first
            if (chain_.on_canonical(h)) {
                start = chain_.header(h)->height + 1;
                break;
            }
        }
        HeadersMsg reply;
        reply.tip_height = chain_.tip_height();
        for (std::uint64_t h = start;
             h <= reply.tip_height && reply.headers.size() < get.max_count; ++h)
            reply.headers.push_back(*chain_.canonical_header_at(h));
        return reply;
    }

    void on_block(Simulation& sim, const BlockMsg& msg) {
        if (chain_.contains(msg.block.header.hash())) return;
        if (!chain_.contains(msg.block.header.prev_hash)) {
            sim.note(id, "orphan-rejected", msg.block.header.hash().hex().substr(0, 16));
            return;
        }
        try {
            const Hash256 before = chain_.canonical_tip();
            chain_.extend(msg.block);
            if (chain_.canonical_tip() != before && !chain_.on_canonical(before))
                sim.note(id, "rebranch", "height " + std::to_string(chain_.tip_height()));
        } catch (const std::invalid_argument& e) {
            sim.note(id, "invalid-block", e.what());
        }
    }

    Chain chain_;
    std::uint32_t bits_;
    double mine_prob_;
    int txs_per_block_;
    std::uint64_t mine_until_;
    SplitMix64 rng_;
    NodeId watcher_ = -1;
};

// Relay between host and guest. Forward passes traffic through; Tamper
// mutates what it forwards per its rule; Fabricate serves a fake chain of its
// own making (no guest behind it); Silent swallows everything. In relay-trust
// mode the relay additionally pushes the cross-event claims to the host.
class RelayNode final : public Node {
public:
    RelayNode(RelayKind kind, TamperRule rule, std::optional<Chain> fake_chain,
              VerifyMode mode, std::uint64_t mine_until)
        : kind_(kind),
          rule_(rule),
          fake_chain_(std::move(fake_chain)),
          mode_(mode),
          mine_until_(mine_until) {}

    void wire(NodeId host, NodeId guest) {
        host_ = host;
        guest_ = guest;
    }

    void on_message(Simulation& sim, const Event& event) override {
        if (std::holds_alternative<MineTickMsg>(event.message)) {
            on_mine_tick(sim);
            return;
        }
        if (kind_ == RelayKind::Silent) return;

        if (event.source == host_) {
            on_host_request(sim, event.message);
        } else if (event.source == guest_) {
            on_guest_reply(sim, event.message);
        } else {
            sim.note(id, "protocol-error", message_kind(event.message));
        }
    }

private:
    enum class ReplyFor { Host, ClaimHeaders, ClaimBlock };

    struct Claim {
        CrossEventSpec spec;
        bool pushed = false;
    };

    void on_mine_tick(Simulation& sim) {
        // Claim pushing is the relay's job only in the trusted-relay mode;
        // under full verification the host pulls everything itself.
        if (mode_ == VerifyMode::RelayTrust) {
            for (auto& claim : claims_) {
                if (claim.spec.at_tick > sim.now() || claim.pushed) continue;
                claim.pushed = true;
                push_claim(sim, claim);
            }
        }
        if (sim.now() + 1 <= mine_until_)
            sim.schedule_at(sim.now() + 1, id, id, MineTickMsg{});
    }

    void push_claim(Simulation& sim, const Claim& claim) {
        if (kind_ == RelayKind::Fabricate) {
            const Hash256 hash =
                fake_chain_->canonical_header_at(claim.spec.guest_height)->hash();
            Block block{*fake_chain_->header(hash), *fake_chain_->body(hash)};
            sim.send(id, host_, BlockMsg{std::move(block)});
            return;
        }
        // Fetch the real block from the guest: headers first, then the body.
        GetHeadersMsg get;
        get.from_height = claim.spec.guest_height;
        get.max_count = 1;
        pending_.push_back(ReplyFor::ClaimHeaders);
        sim.send(id, guest_, std::move(get));
    }

    void on_host_request(Simulation& sim, const Message& message) {
        if (kind_ == RelayKind::Fabricate) {
            answer_from_fake(sim, message);
            return;
        }
        if (std::holds_alternative<GetHeadersMsg>(message) ||
            std::holds_alternative<GetBlockMsg>(message)) {
            pending_.push_back(ReplyFor::Host);
            sim.send(id, guest_, message);
        } else {
            sim.note(id, "protocol-error", message_kind(message));
        }
    }

    void answer_from_fake(Simulation& sim, const Message& message) {
        if (const auto* get = std::get_if<GetHeadersMsg>(&message)) {
            std::uint64_t start = get->from_height;
            for (const auto& h : get->locator) {
                if (fake_chain_->on_canonical(h)) {
                    start = fake_chain_->header(h)->height + 1;
                    break;
                }
            }
            HeadersMsg reply;
            reply.tip_height = fake_chain_->tip_height();
            for (std::uint64_t h = start;
                 h <= reply.tip_height && reply.headers.size() < get->max_count; ++h)
                reply.headers.push_back(*fake_chain_->canonical_header_at(h));
            sim.send(id, host_, std::move(reply));
        } else if (const auto* get = std::get_if<GetBlockMsg>(&message)) {
            const BlockHeader* header = fake_chain_->header(get->block_hash);
            const std::vector<Transaction>* body = fake_chain_->body(get->block_hash);
            if (header && body) sim.send(id, host_, BlockMsg{Block{*header, *body}});
        }
    }

    void on_guest_reply(Simulation& sim, const Message& message) {
        if (std::holds_alternative<InvMsg>(message)) {
            sim.send(id, host_, message); // tip announcements pass through
            return;
        }
        if (pending_.empty()) {
            sim.note(id, "protocol-error", "unexpected guest reply");
            return;
        }
        const ReplyFor purpose = pending_.front();
        pending_.pop_front();

        switch (purpose) {
            case ReplyFor::Host: {
                Message forwarded = message;
                apply_tamper(forwarded);
                sim.send(id, host_, std::move(forwarded));
                break;
            }
            case ReplyFor::ClaimHeaders: {
                const auto* headers = std::get_if<HeadersMsg>(&message);
                if (headers == nullptr || headers->headers.empty()) break;
                pending_.push_back(ReplyFor::ClaimBlock);
                sim.send(id, guest_, GetBlockMsg{headers->headers.front().hash()});
                break;
            }
            case ReplyFor::ClaimBlock: {
                Message forwarded = message;
                apply_tamper(forwarded);
                sim.send(id, host_, std::move(forwarded));
                break;
            }
        }
    }

    void apply_tamper(Message& message) {
        if (kind_ != RelayKind::Tamper || rule_.kind == TamperKind::None) return;
        if (auto* headers = std::get_if<HeadersMsg>(&message)) {
            for (auto& h : headers->headers) tamper_header(h);
            if (rule_.kind == TamperKind::TruncateHeaders)
                std::erase_if(headers->headers, [&](const BlockHeader& h) {
                    return h.height > rule_.height;
                });
        } else if (auto* block = std::get_if<BlockMsg>(&message)) {
            if (block->block.header.height != rule_.height) return;
            switch (rule_.kind) {
                case TamperKind::FlipTxPayloadByte:
                    if (rule_.tx_index < block->block.txs.size() &&
                        !block->block.txs[rule_.tx_index].payload.empty())
                        block->block.txs[rule_.tx_index].payload[0] ^= 0x01;
                    break;
                case TamperKind::SubstituteTx:
                    if (rule_.tx_index < block->block.txs.size())
                        block->block.txs[rule_.tx_index] =
                            Transaction::from_string("substituted-by-relay");
                    break;
                default:
                    tamper_header(block->block.header);
                    break;
            }
        }
    }

    void tamper_header(BlockHeader& h) {
        if (h.height != rule_.height) return;
        switch (rule_.kind) {
            case TamperKind::FlipHeaderNonce: h.nonce ^= 1; break;
            case TamperKind::FlipPrevHash: h.prev_hash.bytes[0] ^= 1; break;
            case TamperKind::FlipMerkleRoot: h.merkle_root.bytes[0] ^= 1; break;
            default: break;
        }
    }

    RelayKind kind_;
    TamperRule rule_;
    std::optional<Chain> fake_chain_;
    VerifyMode mode_;
    std::vector<Claim> claims_;
    std::uint64_t mine_until_;
    NodeId host_ = -1;
    NodeId guest_ = -1;
    std::deque<ReplyFor> pending_;

public:
    void init_claims(const std::vector<CrossEventSpec>& specs) {
        claims_.clear();
        for (const auto& s : specs) claims_.push_back(Claim{s, false});
    }
};

// Double-spend style adversary on the guest chain: once the target block
// exists it mines a private branch from below it, publishes the branch the
// moment it has more work than the public chain, and gives up after falling
// give_up_deficit blocks behind.
class ForkMinerNode final : public Node {
public:
    ForkMinerNode(const GuestNode* guest, NodeId guest_id, std::uint32_t bits,
                  double hash_share, std::uint64_t give_up_deficit,
                  std::uint64_t target_height, std::uint64_t mine_until,
                  std::uint64_t rng_seed)
        : guest_(guest),
          guest_node_(guest_id),
          bits_(bits),
          hash_share_(hash_share),
          give_up_deficit_(give_up_deficit),
          target_height_(target_height),
          mine_until_(mine_until),
          rng_(rng_seed) {}

    void on_message(Simulation& sim, const Event& event) override {
        if (!std::holds_alternative<MineTickMsg>(event.message)) {
            sim.note(id, "protocol-error", message_kind(event.message));
            return;
        }
        step(sim);
        if (sim.now() + 1 <= mine_until_)
            sim.schedule_at(sim.now() + 1, id, id, MineTickMsg{});
    }

    bool published() const { return published_; }

private:
    void step(Simulation& sim) {
        if (done_) return;
        const Chain& public_chain = guest_->chain();

        if (!racing_) {
            if (public_chain.tip_height() < target_height_) return;
            // Fork below the target block so the branch excludes it.
            fork_parent_ = *public_chain.canonical_header_at(target_height_ - 1);
            private_tip_ = fork_parent_;
            racing_ = true;
            sim.note(id, "fork-start", "base height " + std::to_string(fork_parent_.height));
        }

        // Won once the public chain adopted the private branch; the honest
        // majority now mines on top of it and the target block stays evicted.
        if (published_ && public_chain.on_canonical(private_tip_.hash())) {
            sim.note(id, "fork-won", "height " + std::to_string(private_tip_.height));
            done_ = true;
            return;
        }

        if (rng_.bernoulli(hash_share_)) {
            Block block = chain::mine_block(
                private_tip_, filler_txs("fm", 1, private_tip_.height + 1, sim.now()),
                bits_, rng_, sim.now());
            private_tip_ = block.header;
            branch_.push_back(std::move(block));
        }

        const std::uint64_t public_height = public_chain.tip_height();
        const std::uint64_t private_height = private_tip_.height;

        if (private_height > public_height) {
            // Strictly more work (same difficulty everywhere): reveal the
            // branch. Keep racing in case the public chain ties first.
            for (std::size_t i = next_to_publish_; i < branch_.size(); ++i)
                sim.send(id, guest_node_, BlockMsg{branch_[i]});
            next_to_publish_ = branch_.size();
            if (!published_)
                sim.note(id, "fork-publish", "height " + std::to_string(private_height));
            published_ = true;
            return;
        }
        if (public_height - private_height >= give_up_deficit_) {
            sim.note(id, "fork-give-up",
                     "behind by " + std::to_string(public_height - private_height));
            done_ = true;
        }
    }

    const GuestNode* guest_;
    NodeId guest_node_;
    std::uint32_t bits_;
    double hash_share_;
    std::uint64_t give_up_deficit_;
    std::uint64_t target_height_;
    std::uint64_t mine_until_;
    SplitMix64 rng_;

    bool racing_ = false;
    bool done_ = false;
    bool published_ = false;
    std::size_t next_to_publish_ = 0;
    BlockHeader fork_parent_;
    BlockHeader private_tip_;
    std::vector<Block> branch_;
};

// The verifying host: maintains its own chain, replicates the guest through
// its peer (guest or relay), verifies cross events by the configured mode,
// and tracks confirmation status of accepted events.
class HostNode final : public Node {
public:
    struct Config {
        Hash256 expected_guest_id;
        chain::ConsensusDescriptor guest_descriptor;
        engine::ConfirmationPolicy policy;
        VerifyMode mode = VerifyMode::Cifuv;
        std::uint64_t sync_interval = 4;
        std::uint64_t mine_interval = 1;
        std::uint64_t timeout_ticks = 24;
        std::uint64_t mine_until = 0;
        std::vector<CrossEventSpec> events;
    };

    struct EventRuntime {
        CrossEventSpec spec;
        enum class Stage { Waiting, BlockRequested, Tracking, Resolved } stage =
            Stage::Waiting;
        std::optional<engine::GuestTxObservation> observation;
        Hash256 host_tx_id;
        bool host_tx_mined = false;
        engine::CrossEventStatus status = engine::CrossEventStatus::Pending;
        bool confirmed_seen = false;
        bool evicted_after_confirm = false;
        std::optional<std::string> verdict;
    };

    HostNode(Config config, Chain own_chain, std::uint64_t rng_seed)
        : config_(std::move(config)),
          verifier_(config_.guest_descriptor),
          own_chain_(std::move(own_chain)),
          rng_(rng_seed) {
        sync_state_.guest_id = config_.expected_guest_id;
        for (const auto& spec : config_.events) {
            EventRuntime runtime;
            runtime.spec = spec;
            events_.push_back(std::move(runtime));
        }
    }

    void set_peer(NodeId peer) { peer_ = peer; }

    const engine::SyncState& sync_state() const { return sync_state_; }
    const Chain& own_chain() const { return own_chain_; }
    const std::vector<EventRuntime>& events() const { return events_; }
    const engine::SyncStats& first_sync_stats() const { return stats_first_; }
    const engine::SyncStats& keeping_stats() const { return stats_keeping_; }
    std::uint64_t sync_aborts() const { return sync_aborts_; }
    std::uint64_t sync_timeouts() const { return sync_timeouts_; }
    std::uint64_t keeping_episodes() const { return keeping_episodes_; }
    std::uint64_t tip_after_first_sync() const { return tip_after_first_sync_; }

    void on_message(Simulation& sim, const Event& event) override {
        if (std::holds_alternative<MineTickMsg>(event.message)) {
            on_mine_tick(sim);
        } else if (const auto* headers = std::get_if<HeadersMsg>(&event.message)) {
            on_headers(sim, *headers);
        } else if (const auto* block = std::get_if<BlockMsg>(&event.message)) {
            on_block(sim, *block);
        } else if (const auto* inv = std::get_if<InvMsg>(&event.message)) {
            if (config_.mode == VerifyMode::Cifuv && inv->tip_height > replica_tip())
                start_sync_episode(sim);
        } else {
            sim.note(id, "protocol-error", message_kind(event.message));
        }
    }

private:
    std::uint64_t replica_tip() const {
        return sync_state_.replica ? sync_state_.replica->tip_height() : 0;
    }

    engine::SyncStats* current_stats() {
        return sync_state_.mode == engine::SyncMode::Keeping ? &stats_keeping_
                                                             : &stats_first_;
    }

    void on_mine_tick(Simulation& sim) {
        mine_own_block(sim);
        poll_confirmations(sim);
        if (config_.mode == VerifyMode::Cifuv) {
            check_sync_timeout(sim);
            if (!sync_gave_up_ &&
                (sync_state_.replica == std::nullopt ||
                 sim.now() % config_.sync_interval == 0))
                start_sync_episode(sim);
        }
        dispatch_events(sim);
        if (sim.now() + 1 <= config_.mine_until)
            sim.schedule_at(sim.now() + 1, id, id, MineTickMsg{});
    }

    void mine_own_block(Simulation& sim) {
        if (config_.mine_interval == 0 || sim.now() % config_.mine_interval != 0) return;
        std::vector<Transaction> txs =
            filler_txs("h", 1, own_chain_.tip_height() + 1, sim.now());
        for (auto& tx : queued_cross_txs_) txs.push_back(std::move(tx));
        queued_cross_txs_.clear();
        const BlockHeader* tip = own_chain_.header(own_chain_.canonical_tip());
        own_chain_.extend(chain::mine_block(*tip, std::move(txs),
                                            tip->difficulty_bits, rng_, sim.now()));
        for (auto& ev : events_)
            if (ev.stage == EventRuntime::Stage::Tracking && !ev.host_tx_mined &&
                own_chain_.locate_tx(ev.host_tx_id))
                ev.host_tx_mined = true;
    }

    void start_sync_episode(Simulation& sim) {
        if (episode_active_ || sync_gave_up_) return;
        episode_active_ = true;
        request_tick_ = sim.now();
        send_headers_request(sim);
    }

    void send_headers_request(Simulation& sim) {
        GetHeadersMsg get;
        get.from_height = sync_state_.replica ? replica_tip() + 1 : 0;
        get.max_count = engine::kHeaderBatchSize;
        get.locator = engine::sync_locator(sync_state_);
        awaiting_headers_ = true;
        request_tick_ = sim.now();
        engine::SyncStats* stats = current_stats();
        if (stats) ++stats->requests_sent;
        sim.send(id, peer_, std::move(get));
    }

    void check_sync_timeout(Simulation& sim) {
        if (!awaiting_headers_) return;
        if (sim.now() - request_tick_ <= config_.timeout_ticks) return;
        ++sync_timeouts_;
        awaiting_headers_ = false;
        episode_active_ = false;
        sim.note(id, "sync-timeout", "no headers for " +
                                         std::to_string(sim.now() - request_tick_) +
                                         " ticks");
    }

    void on_headers(Simulation& sim, const HeadersMsg& msg) {
        if (config_.mode != VerifyMode::Cifuv || !awaiting_headers_) {
            sim.note(id, "protocol-error", "unsolicited headers");
            return;
        }
        awaiting_headers_ = false;
        std::uint64_t accepted = 0;
        try {
            accepted =
                accept_header_batch(sync_state_, verifier_, msg.headers, current_stats());
        } catch (const engine::SyncAborted& aborted) {
            ++sync_aborts_;
            episode_active_ = false;
            sim.note(id, "sync-abort",
                     "height " + std::to_string(aborted.height) + ": " + aborted.what());
            if (aborted.height == 0 || ++consecutive_aborts_ >= 3) {
                // The peer keeps serving a chain that is not the guest;
                // further retries cannot change the identity check.
                sync_gave_up_ = true;
                sim.note(id, "sync-give-up", "peer does not serve the expected guest");
            }
            return;
        }
        consecutive_aborts_ = 0;

        if (accepted == 0 && (!sync_state_.replica || replica_tip() < msg.tip_height)) {
            // The peer claims more headers but serves none; stop the episode
            // rather than re-requesting forever.
            episode_active_ = false;
            sim.note(id, "sync-stalled", "no progress toward height " +
                                             std::to_string(msg.tip_height));
            return;
        }

        if (sync_state_.replica && replica_tip() >= msg.tip_height) {
            episode_active_ = false;
            if (sync_state_.mode == engine::SyncMode::FirstTime) {
                sync_state_.mode = engine::SyncMode::Keeping;
                tip_after_first_sync_ = replica_tip();
                sim.note(id, "first-sync-complete",
                         "height " + std::to_string(replica_tip()));
            } else {
                ++keeping_episodes_;
            }
            return;
        }
        send_headers_request(sim); // more to fetch
    }

    void dispatch_events(Simulation& sim) {
        for (std::size_t i = 0; i < events_.size(); ++i) {
            auto& ev = events_[i];
            if (ev.stage != EventRuntime::Stage::Waiting || sim.now() < ev.spec.at_tick)
                continue;
            if (config_.mode == VerifyMode::RelayTrust)
                continue; // claims arrive by push
            if (sync_gave_up_) {
                // Identity was never established; the claimed guest data is
                // rejected outright.
                resolve_verdict(sim, ev,
                                engine::VerificationVerdict::reject(
                                    engine::FailureCause::WrongChainId));
                continue;
            }
            if (!sync_state_.replica ||
                replica_tip() < ev.spec.guest_height +
                                    static_cast<std::uint64_t>(config_.policy.k_guest))
                continue; // not enough replica depth yet
            const Hash256 hash =
                sync_state_.replica->canonical_header_at(ev.spec.guest_height)->hash();
            pending_blocks_[hash] = i;
            ev.stage = EventRuntime::Stage::BlockRequested;
            sim.send(id, peer_, GetBlockMsg{hash});
        }
    }

    void on_block(Simulation& sim, const BlockMsg& msg) {
        if (config_.mode == VerifyMode::RelayTrust) {
            on_pushed_claim(sim, msg);
            return;
        }
        std::size_t index = events_.size();
        if (auto it = pending_blocks_.find(msg.block.header.hash());
            it != pending_blocks_.end()) {
            index = it->second;
            pending_blocks_.erase(it);
        } else {
            // A tampered header changes the hash; match by height instead.
            for (auto it2 = pending_blocks_.begin(); it2 != pending_blocks_.end(); ++it2) {
                if (events_[it2->second].spec.guest_height == msg.block.header.height) {
                    index = it2->second;
                    pending_blocks_.erase(it2);
                    break;
                }
            }
        }
        if (index >= events_.size()) {
            sim.note(id, "protocol-error", "unsolicited block");
            return;
        }
        verify_event_block(sim, events_[index], msg.block);
    }

    void verify_event_block(Simulation& sim, EventRuntime& ev, const Block& block) {
        // Only replica headers are trusted; the body must prove itself
        // against the Merkle root committed at the event height.
        if (ev.spec.tx_index >= block.txs.size()) {
            resolve_verdict(sim, ev,
                            engine::VerificationVerdict::reject(
                                engine::FailureCause::TxNotIncluded));
            return;
        }
        const Transaction& tx = block.txs[ev.spec.tx_index];
        chain::MerkleProof proof = chain::merkle_prove(block.txs, ev.spec.tx_index);
        chain::BlockchainQuintuple quintuple = chain::make_quintuple(
            sync_state_.replica->canonical_headers(),
            verifier_.descriptor().difficulty_bits);
        const engine::VerificationVerdict verdict =
            engine::full_verify(quintuple, config_.expected_guest_id, tx, proof,
                                ev.spec.guest_height, config_.policy);
        if (!verdict.accepted) {
            resolve_verdict(sim, ev, verdict);
            return;
        }

        ev.verdict = "accepted";
        sim.note(id, "verdict",
                 "accepted height " + std::to_string(ev.spec.guest_height) + " method " +
                     verifier_.spec().method_name);
        ev.observation = engine::GuestTxObservation{
            config_.expected_guest_id, tx.id(), ev.spec.guest_height,
            sync_state_.replica->canonical_header_at(ev.spec.guest_height)->hash()};
        Transaction host_tx = Transaction::from_string(
            "xchain-" + std::to_string(ev.spec.guest_height) + "-" +
                std::to_string(ev.spec.tx_index),
            chain::CrossRef{config_.expected_guest_id, tx.id()});
        ev.host_tx_id = host_tx.id();
        queued_cross_txs_.push_back(std::move(host_tx));
        ev.stage = EventRuntime::Stage::Tracking;
        ev.status = engine::CrossEventStatus::Pending;
    }

    void on_pushed_claim(Simulation& sim, const BlockMsg& msg) {
        // Trusted-relay baseline: believe the relay's assertion outright.
        for (auto& ev : events_) {
            if (ev.stage != EventRuntime::Stage::Waiting) continue;
            if (msg.block.header.height != ev.spec.guest_height) continue;
            engine::RelayClaim claim;
            claim.claimed_guest_id = config_.expected_guest_id;
            if (ev.spec.tx_index < msg.block.txs.size())
                claim.tx = msg.block.txs[ev.spec.tx_index];
            claim.asserted_included = true;
            claim.validation = model::VerificationSpec{"", "relay-assertion"};
            const auto verdict = engine::relay_trust_verify(claim, true);
            ev.verdict = verdict.accepted ? "accepted" : to_string(*verdict.failure);
            ev.stage = EventRuntime::Stage::Resolved;
            sim.note(id, "verdict",
                     std::string(verdict.accepted ? "accepted" : "rejected") +
                         " height " + std::to_string(ev.spec.guest_height) +
                         " (relay-trust, no guest validation)");
            return;
        }
        sim.note(id, "protocol-error", "unsolicited block");
    }

    void resolve_verdict(Simulation& sim, EventRuntime& ev,
                         const engine::VerificationVerdict& verdict) {
        ev.verdict = verdict.accepted ? "accepted" : to_string(*verdict.failure);
        ev.stage = EventRuntime::Stage::Resolved;
        sim.note(id, "verdict",
                 std::string("rejected height ") + std::to_string(ev.spec.guest_height) +
                     " cause " + *ev.verdict);
    }

    void poll_confirmations(Simulation& sim) {
        if (!sync_state_.replica) return;
        for (auto& ev : events_) {
            if (ev.stage != EventRuntime::Stage::Tracking || !ev.host_tx_mined) continue;
            const auto status = engine::confirm_cross_event(
                own_chain_, sync_state_, ev.host_tx_id, *ev.observation, config_.policy);
            if (status == ev.status) continue;

            if (!ev.confirmed_seen && status == engine::CrossEventStatus::Confirmed) {
                ev.confirmed_seen = true;
                ev.status = status;
                sim.note(id, "confirmation", "pending->confirmed");
            } else if (!ev.confirmed_seen &&
                       status == engine::CrossEventStatus::Invalidated) {
                ev.status = status;
                ev.stage = EventRuntime::Stage::Resolved;
                sim.note(id, "confirmation", "pending->invalidated");
            } else if (ev.confirmed_seen &&
                       status == engine::CrossEventStatus::Invalidated) {
                // Confirmed is terminal; a later eviction is measured, not a
                // status transition.
                ev.evicted_after_confirm = true;
                ev.stage = EventRuntime::Stage::Resolved;
                sim.note(id, "reorg-measurement", "confirmed event evicted");
            }
        }
    }

    Config config_;
    engine::GuestVerifier verifier_;
    engine::SyncState sync_state_;
    Chain own_chain_;
    SplitMix64 rng_;
    NodeId peer_ = -1;

    bool episode_active_ = false;
    bool awaiting_headers_ = false;
    bool sync_gave_up_ = false;
    std::uint64_t request_tick_ = 0;
    std::uint64_t consecutive_aborts_ = 0;
    std::uint64_t sync_aborts_ = 0;
    std::uint64_t sync_timeouts_ = 0;
    std::uint64_t keeping_episodes_ = 0;
    std::uint64_t tip_after_first_sync_ = 0;
    engine::SyncStats stats_first_;
    engine::SyncStats stats_keeping_;

    std::vector<EventRuntime> events_;
    std::map<Hash256, std::size_t> pending_blocks_;
    std::vector<Transaction> queued_cross_txs_;
};

Chain premine_chain(std::uint32_t bits, int blocks, int txs_per_block,
                    std::uint64_t rng_seed, const char* prefix) {
    SplitMix64 rng(rng_seed);
    std::vector<Transaction> genesis_txs;
    for (int i = 0; i < std::max(1, txs_per_block); ++i)
        genesis_txs.push_back(Transaction::from_string(
            std::string(prefix) + "-genesis-" + std::to_string(i) + "-" +
            std::to_string(rng_seed)));
    Chain chain(chain::mine_genesis(std::move(genesis_txs), bits, rng));
    for (int h = 1; h <= blocks; ++h)
        chain.extend(chain::mine_block(*chain.header(chain.canonical_tip()),
                                       filler_txs(prefix, std::max(1, txs_per_block),
                                                  static_cast<std::uint64_t>(h), 0),
                                       bits, rng, static_cast<std::uint64_t>(h)));
    return chain;
}

} // namespace

// ---- scenario --------------------------------------------------------------

ScenarioConfig ScenarioConfig::from_json(const nlohmann::json& j) {
    ScenarioConfig c;
    c.seed = j.value("seed", c.seed);
    c.ticks = j.value("ticks", c.ticks);
    c.difficulty_bits = j.value("difficulty_bits", c.difficulty_bits);
    c.latency = j.value("latency", c.latency);

    if (j.contains("guest")) {
        const auto& g = j.at("guest");
        c.premine = g.value("premine", c.premine);
        c.mine_prob = g.value("mine_prob", c.mine_prob);
        c.txs_per_block = g.value("txs_per_block", c.txs_per_block);
    }
    if (j.contains("host")) {
        const auto& h = j.at("host");
        c.sync_interval = h.value("sync_interval", c.sync_interval);
        c.mine_interval = h.value("mine_interval", c.mine_interval);
        c.timeout_ticks = h.value("timeout_ticks", c.timeout_ticks);
        c.policy.k_host = h.value("k_host", c.policy.k_host);
        c.policy.k_guest = h.value("k_guest", c.policy.k_guest);
    }
    if (j.contains("relay")) {
        c.with_relay = true;
        const auto& r = j.at("relay");
        const std::string kind = r.value("kind", "forward");
        if (kind == "forward") c.relay_kind = RelayKind::Forward;
        else if (kind == "tamper") c.relay_kind = RelayKind::Tamper;
        else if (kind == "fabricate") c.relay_kind = RelayKind::Fabricate;
        else if (kind == "silent") c.relay_kind = RelayKind::Silent;
        else throw std::invalid_argument("unknown relay kind: " + kind);
        if (r.contains("tamper")) {
            const auto& t = r.at("tamper");
            const std::string tk = t.value("kind", "none");
            if (tk == "none") c.tamper.kind = TamperKind::None;
            else if (tk == "flip-tx-byte") c.tamper.kind = TamperKind::FlipTxPayloadByte;
            else if (tk == "flip-nonce") c.tamper.kind = TamperKind::FlipHeaderNonce;
            else if (tk == "flip-prev-hash") c.tamper.kind = TamperKind::FlipPrevHash;
            else if (tk == "flip-merkle-root") c.tamper.kind = TamperKind::FlipMerkleRoot;
            else if (tk == "truncate-headers") c.tamper.kind = TamperKind::TruncateHeaders;
            else if (tk == "substitute-tx") c.tamper.kind = TamperKind::SubstituteTx;
            else throw std::invalid_argument("unknown tamper kind: " + tk);
            c.tamper.height = t.value("height", c.tamper.height);
            c.tamper.tx_index = t.value("tx_index", c.tamper.tx_index);
        }
    }
    if (j.contains("fork_miner")) {
        c.with_fork_miner = true;
        const auto& f = j.at("fork_miner");
        c.hash_share = f.value("hash_share", c.hash_share);
        c.give_up_deficit = f.value("give_up_deficit", c.give_up_deficit);
        c.fork_target_height = f.value("target_height", c.fork_target_height);
    }
    if (j.contains("cross_events")) {
        for (const auto& e : j.at("cross_events")) {
            CrossEventSpec spec;
            spec.at_tick = e.value("at_tick", spec.at_tick);
            spec.guest_height = e.at("guest_height").get<std::uint64_t>();
            spec.tx_index = e.value("tx_index", spec.tx_index);
            c.cross_events.push_back(spec);
        }
    }
    return c;
}

nlohmann::json ScenarioConfig::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["ticks"] = ticks;
    j["difficulty_bits"] = difficulty_bits;
    j["latency"] = latency;
    j["guest"] = {{"premine", premine},
                  {"mine_prob", mine_prob},
                  {"txs_per_block", txs_per_block}};
    j["host"] = {{"sync_interval", sync_interval},
                 {"mine_interval", mine_interval},
                 {"timeout_ticks", timeout_ticks},
                 {"k_host", policy.k_host},
                 {"k_guest", policy.k_guest}};
    if (with_relay) {
        const char* kind = relay_kind == RelayKind::Forward    ? "forward"
                           : relay_kind == RelayKind::Tamper   ? "tamper"
                           : relay_kind == RelayKind::Fabricate ? "fabricate"
                                                                 : "silent";
        j["relay"] = {{"kind", kind}};
    }
    if (with_fork_miner)
        j["fork_miner"] = {{"hash_share", hash_share},
                           {"give_up_deficit", give_up_deficit},
                           {"target_height", fork_target_height}};
    auto events = nlohmann::json::array();
    for (const auto& e : cross_events)
        events.push_back({{"at_tick", e.at_tick},
                          {"guest_height", e.guest_height},
                          {"tx_index", e.tx_index}});
    j["cross_events"] = events;
    return j;
}

ScenarioResult run_scenario(const ScenarioConfig& config, VerifyMode mode) {
    config.policy.validate();
    Simulation sim;
    sim.set_default_latency(config.latency);

    const bool fabricated = config.with_relay && config.relay_kind == RelayKind::Fabricate;

    // Guest chain and its identity. In the fabricated-guest scenario the real
    // guest does not exist; the host still expects the real guest's identity.
    Chain guest_chain =
        premine_chain(config.difficulty_bits, config.premine, config.txs_per_block,
                      SplitMix64::stream_seed(config.seed, 1), "g");
    const Hash256 guest_id = chain_id(*guest_chain.canonical_header_at(0));

    GuestNode* guest = nullptr;
    NodeId guest_node_id = -1;
    if (!fabricated) {
        auto node = std::make_unique<GuestNode>(
            std::move(guest_chain), config.difficulty_bits, config.mine_prob,
            config.txs_per_block, config.ticks, SplitMix64::stream_seed(config.seed, 2));
        guest = node.get();
        guest_node_id = sim.add_node(std::move(node));
    }

    HostNode::Config host_config;
    host_config.expected_guest_id = guest_id;
    host_config.guest_descriptor = {"pow-sha256", config.difficulty_bits};
    host_config.policy = config.policy;
    host_config.mode = mode;
    host_config.sync_interval = config.sync_interval;
    host_config.mine_interval = config.mine_interval;
    host_config.timeout_ticks = config.timeout_ticks;
    host_config.mine_until = config.ticks;
    host_config.events = config.cross_events;

    Chain host_chain =
        premine_chain(config.difficulty_bits, 0, 1,
                      SplitMix64::stream_seed(config.seed, 3), "h");
    auto host_node = std::make_unique<HostNode>(std::move(host_config),
                                                std::move(host_chain),
                                                SplitMix64::stream_seed(config.seed, 4));
    HostNode* host = host_node.get();
    NodeId host_id = sim.add_node(std::move(host_node));

    NodeId peer_id = guest_node_id;
    RelayNode* relay = nullptr;
    if (config.with_relay) {
        std::optional<Chain> fake;
        if (fabricated) {
            int fake_height = config.premine;
            for (const auto& e : config.cross_events)
                fake_height = std::max(fake_height,
                                       static_cast<int>(e.guest_height) +
                                           config.policy.k_guest + 2);
            fake = premine_chain(config.difficulty_bits, fake_height,
                                 config.txs_per_block,
                                 SplitMix64::stream_seed(config.seed, 5), "fake");
        }
        auto node = std::make_unique<RelayNode>(config.relay_kind, config.tamper,
                                                std::move(fake), mode, config.ticks);
        node->init_claims(config.cross_events);
        relay = node.get();
        peer_id = sim.add_node(std::move(node));
        relay->wire(host_id, guest_node_id);
    }
    host->set_peer(peer_id);
    if (guest) guest->set_watcher(config.with_relay ? peer_id : host_id);

    if (config.with_fork_miner) {
        if (!guest) throw std::invalid_argument("fork miner needs a real guest");
        if (config.hash_share <= 0.0 || config.hash_share >= 1.0)
            throw std::invalid_argument("hash_share must be in (0,1)");
        std::uint64_t target = config.fork_target_height;
        if (target == 0 && !config.cross_events.empty())
            target = config.cross_events.front().guest_height;
        if (target == 0)
            throw std::invalid_argument("fork miner needs a target height");
        // hash_share is the adversary's fraction of total hash power; the
        // honest guest holds the rest, so the per-tick rates keep the ratio
        // hash_share : (1 - hash_share).
        const double attacker_tick_prob =
            config.mine_prob * config.hash_share / (1.0 - config.hash_share);
        sim.add_node(std::make_unique<ForkMinerNode>(
            guest, guest_node_id, config.difficulty_bits, attacker_tick_prob,
            config.give_up_deficit, target, config.ticks,
            SplitMix64::stream_seed(config.seed, 6)));
    }

    // Every node drives itself with self-scheduled mine ticks from tick 1.
    for (NodeId n = 0; n < static_cast<NodeId>(sim.node_count()); ++n)
        sim.schedule_at(1, n, n, MineTickMsg{});

    sim.run_until(config.ticks);
    sim.run_to_quiescence();

    // ---- result assembly ----
    ScenarioResult result;
    for (const auto& ev : host->events()) {
        if (ev.verdict) ++result.verdicts[*ev.verdict];
        if (ev.confirmed_seen) ++result.confirmed;
        if (!ev.confirmed_seen && ev.status == engine::CrossEventStatus::Invalidated)
            ++result.invalidated;
        if (ev.verdict && *ev.verdict == "accepted" && !ev.confirmed_seen &&
            ev.status == engine::CrossEventStatus::Pending)
            ++result.still_pending;
        if (ev.evicted_after_confirm) ++result.confirmed_then_evicted;
    }
    result.sync_aborts = host->sync_aborts();
    result.sync_timeouts = host->sync_timeouts();
    result.sync_stats = host->keeping_stats();
    result.replica_height = host->sync_state().replica_tip_height();
    result.guest_height = guest ? guest->chain().tip_height() : 0;
    result.replica_converged =
        guest && host->sync_state().replica &&
        host->sync_state().replica->canonical_headers() ==
            guest->chain().canonical_headers();
    result.host_headers_bytes_in = sim.bytes_between(peer_id, host_id);

    nlohmann::ordered_json verdicts;
    for (const auto& [cause, count] : result.verdicts) verdicts[cause] = count;
    nlohmann::ordered_json summary;
    summary["mode"] = to_string(mode);
    summary["seed"] = config.seed;
    summary["ticks"] = config.ticks;
    summary["verdicts"] = verdicts;
    summary["confirmations"] = {{"confirmed", result.confirmed},
                                {"invalidated", result.invalidated},
                                {"pending", result.still_pending},
                                {"confirmed_then_evicted", result.confirmed_then_evicted}};
    summary["sync"] = {{"first_headers", host->first_sync_stats().headers_accepted},
                       {"keeping_headers_received", result.sync_stats.headers_received},
                       {"keeping_headers_accepted", result.sync_stats.headers_accepted},
                       {"keeping_episodes", host->keeping_episodes()},
                       {"rebranches", result.sync_stats.rebranches},
                       {"aborts", result.sync_aborts},
                       {"timeouts", result.sync_timeouts}};
    summary["replica_height"] = result.replica_height;
    summary["guest_height"] = result.guest_height;
    summary["replica_converged"] = result.replica_converged;
    summary["bytes_from_peer"] = result.host_headers_bytes_in;
    result.summary = std::move(summary);
    result.trace_json_lines = sim.trace_json_lines();
    return result;
}

} // namespace cifuv::netsim
