#pragma once

// Discrete-event model of the grove ring. Each grove owns a byte-addressed
// data queue (front/back pointers stepping by one queue word), a processing
// element running its trees, and a req/ack handshake toward the next grove.
// New inputs enter at the back of a queue; partially classified inputs
// forwarded by the previous grove enter at the front.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fog/common.hpp"
#include "fog/costmodel.hpp"
#include "fog/dataset.hpp"
#include "fog/eval.hpp"
#include "fog/forest.hpp"

namespace fog {

/// Queue word width in bytes: hop count, one byte per feature, the input id,
/// and one byte per label.
inline std::size_t gamma_bytes(std::size_t n_features, std::size_t n_labels) {
    if (n_features == 0 || n_labels == 0) {
        throw Error("queue word needs at least one feature and one label");
    }
    return 1 + n_features + 1 + n_labels;
}

inline constexpr std::size_t kBaseQueueBytes = 6144;

/// Queue size when none is configured: 6 kB, grown to hold at least eight
/// entries for wide inputs.
inline std::size_t default_queue_capacity(std::size_t gamma) { return std::max(kBaseQueueBytes, 8 * gamma); }

struct QueueEntry {
    std::size_t hops = 0; // groves that have processed this input so far
    std::size_t id = 0;
    std::vector<double> payload;
    std::vector<double> prob; // running sum of grove distributions
    std::uint64_t enqueued_at = 0;
};

/// Ring buffer of Γ-byte words over a byte array. Only whole words are used,
/// so the ring spans floor(capacity / Γ) * Γ bytes and both pointers stay
/// Γ-aligned. Full-precision values ride alongside the byte image.
class DataQueue {
public:
    DataQueue(std::size_t capacity_bytes, std::size_t n_features, std::size_t n_labels)
        : gamma_(gamma_bytes(n_features, n_labels)),
          n_features_(n_features),
          n_labels_(n_labels),
          capacity_(capacity_bytes),
          slots_(capacity_bytes / gamma_),
          storage_(capacity_bytes, 0),
          entries_(slots_) {
        if (slots_ == 0) {
            throw Error("queue capacity " + std::to_string(capacity_bytes) + " is smaller than one " +
                        std::to_string(gamma_) + "-byte entry");
        }
    }

    std::size_t gamma() const noexcept { return gamma_; }
    std::size_t capacity_bytes() const noexcept { return capacity_; }
    std::size_t ring_bytes() const noexcept { return slots_ * gamma_; }
    std::size_t slots() const noexcept { return slots_; }
    std::size_t size() const noexcept { return count_; }
    bool empty() const noexcept { return count_ == 0; }
    std::size_t reserved() const noexcept { return reserved_; }
    std::size_t free_slots() const noexcept { return slots_ - count_ - reserved_; }
    std::size_t front_pointer() const noexcept { return fr_; }
    std::size_t back_pointer() const noexcept { return bk_; }
    std::span<const std::uint8_t> bytes() const noexcept { return storage_; }

    /// Entry count implied by the pointers alone.
    std::size_t occupancy_from_pointers() const noexcept {
        const std::size_t diff = (bk_ + ring_bytes() - fr_) % ring_bytes();
        if (diff == 0) {
            return count_ == slots_ ? slots_ : 0;
        }
        return diff / gamma_;
    }

    /// Holds one free slot for an incoming transfer.
    void reserve_slot() {
        if (free_slots() == 0) {
            throw std::logic_error("no free slot to reserve");
        }
        ++reserved_;
    }

    /// Writes at the back pointer; false (and nothing written) when full.
    [[nodiscard]] bool try_push_back(QueueEntry entry) {
        if (free_slots() == 0) {
            return false;
        }
        store(bk_, std::move(entry));
        bk_ = (bk_ + gamma_) % ring_bytes();
        ++count_;
        return true;
    }

    /// Steps the front pointer back one word and writes there. A reserved slot
    /// is consumed when `use_reservation` is set.
    [[nodiscard]] bool try_push_front(QueueEntry entry, bool use_reservation = false) {
        if (use_reservation) {
            if (reserved_ == 0) {
                throw std::logic_error("front insert without a reservation");
            }
            --reserved_;
        } else if (free_slots() == 0) {
            return false;
        }
        fr_ = (fr_ + ring_bytes() - gamma_) % ring_bytes();
        store(fr_, std::move(entry));
        ++count_;
        return true;
    }

    const QueueEntry& front() const {
        if (empty()) {
            throw std::logic_error("front of empty queue");
        }
        return *entries_[fr_ / gamma_];
    }

    QueueEntry pop_front() {
        if (empty()) {
            throw std::logic_error("pop from empty queue");
        }
        auto& slot = entries_[fr_ / gamma_];
        QueueEntry e = std::move(*slot);
        slot.reset();
        fr_ = (fr_ + gamma_) % ring_bytes();
        --count_;
        return e;
    }

    bool pointers_aligned() const noexcept {
        return fr_ % gamma_ == 0 && bk_ % gamma_ == 0 && fr_ < ring_bytes() && bk_ < ring_bytes();
    }

private:
    static std::uint8_t quantize(double v) {
        return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }

    void store(std::size_t offset, QueueEntry entry) {
        if (entry.payload.size() != n_features_ || entry.prob.size() != n_labels_) {
            throw std::logic_error("queue entry does not match the word layout");
        }
        auto* word = storage_.data() + offset;
        word[0] = static_cast<std::uint8_t>(std::min<std::size_t>(entry.hops, 255));
        for (std::size_t f = 0; f < n_features_; ++f) {
            word[1 + f] = quantize(entry.payload[f]);
        }
        word[1 + n_features_] = static_cast<std::uint8_t>(entry.id & 0xFF);
        const double divisor = entry.hops == 0 ? 1.0 : static_cast<double>(entry.hops);
        for (std::size_t c = 0; c < n_labels_; ++c) {
            word[2 + n_features_ + c] = quantize(entry.prob[c] / divisor);
        }
        entries_[offset / gamma_] = std::move(entry);
    }

    std::size_t gamma_;
    std::size_t n_features_;
    std::size_t n_labels_;
    std::size_t capacity_;
    std::size_t slots_;
    std::vector<std::uint8_t> storage_;
    std::vector<std::optional<QueueEntry>> entries_;
    std::size_t fr_ = 0;
    std::size_t bk_ = 0;
    std::size_t count_ = 0;
    std::size_t reserved_ = 0;
};

struct Handshake {
    bool req = false;
    bool ack = false;
};

struct GroveUnit {
    GroveUnit(std::size_t index_, std::size_t capacity_bytes, std::size_t n_features, std::size_t n_labels)
        : index(index_), queue(capacity_bytes, n_features, n_labels) {}

    std::size_t index;
    DataQueue queue;
    /// Low-confidence entry waiting for (or in) transfer to the next grove.
    std::optional<QueueEntry> staged;
    Handshake handshake_out;
    std::uint64_t busy_until = 0;
};

/// New input from the processor: back of the queue, zero hops, zeroed probabilities.
[[nodiscard]] inline bool enqueue_from_processor(GroveUnit& g, std::size_t id, std::span<const double> features,
                                                 std::size_t n_labels, std::uint64_t cycle = 0) {
    QueueEntry e;
    e.id = id;
    e.hops = 0;
    e.payload.assign(features.begin(), features.end());
    e.prob.assign(n_labels, 0.0);
    e.enqueued_at = cycle;
    return g.queue.try_push_back(std::move(e));
}

/// Entry forwarded by the previous grove: front of the queue, one more hop.
[[nodiscard]] inline bool enqueue_from_neighbor(GroveUnit& g, QueueEntry entry, std::uint64_t cycle = 0,
                                                bool use_reservation = false) {
    entry.hops += 1;
    entry.enqueued_at = cycle;
    return g.queue.try_push_front(std::move(entry), use_reservation);
}

struct PeConfig {
    double thresh = 0.5;
    std::size_t max_hops = 1;
    std::size_t parallelism = 0; // 0: all member trees at once
    bool early_exit = true;
    bool multi_output = false;
    std::vector<std::size_t> output_widths;

    EvalConfig as_eval() const {
        EvalConfig e;
        e.thresh = thresh;
        e.max_hops = max_hops;
        e.early_exit = early_exit;
        e.multi_output = multi_output;
        e.output_widths = output_widths;
        return e;
    }
};

struct PeResult {
    QueueEntry entry;
    std::vector<double> prob_norm;
    double confidence = 0.0;
    bool threshold_met = false;
    /// Classification is complete: threshold met or hop budget exhausted.
    bool done = false;
    OpTrace trace;
    std::uint64_t compute_cycles = 0;
    /// Read, compute and write-back.
    std::uint64_t busy_cycles = 0;
};

/// One processing-element pass over the entry at the front of grove `grove_index`.
template <GroveSource Source>
PeResult pe_process(const Source& fog, std::size_t grove_index, QueueEntry entry, const PeConfig& cfg,
                    const CostParams& cost) {
    const std::size_t n_labels = entry.prob.size();
    const std::size_t gamma = gamma_bytes(entry.payload.size(), n_labels);
    const auto out = fog.grove_output(grove_index, entry.payload);
    PeResult r;
    r.trace = grove_compute_trace(out);
    r.trace.accumulate_ops += 2 * n_labels; // merge into the array, then normalize
    r.trace.bytes_read += gamma;
    r.trace.bytes_written += 1 + n_labels;
    r.prob_norm.resize(n_labels);
    const double divisor = static_cast<double>(entry.hops + 1);
    for (std::size_t c = 0; c < n_labels; ++c) {
        entry.prob[c] += out.prob[c];
        r.prob_norm[c] = entry.prob[c] / divisor;
    }
    r.confidence = confidence(r.prob_norm, cfg.as_eval());
    r.threshold_met = cfg.early_exit && is_confident(r.confidence, cfg.thresh);
    r.done = r.threshold_met || entry.hops + 1 >= cfg.max_hops;
    r.compute_cycles = pe_latency_cycles(out.tree_comparisons, cfg.parallelism, n_labels, cost);
    r.busy_cycles = cost.t_mem_access + r.compute_cycles + cost.t_mem_access;
    r.entry = std::move(entry);
    return r;
}

/// Instantaneous form of one req/ack exchange: copies the staged entry of
/// `src` to the front of `dst`, then clears the request. Returns the cost.
inline OpTrace handshake_transfer(GroveUnit& src, GroveUnit& dst, const CostParams& cost) {
    if (!src.handshake_out.req || !src.staged) {
        throw std::logic_error("handshake without a pending request");
    }
    const std::size_t gamma = src.queue.gamma();
    if (!enqueue_from_neighbor(dst, std::move(*src.staged))) {
        throw std::logic_error("handshake into a full queue");
    }
    src.staged.reset();
    src.handshake_out.ack = true; // raised by dst for the completing cycle
    src.handshake_out.req = false;
    OpTrace t;
    t.handshake_bytes = gamma;
    t.cycles = cost.t_handshake * gamma;
    return t;
}

enum class Arrival { batch_at_zero, fixed_interval };

struct SimConfig {
    std::size_t n_groves = 0;
    std::size_t trees_per_grove = 0;
    std::size_t queue_capacity_bytes = 0; // 0: default_queue_capacity(Γ)
    std::size_t parallelism = 0;          // 0: trees_per_grove
    double thresh = 0.5;
    std::size_t max_hops = 1;
    std::uint64_t seed = 0;
    bool early_exit = true;
    Arrival arrival = Arrival::batch_at_zero;
    std::uint64_t arrival_interval = 1;
    bool multi_output = false;
    std::vector<std::size_t> output_widths;
    /// Explicit start grove per input; empty draws them from the seed.
    std::vector<std::size_t> start_groves;
    bool record_events = false;
};

enum class EventKind { ENQ_P, ENQ_N, PE_START, PE_DONE, REQ, ACK, EMIT };

inline std::string_view to_string(EventKind k) {
    switch (k) {
    case EventKind::ENQ_P: return "ENQ_P";
    case EventKind::ENQ_N: return "ENQ_N";
    case EventKind::PE_START: return "PE_START";
    case EventKind::PE_DONE: return "PE_DONE";
    case EventKind::REQ: return "REQ";
    case EventKind::ACK: return "ACK";
    case EventKind::EMIT: return "EMIT";
    }
    return "?";
}

struct SimEvent {
    std::uint64_t cycle = 0;
    std::size_t grove = 0;
    EventKind kind = EventKind::ENQ_P;
    std::size_t id = 0;
    std::size_t hops = 0;

    friend bool operator==(const SimEvent&, const SimEvent&) = default;
};

struct SimRecord {
    std::size_t id = 0;
    Label label = 0;
    std::size_t hops = 0; // groves consulted
    std::size_t start_grove = 0;
    double confidence = 0.0;
    std::vector<double> prob_norm;
    OpTrace trace;
    double energy_j = 0.0;
    std::uint64_t arrival_cycle = 0;
    std::uint64_t done_cycle = 0;
    std::uint64_t latency_cycles = 0;
};

struct SimStats {
    std::vector<SimRecord> records; // indexed by input id
    std::vector<SimEvent> events;
    std::size_t gamma = 0;
    std::size_t queue_capacity_bytes = 0;
    std::size_t queue_slots = 0;
    double mean_energy_j = 0.0;
    double mean_latency_cycles = 0.0;
    double mean_hops = 0.0;
    std::uint64_t makespan_cycles = 0;
    double throughput_per_s = 0.0;
    double edp = 0.0; // mean energy * mean latency
    /// Input-cycles spent held at the processor because the target queue was full.
    std::uint64_t processor_stall_cycles = 0;
    /// Cycles a raised req waited for space at the next grove.
    std::uint64_t handshake_wait_cycles = 0;
    std::vector<std::size_t> peak_occupancy; // per grove

    std::vector<std::size_t> start_assignments() const {
        std::vector<std::size_t> s;
        s.reserve(records.size());
        for (const auto& r : records) {
            s.push_back(r.start_grove);
        }
        return s;
    }
};

namespace detail {

template <GroveSource Source>
class RingSimulator {
public:
    RingSimulator(const Source& fog, const Dataset& data, const SimConfig& cfg, const CostParams& cost)
        : fog_(fog), data_(data), cfg_(cfg), cost_(cost) {
        validate();
        n_ = fog_.n_groves();
        gamma_ = gamma_bytes(data_.n_features, fog_.n_labels());
        const std::size_t capacity =
            cfg_.queue_capacity_bytes != 0 ? cfg_.queue_capacity_bytes : default_queue_capacity(gamma_);
        for (std::size_t g = 0; g < n_; ++g) {
            groves_.emplace_back(g, capacity, data_.n_features, fog_.n_labels());
        }
        lanes_.resize(n_);
        pe_cfg_.thresh = cfg_.thresh;
        pe_cfg_.max_hops = cfg_.max_hops;
        pe_cfg_.parallelism = cfg_.parallelism;
        pe_cfg_.early_exit = cfg_.early_exit;
        pe_cfg_.multi_output = cfg_.multi_output;
        pe_cfg_.output_widths = cfg_.output_widths;
        admission_cap_ = n_ * groves_.front().queue.slots();
        stats_.gamma = gamma_;
        stats_.queue_capacity_bytes = capacity;
        stats_.queue_slots = groves_.front().queue.slots();
        stats_.peak_occupancy.assign(n_, 0);
        stats_.records.resize(data_.size());
        where_.assign(data_.size(), Where::not_arrived);
        for (std::size_t i = 0; i < data_.size(); ++i) {
            auto& rec = stats_.records[i];
            rec.id = i;
            rec.start_grove = cfg_.start_groves.empty() ? start_grove(cfg_.seed, i, n_) : cfg_.start_groves[i];
            rec.arrival_cycle = cfg_.arrival == Arrival::batch_at_zero ? 0 : i * cfg_.arrival_interval;
        }
    }

    SimStats run() {
        std::uint64_t cycle = 0;
        while (completed_ < data_.size()) {
            changed_ = false;
            complete_transfers(cycle);
            complete_pes(cycle);
            start_pes(cycle);
            start_transfers(cycle);
            accept_arrivals(cycle);
            admit(cycle);
            check_pointers();
            if (completed_ == data_.size()) {
                break;
            }
            const std::uint64_t next = changed_ ? cycle + 1 : next_scheduled(cycle);
            account_stalls(cycle, next);
            cycle = next;
        }
        finish();
        return std::move(stats_);
    }

private:
    enum class Where { not_arrived, processor, queue, pe, handshake, done };

    struct Lane {
        std::optional<PeResult> pe;
        std::uint64_t pe_done_at = 0;
        bool pe_blocked = false;
        bool transferring = false;
        std::uint64_t transfer_done_at = 0;
        std::uint64_t req_raised_at = 0;
        std::uint64_t staging_free_at = 0;
        std::deque<std::size_t> pending; // arrived inputs held at the processor
    };

    void validate() const {
        if (data_.size() == 0) {
            throw Error("nothing to simulate");
        }
        if (cfg_.n_groves != fog_.n_groves()) {
            throw Error("simulator grove count does not match the model");
        }
        if constexpr (requires { fog_.trees_per_grove(); }) {
            if (cfg_.trees_per_grove != fog_.trees_per_grove()) {
                throw Error("simulator trees per grove does not match the model");
            }
        }
        if constexpr (requires { fog_.n_features(); }) {
            if (data_.n_features != fog_.n_features()) {
                throw Error("dataset feature count does not match the model");
            }
        }
        if (fog_.n_groves() > 255) {
            throw Error("hop counter is one byte; at most 255 groves");
        }
        EvalConfig e;
        e.thresh = cfg_.thresh;
        e.max_hops = cfg_.max_hops;
        e.multi_output = cfg_.multi_output;
        e.output_widths = cfg_.output_widths;
        e.validate(fog_.n_groves(), fog_.n_labels());
        if (!cfg_.start_groves.empty()) {
            if (cfg_.start_groves.size() != data_.size()) {
                throw Error("need one start grove per input");
            }
            for (auto s : cfg_.start_groves) {
                if (s >= fog_.n_groves()) {
                    throw Error("start grove out of range");
                }
            }
        }
        if (cfg_.arrival == Arrival::fixed_interval && cfg_.arrival_interval == 0) {
            throw Error("arrival interval must be at least one cycle");
        }
        cost_.validate();
    }

    void log(std::uint64_t cycle, std::size_t grove, EventKind kind, std::size_t id, std::size_t hops) {
        if (cfg_.record_events) {
            stats_.events.push_back({cycle, grove, kind, id, hops});
        }
    }

    void move(std::size_t id, Where from, Where to) {
        if (where_[id] != from) {
            throw std::logic_error("residency violation for input " + std::to_string(id));
        }
        where_[id] = to;
        changed_ = true;
    }

    void complete_transfers(std::uint64_t cycle) {
        for (std::size_t g = 0; g < n_; ++g) {
            auto& lane = lanes_[g];
            auto& src = groves_[g];
            src.handshake_out.ack = false;
            if (!lane.transferring || lane.transfer_done_at != cycle) {
                continue;
            }
            auto& dst = groves_[(g + 1) % n_];
            const auto id = src.staged->id;
            const auto hops = src.staged->hops + 1;
            log(cycle, dst.index, EventKind::ACK, id, hops);
            if (!enqueue_from_neighbor(dst, std::move(*src.staged), cycle, true)) {
                throw std::logic_error("reserved slot vanished");
            }
            log(cycle, dst.index, EventKind::ENQ_N, id, hops);
            stats_.peak_occupancy[dst.index] = std::max(stats_.peak_occupancy[dst.index], dst.queue.size());
            src.staged.reset();
            src.handshake_out.ack = true;
            src.handshake_out.req = false;
            lane.transferring = false;
            lane.staging_free_at = cycle + 1;
            move(id, Where::handshake, Where::queue);
        }
    }

    void stage(std::size_t g, std::uint64_t cycle) {
        auto& lane = lanes_[g];
        auto& unit = groves_[g];
        if (!lane.pe_blocked || unit.staged || lane.staging_free_at > cycle) {
            return;
        }
        const auto id = lane.pe->entry.id;
        const auto hops = lane.pe->entry.hops;
        unit.staged = std::move(lane.pe->entry);
        unit.handshake_out.req = true;
        lane.req_raised_at = cycle;
        lane.pe.reset();
        lane.pe_blocked = false;
        log(cycle, g, EventKind::REQ, id, hops);
        move(id, Where::pe, Where::handshake);
    }

    void complete_pes(std::uint64_t cycle) {
        for (std::size_t g = 0; g < n_; ++g) {
            auto& lane = lanes_[g];
            if (lane.pe && !lane.pe_blocked && lane.pe_done_at == cycle) {
                auto& res = *lane.pe;
                const auto id = res.entry.id;
                log(cycle, g, EventKind::PE_DONE, id, res.entry.hops);
                auto& rec = stats_.records[id];
                rec.trace += res.trace;
                if (res.done) {
                    rec.label = argmax(res.prob_norm);
                    rec.hops = res.entry.hops + 1;
                    rec.confidence = res.confidence;
                    rec.prob_norm = res.prob_norm;
                    rec.done_cycle = cycle;
                    log(cycle, g, EventKind::EMIT, id, res.entry.hops);
                    lane.pe.reset();
                    ++completed_;
                    --in_flight_;
                    move(id, Where::pe, Where::done);
                } else {
                    lane.pe_blocked = true;
                    changed_ = true;
                }
            }
            stage(g, cycle);
        }
    }

    void start_pes(std::uint64_t cycle) {
        for (std::size_t g = 0; g < n_; ++g) {
            auto& lane = lanes_[g];
            auto& q = groves_[g].queue;
            if (lane.pe || q.empty() || q.front().enqueued_at >= cycle) {
                continue;
            }
            auto entry = q.pop_front();
            const auto id = entry.id;
            log(cycle, g, EventKind::PE_START, id, entry.hops);
            lane.pe = pe_process(fog_, g, std::move(entry), pe_cfg_, cost_);
            lane.pe_done_at = cycle + lane.pe->busy_cycles;
            groves_[g].busy_until = lane.pe_done_at;
            move(id, Where::queue, Where::pe);
        }
    }

    void start_transfers(std::uint64_t cycle) {
        for (std::size_t g = 0; g < n_; ++g) {
            auto& lane = lanes_[g];
            auto& src = groves_[g];
            if (!src.handshake_out.req || lane.transferring || lane.req_raised_at >= cycle) {
                continue;
            }
            auto& dst = groves_[(g + 1) % n_];
            if (dst.queue.free_slots() == 0) {
                continue;
            }
            dst.queue.reserve_slot();
            lane.transferring = true;
            lane.transfer_done_at = cycle + cost_.t_handshake * gamma_;
            stats_.records[src.staged->id].trace.handshake_bytes += gamma_;
            changed_ = true;
        }
    }

    void accept_arrivals(std::uint64_t cycle) {
        while (next_arrival_ < data_.size() && stats_.records[next_arrival_].arrival_cycle <= cycle) {
            const auto id = next_arrival_++;
            lanes_[stats_.records[id].start_grove].pending.push_back(id);
            move(id, Where::not_arrived, Where::processor);
        }
    }

    void admit(std::uint64_t cycle) {
        for (std::size_t g = 0; g < n_; ++g) {
            auto& lane = lanes_[g];
            if (lane.pending.empty() || in_flight_ >= admission_cap_) {
                continue;
            }
            const auto id = lane.pending.front();
            if (!enqueue_from_processor(groves_[g], id, data_.row(id), fog_.n_labels(), cycle)) {
                continue; // backpressure: held at the processor
            }
            lane.pending.pop_front();
            ++in_flight_;
            stats_.records[id].trace.bytes_written += gamma_;
            stats_.peak_occupancy[g] = std::max(stats_.peak_occupancy[g], groves_[g].queue.size());
            log(cycle, g, EventKind::ENQ_P, id, 0);
            move(id, Where::processor, Where::queue);
        }
    }

    void check_pointers() const {
        for (const auto& g : groves_) {
            if (!g.queue.pointers_aligned() || g.queue.occupancy_from_pointers() != g.queue.size()) {
                throw std::logic_error("queue pointer discipline violated at grove " + std::to_string(g.index));
            }
        }
    }

    std::uint64_t next_scheduled(std::uint64_t cycle) const {
        std::uint64_t next = std::numeric_limits<std::uint64_t>::max();
        for (const auto& lane : lanes_) {
            if (lane.pe && !lane.pe_blocked && lane.pe_done_at > cycle) {
                next = std::min(next, lane.pe_done_at);
            }
            if (lane.transferring && lane.transfer_done_at > cycle) {
                next = std::min(next, lane.transfer_done_at);
            }
        }
        if (next_arrival_ < data_.size()) {
            next = std::min(next, std::max(cycle + 1, stats_.records[next_arrival_].arrival_cycle));
        }
        if (next == std::numeric_limits<std::uint64_t>::max()) {
            throw std::logic_error("grove ring deadlocked with " + std::to_string(data_.size() - completed_) +
                                   " inputs unfinished");
        }
        return next;
    }

    void account_stalls(std::uint64_t cycle, std::uint64_t next) {
        const std::uint64_t span = next - cycle;
        for (std::size_t g = 0; g < n_; ++g) {
            const auto& lane = lanes_[g];
            if (!lane.pending.empty() && groves_[g].queue.free_slots() == 0) {
                stats_.processor_stall_cycles += span * lane.pending.size();
            }
            if (groves_[g].handshake_out.req && !lane.transferring) {
                stats_.handshake_wait_cycles += span;
            }
        }
    }

    void finish() {
        double energy = 0.0;
        double latency = 0.0;
        double hops = 0.0;
        std::uint64_t last = 0;
        for (auto& rec : stats_.records) {
            rec.latency_cycles = rec.done_cycle - rec.arrival_cycle;
            rec.trace.cycles = rec.latency_cycles;
            rec.energy_j = energy_of(rec.trace, cost_);
            energy += rec.energy_j;
            latency += static_cast<double>(rec.latency_cycles);
            hops += static_cast<double>(rec.hops);
            last = std::max(last, rec.done_cycle);
        }
        const double n = static_cast<double>(stats_.records.size());
        stats_.mean_energy_j = energy / n;
        stats_.mean_latency_cycles = latency / n;
        stats_.mean_hops = hops / n;
        stats_.makespan_cycles = last + 1;
        stats_.throughput_per_s = n / seconds_of(static_cast<double>(stats_.makespan_cycles), cost_);
        stats_.edp = edp(stats_.mean_energy_j, stats_.mean_latency_cycles, cost_);
    }

    const Source& fog_;
    const Dataset& data_;
    const SimConfig& cfg_;
    const CostParams& cost_;
    std::size_t n_ = 0;
    std::size_t gamma_ = 0;
    std::vector<GroveUnit> groves_;
    std::vector<Lane> lanes_;
    PeConfig pe_cfg_;
    std::size_t admission_cap_ = 0;
    std::size_t in_flight_ = 0;
    std::size_t completed_ = 0;
    std::size_t next_arrival_ = 0;
    bool changed_ = false;
    std::vector<Where> where_;
    SimStats stats_;
};

} // namespace detail

/// Runs every row of `data` through the grove ring to completion. Input ids
/// are row indices. Deterministic for a given configuration.
template <GroveSource Source>
SimStats simulate(const Source& fog, const Dataset& data, const SimConfig& cfg, const CostParams& cost) {
    SimConfig resolved = cfg;
    if (resolved.parallelism == 0) {
        resolved.parallelism = resolved.trees_per_grove;
    }
    detail::RingSimulator<Source> sim(fog, data, resolved, cost);
    return sim.run();
}

/// `cycle,grove,event,id,hops`
inline void write_event_log(std::ostream& out, std::span<const SimEvent> events) {
    out << "cycle,grove,event,id,hops\n";
    for (const auto& e : events) {
        out << e.cycle << ',' << e.grove << ',' << to_string(e.kind) << ',' << e.id << ',' << e.hops << '\n';
    }
}

} // namespace fog
