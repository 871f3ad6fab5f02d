#pragma once
// Observation-only timing model of the capability-execution path: check-task
// FSM bookkeeping, the capability cache, store/clear head buffers, single
// shared data port with lowest-priority capability requests, tag-dependency
// stalls, and needCC commit gating. Disabling it never changes a functional
// outcome.

#include <array>
#include <cstdint>
#include <deque>
#include <optional>

#include "curesim/capability.hpp"

namespace curesim {

enum class TaskKind { CheckLoad, CheckStore, Cstr, Cclr };
enum class TaskState { Init, Ready, Wait, Done }; // S_INIT/S_READY/S_WAIT/S_DONE

// Stack/heap split for the adaptive clear-head policy: the upper half of the
// 47-bit user space is stack territory (boundary inclusive).
inline constexpr uint64_t STACK_CLASS_BOUNDARY = uint64_t{1} << 46;
constexpr bool isStackClass(uint64_t addr) { return addr >= STACK_CLASS_BOUNDARY; }

struct SimStats {
    uint64_t totalMemInsts = 0;
    uint64_t taggedMemInsts = 0;
    uint64_t ccacheHits = 0;
    uint64_t ccacheMisses = 0;
    uint64_t capRequests = 0;
    uint64_t cstrIterations = 0; // sum over completed cstrs
    uint64_t cstrCount = 0;
    uint64_t cclrIterations = 0;
    uint64_t cclrCount = 0;
    uint64_t checkIterations = 0;
    uint64_t checkCount = 0;
    uint64_t depStallCycles = 0;
    uint64_t portConflictCycles = 0;
    uint64_t cycles = 0;
};

// 256 direct-mapped entries indexed by tag[7:0], disambiguated by the high
// tag byte; 256 x (1 valid + 8-bit metaHi + 8-byte word) = 2.25 KiB.
class CCache {
public:
    static constexpr unsigned ENTRIES = 256;

    std::optional<uint64_t> lookup(uint16_t tag, uint64_t addr, unsigned width) const {
        const Entry& e = entries_[tag & 0xFF];
        if (!e.valid || e.metaHi != (tag >> 8))
            return std::nullopt;
        CapMeta meta{e.word};
        if (!meta.covers(addr, width))
            return std::nullopt; // stale bounds: fall back to the full check
        return e.word;
    }

    void fill(uint16_t tag, uint64_t word) {
        entries_[tag & 0xFF] = Entry{true, static_cast<uint8_t>(tag >> 8), word};
    }

    // cclr commit: drop the entry only when it actually holds the cleared
    // object (an entry evicted by a colliding tag must survive).
    void invalidate(uint16_t tag, uint64_t base) {
        Entry& e = entries_[tag & 0xFF];
        if (e.valid && e.metaHi == (tag >> 8) && CapMeta{e.word}.base() == base)
            e.valid = false;
    }

    void reset() { entries_.fill(Entry{}); }

private:
    struct Entry {
        bool valid = false;
        uint8_t metaHi = 0;
        uint64_t word = 0;
    };
    std::array<Entry, ENTRIES> entries_{};
};

enum class ChbPolicy { Adaptive, ForceStack, ForceHeap };

// Way hints for cstr (store head) and cclr (clear head), 256 entries each,
// indexed by tag[7:0]. Checks always start at way 0.
class HeadBuffers {
public:
    unsigned cstrStart(uint16_t tag, unsigned numWays) const {
        return shb_[tag & 0xFF] % numWays;
    }
    unsigned cclrStart(uint16_t tag, unsigned numWays) const {
        return chb_[tag & 0xFF] % numWays;
    }

    // A finished cstr at way N points the next store past itself.
    void onCstr(uint16_t tag, unsigned way, unsigned numWays) {
        shb_[tag & 0xFF] = static_cast<uint16_t>((way + 1) % numWays);
    }

    // A finished cclr predicts the next clear: one way back for stack-class
    // addresses (LIFO teardown), one way forward for heap-class.
    void onCclr(uint16_t tag, unsigned way, unsigned numWays, bool stackClass) {
        unsigned next = stackClass ? (way + numWays - 1) % numWays : (way + 1) % numWays;
        chb_[tag & 0xFF] = static_cast<uint16_t>(next);
    }

    void renormalize(unsigned numWays) {
        for (auto& e : shb_) e %= numWays;
        for (auto& e : chb_) e %= numWays;
    }

private:
    std::array<uint16_t, 256> shb_{};
    std::array<uint16_t, 256> chb_{};
};

// The cycle-level model. The machine reports each instruction's capability
// work (already functionally resolved) and then advances one cycle; leftover
// capability requests drain through idle port cycles and at program end.
class UarchModel {
public:
    bool enabled = false;
    bool headBuffersEnabled = true;
    ChbPolicy chbPolicy = ChbPolicy::Adaptive;

    SimStats stats;
    CCache ccache;
    HeadBuffers heads;

    unsigned cstrStartWay(uint16_t tag, unsigned numWays) const {
        if (!enabled || !headBuffersEnabled)
            return 0;
        return heads.cstrStart(tag, numWays);
    }
    unsigned cclrStartWay(uint16_t tag, unsigned numWays) const {
        if (!enabled || !headBuffersEnabled)
            return 0;
        return heads.cclrStart(tag, numWays);
    }

    // C-cache consultation for a tagged load/store; returns the cached word
    // on a bounds-satisfying hit. Never issues capability requests.
    std::optional<uint64_t> ccacheLookup(uint16_t tag, uint64_t addr, unsigned width) {
        if (!enabled)
            return std::nullopt;
        return ccache.lookup(tag, addr, width);
    }

    void noteUntaggedMemInst();
    void noteCheck(TaskKind kind, uint16_t tag, bool ccacheHit, unsigned iterations,
                   bool passed, uint64_t word);
    void noteCstr(uint16_t tag, unsigned way, unsigned iterations, bool completed,
                  uint64_t word, unsigned numWays);
    void noteCclr(uint16_t tag, uint64_t base, unsigned way, unsigned iterations,
                  bool found, bool stackClass, unsigned numWays);

    // One cycle: the shared port serves a pending regular access first, else
    // the oldest eligible capability request. A check is ineligible while any
    // older cstr/cclr is unfinished, whatever its tag.
    void tick(bool regularAccessPending);

    // Run the port until all capability work has been served.
    void drain();

    bool busy() const { return !tasks_.empty(); }

    void onCmtResize(unsigned newWays) {
        if (enabled)
            heads.renormalize(newWays);
    }

private:
    struct Task {
        TaskKind kind;
        uint64_t progIdx;
        unsigned remaining; // port grants still needed
    };

    void enqueue(TaskKind kind, unsigned requests);
    bool anyEligible() const;
    bool serveOldestEligible();

    std::deque<Task> tasks_;
    uint64_t nextProgIdx_ = 0;
};

} // namespace curesim
