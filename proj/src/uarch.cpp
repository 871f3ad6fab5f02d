#include "curesim/uarch.hpp"

namespace curesim {

void UarchModel::noteUntaggedMemInst() {
    if (!enabled)
        return;
    // Untagged accesses skip the capability path entirely: the task goes
    // S_INIT -> S_DONE at submit with needCC already clear.
    ++stats.totalMemInsts;
}

void UarchModel::noteCheck(TaskKind kind, uint16_t tag, bool ccacheHit, unsigned iterations,
                           bool passed, uint64_t word) {
    (void)kind;
    if (!enabled)
        return;
    ++stats.totalMemInsts;
    ++stats.taggedMemInsts;
    if (ccacheHit) {
        // Hit satisfies the check outright: zero capability requests.
        ++stats.ccacheHits;
        return;
    }
    ++stats.ccacheMisses;
    stats.capRequests += iterations;
    stats.checkIterations += iterations;
    ++stats.checkCount;
    enqueue(kind, iterations);
    if (passed)
        ccache.fill(tag, word); // successful check allocates the entry
}

void UarchModel::noteCstr(uint16_t tag, unsigned way, unsigned iterations, bool completed,
                          uint64_t word, unsigned numWays) {
    if (!enabled)
        return;
    stats.capRequests += iterations;
    enqueue(TaskKind::Cstr, iterations);
    if (!completed)
        return; // CmtFull probe; the re-executed cstr reports separately
    stats.cstrIterations += iterations;
    ++stats.cstrCount;
    if (headBuffersEnabled)
        heads.onCstr(tag, way, numWays);
    ccache.fill(tag, word); // cstr commit allocates the entry
}

void UarchModel::noteCclr(uint16_t tag, uint64_t base, unsigned way, unsigned iterations,
                          bool found, bool stackClass, unsigned numWays) {
    if (!enabled)
        return;
    stats.capRequests += iterations;
    enqueue(TaskKind::Cclr, iterations);
    if (!found)
        return; // NotFound: a temporal violation, handled by the machine
    ++stats.cclrCount;
    stats.cclrIterations += iterations;
    if (headBuffersEnabled) {
        bool asStack = chbPolicy == ChbPolicy::Adaptive ? stackClass
                                                        : chbPolicy == ChbPolicy::ForceStack;
        heads.onCclr(tag, way, numWays, asStack);
    }
    ccache.invalidate(tag, base); // cclr commit clears a matching entry
}

void UarchModel::enqueue(TaskKind kind, unsigned requests) {
    if (requests == 0)
        return;
    tasks_.push_back(Task{kind, nextProgIdx_++, requests});
}

bool UarchModel::anyEligible() const {
    // The queue is in program order, so the oldest task is always eligible:
    // either it is a cstr/cclr, or it is a check with nothing older in
    // flight. Younger blocked checks only matter for the stall counter.
    return !tasks_.empty();
}

bool UarchModel::serveOldestEligible() {
    for (auto it = tasks_.begin(); it != tasks_.end(); ++it) {
        if (it->kind == TaskKind::CheckLoad || it->kind == TaskKind::CheckStore) {
            // Conservative tag-dependency rule: a check may not issue while
            // any older cstr/cclr is in flight, regardless of tag.
            bool blocked = false;
            for (auto jt = tasks_.begin(); jt != it; ++jt) {
                if (jt->kind == TaskKind::Cstr || jt->kind == TaskKind::Cclr) {
                    blocked = true;
                    break;
                }
            }
            if (blocked)
                continue;
        }
        if (--it->remaining == 0)
            tasks_.erase(it); // S_WAIT -> S_DONE; needCC clears, task retires
        return true;
    }
    return false;
}

void UarchModel::tick(bool regularAccessPending) {
    if (!enabled)
        return;
    ++stats.cycles;

    // Any pending check sitting behind an unfinished older cstr/cclr spends
    // this cycle dependency-stalled.
    bool sawCapOp = false, depStalled = false;
    for (const Task& t : tasks_) {
        if (t.kind == TaskKind::Cstr || t.kind == TaskKind::Cclr)
            sawCapOp = true;
        else if (sawCapOp) {
            depStalled = true;
            break;
        }
    }
    if (depStalled)
        ++stats.depStallCycles;

    if (regularAccessPending) {
        // Regular accesses own the port; eligible capability work that
        // wanted this cycle records the conflict.
        if (anyEligible())
            ++stats.portConflictCycles;
        return;
    }
    serveOldestEligible();
}

void UarchModel::drain() {
    if (!enabled)
        return;
    while (!tasks_.empty())
        tick(false);
}

} // namespace curesim
