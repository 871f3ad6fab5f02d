#pragma once
// Capability metadata encoding, the set-associative capability metadata
// table (CMT) with iterative probing and resize, and the two-level card
// tables that track which sub-object addresses already carry metadata.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include "curesim/memstore.hpp"
#include "curesim/tagging.hpp"

namespace curesim {

inline constexpr unsigned CMT_ROWS = 1u << 16; // one row per tag value

enum class CapFault { None, CmtFull, NotFound, CheckFail };

// One 8-byte metadata word: (base << 16) | encodedSize. encodedSize with the
// high bit clear is an exact byte count (1..32767); with the high bit set the
// low 15 bits give the size in KiB, rounded up at encode time. The all-zero
// word is the reserved empty-slot sentinel.
struct CapMeta {
    uint64_t word = 0;

    static constexpr uint64_t MAX_EXACT = 0x7FFF;
    static constexpr uint64_t MAX_SIZE = 0x7FFFull * 1024; // coarse ceiling

    static CapMeta encode(uint64_t base, uint64_t size);

    bool empty() const { return word == 0; }
    uint64_t base() const { return word >> 16; }
    uint64_t size() const {
        uint16_t enc = static_cast<uint16_t>(word & 0xFFFF);
        if (enc & 0x8000)
            return static_cast<uint64_t>(enc & 0x7FFF) * 1024;
        return enc;
    }
    bool covers(uint64_t addr, unsigned width) const {
        return !empty() && base() <= addr && addr + width <= base() + size();
    }
};

// Eq.-style slot address: base + (T << (3 + log2 N)) + (W << 3).
uint64_t capAddr(uint64_t base, uint16_t tag, unsigned numWays, unsigned way);

struct CmtProbe {
    unsigned way = 0;          // way hit (valid when fault == None)
    uint64_t word = 0;         // metadata word involved
    CapFault fault = CapFault::None;
    unsigned iterations = 0;   // slots probed (= capability requests issued)
};

// The capability metadata table proper. Rows are indexed by the full 16-bit
// tag; each row holds numWays 8-byte words in simulated memory.
class Cmt {
public:
    Cmt(MemStore& mem, uint64_t baseAddr, unsigned numWays)
        : mem_(&mem), base_(baseAddr), ways_(numWays) {}

    uint64_t baseAddr() const { return base_; }
    unsigned numWays() const { return ways_; }
    uint64_t byteSize() const { return 8ull * ways_ * CMT_ROWS; }

    uint64_t slotAddr(uint16_t tag, unsigned way) const {
        return capAddr(base_, tag, ways_, way);
    }
    uint64_t slotWord(uint16_t tag, unsigned way) const {
        return mem_->load64(slotAddr(tag, way));
    }

    // Scans ways W0, W0+1 mod N, ... for the first empty slot and stores
    // encode(addr, size) there. CmtFull when the whole row is occupied.
    CmtProbe cstr(uint16_t tag, uint64_t addr, uint64_t size, unsigned startWay);

    // Scans from W0 for the slot whose decoded base equals addr and zeroes
    // it. NotFound signals a temporal error (double free / stale clear).
    CmtProbe cclr(uint16_t tag, uint64_t addr, unsigned startWay);

    // Passes iff some non-empty slot in the row covers [addr, addr+width).
    CmtProbe check(uint16_t tag, uint64_t addr, unsigned width, unsigned startWay);

    // Moves the table to a fresh base with twice the ways; old way w lands at
    // new way w, and the old region is zeroed.
    void resizeInto(uint64_t newBase, unsigned newWays);

    unsigned occupancy(uint16_t tag) const; // non-empty slots in a row

    // Deterministic text snapshot "row way base size" for golden tests.
    std::string snapshot() const;

private:
    MemStore* mem_;
    uint64_t base_;
    unsigned ways_;
};

// Two-level card tables: level1 maps each byte address to one mark bit
// (index addr>>3, bit addr&7), level2 maps each 512-byte region to one mark
// byte (index addr>>9). Any level1 mark implies its level2 mark.
class CardTables {
public:
    bool marked(uint64_t addr) const {
        ++level1Probes_; // observability: scans must stay behind the level2 filter
        auto it = level1_.find(addr >> 3);
        return it != level1_.end() && (it->second & bitmaskFor(addr));
    }

    void mark(uint64_t addr) {
        level1_[addr >> 3] |= bitmaskFor(addr);
        level2_[addr >> 9] = 1;
    }

    void clearMark(uint64_t addr) {
        auto it = level1_.find(addr >> 3);
        if (it == level1_.end())
            return;
        it->second &= static_cast<uint8_t>(~bitmaskFor(addr));
        if (it->second == 0)
            level1_.erase(it);
    }

    bool regionMarked(uint64_t addr) const {
        return level2_.count(addr >> 9) != 0;
    }

    void clearRegionIfEmpty(uint64_t addr); // drop level2 byte when no level1 marks remain

    static constexpr uint8_t bitmaskFor(uint64_t addr) {
        return static_cast<uint8_t>(1u << (addr & 7));
    }

    size_t level1Count() const { return level1_.size(); }
    size_t level2Count() const { return level2_.size(); }
    uint64_t level1Probes() const { return level1Probes_; }

private:
    std::map<uint64_t, uint8_t> level1_;
    std::map<uint64_t, uint8_t> level2_;
    mutable uint64_t level1Probes_ = 0;
};

// Callbacks into the executing machine so sub-object metadata traffic goes
// through the same fault handling and statistics as any other cstr/cclr.
struct SubObjectOps {
    std::function<void(uint64_t tagged, uint64_t size)> cstr;
    std::function<bool(uint64_t tagged)> cclr; // false when nothing matched
};

// Re-tags a sub-object pointer with the "i8*" type id and, on the first
// mutation of this address, stores its metadata and marks the card tables.
// Later mutations of the same address are no-ops apart from the re-tag.
uint64_t mutatePtr(uint64_t ptr, uint64_t subSize, CardTables& cards, const SubObjectOps& ops);

// Walks the level2-marked 512-byte regions overlapping a dying object,
// clears every marked sub-object's metadata and its card bits. Returns the
// number of metadata entries cleared.
size_t scanAndClear(uint64_t objBase, uint64_t objSize, CardTables& cards, const SubObjectOps& ops);

} // namespace curesim
