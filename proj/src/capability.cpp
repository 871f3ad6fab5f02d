#include "curesim/capability.hpp"

#include <algorithm>
#include <bit>
#include <cassert>
#include <sstream>
#include <stdexcept>

namespace curesim {

CapMeta CapMeta::encode(uint64_t base, uint64_t size) {
    assert(size >= 1);
    if (size > MAX_SIZE)
        throw std::runtime_error("capability size exceeds encodable maximum");
    uint16_t enc;
    if (size <= MAX_EXACT) {
        enc = static_cast<uint16_t>(size);
    } else {
        uint64_t kib = (size + 1023) / 1024; // round up to whole KiB
        enc = static_cast<uint16_t>(0x8000 | kib);
    }
    return CapMeta{(base << 16) | enc};
}

uint64_t capAddr(uint64_t base, uint16_t tag, unsigned numWays, unsigned way) {
    assert(std::has_single_bit(numWays) && way < numWays);
    unsigned log2n = static_cast<unsigned>(std::countr_zero(numWays));
    return base + (static_cast<uint64_t>(tag) << (3 + log2n)) + (static_cast<uint64_t>(way) << 3);
}

CmtProbe Cmt::cstr(uint16_t tag, uint64_t addr, uint64_t size, unsigned startWay) {
    CmtProbe p;
    for (unsigned i = 0; i < ways_; ++i) {
        unsigned way = (startWay + i) % ways_;
        p.iterations = i + 1;
        uint64_t slot = slotAddr(tag, way);
        if (mem_->load64(slot) == 0) {
            // single-threaded machine: the emptiness test and the store are
            // one atomic step by construction
            CapMeta meta = CapMeta::encode(addr, size);
            mem_->store64(slot, meta.word);
            p.way = way;
            p.word = meta.word;
            return p;
        }
    }
    p.fault = CapFault::CmtFull;
    return p;
}

CmtProbe Cmt::cclr(uint16_t tag, uint64_t addr, unsigned startWay) {
    CmtProbe p;
    for (unsigned i = 0; i < ways_; ++i) {
        unsigned way = (startWay + i) % ways_;
        p.iterations = i + 1;
        uint64_t slot = slotAddr(tag, way);
        CapMeta meta{mem_->load64(slot)};
        if (!meta.empty() && meta.base() == addr) {
            mem_->store64(slot, 0);
            p.way = way;
            p.word = meta.word;
            return p;
        }
    }
    p.fault = CapFault::NotFound;
    return p;
}

CmtProbe Cmt::check(uint16_t tag, uint64_t addr, unsigned width, unsigned startWay) {
    CmtProbe p;
    for (unsigned i = 0; i < ways_; ++i) {
        unsigned way = (startWay + i) % ways_;
        p.iterations = i + 1;
        CapMeta meta{mem_->load64(slotAddr(tag, way))};
        if (meta.covers(addr, width)) {
            p.way = way;
            p.word = meta.word;
            return p;
        }
    }
    p.fault = CapFault::CheckFail;
    return p;
}

void Cmt::resizeInto(uint64_t newBase, unsigned newWays) {
    assert(newWays >= ways_ && std::has_single_bit(newWays));
    uint64_t oldBase = base_;
    unsigned oldWays = ways_;
    uint64_t oldSize = byteSize();

    for (unsigned row = 0; row < CMT_ROWS; ++row) {
        uint16_t tag = static_cast<uint16_t>(row);
        for (unsigned way = 0; way < oldWays; ++way) {
            uint64_t word = mem_->load64(capAddr(oldBase, tag, oldWays, way));
            if (word != 0) // old way w keeps its index in the wider row
                mem_->store64(capAddr(newBase, tag, newWays, way), word);
        }
    }
    mem_->releaseRange(oldBase, oldSize);
    base_ = newBase;
    ways_ = newWays;
}

unsigned Cmt::occupancy(uint16_t tag) const {
    unsigned n = 0;
    for (unsigned way = 0; way < ways_; ++way)
        if (slotWord(tag, way) != 0)
            ++n;
    return n;
}

std::string Cmt::snapshot() const {
    std::ostringstream out;
    for (unsigned row = 0; row < CMT_ROWS; ++row) {
        for (unsigned way = 0; way < ways_; ++way) {
            CapMeta meta{slotWord(static_cast<uint16_t>(row), way)};
            if (!meta.empty()) {
                out << "row=0x" << std::hex << row << std::dec << " way=" << way
                    << " base=0x" << std::hex << meta.base() << std::dec
                    << " size=" << meta.size() << "\n";
            }
        }
    }
    return out.str();
}

void CardTables::clearRegionIfEmpty(uint64_t addr) {
    uint64_t region = addr >> 9;
    auto it = level1_.lower_bound(region << 6); // 64 level1 bytes per region
    if (it == level1_.end() || (it->first >> 6) != region)
        level2_.erase(region);
}

uint64_t mutatePtr(uint64_t ptr, uint64_t subSize, CardTables& cards, const SubObjectOps& ops) {
    uint64_t addr = addrOf(ptr);
    uint64_t tagged = tagd(ptr, TagModifier::type(typeId("i8*")), 0);
    if (!cards.marked(addr)) {
        ops.cstr(tagged, subSize);
        cards.mark(addr);
    }
    return tagged;
}

size_t scanAndClear(uint64_t objBase, uint64_t objSize, CardTables& cards, const SubObjectOps& ops) {
    if (objSize == 0)
        return 0;
    size_t cleared = 0;
    uint64_t end = objBase + objSize;
    for (uint64_t region = objBase >> 9; region <= (end - 1) >> 9; ++region) {
        uint64_t regionStart = region << 9;
        if (!cards.regionMarked(regionStart))
            continue; // level2 filter: never touch level1 here
        uint64_t lo = std::max(objBase, regionStart);
        uint64_t hi = std::min(end, regionStart + 512);
        for (uint64_t a = lo; a < hi; ++a) {
            if (!cards.marked(a))
                continue;
            uint64_t tagged = tagd(a, TagModifier::type(typeId("i8*")), 0);
            ops.cclr(tagged); // a miss here is an internal-consistency bug,
                              // reported by the callback
            cards.clearMark(a);
            ++cleared;
        }
        cards.clearRegionIfEmpty(regionStart);
    }
    return cleared;
}

} // namespace curesim
