#pragma once
// Sparse little-endian byte store over the 48-bit simulated address space.
// Pages materialize on first write; reads of untouched memory yield zero.

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <map>

namespace curesim {

class MemStore {
public:
    static constexpr uint64_t PAGE_SIZE = 4096;

    uint8_t load8(uint64_t addr) const {
        auto it = pages_.find(addr / PAGE_SIZE);
        if (it == pages_.end())
            return 0;
        return it->second[addr % PAGE_SIZE];
    }

    void store8(uint64_t addr, uint8_t value) {
        page(addr)[addr % PAGE_SIZE] = value;
    }

    uint64_t load64(uint64_t addr) const {
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<uint64_t>(load8(addr + i)) << (8 * i);
        return v;
    }

    void store64(uint64_t addr, uint64_t value) {
        for (int i = 0; i < 8; ++i)
            store8(addr + i, static_cast<uint8_t>(value >> (8 * i)));
    }

    void zeroRange(uint64_t addr, uint64_t len) {
        for (uint64_t i = 0; i < len; ++i)
            store8(addr + i, 0);
    }

    // Forgets a range, dropping whole pages and zeroing partial ones.
    void releaseRange(uint64_t addr, uint64_t len) {
        uint64_t end = addr + len;
        while (addr < end) {
            uint64_t pageStart = addr - (addr % PAGE_SIZE);
            if (pageStart == addr && addr + PAGE_SIZE <= end) {
                pages_.erase(addr / PAGE_SIZE);
                addr += PAGE_SIZE;
            } else {
                uint64_t stop = std::min(end, pageStart + PAGE_SIZE);
                for (; addr < stop; ++addr)
                    store8(addr, 0);
            }
        }
    }

    // Visits every materialized byte in address order (for memory diffs).
    void forEachByte(const std::function<void(uint64_t, uint8_t)>& fn) const {
        for (const auto& [pageNo, bytes] : pages_) {
            for (uint64_t off = 0; off < PAGE_SIZE; ++off)
                fn(pageNo * PAGE_SIZE + off, bytes[off]);
        }
    }

private:
    std::array<uint8_t, PAGE_SIZE>& page(uint64_t addr) {
        auto [it, inserted] = pages_.try_emplace(addr / PAGE_SIZE);
        if (inserted)
            it->second.fill(0);
        return it->second;
    }

    std::map<uint64_t, std::array<uint8_t, PAGE_SIZE>> pages_;
};

} // namespace curesim
