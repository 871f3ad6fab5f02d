#pragma once
// Pointer-tag generation and removal: 16-bit tags in pointer bits [63:48],
// derived by CRC-16 over an address/modifier mix.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace curesim {

inline constexpr int TAG_SHIFT = 48;
inline constexpr uint64_t ADDR_MASK = (uint64_t{1} << TAG_SHIFT) - 1;

constexpr uint16_t tagOf(uint64_t ptr) { return static_cast<uint16_t>(ptr >> TAG_SHIFT); }
constexpr uint64_t addrOf(uint64_t ptr) { return ptr & ADDR_MASK; }

// A pointer is "tagged" exactly when its tag field is nonzero.
constexpr bool isTagged(uint64_t ptr) { return tagOf(ptr) != 0; }

constexpr uint64_t withTag(uint64_t addr, uint16_t tag) {
    return (addr & ADDR_MASK) | (uint64_t{tag} << TAG_SHIFT);
}

// CRC-16/CCITT-FALSE: polynomial 0x1021, init 0xFFFF, MSB-first, xorout 0.
// Check value: crc16("123456789") == 0x29B1.
uint16_t crc16(const uint8_t* data, size_t len);

// 16-bit Fibonacci LFSR with taps 16,14,13,11. A nonzero state never reaches
// zero; the sequence has full period 65535.
class Lfsr16 {
public:
    explicit Lfsr16(uint16_t seed = 0xACE1) : state_(seed ? seed : 0xACE1) {}

    uint16_t state() const { return state_; }

    uint16_t step() {
        uint16_t fb = ((state_ >> 0) ^ (state_ >> 2) ^ (state_ >> 3) ^ (state_ >> 5)) & 1u;
        state_ = static_cast<uint16_t>((state_ >> 1) | (fb << 15));
        return state_;
    }

private:
    uint16_t state_;
};

// FNV-1a 64-bit hash of a canonical type name ("i8*", "struct.S", ...).
uint64_t typeId(std::string_view canonicalName);

// Tag modifier: either the current stack pointer (mixed together with the
// LFSR state, so stack/heap tags vary run to run) or a type identifier
// (LFSR-free, so the same (address, type) always yields the same tag).
struct TagModifier {
    enum class Kind { StackPointer, TypeId };
    Kind kind;
    uint64_t value;

    static TagModifier sp(uint64_t spValue) { return {Kind::StackPointer, spValue}; }
    static TagModifier type(uint64_t id) { return {Kind::TypeId, id}; }
};

// tagd: strip any existing tag, mix the 48-bit address with the modifier
// (plus the zero-extended LFSR state for stack-pointer modifiers), CRC the
// little-endian mix and plant the result in bits [63:48]. A zero CRC is
// replaced by 0x0001 so the result is always a tagged pointer.
uint64_t tagd(uint64_t ptr, const TagModifier& mod, uint16_t lfsrState);

// xtag: clear the tag field, leaving the address untouched.
constexpr uint64_t xtag(uint64_t ptr) { return ptr & ADDR_MASK; }

} // namespace curesim
