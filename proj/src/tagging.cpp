#include "curesim/tagging.hpp"

namespace curesim {

uint16_t crc16(const uint8_t* data, size_t len) {
    uint16_t crc = 0xFFFF;
    for (size_t i = 0; i < len; ++i) {
        crc ^= static_cast<uint16_t>(data[i]) << 8;
        for (int bit = 0; bit < 8; ++bit) {
            if (crc & 0x8000)
                crc = static_cast<uint16_t>((crc << 1) ^ 0x1021);
            else
                crc = static_cast<uint16_t>(crc << 1);
        }
    }
    return crc;
}

uint64_t typeId(std::string_view canonicalName) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : canonicalName) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t tagd(uint64_t ptr, const TagModifier& mod, uint16_t lfsrState) {
    uint64_t a = addrOf(ptr);
    uint64_t mix = a ^ mod.value;
    if (mod.kind == TagModifier::Kind::StackPointer)
        mix ^= lfsrState; // zero-extended 16-bit state
    uint8_t bytes[8];
    for (int i = 0; i < 8; ++i)
        bytes[i] = static_cast<uint8_t>(mix >> (8 * i)); // little endian
    uint16_t tag = crc16(bytes, 8);
    if (tag == 0)
        tag = 0x0001; // tag 0 means "untagged"; never emit it
    return withTag(a, tag);
}

} // namespace curesim
