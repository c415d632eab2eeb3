#ifndef ZCDP_DESCRIPTOR_HPP
#define ZCDP_DESCRIPTOR_HPP

#include <array>
#include <cstdint>
#include <cstring>

#include "zcdp/common.hpp"

namespace zcdp {

// Descriptor flag bits.
inline constexpr uint16_t kFlagRequest = 0x0001;
inline constexpr uint16_t kFlagResponse = 0x0002;
inline constexpr uint16_t kFlagBaseline = 0x0004;

// 16-byte token conveying exclusive ownership of one pooled buffer plus the
// routing header. Wire layout (little-endian):
//   tenant_id:2  buffer_id:4  length:4  src_fn:2  dst_fn:2  flags:2
struct BufferDescriptor {
    TenantId tenant_id = 0;
    BufferId buffer_id = 0;
    uint32_t length = 0;
    FnId src_fn = 0;
    FnId dst_fn = 0;
    uint16_t flags = 0;

    bool operator==(const BufferDescriptor&) const = default;
};

inline constexpr size_t kDescriptorWireSize = 16;

inline void encode_descriptor(const BufferDescriptor& d, uint8_t out[16]) {
    auto put16 = [](uint8_t* p, uint16_t v) {
        p[0] = uint8_t(v);
        p[1] = uint8_t(v >> 8);
    };
    auto put32 = [](uint8_t* p, uint32_t v) {
        p[0] = uint8_t(v);
        p[1] = uint8_t(v >> 8);
        p[2] = uint8_t(v >> 16);
        p[3] = uint8_t(v >> 24);
    };
    put16(out + 0, d.tenant_id);
    put32(out + 2, d.buffer_id);
    put32(out + 6, d.length);
    put16(out + 10, d.src_fn);
    put16(out + 12, d.dst_fn);
    put16(out + 14, d.flags);
}

inline BufferDescriptor decode_descriptor(const uint8_t in[16]) {
    auto get16 = [](const uint8_t* p) {
        return uint16_t(p[0] | (uint16_t(p[1]) << 8));
    };
    auto get32 = [](const uint8_t* p) {
        return uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) |
               (uint32_t(p[3]) << 24);
    };
    BufferDescriptor d;
    d.tenant_id = get16(in + 0);
    d.buffer_id = get32(in + 2);
    d.length = get32(in + 6);
    d.src_fn = get16(in + 10);
    d.dst_fn = get16(in + 12);
    d.flags = get16(in + 14);
    return d;
}

}  // namespace zcdp

#endif
