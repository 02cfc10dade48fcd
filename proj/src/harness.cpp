#include "mrfuzz/harness.hpp"

#include <algorithm>

#include "mrfuzz/vm.hpp"

namespace mrfuzz {

uint32_t place_input(Machine& m, const Placement& p, std::span<const uint8_t> input,
                     uint32_t max_len) {
    uint32_t len = static_cast<uint32_t>(std::min<size_t>(input.size(), max_len));
    if (const auto* raw = std::get_if<RawPlacement>(&p)) {
        m.write_mem(raw->buffer_addr, input.subspan(0, len));
        if (raw->len_reg) m.cpu().regs[*raw->len_reg] = len;
        if (raw->len_addr) m.write_u32(*raw->len_addr, len);
        return len;
    }
    const auto& ilm = std::get<IlmPlacement>(p);
    m.write_mem(ilm.payload_addr, input.subspan(0, len));
    m.write_u16(ilm.ilm_addr + 0, ilm.msg_id);
    m.write_u16(ilm.ilm_addr + 2, 0);
    m.write_u32(ilm.ilm_addr + 4, ilm.local_para_addr);
    m.write_u32(ilm.ilm_addr + 8, ilm.peer_buff_addr);
    m.write_u16(ilm.local_para_addr + 0, 1);  // ref_count
    m.write_u16(ilm.local_para_addr + 2, static_cast<uint16_t>(len));
    m.write_u32(ilm.local_para_addr + 4, ilm.len_field_addr);
    m.write_u16(ilm.len_field_addr + 0, static_cast<uint16_t>(len));
    m.write_u16(ilm.len_field_addr + 2, 0);
    m.write_u32(ilm.len_field_addr + 4, ilm.payload_addr);
    return len;
}

}  // namespace mrfuzz
