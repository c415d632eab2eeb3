#include "zcdp/iolib.hpp"

namespace zcdp {

Status skmsg_send(EndpointRegistry& reg, MemoryManager& mm,
                  const BufferDescriptor& d, OwnerRef sender, RunStats* stats) {
    auto ep = reg.lookup(d.dst_fn);
    if (!ep) return Errc::not_found;
    Status st = mm.transfer(d, sender, OwnerRef::function(d.dst_fn));
    if (!st.ok()) return st;
    st = (*ep)->push(d);
    if (!st.ok()) {
        mm.transfer(d, OwnerRef::function(d.dst_fn), sender);
        return st;
    }
    stats->fn_exchanges++;
    return Errc::ok;
}

}  // namespace zcdp
