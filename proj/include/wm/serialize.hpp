#ifndef WM_SERIALIZE_HPP
#define WM_SERIALIZE_HPP

#include <map>
#include <string>

#include "json.hpp"
#include "wm/tensor.hpp"

namespace wm::io {

// Named-tensor container: magic "NTC1", u64 little-endian header length, JSON
// header {meta, tensors:[{name,dtype,shape,offset,nbytes}]}, then a raw
// little-endian float32 payload. Tensors are laid out sorted by name, so a
// save -> load -> save round trip is byte identical.
struct Container {
    std::map<std::string, Tensor> tensors;
    nlohmann::json meta;
};

void save_container(const std::string& path, const Container& c);
Container load_container(const std::string& path);

std::string fnv1a_hex(const uint8_t* data, size_t n);
// Digest over the raw bytes of every tensor whose name starts with `prefix`,
// in sorted name order.
std::string digest_tensors(const std::map<std::string, Tensor>& tensors, const std::string& prefix);

}  // namespace wm::io

#endif
