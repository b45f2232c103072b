#include "wm/serialize.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

using json = nlohmann::json;

namespace wm::io {

void save_container(const std::string& path, const Container& c) {
    json tensors = json::array();
    uint64_t offset = 0;
    for (const auto& [name, t] : c.tensors) {
        const uint64_t nbytes = static_cast<uint64_t>(t.numel()) * 4;
        tensors.push_back(json{{"name", name},
                               {"dtype", "f32"},
                               {"shape", t.shape},
                               {"offset", offset},
                               {"nbytes", nbytes}});
        offset += nbytes;
    }
    json header;
    header["meta"] = c.meta;
    header["tensors"] = tensors;
    const std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot write: " + path);
    f.write("NTC1", 4);
    const uint64_t hlen = hs.size();
    unsigned char lenb[8];
    for (int i = 0; i < 8; ++i) lenb[i] = static_cast<unsigned char>((hlen >> (8 * i)) & 0xff);
    f.write(reinterpret_cast<const char*>(lenb), 8);
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, t] : c.tensors)
        f.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.numel() * 4));
    if (!f) throw std::runtime_error("checkpoint: write failed: " + path);
}

Container load_container(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "NTC1", 4) != 0)
        throw std::runtime_error("checkpoint: bad magic: " + path);
    unsigned char lenb[8];
    f.read(reinterpret_cast<char*>(lenb), 8);
    if (!f) throw std::runtime_error("checkpoint: truncated header length: " + path);
    uint64_t hlen = 0;
    for (int i = 0; i < 8; ++i) hlen |= static_cast<uint64_t>(lenb[i]) << (8 * i);
    std::string hs(hlen, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw std::runtime_error("checkpoint: truncated header: " + path);
    json header;
    try {
        header = json::parse(hs);
    } catch (const json::exception& e) {
        throw std::runtime_error("checkpoint: corrupt header " + path + ": " + e.what());
    }

    Container c;
    c.meta = header.value("meta", json::object());
    for (const auto& tj : header.at("tensors")) {
        const std::string name = tj.at("name");
        if (tj.at("dtype") != "f32") throw std::runtime_error("checkpoint: unsupported dtype in " + path);
        Tensor t(tj.at("shape").get<std::vector<int>>());
        f.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.numel() * 4));
        if (!f) throw std::runtime_error("checkpoint: truncated tensor " + name + " in " + path);
        c.tensors.emplace(name, std::move(t));
    }
    return c;
}

std::string fnv1a_hex(const uint8_t* data, size_t n) {
    uint64_t h = 0xCBF29CE484222325ULL;
    for (size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001B3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string digest_tensors(const std::map<std::string, Tensor>& tensors, const std::string& prefix) {
    uint64_t h = 0xCBF29CE484222325ULL;
    auto feed = [&h](const uint8_t* p, size_t n) {
        for (size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001B3ULL;
        }
    };
    for (const auto& [name, t] : tensors) {
        if (name.rfind(prefix, 0) != 0) continue;
        feed(reinterpret_cast<const uint8_t*>(name.data()), name.size());
        feed(reinterpret_cast<const uint8_t*>(t.data.data()), t.data.size() * 4);
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace wm::io
