#ifndef WM_TOOLS_BMP_HPP
#define WM_TOOLS_BMP_HPP

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace wm::tools {

// Minimal 24-bit BMP writer for plot output.
inline void write_bmp(const std::string& path, int width, int height, const std::vector<uint8_t>& rgb) {
    const int row_bytes = width * 3;
    const int pad = (4 - row_bytes % 4) % 4;
    const uint32_t data_size = static_cast<uint32_t>((row_bytes + pad) * height);
    const uint32_t file_size = 54 + data_size;

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("plot: cannot write: " + path);
    auto u16 = [&](uint16_t v) { f.put(static_cast<char>(v & 0xff)); f.put(static_cast<char>(v >> 8)); };
    auto u32 = [&](uint32_t v) {
        for (int i = 0; i < 4; ++i) f.put(static_cast<char>((v >> (8 * i)) & 0xff));
    };
    f.put('B');
    f.put('M');
    u32(file_size);
    u32(0);
    u32(54);
    u32(40);
    u32(static_cast<uint32_t>(width));
    u32(static_cast<uint32_t>(height));
    u16(1);
    u16(24);
    u32(0);
    u32(data_size);
    u32(2835);
    u32(2835);
    u32(0);
    u32(0);
    // BMP stores rows bottom-up as BGR
    for (int y = height - 1; y >= 0; --y) {
        for (int x = 0; x < width; ++x) {
            const size_t i = (static_cast<size_t>(y) * width + x) * 3;
            f.put(static_cast<char>(rgb[i + 2]));
            f.put(static_cast<char>(rgb[i + 1]));
            f.put(static_cast<char>(rgb[i]));
        }
        for (int p = 0; p < pad; ++p) f.put(0);
    }
}

}  // namespace wm::tools

#endif
