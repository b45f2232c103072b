#include "wm/manifest.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace wm {

bool deterministic_mode() {
    const char* v = std::getenv("WM_DETERMINISTIC");
    return v && std::string(v) != "0";
}

namespace {
std::string timestamp() {
    if (deterministic_mode()) return "0";
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    return std::to_string(std::chrono::duration_cast<std::chrono::milliseconds>(now).count());
}
}  // namespace

json make_run_record(const std::string& command, const std::string& config_path,
                     const std::string& config_snapshot, uint64_t seed, const std::string& out_dir) {
    json rec;
    rec["command"] = command;
    rec["config_path"] = config_path;
    rec["config_snapshot"] = config_snapshot;
    rec["seed"] = std::to_string(seed);
    rec["out_dir"] = out_dir;
    rec["version"] = kVersionString;
    rec["timestamp"] = timestamp();
    return rec;
}

void append_run_manifest(const std::string& out_dir, json record) {
    fs::create_directories(out_dir);
    const fs::path path = fs::path(out_dir) / "run_manifest.json";
    json arr = json::array();
    if (fs::exists(path)) {
        std::ifstream in(path);
        try {
            arr = json::parse(in);
        } catch (...) {
            arr = json::array();
        }
        if (!arr.is_array()) arr = json::array();
    }
    arr.push_back(std::move(record));
    std::ofstream out(path);
    if (!out) throw std::runtime_error("manifest: cannot write: " + path.string());
    out << arr.dump(1) << "\n";
}

}  // namespace wm
