#ifndef WM_MANIFEST_HPP
#define WM_MANIFEST_HPP

#include <cstdint>
#include <string>

#include "json.hpp"

namespace wm {

constexpr const char* kVersionString = "wm 0.1.0";

// WM_DETERMINISTIC=1 pins timestamps so reruns are byte identical.
bool deterministic_mode();

nlohmann::json make_run_record(const std::string& command, const std::string& config_path,
                               const std::string& config_snapshot, uint64_t seed,
                               const std::string& out_dir);

// Appends one record to <out_dir>/run_manifest.json (an array of records).
void append_run_manifest(const std::string& out_dir, nlohmann::json record);

}  // namespace wm

#endif
