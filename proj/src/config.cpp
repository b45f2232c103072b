#include "wm/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace wm {

namespace {
std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}
}  // namespace

KvConfig KvConfig::parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_string(ss.str());
}

KvConfig KvConfig::parse_string(const std::string& text) {
    KvConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config: malformed section at line " + std::to_string(lineno));
            section = trim(line.substr(1, line.size() - 2));
            cfg.sections[section];
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: expected key = value at line " + std::to_string(lineno));
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument("config: empty key at line " + std::to_string(lineno));
        cfg.sections[section][key] = val;
    }
    return cfg;
}

bool KvConfig::has(const std::string& sec, const std::string& key) const {
    auto it = sections.find(sec);
    return it != sections.end() && it->second.count(key) > 0;
}

void KvConfig::set(const std::string& sec, const std::string& key, const std::string& value) {
    sections[sec][key] = value;
}

std::string KvConfig::get_str(const std::string& sec, const std::string& key) const {
    auto it = sections.find(sec);
    if (it == sections.end() || !it->second.count(key))
        throw std::invalid_argument("config: missing key " + sec + "." + key);
    return it->second.at(key);
}

std::string KvConfig::get_str(const std::string& sec, const std::string& key,
                              const std::string& defval) const {
    return has(sec, key) ? sections.at(sec).at(key) : defval;
}

double KvConfig::get_num(const std::string& sec, const std::string& key) const {
    const std::string v = get_str(sec, key);
    try {
        return std::stod(v);
    } catch (...) {
        throw std::invalid_argument("config: not a number: " + sec + "." + key + " = " + v);
    }
}

double KvConfig::get_num(const std::string& sec, const std::string& key, double defval) const {
    return has(sec, key) ? get_num(sec, key) : defval;
}

int KvConfig::get_int(const std::string& sec, const std::string& key) const {
    return static_cast<int>(get_num(sec, key));
}

int KvConfig::get_int(const std::string& sec, const std::string& key, int defval) const {
    return has(sec, key) ? get_int(sec, key) : defval;
}

bool KvConfig::get_bool(const std::string& sec, const std::string& key, bool defval) const {
    if (!has(sec, key)) return defval;
    const std::string v = get_str(sec, key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("config: not a bool: " + sec + "." + key + " = " + v);
}

uint64_t KvConfig::get_u64(const std::string& sec, const std::string& key, uint64_t defval) const {
    if (!has(sec, key)) return defval;
    return std::stoull(get_str(sec, key));
}

std::string KvConfig::dump() const {
    std::ostringstream os;
    bool first = true;
    for (const auto& [sec, kv] : sections) {
        if (!first) os << "\n";
        first = false;
        os << "[" << sec << "]\n";
        for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
    }
    return os.str();
}

}  // namespace wm
