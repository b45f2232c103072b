#ifndef WM_CONFIG_HPP
#define WM_CONFIG_HPP

#include <map>
#include <string>

namespace wm {

// Plain-text key-value configuration, one key per line, grouped in
// [section] blocks. '#' starts a comment.
struct KvConfig {
    std::map<std::string, std::map<std::string, std::string>> sections;

    static KvConfig parse_file(const std::string& path);
    static KvConfig parse_string(const std::string& text);

    bool has(const std::string& sec, const std::string& key) const;
    void set(const std::string& sec, const std::string& key, const std::string& value);

    // Required getters throw std::invalid_argument naming "<sec>.<key>".
    std::string get_str(const std::string& sec, const std::string& key) const;
    std::string get_str(const std::string& sec, const std::string& key, const std::string& defval) const;
    double get_num(const std::string& sec, const std::string& key) const;
    double get_num(const std::string& sec, const std::string& key, double defval) const;
    int get_int(const std::string& sec, const std::string& key) const;
    int get_int(const std::string& sec, const std::string& key, int defval) const;
    bool get_bool(const std::string& sec, const std::string& key, bool defval) const;
    uint64_t get_u64(const std::string& sec, const std::string& key, uint64_t defval) const;

    std::string dump() const;  // canonical, sorted text form
};

}  // namespace wm

#endif
