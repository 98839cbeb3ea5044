#ifndef GEOCBR_KV_CONFIG_HPP
#define GEOCBR_KV_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace geocbr {

/**
 * `key = value` lines; `#` starts a comment, blank lines are ignored.
 * Getters throw InvalidConfig on malformed values. Unknown keys are reported
 * by reject_unknown() so that typos do not pass silently.
 */
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::string_view text);
    static KeyValueConfig load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return entries_.count(key) != 0; }
    std::optional<std::string> get(const std::string& key) const;
    std::string get_string(const std::string& key, std::string fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    void set(const std::string& key, std::string value) { entries_[key] = std::move(value); }
    void reject_unknown(std::initializer_list<std::string_view> known) const;

    const std::map<std::string, std::string>& entries() const { return entries_; }
    std::string to_string() const;

private:
    std::map<std::string, std::string> entries_;
};

}  // namespace geocbr

#endif  // GEOCBR_KV_CONFIG_HPP
