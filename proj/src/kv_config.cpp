#include "geocbr/kv_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "geocbr/errors.hpp"

namespace geocbr {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw InvalidConfig("config key '" + key + "': cannot parse '" + text + "'");
    }
    return v;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
    KeyValueConfig cfg;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        auto line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw InvalidConfig("config line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        auto key = trim(line.substr(0, eq));
        auto value = trim(line.substr(eq + 1));
        if (key.empty()) throw InvalidConfig("config line " + std::to_string(line_no) + ": empty key");
        cfg.entries_[std::string(key)] = std::string(value);
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FileMissing(path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
    if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    return std::nullopt;
}

std::string KeyValueConfig::get_string(const std::string& key, std::string fallback) const {
    return get(key).value_or(std::move(fallback));
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    if (*v == "inf") return INFINITY;
    return parse_number<double>(key, *v);
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
    auto v = get(key);
    return v ? parse_number<std::int64_t>(key, *v) : fallback;
}

std::uint64_t KeyValueConfig::get_uint(const std::string& key, std::uint64_t fallback) const {
    auto v = get(key);
    return v ? parse_number<std::uint64_t>(key, *v) : fallback;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw InvalidConfig("config key '" + key + "': expected a boolean, got '" + *v + "'");
}

void KeyValueConfig::reject_unknown(std::initializer_list<std::string_view> known) const {
    for (const auto& [key, value] : entries_) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw InvalidConfig("unknown config key: " + key);
        }
    }
}

std::string KeyValueConfig::to_string() const {
    std::string out;
    for (const auto& [key, value] : entries_) out += key + " = " + value + "\n";
    return out;
}

}  // namespace geocbr
