#include "geocbr/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_set>

#include "geocbr/errors.hpp"

namespace geocbr {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

// RFC-4180 style split of one line: quoted fields may contain commas and
// doubled quotes. Embedded newlines are not supported.
std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    fields.push_back(std::move(current));
    return fields;
}

std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::optional<double> parse_double(std::string_view text) {
    text = trim(text);
    if (text.empty()) return std::nullopt;
    if (text.front() == '+') text.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::optional<std::int64_t> parse_int(std::string_view text) {
    text = trim(text);
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
    return v;
}

void append_double(std::string& out, double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, ptr);
}

std::string expected_header(const AttributeSchema& schema) {
    std::string header;
    for (auto col : kFixedColumns) {
        if (!header.empty()) header.push_back(',');
        header.append(col);
    }
    for (const auto& a : schema.attributes()) {
        header.push_back(',');
        header.append(quote_if_needed(a.name));
    }
    return header;
}

}  // namespace

// ---------------------------------------------------------------------------

std::optional<Date> parse_date(std::string_view text) {
    text = trim(text);
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    const auto y = parse_int(text.substr(0, 4));
    const auto m = parse_int(text.substr(5, 2));
    const auto d = parse_int(text.substr(8, 2));
    if (!y || !m || !d || *m < 1 || *m > 12 || *d < 1 || *d > 31) return std::nullopt;
    const Date date{std::chrono::year{static_cast<int>(*y)}, std::chrono::month{static_cast<unsigned>(*m)},
                    std::chrono::day{static_cast<unsigned>(*d)}};
    if (!date.ok()) return std::nullopt;
    return date;
}

std::string format_date(Date date) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()),
                  static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
    return buf;
}

// ---------------------------------------------------------------------------
// AttributeSchema

AttributeSchema::AttributeSchema(std::vector<AttributeSpec> attributes) : attributes_(std::move(attributes)) {
    std::set<std::string_view> seen;
    for (const auto& a : attributes_) {
        if (a.name.empty()) throw InvalidConfig("attribute name must not be empty");
        for (auto col : kFixedColumns) {
            if (a.name == col) throw InvalidConfig("attribute name clashes with fixed column: " + a.name);
        }
        if (!seen.insert(a.name).second) throw InvalidConfig("duplicate attribute name: " + a.name);
    }
}

std::optional<std::size_t> AttributeSchema::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < attributes_.size(); ++i) {
        if (attributes_[i].name == name) return i;
    }
    return std::nullopt;
}

nlohmann::json AttributeSchema::to_json() const {
    nlohmann::json attrs = nlohmann::json::array();
    for (const auto& a : attributes_) {
        attrs.push_back({{"name", a.name},
                         {"kind", a.kind == AttributeKind::continuous ? "continuous" : "categorical"},
                         {"unit", a.unit}});
    }
    return {{"attributes", attrs}};
}

AttributeSchema AttributeSchema::from_json(const nlohmann::json& j) {
    std::vector<AttributeSpec> specs;
    try {
        for (const auto& a : j.at("attributes")) {
            AttributeSpec spec;
            spec.name = a.at("name").get<std::string>();
            const auto kind = a.value("kind", std::string{"continuous"});
            if (kind == "continuous") {
                spec.kind = AttributeKind::continuous;
            } else if (kind == "categorical") {
                spec.kind = AttributeKind::categorical;
            } else {
                throw InvalidConfig("unknown attribute kind: " + kind);
            }
            spec.unit = a.value("unit", std::string{});
            specs.push_back(std::move(spec));
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidConfig(std::string("malformed schema: ") + e.what());
    }
    return AttributeSchema(std::move(specs));
}

AttributeSchema AttributeSchema::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FileMissing(path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidConfig("schema " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

void AttributeSchema::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    out << to_json().dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// CSV

nlohmann::json ParseResult::report_json() const {
    nlohmann::json rows = nlohmann::json::array();
    std::map<std::string, std::size_t> by_reason;
    for (const auto& r : rejected) {
        rows.push_back({{"line", r.line}, {"reason", r.reason}});
        ++by_reason[r.reason];
    }
    return {{"parsed", properties.size()}, {"rejected", rejected.size()}, {"by_reason", by_reason}, {"rows", rows}};
}

ParseResult parse_csv_text(std::string_view text, const AttributeSchema& schema) {
    ParseResult result;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    bool have_header = false;
    std::unordered_set<std::int64_t> ids;
    const std::size_t n_cols = std::size(kFixedColumns) + schema.size();

    while (pos <= text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        if (!have_header) {
            if (line_no == 1 && line.size() >= 3 && line.substr(0, 3) == "\xEF\xBB\xBF") line.remove_prefix(3);
            auto cols = split_csv_line(line);
            bool ok = cols.size() == n_cols;
            for (std::size_t i = 0; ok && i < n_cols; ++i) {
                const auto name = trim(cols[i]);
                const std::string_view want =
                    i < std::size(kFixedColumns) ? kFixedColumns[i] : std::string_view(schema[i - std::size(kFixedColumns)].name);
                ok = name == want;
            }
            if (!ok) {
                throw HeaderMismatch("header does not match schema; expected: " + expected_header(schema));
            }
            have_header = true;
            continue;
        }
        if (trim(line).empty()) continue;

        auto reject = [&](std::string reason) { result.rejected.push_back({line_no, std::move(reason)}); };
        const auto f = split_csv_line(line);
        if (f.size() != n_cols) {
            reject("column-count");
            continue;
        }
        Property p;
        const auto id = parse_int(f[0]);
        if (!id) {
            reject("bad-id");
            continue;
        }
        p.id = *id;
        const auto lat = parse_double(f[1]);
        const auto lon = parse_double(f[2]);
        if (!lat || !lon) {
            reject("bad-location");
            continue;
        }
        if (*lat < -90.0 || *lat > 90.0 || *lon < -180.0 || *lon > 180.0) {
            reject("out-of-range");
            continue;
        }
        p.location = {*lat, *lon};
        const auto date = parse_date(f[3]);
        if (!date) {
            reject("bad-date");
            continue;
        }
        p.offer_date = *date;
        if (!trim(f[4]).empty()) {
            const auto v = parse_double(f[4]);
            if (!v) {
                reject("bad-value");
                continue;
            }
            if (*v <= 0.0) {
                reject("non-positive-value");
                continue;
            }
            p.value = *v;
        }
        if (const auto region = trim(f[5]); !region.empty()) p.region = std::string(region);

        p.attributes.reserve(schema.size());
        bool attrs_ok = true;
        for (std::size_t i = 0; i < schema.size(); ++i) {
            const auto cell = f[std::size(kFixedColumns) + i];
            if (trim(cell).empty()) {
                reject("missing-attribute:" + schema[i].name);
                attrs_ok = false;
                break;
            }
            const auto v = parse_double(cell);
            if (!v) {
                reject("bad-attribute:" + schema[i].name);
                attrs_ok = false;
                break;
            }
            p.attributes.push_back(*v);
        }
        if (!attrs_ok) continue;
        if (!ids.insert(p.id).second) {
            reject("duplicate-id");
            continue;
        }
        result.properties.push_back(std::move(p));
    }
    if (!have_header) throw HeaderMismatch("empty file; expected header: " + expected_header(schema));
    return result;
}

ParseResult parse_csv(const std::filesystem::path& path, const AttributeSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileMissing(path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_csv_text(buf.str(), schema);
}

std::string to_csv_text(const AttributeSchema& schema, std::span<const Property> properties) {
    std::string out = expected_header(schema);
    out.push_back('\n');
    for (const auto& p : properties) {
        out.append(std::to_string(p.id));
        out.push_back(',');
        append_double(out, p.location.lat_deg);
        out.push_back(',');
        append_double(out, p.location.lon_deg);
        out.push_back(',');
        out.append(format_date(p.offer_date));
        out.push_back(',');
        if (p.value) append_double(out, *p.value);
        out.push_back(',');
        if (p.region) out.append(quote_if_needed(*p.region));
        for (double a : p.attributes) {
            out.push_back(',');
            append_double(out, a);
        }
        out.push_back('\n');
    }
    return out;
}

void write_csv(const std::filesystem::path& path, const AttributeSchema& schema,
               std::span<const Property> properties) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << to_csv_text(schema, properties);
}

// ---------------------------------------------------------------------------
// Cleaning

void CleaningConfig::validate() const {
    if (!(max_price > 0.0)) throw InvalidConfig("max_price must be positive");
    if (!(bounding_box.lat_min <= bounding_box.lat_max) || !(bounding_box.lon_min <= bounding_box.lon_max)) {
        throw InvalidConfig("bounding box is not well ordered");
    }
}

nlohmann::json CleaningReport::to_json() const {
    return {{"input", input},
            {"duplicate", duplicates},
            {"price_outlier", price_outliers},
            {"outside_bounding_box", outside_box},
            {"kept", kept}};
}

CleaningResult clean(std::span<const Property> properties, const AttributeSchema& schema,
                     const CleaningConfig& config) {
    config.validate();
    CleaningResult result;
    result.report.input = properties.size();

    std::vector<bool> keep(properties.size(), true);
    if (config.dedupe) {
        std::vector<std::size_t> key_attrs;
        for (const auto& name : config.dedupe_attributes) {
            if (auto i = schema.index_of(name)) key_attrs.push_back(*i);
        }
        using Key = std::tuple<long long, long long, std::vector<double>>;
        std::map<Key, std::size_t> latest;
        for (std::size_t i = 0; i < properties.size(); ++i) {
            const auto& p = properties[i];
            Key key{std::llround(p.location.lat_deg * 1e6), std::llround(p.location.lon_deg * 1e6), {}};
            for (auto a : key_attrs) std::get<2>(key).push_back(p.attributes.at(a));
            auto [it, inserted] = latest.try_emplace(std::move(key), i);
            if (!inserted) {
                // Later offer wins; on equal dates the later row wins.
                const auto& current = properties[it->second];
                if (std::chrono::sys_days{p.offer_date} >= std::chrono::sys_days{current.offer_date}) {
                    keep[it->second] = false;
                    it->second = i;
                } else {
                    keep[i] = false;
                }
                ++result.report.duplicates;
            }
        }
    }

    for (std::size_t i = 0; i < properties.size(); ++i) {
        if (!keep[i]) continue;
        const auto& p = properties[i];
        if (p.value && *p.value > config.max_price) {
            ++result.report.price_outliers;
            continue;
        }
        if (!config.bounding_box.contains(p.location)) {
            ++result.report.outside_box;
            continue;
        }
        result.kept.push_back(p);
    }
    result.report.kept = result.kept.size();
    return result;
}

// ---------------------------------------------------------------------------
// Split and scaling

TemporalSplit temporal_split(std::span<const Property> properties, Date cutoff) {
    TemporalSplit split;
    const std::chrono::sys_days cut{cutoff};
    for (const auto& p : properties) {
        if (std::chrono::sys_days{p.offer_date} < cut) {
            split.train.push_back(p);
        } else if (p.value) {
            split.test.push_back(p);
        }
    }
    if (split.train.empty()) throw EmptySplit("no property offered before " + format_date(cutoff));
    if (split.test.empty()) throw EmptySplit("no valued property offered on or after " + format_date(cutoff));
    return split;
}

Scaler::Scaler(std::vector<Range> ranges) : ranges_(std::move(ranges)) {
    for (const auto& r : ranges_) {
        if (!(r.min <= r.max)) throw InvalidConfig("scaler range with min > max");
    }
}

double Scaler::scale(std::size_t i, double raw) const {
    const auto& r = ranges_[i];
    const double span = r.max - r.min;
    if (!(span > 0.0)) return 0.0;
    return std::clamp((raw - r.min) / span, 0.0, 1.0);
}

void Scaler::scale_into(std::span<const double> raw, std::span<double> out) const {
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = scale(i, raw[i]);
}

std::vector<double> Scaler::scale(std::span<const double> raw) const {
    std::vector<double> out(raw.size());
    scale_into(raw, out);
    return out;
}

Scaler fit_scaler(std::span<const Property> train, const AttributeSchema& schema) {
    if (train.empty()) throw EmptyTrainingSet();
    std::vector<Scaler::Range> ranges(schema.size(),
                                      {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()});
    for (const auto& p : train) {
        for (std::size_t i = 0; i < schema.size(); ++i) {
            ranges[i].min = std::min(ranges[i].min, p.attributes.at(i));
            ranges[i].max = std::max(ranges[i].max, p.attributes.at(i));
        }
    }
    return Scaler(std::move(ranges));
}

Property apply_scaler(const Scaler& scaler, const Property& property) {
    Property scaled = property;
    scaled.attributes = scaler.scale(property.attributes);
    return scaled;
}

}  // namespace geocbr
