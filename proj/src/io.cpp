#include "dar/io.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

namespace dar {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> parts;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) parts.push_back(item);
    }
    return parts;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
    throw std::invalid_argument("config key '" + key + "': cannot parse '" + value + "'");
}

double to_double(const std::string& key, const std::string& text) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) bad_value(key, text);
        return v;
    } catch (const std::logic_error&) {
        bad_value(key, text);
    }
}

long long to_int(const std::string& key, const std::string& text) {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) bad_value(key, text);
    return v;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in) {
    KeyValueConfig config;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(number) + ": expected key = value");
        const std::string key = trim(std::string_view(body).substr(0, eq));
        if (key.empty()) throw std::invalid_argument("config line " + std::to_string(number) + ": empty key");
        config.entries_[key] = trim(std::string_view(body).substr(eq + 1));
    }
    return config;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    return parse(in);
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

std::optional<long long> KeyValueConfig::get_int(const std::string& key) const {
    const auto v = get(key);
    if (!v) return std::nullopt;
    return to_int(key, *v);
}

std::optional<std::uint64_t> KeyValueConfig::get_u64(const std::string& key) const {
    const auto v = get(key);
    if (!v) return std::nullopt;
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || ptr != v->data() + v->size()) bad_value(key, *v);
    return out;
}

std::optional<double> KeyValueConfig::get_double(const std::string& key) const {
    const auto v = get(key);
    if (!v) return std::nullopt;
    return to_double(key, *v);
}

std::optional<bool> KeyValueConfig::get_bool(const std::string& key) const {
    const auto v = get(key);
    if (!v) return std::nullopt;
    if (*v == "1" || *v == "true" || *v == "yes") return true;
    if (*v == "0" || *v == "false" || *v == "no") return false;
    bad_value(key, *v);
}

std::optional<std::vector<double>> KeyValueConfig::get_doubles(const std::string& key) const {
    const auto v = get(key);
    if (!v) return std::nullopt;
    std::vector<double> out;
    for (const auto& part : split_list(*v)) out.push_back(to_double(key, part));
    return out;
}

std::optional<std::vector<long long>> KeyValueConfig::get_ints(const std::string& key) const {
    const auto v = get(key);
    if (!v) return std::nullopt;
    std::vector<long long> out;
    for (const auto& part : split_list(*v)) out.push_back(to_int(key, part));
    return out;
}

void KeyValueConfig::write(std::ostream& out) const {
    for (const auto& [key, value] : entries_) out << key << " = " << value << '\n';
}

void KeyValueConfig::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    write(out);
}

std::string format_double(double value) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc()) return "nan";
    return std::string(buf, ptr);
}

std::string fnv1a_hex(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw std::runtime_error("cannot write " + path);
    for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
    out_ << '\n';
}

void ensure_directory(const std::string& dir) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
}

}  // namespace dar
