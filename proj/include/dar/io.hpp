#pragma once

#include <cstdint>
#include <fstream>
#include <iosfwd>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace dar {

/// Flat `key = value` text, one entry per line; `#` starts a comment.
/// Lists are comma-separated.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::istream& in);
    static KeyValueConfig load(const std::string& path);

    void set(const std::string& key, std::string value) { entries_[key] = std::move(value); }
    [[nodiscard]] bool has(const std::string& key) const { return entries_.count(key) != 0; }
    [[nodiscard]] std::optional<std::string> get(const std::string& key) const;

    [[nodiscard]] std::optional<long long> get_int(const std::string& key) const;
    [[nodiscard]] std::optional<std::uint64_t> get_u64(const std::string& key) const;
    [[nodiscard]] std::optional<double> get_double(const std::string& key) const;
    [[nodiscard]] std::optional<bool> get_bool(const std::string& key) const;
    [[nodiscard]] std::optional<std::vector<double>> get_doubles(const std::string& key) const;
    [[nodiscard]] std::optional<std::vector<long long>> get_ints(const std::string& key) const;

    /// Entries in key order.
    [[nodiscard]] const std::map<std::string, std::string>& entries() const noexcept { return entries_; }

    void write(std::ostream& out) const;
    void save(const std::string& path) const;

private:
    std::map<std::string, std::string> entries_;
};

/// Round-trippable decimal form of a double.
[[nodiscard]] std::string format_double(double value);

template <class T>
[[nodiscard]] std::string join(const std::vector<T>& values) {
    std::ostringstream out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out << ',';
        if constexpr (std::is_floating_point_v<T>) {
            out << format_double(values[i]);
        } else {
            out << values[i];
        }
    }
    return out.str();
}

/// 64-bit FNV-1a, printed as 16 hex digits.
[[nodiscard]] std::string fnv1a_hex(std::string_view text);

/// Minimal CSV writer: fixed header, numeric and plain-string cells.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header);

    template <class... Cells>
    void row(const Cells&... cells) {
        bool first = true;
        (cell(cells, first), ...);
        out_ << '\n';
    }

    [[nodiscard]] bool good() const { return out_.good(); }

private:
    template <class T>
    void cell(const T& value, bool& first) {
        if (!first) out_ << ',';
        first = false;
        if constexpr (std::is_floating_point_v<T>) {
            out_ << format_double(static_cast<double>(value));
        } else {
            out_ << value;
        }
    }

    std::ofstream out_;
};

/// Creates `dir` (and parents) if needed.
void ensure_directory(const std::string& dir);

}  // namespace dar
