#pragma once

#include <charconv>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace itgpt {

// Error taxonomy mapped to CLI exit codes: usage=1, data=2, numeric=3.
struct usage_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shortest round-trip decimal form, locale independent. Used everywhere a
// double is written to disk so reruns are byte-identical.
std::string format_double(double v);

double parse_double(std::string_view s, const std::string& context);
long parse_long(std::string_view s, const std::string& context);

std::vector<std::string> split(std::string_view s, char delim);
std::string trim(std::string_view s);

// FNV-1a 64-bit, for dataset fingerprints and manifest hashes.
class Fnv1a {
public:
    void update(const void* data, size_t n);
    void update(std::string_view s) { update(s.data(), s.size()); }
    uint64_t digest() const { return state_; }
    std::string hex() const;

private:
    uint64_t state_ = 1469598103934665603ull;
};

// Plain-text key/value blocks ("key=value" per line, '#' comments).
using KvMap = std::map<std::string, std::string>;

KvMap parse_kv_text(std::string_view text, const std::string& context);
KvMap load_kv_file(const std::string& path);
std::string kv_to_text(const KvMap& kv);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace itgpt
