#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace kfp {

/// Section-qualified key → raw string value ("section.key" for keys inside
/// `[section]`, the bare key for keys before the first section).
using KeyValues = std::map<std::string, std::string>;

/// Reads `key = value` lines grouped in optional `[section]` headers.
/// `#` and `;` start comment lines; duplicate keys are an error.
KeyValues read_key_values(const std::filesystem::path& path);
KeyValues parse_key_values(const std::string& text);

/// Shortest decimal form that still round-trips (17 significant digits).
std::string format_double(double v);
double parse_double(const std::string& s);
long long parse_integer(const std::string& s);
std::vector<double> parse_doubles(const std::string& s);
std::string join_doubles(std::span<const double> values);

/// Writes `key = value` lines, one per entry, in order.
void write_key_values(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, std::string>>& entries);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void row(std::span<const double> values);
  void row(std::initializer_list<double> values) {
    row(std::span<const double>(values.begin(), values.size()));
  }

 private:
  std::ofstream out_;
  std::size_t columns_;
};

}  // namespace kfp
