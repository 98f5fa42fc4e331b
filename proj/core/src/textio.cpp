#include "kfp/textio.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cerrno>
#include <cstdlib>
#include <fmt/format.h>
#include <sstream>

#include "kfp/errors.hpp"

namespace kfp {

namespace {

KeyValues flatten(const boost::property_tree::ptree& tree) {
  KeyValues out;
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      out.emplace(name, node.data());
      continue;
    }
    for (const auto& [key, leaf] : node) out.emplace(name + "." + key, leaf.data());
  }
  return out;
}

KeyValues parse_stream(std::istream& in, const std::string& origin) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ContractViolation(fmt::format("{}: line {}: {}", origin, e.line(), e.message()));
  }
  return flatten(tree);
}

}  // namespace

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractViolation(fmt::format("cannot open '{}'", path.string()));
  return parse_stream(in, path.string());
}

KeyValues parse_key_values(const std::string& text) {
  std::istringstream in(text);
  return parse_stream(in, "<text>");
}

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

double parse_double(const std::string& s) {
  const char* begin = s.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  while (end && (*end == ' ' || *end == '\t')) ++end;
  if (end == begin || (end && *end != '\0') || errno == ERANGE)
    throw ContractViolation(fmt::format("'{}' is not a number", s));
  return v;
}

long long parse_integer(const std::string& s) {
  const char* begin = s.c_str();
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(begin, &end, 10);
  while (end && (*end == ' ' || *end == '\t')) ++end;
  if (end == begin || (end && *end != '\0') || errno == ERANGE)
    throw ContractViolation(fmt::format("'{}' is not an integer", s));
  return v;
}

std::vector<double> parse_doubles(const std::string& s) {
  std::istringstream in(s);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) out.push_back(parse_double(tok));
  return out;
}

std::string join_doubles(std::span<const double> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ' ';
    out += format_double(values[i]);
  }
  return out;
}

void write_key_values(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, std::string>>& entries) {
  std::ofstream out(path);
  if (!out) throw ContractViolation(fmt::format("cannot write '{}'", path.string()));
  for (const auto& [k, v] : entries) out << k << " = " << v << '\n';
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(path), columns_(header.size()) {
  if (!out_) throw ContractViolation(fmt::format("cannot write '{}'", path.string()));
  for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
  out_ << '\n';
}

void CsvWriter::row(std::span<const double> values) {
  if (values.size() != columns_)
    throw ContractViolation(fmt::format("csv row has {} values, header has {}", values.size(),
                                        columns_));
  for (std::size_t i = 0; i < values.size(); ++i)
    out_ << (i ? "," : "") << fmt::format("{:.17g}", values[i]);
  out_ << '\n';
}

}  // namespace kfp
