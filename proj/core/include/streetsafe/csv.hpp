#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace streetsafe::csv {

/// Splits on `sep` without quoting rules; fields may not contain the
/// separator.
std::vector<std::string_view> split(std::string_view line, char sep = ',');

/// Strict numeric parsing: the whole field must be consumed.
std::optional<double> parse_double(std::string_view field);
std::optional<std::int64_t> parse_int(std::string_view field);

/// Shortest decimal form that round-trips to the same double.
std::string format_double(double value);

/// Reads data lines from a text stream, skipping `#` comment lines and
/// stripping trailing carriage returns. Tracks 1-based physical line numbers.
class LineReader {
 public:
  LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  /// Next non-comment line; empty optional at end of input. Blank lines are
  /// returned as empty strings so callers can decide how to treat them.
  std::optional<std::string> next();
  std::size_t line_number() const { return line_; }
  const std::string& source() const { return source_; }
  /// "source:line: "
  std::string where() const;

 private:
  std::istream& in_;
  std::string source_;
  std::size_t line_ = 0;
};

/// Opens a file for reading, throwing DataError when it is missing.
std::ifstream open_input(const std::filesystem::path& path);
/// Opens a file for writing, creating parent directories.
std::ofstream open_output(const std::filesystem::path& path);

/// Leading "# fingerprint=<hex>" comment stamped on exported tables.
std::string fingerprint_comment(std::string_view fingerprint);
/// Returns the fingerprint stamped on the first line of a file, if any.
std::optional<std::string> read_fingerprint_comment(const std::filesystem::path& path);

}  // namespace streetsafe::csv
