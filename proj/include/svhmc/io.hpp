#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace svhmc::io {

/// Malformed or unusable input values (the message names the row).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Header/column problems.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SeriesKind { Prices, Returns };
std::string_view kind_name(SeriesKind k);
SeriesKind parse_kind(std::string_view text);

/// Percent log-returns.
struct ReturnSeries {
  std::vector<double> values;
  bool demeaned = false;
  std::string source;
};

/// y_t = 100 (log P_t - log P_{t-1}). Throws InputError naming the 1-based
/// row of the first non-positive or non-finite price.
ReturnSeries from_prices(std::span<const double> prices, std::string source = {});

/// Reads one numeric column from a CSV with a header row. Blank lines and
/// lines starting with '#' are skipped. `column` is a header name, or a
/// 1-based index; when empty, a lone column is taken, otherwise the first of
/// close/price/return (case-insensitive).
ReturnSeries ingest(std::istream& in, const std::string& column, SeriesKind kind,
                    std::string source = {});
ReturnSeries ingest(const std::string& path, const std::string& column, SeriesKind kind);

ReturnSeries demean(ReturnSeries series);

/// Single-column CSV ("return"), values in shortest round-trip form.
/// `comment`, when non-empty, is written first as a '#' line.
void write_series_csv(std::ostream& os, const ReturnSeries& series, const std::string& comment = {});

struct Description {
  std::size_t count = 0;
  double mean = 0.0;
  double sd = 0.0;        // n - 1 denominator
  double skewness = 0.0;  // m3 / m2^1.5
  double kurtosis = 0.0;  // raw, m4 / m2^2
};

/// Throws InputError for fewer than 4 values or a constant series.
Description describe(std::span<const double> values);

/// FNV-1a 64 over the IEEE-754 bytes of the values.
std::uint64_t fingerprint(std::span<const double> values);
std::string fingerprint_hex(std::span<const double> values);

/// Splits one CSV record, honouring double quotes.
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace svhmc::io
