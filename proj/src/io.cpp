#include "svhmc/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "svhmc/numfmt.hpp"

namespace svhmc::io {

namespace {

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool parse_double(const std::string& text, double& out) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

std::size_t pick_column(const std::vector<std::string>& header, const std::string& column) {
  if (column.empty()) {
    if (header.size() == 1) return 0;
    for (const char* preferred : {"close", "price", "return"})
      for (std::size_t j = 0; j < header.size(); ++j)
        if (lower(header[j]) == preferred) return j;
    throw SchemaError("no column selected and none of close/price/return found in header");
  }
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == column) return j;
  std::size_t index = 0;
  const auto res = std::from_chars(column.data(), column.data() + column.size(), index);
  if (res.ec == std::errc() && res.ptr == column.data() + column.size() && index >= 1 &&
      index <= header.size())
    return index - 1;
  throw SchemaError("column '" + column + "' not found in header");
}

}  // namespace

std::string_view kind_name(SeriesKind k) { return k == SeriesKind::Prices ? "prices" : "returns"; }

SeriesKind parse_kind(std::string_view text) {
  if (text == "prices" || text == "price") return SeriesKind::Prices;
  if (text == "returns" || text == "return") return SeriesKind::Returns;
  throw std::invalid_argument("unknown series kind '" + std::string(text) + "' (prices|returns)");
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

ReturnSeries from_prices(std::span<const double> prices, std::string source) {
  for (std::size_t i = 0; i < prices.size(); ++i)
    if (!(prices[i] > 0.0) || !std::isfinite(prices[i]))
      throw InputError("non-positive price " + shortest(prices[i]) + " at row " + std::to_string(i + 1));
  ReturnSeries out;
  out.source = std::move(source);
  if (prices.size() < 2) return out;
  out.values.reserve(prices.size() - 1);
  for (std::size_t i = 1; i < prices.size(); ++i)
    out.values.push_back(100.0 * std::log(prices[i] / prices[i - 1]));
  return out;
}

ReturnSeries ingest(std::istream& in, const std::string& column, SeriesKind kind, std::string source) {
  std::string line;
  std::vector<std::string> header;
  std::size_t col = 0;
  std::vector<double> values;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line.front() == '#') continue;
    if (header.empty()) {
      if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
      header = split_csv_line(line);
      col = pick_column(header, column);
      continue;
    }
    ++row;
    const auto fields = split_csv_line(line);
    if (col >= fields.size())
      throw InputError("row " + std::to_string(row) + " has no field for column '" + header[col] + "'");
    double v = 0.0;
    if (!parse_double(fields[col], v) || !std::isfinite(v))
      throw InputError("non-numeric value '" + fields[col] + "' at row " + std::to_string(row));
    if (kind == SeriesKind::Prices && !(v > 0.0))
      throw InputError("non-positive price " + fields[col] + " at row " + std::to_string(row));
    values.push_back(v);
  }
  if (header.empty()) throw SchemaError("missing header row");
  if (kind == SeriesKind::Prices) return from_prices(values, std::move(source));
  ReturnSeries out;
  out.values = std::move(values);
  out.source = std::move(source);
  return out;
}

ReturnSeries ingest(const std::string& path, const std::string& column, SeriesKind kind) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return ingest(in, column, kind, path);
}

ReturnSeries demean(ReturnSeries series) {
  if (series.values.empty()) return series;
  double m = 0.0;
  for (double v : series.values) m += v;
  m /= static_cast<double>(series.values.size());
  for (double& v : series.values) v -= m;
  series.demeaned = true;
  return series;
}

void write_series_csv(std::ostream& os, const ReturnSeries& series, const std::string& comment) {
  if (!comment.empty()) os << "# " << comment << '\n';
  os << "return\n";
  for (double v : series.values) os << shortest(v) << '\n';
}

Description describe(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 4) throw InputError("describe: need at least 4 values, got " + std::to_string(n));
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*lo == *hi) throw InputError("describe: constant series, skewness and kurtosis undefined");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : values) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  const double nd = static_cast<double>(n);
  Description out;
  out.count = n;
  out.mean = mean;
  out.sd = std::sqrt(m2 / (nd - 1.0));
  m2 /= nd;
  m3 /= nd;
  m4 /= nd;
  out.skewness = m3 / std::pow(m2, 1.5);
  out.kurtosis = m4 / (m2 * m2);
  return out;
}

std::uint64_t fingerprint(std::span<const double> values) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (double v : values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= bits & 0xffu;
      h *= 0x100000001b3ull;
      bits >>= 8;
    }
  }
  return h;
}

std::string fingerprint_hex(std::span<const double> values) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fingerprint(values)));
  return buf;
}

}  // namespace svhmc::io
