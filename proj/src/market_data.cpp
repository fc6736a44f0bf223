#include "hedgelab/market_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "hedgelab/common.hpp"

namespace hedgelab::data {

std::string Date::iso() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
  return buf;
}

std::optional<Date> parse_iso_date(const std::string& text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9}) {
    if (text[i] < '0' || text[i] > '9') return std::nullopt;
  }
  Date d{std::stoi(text.substr(0, 4)), std::stoi(text.substr(5, 2)), std::stoi(text.substr(8, 2))};
  static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (d.month < 1 || d.month > 12 || d.day < 1) return std::nullopt;
  const bool leap = (d.year % 4 == 0 && d.year % 100 != 0) || d.year % 400 == 0;
  const int limit = kDays[d.month - 1] + (d.month == 2 && leap ? 1 : 0);
  if (d.day > limit) return std::nullopt;
  return d;
}

namespace {
std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}
}  // namespace

IndexSeries load_series(std::istream& in, const std::string& source_name) {
  IndexSeries series;
  series.name = source_name;
  std::string line;
  if (!std::getline(in, line) || trim(line) != "date,close") {
    throw ValidationError(source_name + ": expected header 'date,close'");
  }
  std::vector<std::pair<Date, double>> rows;
  std::vector<std::size_t> row_numbers;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    line = trim(line);
    if (line.empty()) continue;
    const auto where = source_name + ": row " + std::to_string(row) + ": ";
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ValidationError(where + "expected date,close");
    const auto date = parse_iso_date(trim(line.substr(0, comma)));
    if (!date) throw ValidationError(where + "unparsable date '" + line.substr(0, comma) + "'");
    double close = 0.0;
    try {
      std::size_t used = 0;
      const std::string value = trim(line.substr(comma + 1));
      close = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ValidationError(where + "unparsable close '" + line.substr(comma + 1) + "'");
    }
    if (!(close > 0.0) || !std::isfinite(close)) {
      throw ValidationError(where + "close must be positive, got " + format_double(close));
    }
    rows.emplace_back(*date, close);
    row_numbers.push_back(row);
  }
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rows[a].first < rows[b].first; });
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& [date, close] = rows[order[k]];
    if (k > 0 && rows[order[k - 1]].first == date) {
      throw ValidationError(source_name + ": row " + std::to_string(row_numbers[order[k]]) +
                            ": duplicate date " + date.iso());
    }
    series.dates.push_back(date);
    series.closes.push_back(close);
  }
  return series;
}

IndexSeries load_series(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ValidationError("cannot open series " + file.string());
  return load_series(in, file.string());
}

PathBatch extract_windows(std::span<const double> closes, std::size_t window_days,
                          std::size_t stride) {
  require(window_days >= 2, "window must hold at least two closes");
  require(stride >= 1, "stride must be >= 1");
  PathBatch out(window_days);
  if (closes.size() < window_days) {
    std::cerr << "warning: series of length " << closes.size() << " is shorter than the "
              << window_days << "-close window; no paths extracted\n";
    return out;
  }
  std::vector<double> window(window_days);
  for (std::size_t start = 0; start + window_days <= closes.size(); start += stride) {
    const double base = closes[start];
    for (std::size_t j = 0; j < window_days; ++j) window[j] = closes[start + j] / base;
    window[0] = 1.0;
    out.push_back(window);
  }
  return out;
}

PathBatch extract_windows(const IndexSeries& series, std::size_t window_days, std::size_t stride) {
  return extract_windows(series.closes, window_days, stride);
}

std::optional<double> raw_kurtosis(std::span<const double> samples) {
  if (samples.size() < 4) return std::nullopt;
  const double n = static_cast<double>(samples.size());
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double m2 = 0.0, m4 = 0.0;
  for (double x : samples) {
    const double d = x - mean;
    const double d2 = d * d;
    m2 += d2;
    m4 += d2 * d2;
  }
  m2 /= n;
  m4 /= n;
  if (!(m2 > 0.0) || m2 <= 1e-300) return std::nullopt;
  return m4 / (m2 * m2);
}

std::vector<double> lagged_log_returns(const PathBatch& paths, int lag) {
  require(lag >= 1, "lag must be >= 1");
  std::vector<double> out;
  const auto k = static_cast<std::size_t>(lag);
  for (std::size_t p = 0; p < paths.size(); ++p) {
    const auto s = paths.path(p);
    for (std::size_t t = 0; t + k < s.size(); ++t) out.push_back(std::log(s[t + k] / s[t]));
  }
  return out;
}

StylizedStats stylized_stats(const PathBatch& paths, int max_lag, double bin_width) {
  require(max_lag >= 1, "max_lag must be >= 1");
  require(bin_width > 0, "bin width must be positive");
  StylizedStats stats;
  for (int lag = 1; lag <= max_lag; ++lag) {
    stats.kurtosis_by_lag[lag] = raw_kurtosis(lagged_log_returns(paths, lag));
  }
  const auto returns = lagged_log_returns(paths, 1);
  if (returns.size() >= 2) {
    const double n = static_cast<double>(returns.size());
    const double mean = std::accumulate(returns.begin(), returns.end(), 0.0) / n;
    double var = 0.0;
    for (double r : returns) var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / n);
    if (sd > 0.0) {
      std::map<long long, std::size_t> counts;
      for (double r : returns) ++counts[std::llround((r - mean) / sd / bin_width)];
      for (const auto& [bin, count] : counts) {
        stats.histogram[static_cast<double>(bin) * bin_width] = static_cast<double>(count) / n;
      }
    }
  }
  return stats;
}

StylizedStats stylized_stats(std::span<const double> prices, int max_lag, double bin_width) {
  PathBatch single;
  single.push_back(prices);
  return stylized_stats(single, max_lag, bin_width);
}

void write_kurtosis_csv(std::ostream& out, const StylizedStats& stats) {
  out << "lag,kurtosis\n";
  for (const auto& [lag, k] : stats.kurtosis_by_lag) {
    out << lag << ',' << (k ? format_double(*k) : "") << '\n';
  }
}

void write_histogram_csv(std::ostream& out, const StylizedStats& stats) {
  out << "bin_center,mass\n";
  for (const auto& [center, mass] : stats.histogram) {
    out << format_double(center) << ',' << format_double(mass) << '\n';
  }
}

}  // namespace hedgelab::data
