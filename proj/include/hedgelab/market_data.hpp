#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "hedgelab/path_batch.hpp"

namespace hedgelab::data {

struct Date {
  int year = 1970;
  int month = 1;
  int day = 1;

  friend auto operator<=>(const Date&, const Date&) = default;
  [[nodiscard]] std::string iso() const;
};

// Parses YYYY-MM-DD, rejecting impossible calendar dates.
std::optional<Date> parse_iso_date(const std::string& text);

enum class SeriesLabel { development, test, other };

struct IndexSeries {
  std::string name;
  SeriesLabel label = SeriesLabel::other;
  std::vector<Date> dates;   // strictly increasing
  std::vector<double> closes;  // positive

  [[nodiscard]] std::size_t size() const { return closes.size(); }
};

// CSV with header date,close. Rows may be unsorted; the result is sorted by
// date. Bad rows (unparsable, non-positive close, duplicate date) raise a
// ValidationError naming the source row.
IndexSeries load_series(std::istream& in, const std::string& source_name = "<stream>");
IndexSeries load_series(const std::filesystem::path& file);

// Sliding windows of `window_days` closes, each divided by its first close.
// A series shorter than the window yields an empty batch and a warning on
// stderr.
PathBatch extract_windows(std::span<const double> closes, std::size_t window_days = 21,
                          std::size_t stride = 1);
PathBatch extract_windows(const IndexSeries& series, std::size_t window_days = 21,
                          std::size_t stride = 1);

struct StylizedStats {
  std::map<int, std::optional<double>> kurtosis_by_lag;  // raw m4 / m2^2
  std::map<double, double> histogram;                    // bin center -> mass
};

// Raw kurtosis m4 / m2^2 with central population moments. Missing for fewer
// than 4 samples or zero variance.
std::optional<double> raw_kurtosis(std::span<const double> samples);

// All overlapping lag-k log-returns ln(S_{t+k}/S_t), pooled across paths.
std::vector<double> lagged_log_returns(const PathBatch& paths, int lag);

// Kurtosis for lags 1..max_lag, and a histogram of lag-1 returns standardized
// to zero mean / unit variance in bins of `bin_width` centered on multiples of
// the width.
StylizedStats stylized_stats(const PathBatch& paths, int max_lag, double bin_width = 0.5);
// Same for one long price series.
StylizedStats stylized_stats(std::span<const double> prices, int max_lag,
                             double bin_width = 0.5);

// CSVs for external plotting: lag,kurtosis (empty when missing) and
// bin_center,mass.
void write_kurtosis_csv(std::ostream& out, const StylizedStats& stats);
void write_histogram_csv(std::ostream& out, const StylizedStats& stats);

}  // namespace hedgelab::data
