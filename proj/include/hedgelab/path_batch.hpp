#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace hedgelab {

// One price series S_{t_0..t_n}; generators normalize S_{t_0} to 1.0.
using PathView = std::span<const double>;

// Dense row-major matrix of price paths: rows are paths, columns t_0..t_n.
class PathBatch {
 public:
  PathBatch() = default;
  explicit PathBatch(std::size_t n_points) : n_points_(n_points) {}
  PathBatch(std::size_t n_paths, std::size_t n_points)
      : n_points_(n_points), data_(n_paths * n_points, 0.0) {}

  [[nodiscard]] std::size_t size() const { return n_points_ == 0 ? 0 : data_.size() / n_points_; }
  [[nodiscard]] bool empty() const { return data_.empty(); }
  [[nodiscard]] std::size_t n_points() const { return n_points_; }
  // Number of hedging steps n (= n_points - 1).
  [[nodiscard]] std::size_t n_steps() const { return n_points_ == 0 ? 0 : n_points_ - 1; }

  [[nodiscard]] PathView path(std::size_t i) const {
    return {data_.data() + i * n_points_, n_points_};
  }
  [[nodiscard]] std::span<double> path(std::size_t i) {
    return {data_.data() + i * n_points_, n_points_};
  }

  void push_back(PathView path);
  void append(const PathBatch& other);
  [[nodiscard]] PathBatch subset(std::span<const std::size_t> rows) const;

  [[nodiscard]] const std::vector<double>& data() const { return data_; }

 private:
  std::size_t n_points_ = 0;
  std::vector<double> data_;
};

// CSV matrix: header t0,t1,...,tn then one row per path.
void write_paths_csv(const std::filesystem::path& file, const PathBatch& batch);
PathBatch read_paths_csv(const std::filesystem::path& file);

// Writes `<file>` plus the JSON sidecar `<file>.json`.
void write_paths_with_sidecar(const std::filesystem::path& file, const PathBatch& batch,
                              const nlohmann::json& metadata);

}  // namespace hedgelab
