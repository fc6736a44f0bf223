#include "hedgelab/path_batch.hpp"

#include <fstream>
#include <sstream>

#include "hedgelab/common.hpp"

namespace hedgelab {

void PathBatch::push_back(PathView path) {
  if (n_points_ == 0 && data_.empty()) n_points_ = path.size();
  require(path.size() == n_points_, "path length " + std::to_string(path.size()) +
                                        " does not match batch length " +
                                        std::to_string(n_points_));
  data_.insert(data_.end(), path.begin(), path.end());
}

void PathBatch::append(const PathBatch& other) {
  for (std::size_t i = 0; i < other.size(); ++i) push_back(other.path(i));
}

PathBatch PathBatch::subset(std::span<const std::size_t> rows) const {
  PathBatch out(n_points_);
  out.data_.reserve(rows.size() * n_points_);
  for (std::size_t r : rows) out.push_back(path(r));
  return out;
}

void write_paths_csv(const std::filesystem::path& file, const PathBatch& batch) {
  std::ofstream out(file);
  if (!out) throw RuntimeFailure("cannot open " + file.string() + " for writing");
  for (std::size_t j = 0; j < batch.n_points(); ++j) out << (j ? ",t" : "t") << j;
  out << '\n';
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto p = batch.path(i);
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (j) out << ',';
      out << format_double(p[j]);
    }
    out << '\n';
  }
}

PathBatch read_paths_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ValidationError("cannot open path file " + file.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(file.string() + ": empty path file");
  PathBatch batch;
  std::size_t row = 1;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    values.clear();
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ValidationError(file.string() + ": row " + std::to_string(row) +
                              ": unparsable value '" + cell + "'");
      }
    }
    try {
      batch.push_back(values);
    } catch (const ValidationError& e) {
      throw ValidationError(file.string() + ": row " + std::to_string(row) + ": " + e.what());
    }
  }
  return batch;
}

void write_paths_with_sidecar(const std::filesystem::path& file, const PathBatch& batch,
                              const nlohmann::json& metadata) {
  write_paths_csv(file, batch);
  nlohmann::json sidecar = metadata;
  sidecar["n_paths"] = batch.size();
  sidecar["n_points"] = batch.n_points();
  std::ofstream out(file.string() + ".json");
  if (!out) throw RuntimeFailure("cannot write sidecar for " + file.string());
  out << sidecar.dump(2) << '\n';
}

}  // namespace hedgelab
