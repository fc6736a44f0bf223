#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace hedgelab::nn {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix scalar(double v) { return Matrix(1, 1, v); }

  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t cols() const { return cols_; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool same_shape(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  [[nodiscard]] std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  [[nodiscard]] std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  [[nodiscard]] std::vector<double>& values() { return data_; }
  [[nodiscard]] const std::vector<double>& values() const { return data_; }

  void fill(double v);
  void reshape(std::size_t rows, std::size_t cols);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// out = a * b (+ out when accumulate).
void gemm(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
// out += a^T * b
void gemm_at_b(const Matrix& a, const Matrix& b, Matrix& out);
// out += a * b^T
void gemm_a_bt(const Matrix& a, const Matrix& b, Matrix& out);

struct Node {
  Matrix value;
  Matrix grad;  // allocated lazily during backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // pushes this->grad into parents

  Matrix& grad_buffer();
};

// Handle to a node of the computation graph.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  [[nodiscard]] const Matrix& value() const { return node_->value; }
  [[nodiscard]] Matrix& mutable_value() { return node_->value; }
  [[nodiscard]] const Matrix& grad() const { return node_->grad; }
  [[nodiscard]] bool requires_grad() const { return node_ && node_->requires_grad; }
  [[nodiscard]] const std::shared_ptr<Node>& node() const { return node_; }
  [[nodiscard]] double item() const;
  void zero_grad();

 private:
  std::shared_ptr<Node> node_;
};

Var parameter(Matrix value);
Var constant(Matrix value);

// Builds a node from `value` whose backward is `backward`; parents that do
// not require gradients are dropped. Custom fused ops use this.
Var make_op(Matrix value, std::vector<Var> parents, std::function<void(Node&)> backward);

// While alive on this thread, ops record no parents or backward closures.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

// Reverse sweep from a 1x1 root. Gradients accumulate into every reachable
// node that requires them. Throws ValidationError for non-scalar roots.
void backward(const Var& root);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var square(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
Var matmul(const Var& a, const Var& b);
Var add_row(const Var& x, const Var& bias);  // bias is 1 x cols, broadcast over rows
Var relu(const Var& x);                      // subgradient 0 at x == 0
Var reshape(const Var& x, std::size_t rows, std::size_t cols);
Var concat_cols(const std::vector<Var>& parts);

// Per-row normalization over the columns followed by gain/bias (1 x cols):
// y = gain * (x - mean) / sqrt(var + eps) + bias, var the population variance.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

}  // namespace hedgelab::nn
