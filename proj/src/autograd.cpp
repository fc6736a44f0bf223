#include "hedgelab/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "hedgelab/common.hpp"

namespace hedgelab::nn {

namespace {
thread_local bool g_grad_enabled = true;

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  require(a.same_shape(b), std::string(op) + ": shape mismatch " + shape(a) + " vs " + shape(b));
}

Matrix& pgrad(Node& self, std::size_t i) { return self.parents[i]->grad_buffer(); }
bool wants(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }
const Matrix& pval(const Node& self, std::size_t i) { return self.parents[i]->value; }
}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows * cols, "matrix data size does not match " +
                                           std::to_string(rows) + "x" + std::to_string(cols));
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Matrix::reshape(std::size_t rows, std::size_t cols) {
  require(rows * cols == data_.size(), "reshape changes element count");
  rows_ = rows;
  cols_ = cols;
}

void gemm(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  require(a.cols() == b.rows(), "matmul: inner dimensions " + shape(a) + " * " + shape(b));
  if (!accumulate || out.rows() != a.rows() || out.cols() != b.cols()) {
    out = Matrix(a.rows(), b.cols());
  }
  const std::size_t n = a.rows(), k_dim = a.cols(), m = b.cols();
  const double* bp = b.values().data();
  double* op = out.values().data();
  const double* ap = a.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = op + i * m;
    const double* arow = ap + i * k_dim;
    for (std::size_t k = 0; k < k_dim; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = bp + k * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += aik * brow[j];
    }
  }
}

void gemm_at_b(const Matrix& a, const Matrix& b, Matrix& out) {
  // out (a.cols x b.cols) += a^T b
  const std::size_t n = a.rows(), k_dim = a.cols(), m = b.cols();
  const double* ap = a.values().data();
  const double* bp = b.values().data();
  double* op = out.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = ap + i * k_dim;
    const double* brow = bp + i * m;
    for (std::size_t k = 0; k < k_dim; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      double* orow = op + k * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += aik * brow[j];
    }
  }
}

void gemm_a_bt(const Matrix& a, const Matrix& b, Matrix& out) {
  // out (a.rows x b.rows) += a b^T
  const std::size_t n = a.rows(), m = a.cols(), k_dim = b.rows();
  const double* ap = a.values().data();
  const double* bp = b.values().data();
  double* op = out.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = ap + i * m;
    double* orow = op + i * k_dim;
    for (std::size_t k = 0; k < k_dim; ++k) {
      const double* brow = bp + k * m;
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += arow[j] * brow[j];
      orow[k] += acc;
    }
  }
}

Matrix& Node::grad_buffer() {
  if (!grad.same_shape(value)) grad = Matrix(value.rows(), value.cols());
  return grad;
}

double Var::item() const {
  require(node_ && node_->value.size() == 1, "item() needs a 1x1 value");
  return node_->value[0];
}

void Var::zero_grad() {
  if (node_) node_->grad = Matrix(node_->value.rows(), node_->value.cols());
}

Var parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Var constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Var make_op(Matrix value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (any && g_grad_enabled) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward_fn);
  }
  return Var(std::move(node));
}

void backward(const Var& root) {
  require(root.node() != nullptr, "backward on empty variable");
  require(root.value().size() == 1,
          "backward needs a scalar root, got " + shape(root.value()));
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->grad.same_shape(node->value)) node->backward(*node);
  }
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (!wants(self, p)) continue;
      Matrix& g = pgrad(self, p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    if (wants(self, 0)) {
      Matrix& g = pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants(self, 1)) {
      Matrix& g = pgrad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (!wants(self, p)) continue;
      const Matrix& other = pval(self, 1 - p);
      Matrix& g = pgrad(self, p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * other[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Matrix out = a.value();
  for (auto& v : out.values()) v *= s;
  return make_op(std::move(out), {a}, [s](Node& self) {
    Matrix& g = pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Var add_scalar(const Var& a, double s) {
  Matrix out = a.value();
  for (auto& v : out.values()) v += s;
  return make_op(std::move(out), {a}, [](Node& self) {
    Matrix& g = pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var square(const Var& a) {
  Matrix out = a.value();
  for (auto& v : out.values()) v *= v;
  return make_op(std::move(out), {a}, [](Node& self) {
    const Matrix& x = pval(self, 0);
    Matrix& g = pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * x[i] * self.grad[i];
  });
}

Var exp(const Var& a) {
  Matrix out = a.value();
  for (auto& v : out.values()) v = std::exp(v);
  return make_op(std::move(out), {a}, [](Node& self) {
    Matrix& g = pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.value[i] * self.grad[i];
  });
}

Var log(const Var& a) {
  Matrix out = a.value();
  for (auto& v : out.values()) v = std::log(v);
  return make_op(std::move(out), {a}, [](Node& self) {
    const Matrix& x = pval(self, 0);
    Matrix& g = pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / x[i];
  });
}

Var sum(const Var& a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  return make_op(Matrix::scalar(total), {a}, [](Node& self) {
    Matrix& g = pgrad(self, 0);
    for (auto& v : g.values()) v += self.grad[0];
  });
}

Var mean(const Var& a) {
  require(a.value().size() > 0, "mean of empty matrix");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var matmul(const Var& a, const Var& b) {
  Matrix out;
  gemm(a.value(), b.value(), out);
  return make_op(std::move(out), {a, b}, [](Node& self) {
    if (wants(self, 0)) gemm_a_bt(self.grad, pval(self, 1), pgrad(self, 0));
    if (wants(self, 1)) gemm_at_b(pval(self, 0), self.grad, pgrad(self, 1));
  });
}

Var add_row(const Var& x, const Var& bias) {
  require(bias.value().rows() == 1 && bias.value().cols() == x.value().cols(),
          "add_row: bias " + shape(bias.value()) + " does not fit " + shape(x.value()));
  Matrix out = x.value();
  const std::size_t cols = out.cols();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < cols; ++c) row[c] += bias.value()[c];
  }
  return make_op(std::move(out), {x, bias}, [](Node& self) {
    if (wants(self, 0)) {
      Matrix& g = pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants(self, 1)) {
      Matrix& g = pgrad(self, 1);
      const std::size_t cols = g.cols();
      for (std::size_t r = 0; r < self.grad.rows(); ++r) {
        const auto row = self.grad.row(r);
        for (std::size_t c = 0; c < cols; ++c) g[c] += row[c];
      }
    }
  });
}

Var relu(const Var& x) {
  Matrix out = x.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return make_op(std::move(out), {x}, [](Node& self) {
    const Matrix& in = pval(self, 0);
    Matrix& g = pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Var reshape(const Var& x, std::size_t rows, std::size_t cols) {
  Matrix out = x.value();
  out.reshape(rows, cols);
  return make_op(std::move(out), {x}, [](Node& self) {
    Matrix& g = pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols of nothing");
  const std::size_t rows = parts.front().value().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require(p.value().rows() == rows, "concat_cols: row count mismatch");
    cols += p.value().cols();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const Matrix& v = p.value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + static_cast<long>(offset));
    }
    offset += v.cols();
  }
  return make_op(std::move(out), parts, [offsets](Node& self) {
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      if (!wants(self, p)) continue;
      Matrix& g = pgrad(self, p);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        const auto src = self.grad.row(r);
        auto dst = g.row(r);
        for (std::size_t c = 0; c < g.cols(); ++c) dst[c] += src[offsets[p] + c];
      }
    }
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Matrix& in = x.value();
  const std::size_t rows = in.rows(), cols = in.cols();
  require(gain.value().rows() == 1 && gain.value().cols() == cols &&
              bias.value().rows() == 1 && bias.value().cols() == cols,
          "layer_norm: gain/bias must be 1x" + std::to_string(cols));
  Matrix normalized(rows, cols);
  std::vector<double> inv_std(rows);
  Matrix out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = in.row(r);
    double mu = 0.0;
    for (double v : row) mu += v;
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (double v : row) var += (v - mu) * (v - mu);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    auto nrow = normalized.row(r);
    auto orow = out.row(r);
    for (std::size_t c = 0; c < cols; ++c) {
      nrow[c] = (row[c] - mu) * inv_std[r];
      orow[c] = gain.value()[c] * nrow[c] + bias.value()[c];
    }
  }
  return make_op(std::move(out), {x, gain, bias},
                 [normalized = std::move(normalized), inv_std = std::move(inv_std)](Node& self) {
                   const std::size_t rows = normalized.rows(), cols = normalized.cols();
                   const Matrix& g_out = self.grad;
                   const Matrix& gain_v = pval(self, 1);
                   if (wants(self, 1) || wants(self, 2)) {
                     Matrix* g_gain = wants(self, 1) ? &pgrad(self, 1) : nullptr;
                     Matrix* g_bias = wants(self, 2) ? &pgrad(self, 2) : nullptr;
                     for (std::size_t r = 0; r < rows; ++r) {
                       for (std::size_t c = 0; c < cols; ++c) {
                         const double go = g_out(r, c);
                         if (g_gain) (*g_gain)[c] += go * normalized(r, c);
                         if (g_bias) (*g_bias)[c] += go;
                       }
                     }
                   }
                   if (!wants(self, 0)) return;
                   Matrix& gx = pgrad(self, 0);
                   const double inv_n = 1.0 / static_cast<double>(cols);
                   for (std::size_t r = 0; r < rows; ++r) {
                     double mean_g = 0.0, mean_gx = 0.0;
                     for (std::size_t c = 0; c < cols; ++c) {
                       const double gh = g_out(r, c) * gain_v[c];
                       mean_g += gh;
                       mean_gx += gh * normalized(r, c);
                     }
                     mean_g *= inv_n;
                     mean_gx *= inv_n;
                     for (std::size_t c = 0; c < cols; ++c) {
                       const double gh = g_out(r, c) * gain_v[c];
                       gx(r, c) += inv_std[r] * (gh - mean_g - normalized(r, c) * mean_gx);
                     }
                   }
                 });
}

}  // namespace hedgelab::nn
