#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mier/error.hpp"

namespace mier {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Plain dense row-major array. Parameters, gradients and optimizer moments
/// are stored as Arrays outside of any differentiation graph.
struct Array {
  Shape shape;
  std::vector<double> data;

  Array() = default;
  Array(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_size(shape) != data.size()) {
      throw ShapeError("Array: shape " + shape_string(shape) + " holds " +
                       std::to_string(shape_size(shape)) + " values, got " +
                       std::to_string(data.size()));
    }
  }

  static Array zeros(Shape s) {
    const std::size_t n = shape_size(s);
    return Array(std::move(s), std::vector<double>(n, 0.0));
  }

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
  std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  bool operator==(const Array&) const = default;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  std::vector<double>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Handle to a node of a dynamically built differentiation graph.
///
/// A Tensor is a cheap shared handle; copies alias the same node. Leaves
/// created with `requires_grad = true` accumulate gradients during
/// `backward`. Operations on tensors that do not require gradients record
/// nothing, so constant evaluation carries no tape overhead.
class Tensor {
 public:
  Tensor() : node_(std::make_shared<detail::Node>()) {}

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    if (shape_size(shape) != values.size()) {
      throw ShapeError("Tensor: shape " + shape_string(shape) + " holds " +
                       std::to_string(shape_size(shape)) + " values, got " +
                       std::to_string(values.size()));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  explicit Tensor(const Array& a, bool requires_grad = false)
      : Tensor(a.shape, a.data, requires_grad) {}

  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor(Shape{}, {v}, requires_grad);
  }
  static Tensor zeros(Shape s) {
    const std::size_t n = shape_size(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }
  static Tensor full(Shape s, double v) {
    const std::size_t n = shape_size(s);
    return Tensor(std::move(s), std::vector<double>(n, v));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values) {
    return Tensor(Shape{rows, cols}, std::move(values));
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const {
    return rank() == 2 ? node_->shape[0] : 1;
  }
  std::size_t cols() const { return rank() == 0 ? 1 : node_->shape.back(); }

  std::span<const double> values() const { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double at(std::size_t r, std::size_t c) const {
    return node_->value[r * cols() + c];
  }
  double item() const {
    if (size() != 1) {
      throw ShapeError("item: tensor of shape " + shape_string(shape()) +
                       " is not a scalar");
    }
    return node_->value[0];
  }
  Array array() const { return Array(node_->shape, node_->value); }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return !node_->backward_fn; }

  /// Gradient accumulated by the last backward pass (zeros if none).
  Array grad() const {
    if (node_->grad.size() != node_->value.size()) return Array::zeros(shape());
    return Array(node_->shape, node_->grad);
  }

  /// Same values, no graph history.
  Tensor detach() const { return Tensor(shape(), node_->value, false); }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

  /// Builds an op result; the backward closure is attached only when some
  /// input participates in the graph.
  static Tensor make_result(Shape shape, std::vector<double> value,
                            std::vector<Tensor> inputs,
                            std::function<void(detail::Node&)> backward_fn) {
    Tensor out(std::move(shape), std::move(value));
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      out.node_->requires_grad = true;
      for (auto& in : inputs) out.node_->parents.push_back(in.node_);
      out.node_->backward_fn = std::move(backward_fn);
    }
    return out;
  }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Reverse-mode pass from a scalar loss.
///
/// Every gradient in the reachable graph is reset to zero first, so calling
/// backward twice on the same graph yields the same gradients (no
/// accumulation across calls).
inline void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw GraphError("backward: loss must be a scalar, got shape " +
                     shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw GraphError("backward: loss is not attached to a graph");
  }
  // Iterative post-order DFS for a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (auto* n : order) n->grad.assign(n->value.size(), 0.0);
  loss.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

namespace detail {

inline void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got shape " +
                     shape_string(t.shape()));
  }
}

[[noreturn]] inline void mismatch(const char* op, const Tensor& a,
                                  const Tensor& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " +
                   shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

// Broadcast rule for binary elementwise ops: identical shapes, a scalar on
// either side, or a row vector ([n] or [1,n]) against an [m,n] matrix.
enum class Bcast { Same, LeftScalar, RightScalar, LeftRow, RightRow };

inline Bcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b,
                            Shape& out) {
  if (a.shape() == b.shape()) {
    out = a.shape();
    return Bcast::Same;
  }
  if (b.size() == 1 && b.rank() <= 1) {
    out = a.shape();
    return Bcast::RightScalar;
  }
  if (a.size() == 1 && a.rank() <= 1) {
    out = b.shape();
    return Bcast::LeftScalar;
  }
  auto is_row = [](const Tensor& r, const Tensor& m) {
    return m.rank() == 2 &&
           ((r.rank() == 1 && r.shape()[0] == m.shape()[1]) ||
            (r.rank() == 2 && r.shape()[0] == 1 && r.shape()[1] == m.shape()[1]));
  };
  if (is_row(b, a)) {
    out = a.shape();
    return Bcast::RightRow;
  }
  if (is_row(a, b)) {
    out = b.shape();
    return Bcast::LeftRow;
  }
  mismatch(op, a, b);
}

inline std::size_t left_index(Bcast k, std::size_t i, std::size_t cols) {
  switch (k) {
    case Bcast::LeftScalar: return 0;
    case Bcast::LeftRow: return i % cols;
    default: return i;
  }
}

inline std::size_t right_index(Bcast k, std::size_t i, std::size_t cols) {
  switch (k) {
    case Bcast::RightScalar: return 0;
    case Bcast::RightRow: return i % cols;
    default: return i;
  }
}

// f(a, b) with partials da = ∂f/∂a, db = ∂f/∂b evaluated pointwise.
template <typename F, typename DA, typename DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, DA da,
              DB db) {
  Shape out_shape;
  const Bcast kind = broadcast_kind(op, a, b, out_shape);
  const std::size_t n = shape_size(out_shape);
  const std::size_t cols = out_shape.empty() ? 1 : out_shape.back();
  std::vector<double> out(n);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = f(av[left_index(kind, i, cols)], bv[right_index(kind, i, cols)]);
  }
  return Tensor::make_result(
      out_shape, std::move(out), {a, b},
      [kind, n, cols, da, db](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t ia = left_index(kind, i, cols);
          const std::size_t ib = right_index(kind, i, cols);
          const double g = self.grad[i];
          if (pa.requires_grad) {
            pa.ensure_grad()[ia] += g * da(pa.value[ia], pb.value[ib]);
          }
          if (pb.requires_grad) {
            pb.ensure_grad()[ib] += g * db(pa.value[ia], pb.value[ib]);
          }
        }
      });
}

// f(x) with derivative expressed through input x and output y.
template <typename F, typename D>
Tensor unary(const Tensor& a, F f, D d) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return Tensor::make_result(a.shape(), std::move(out), {a}, [d](Node& self) {
    Node& p = *self.parents[0];
    auto& pg = p.ensure_grad();
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      pg[i] += self.grad[i] * d(p.value[i], self.value[i]);
    }
  });
}

inline double softplus_value(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "multiply", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

inline Tensor scale(const Tensor& a, double c) {
  return detail::unary(
      a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

inline Tensor add_scalar(const Tensor& a, double c) {
  return detail::unary(
      a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

inline Tensor operator-(const Tensor& a) { return scale(a, -1.0); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }
inline Tensor operator-(const Tensor& a, double c) { return add_scalar(a, -c); }

// ---------------------------------------------------------------------------
// Elementwise nonlinearities
// ---------------------------------------------------------------------------

inline Tensor exp(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a) {
  for (double v : a.values()) {
    if (!(v > 0.0)) {
      throw DomainError("log: non-positive input " + std::to_string(v));
    }
  }
  return detail::unary(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

inline Tensor square(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

inline Tensor softplus(const Tensor& a) {
  return detail::unary(a, detail::softplus_value,
                       [](double x, double) { return detail::sigmoid_value(x); });
}

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary(a, detail::sigmoid_value,
                       [](double, double y) { return y * (1.0 - y); });
}

inline Tensor relu(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

/// Clamp to [lo, hi]; the gradient is zero where the input is outside.
inline Tensor clamp(const Tensor& a, double lo, double hi) {
  return detail::unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Linear algebra and reductions
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank2(a, "matmul");
  detail::require_rank2(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) detail::mismatch("matmul", a, b);
  std::vector<double> out(m * n, 0.0);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = &bv[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return Tensor::make_result(
      Shape{m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
        detail::Node& pa = *self.parents[0];
        detail::Node& pb = *self.parents[1];
        const auto& g = self.grad;
        if (pa.requires_grad) {
          auto& ga = pa.ensure_grad();  // dA = G B^T
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              double s = 0.0;
              for (std::size_t j = 0; j < n; ++j) {
                s += g[i * n + j] * pb.value[p * n + j];
              }
              ga[i * k + p] += s;
            }
          }
        }
        if (pb.requires_grad) {
          auto& gb = pb.ensure_grad();  // dB = A^T G
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = pa.value[i * k + p];
              for (std::size_t j = 0; j < n; ++j) {
                gb[p * n + j] += aip * g[i * n + j];
              }
            }
          }
        }
      });
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return Tensor::make_result(Shape{}, {s}, {a}, [](detail::Node& self) {
    auto& pg = self.parents[0]->ensure_grad();
    for (auto& v : pg) v += self.grad[0];
  });
}

inline Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

/// [m,n] -> [m]: sum of each row.
inline Tensor row_sum(const Tensor& a) {
  detail::require_rank2(a, "row_sum");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(m, 0.0);
  const auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += av[i * n + j];
  return Tensor::make_result(Shape{m}, std::move(out), {a},
                             [m, n](detail::Node& self) {
                               auto& pg = self.parents[0]->ensure_grad();
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < n; ++j)
                                   pg[i * n + j] += self.grad[i];
                             });
}

/// [m,n] -> [n]: mean over rows (column means).
inline Tensor column_mean(const Tensor& a) {
  detail::require_rank2(a, "column_mean");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (m == 0) throw ShapeError("column_mean: no rows");
  std::vector<double> out(n, 0.0);
  const auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += av[i * n + j];
  const double inv = 1.0 / static_cast<double>(m);
  for (auto& v : out) v *= inv;
  return Tensor::make_result(Shape{n}, std::move(out), {a},
                             [m, n, inv](detail::Node& self) {
                               auto& pg = self.parents[0]->ensure_grad();
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < n; ++j)
                                   pg[i * n + j] += self.grad[j] * inv;
                             });
}

/// Row-wise softmax with max subtraction.
inline Tensor softmax_rows(const Tensor& a) {
  detail::require_rank2(a, "softmax_rows");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(m * n);
  const auto av = a.values();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = &av[i * n];
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(row[j] - mx);
      z += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return Tensor::make_result(
      a.shape(), std::move(out), {a}, [m, n](detail::Node& self) {
        auto& pg = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j)
            dot += self.grad[i * n + j] * self.value[i * n + j];
          for (std::size_t j = 0; j < n; ++j) {
            pg[i * n + j] += self.value[i * n + j] * (self.grad[i * n + j] - dot);
          }
        }
      });
}

/// Row-wise log-softmax via log-sum-exp.
inline Tensor log_softmax_rows(const Tensor& a) {
  detail::require_rank2(a, "log_softmax_rows");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(m * n);
  const auto av = a.values();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = &av[i * n];
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = row[j] - lse;
  }
  return Tensor::make_result(
      a.shape(), std::move(out), {a}, [m, n](detail::Node& self) {
        auto& pg = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          double gsum = 0.0;
          for (std::size_t j = 0; j < n; ++j) gsum += self.grad[i * n + j];
          for (std::size_t j = 0; j < n; ++j) {
            pg[i * n + j] +=
                self.grad[i * n + j] - std::exp(self.value[i * n + j]) * gsum;
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

/// Same values, new shape of equal size.
inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_string(a.shape()) +
                     " as " + shape_string(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return Tensor::make_result(std::move(shape), std::move(out), {a},
                             [](detail::Node& self) {
                               auto& pg = self.parents[0]->ensure_grad();
                               for (std::size_t i = 0; i < pg.size(); ++i)
                                 pg[i] += self.grad[i];
                             });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_rank2(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(m * n);
  const auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return Tensor::make_result(Shape{n, m}, std::move(out), {a},
                             [m, n](detail::Node& self) {
                               auto& pg = self.parents[0]->ensure_grad();
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < n; ++j)
                                   pg[i * n + j] += self.grad[j * m + i];
                             });
}

/// Horizontal concatenation of matrices with equal row counts.
inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  detail::require_rank2(a, "concat");
  detail::require_rank2(b, "concat");
  const std::size_t m = a.shape()[0];
  if (b.shape()[0] != m) detail::mismatch("concat", a, b);
  const std::size_t na = a.shape()[1], nb = b.shape()[1], n = na + nb;
  std::vector<double> out(m * n);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(&av[i * na], na, &out[i * n]);
    std::copy_n(&bv[i * nb], nb, &out[i * n + na]);
  }
  return Tensor::make_result(
      Shape{m, n}, std::move(out), {a, b}, [m, na, nb, n](detail::Node& self) {
        detail::Node& pa = *self.parents[0];
        detail::Node& pb = *self.parents[1];
        if (pa.requires_grad) {
          auto& g = pa.ensure_grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < na; ++j) g[i * na + j] += self.grad[i * n + j];
        }
        if (pb.requires_grad) {
          auto& g = pb.ensure_grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < nb; ++j)
              g[i * nb + j] += self.grad[i * n + na + j];
        }
      });
}

/// Vertical concatenation of matrices with equal column counts.
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    detail::require_rank2(p, "concat_rows");
    if (p.cols() != n) detail::mismatch("concat_rows", parts[0], p);
    m += p.rows();
  }
  std::vector<double> out;
  out.reserve(m * n);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return Tensor::make_result(Shape{m, n}, std::move(out), parts,
                             [](detail::Node& self) {
                               std::size_t offset = 0;
                               for (auto& p : self.parents) {
                                 if (p->requires_grad) {
                                   auto& g = p->ensure_grad();
                                   for (std::size_t i = 0; i < g.size(); ++i)
                                     g[i] += self.grad[offset + i];
                                 }
                                 offset += p->value.size();
                               }
                             });
}

/// Columns [begin, end) of a matrix.
inline Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  detail::require_rank2(a, "slice");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (begin > end || end > n) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") outside " + shape_string(a.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<double> out(m * w);
  const auto av = a.values();
  for (std::size_t i = 0; i < m; ++i) std::copy_n(&av[i * n + begin], w, &out[i * w]);
  return Tensor::make_result(Shape{m, w}, std::move(out), {a},
                             [m, n, w, begin](detail::Node& self) {
                               auto& g = self.parents[0]->ensure_grad();
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < w; ++j)
                                   g[i * n + begin + j] += self.grad[i * w + j];
                             });
}

/// Repeat a row vector ([n] or [1,n]) or a scalar into an [rows, n] matrix.
inline Tensor broadcast_rows(const Tensor& a, std::size_t rows) {
  const std::size_t n = a.size();
  if (!(a.rank() <= 1 || (a.rank() == 2 && a.shape()[0] == 1))) {
    throw ShapeError("broadcast: expected a row vector, got " +
                     shape_string(a.shape()));
  }
  std::vector<double> out(rows * n);
  const auto av = a.values();
  for (std::size_t i = 0; i < rows; ++i) std::copy(av.begin(), av.end(), &out[i * n]);
  return Tensor::make_result(Shape{rows, n}, std::move(out), {a},
                             [rows, n](detail::Node& self) {
                               auto& g = self.parents[0]->ensure_grad();
                               for (std::size_t i = 0; i < rows; ++i)
                                 for (std::size_t j = 0; j < n; ++j)
                                   g[j] += self.grad[i * n + j];
                             });
}

/// Rows [begin, end) of a matrix.
inline Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  detail::require_rank2(a, "slice_rows");
  const std::size_t n = a.shape()[1];
  if (begin > end || end > a.shape()[0]) {
    throw ShapeError("slice_rows: range outside " + shape_string(a.shape()));
  }
  std::vector<double> out(a.values().begin() + begin * n,
                          a.values().begin() + end * n);
  return Tensor::make_result(Shape{end - begin, n}, std::move(out), {a},
                             [begin, n](detail::Node& self) {
                               auto& g = self.parents[0]->ensure_grad();
                               for (std::size_t i = 0; i < self.grad.size(); ++i)
                                 g[begin * n + i] += self.grad[i];
                             });
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace mier
