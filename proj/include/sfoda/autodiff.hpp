#pragma once

// Reverse-mode automatic differentiation over dense 2-D double arrays.
//
// A Value is a handle to a node of a dynamically built graph. Every op
// returns a new node that remembers its parents and a rule mapping the
// upstream gradient to parent gradients. backward() on a 1x1 root walks
// the graph in reverse topological order and adds d(root)/d(node) into
// grad() of every node that requires a gradient. Gradients accumulate
// across calls until zero_grad().

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sfoda/error.hpp"
#include "sfoda/matrix.hpp"

namespace sfoda::ad {

// Floor applied to every logarithm argument.
inline constexpr double kLogFloor = 1e-12;

struct Node;
using NodePtr = std::shared_ptr<Node>;

// Maps the upstream gradient to one gradient per parent. parent_grads arrive
// zero-initialised with the parents' shapes.
using BackwardRule = std::function<void(const Matrix& upstream, std::vector<Matrix>& parent_grads)>;

struct Node {
  Matrix data;
  Matrix grad;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  BackwardRule rule;
};

class Value {
 public:
  Value() = default;
  explicit Value(Matrix data, bool requires_grad = false) : node_(std::make_shared<Node>()) {
    node_->grad = Matrix(data.rows(), data.cols());
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Value constant(Matrix data) { return Value(std::move(data), false); }
  static Value parameter(Matrix data) { return Value(std::move(data), true); }

  const Matrix& data() const { return node_->data; }
  // Direct access for optimizers and tests. Does not invalidate the graph
  // structure but changes what later ops read.
  Matrix& mutable_data() { return node_->data; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() { return node_->grad; }

  std::size_t rows() const { return node_->data.rows(); }
  std::size_t cols() const { return node_->data.cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool valid() const { return static_cast<bool>(node_); }

  double item() const {
    if (rows() != 1 || cols() != 1) {
      throw ContractError("item() on non-scalar value of shape " + data().shape_string());
    }
    return node_->data[0];
  }

  void zero_grad() { node_->grad.fill(0.0); }

  const NodePtr& node() const { return node_; }

 private:
  explicit Value(NodePtr node) : node_(std::move(node)) {}
  friend Value make_value(Matrix, std::vector<Value>, BackwardRule);

  NodePtr node_;
};

inline Value make_value(Matrix data, std::vector<Value> parents, BackwardRule rule) {
  auto node = std::make_shared<Node>();
  node->grad = Matrix(data.rows(), data.cols());
  node->data = std::move(data);
  for (auto& p : parents) {
    node->requires_grad = node->requires_grad || p.requires_grad();
    node->parents.push_back(p.node());
  }
  if (node->requires_grad) node->rule = std::move(rule);
  return Value(std::move(node));
}

namespace detail {

inline void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shapes " + a.shape_string() + " and " +
                         b.shape_string() + " do not conform");
  }
}

// True when b is a 1xC row broadcast against the rows of a.
inline bool row_broadcast(const Matrix& a, const Matrix& b) {
  return b.rows() == 1 && a.rows() != 1 && b.cols() == a.cols();
}

}  // namespace detail

inline Value matmul(const Value& a, const Value& b) {
  const Matrix& A = a.data();
  const Matrix& B = b.data();
  if (A.cols() != B.rows()) {
    throw DimensionError("matmul: cannot multiply " + A.shape_string() + " by " +
                         B.shape_string());
  }
  return make_value(sfoda::matmul(A, B), {a, b},
                    [A, B](const Matrix& g, std::vector<Matrix>& pg) {
                      pg[0] = sfoda::matmul(g, transpose(B));
                      pg[1] = sfoda::matmul(transpose(A), g);
                    });
}

// Elementwise a + b. b may also be a 1xC row, broadcast over the rows of a.
inline Value add(const Value& a, const Value& b) {
  const Matrix& A = a.data();
  const Matrix& B = b.data();
  if (detail::row_broadcast(A, B)) {
    Matrix out = A;
    for (std::size_t i = 0; i < out.rows(); ++i)
      for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += B(0, j);
    return make_value(std::move(out), {a, b}, [](const Matrix& g, std::vector<Matrix>& pg) {
      pg[0] = g;
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) pg[1](0, j) += g(i, j);
    });
  }
  detail::require_same_shape("add", A, B);
  Matrix out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  return make_value(std::move(out), {a, b}, [](const Matrix& g, std::vector<Matrix>& pg) {
    pg[0] = g;
    pg[1] = g;
  });
}

inline Value sub(const Value& a, const Value& b) {
  detail::require_same_shape("sub", a.data(), b.data());
  Matrix out = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.data()[i];
  return make_value(std::move(out), {a, b}, [](const Matrix& g, std::vector<Matrix>& pg) {
    pg[0] = g;
    for (std::size_t i = 0; i < g.size(); ++i) pg[1][i] = -g[i];
  });
}

// Elementwise (Hadamard) product.
inline Value mul(const Value& a, const Value& b) {
  const Matrix& A = a.data();
  const Matrix& B = b.data();
  detail::require_same_shape("mul", A, B);
  Matrix out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  return make_value(std::move(out), {a, b}, [A, B](const Matrix& g, std::vector<Matrix>& pg) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      pg[0][i] = g[i] * B[i];
      pg[1][i] = g[i] * A[i];
    }
  });
}

inline Value scale(const Value& a, double factor) {
  Matrix out = a.data();
  for (auto& v : out.values()) v *= factor;
  return make_value(std::move(out), {a}, [factor](const Matrix& g, std::vector<Matrix>& pg) {
    for (std::size_t i = 0; i < g.size(); ++i) pg[0][i] = g[i] * factor;
  });
}

// Natural logarithm of max(x, kLogFloor). Clamped entries get zero gradient.
inline Value log(const Value& a) {
  const Matrix& A = a.data();
  Matrix out(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = std::log(std::max(A[i], kLogFloor));
  return make_value(std::move(out), {a}, [A](const Matrix& g, std::vector<Matrix>& pg) {
    for (std::size_t i = 0; i < g.size(); ++i) pg[0][i] = A[i] > kLogFloor ? g[i] / A[i] : 0.0;
  });
}

inline Value exp(const Value& a) {
  Matrix out = a.data();
  for (auto& v : out.values()) v = std::exp(v);
  Matrix saved = out;
  return make_value(std::move(out), {a}, [saved](const Matrix& g, std::vector<Matrix>& pg) {
    for (std::size_t i = 0; i < g.size(); ++i) pg[0][i] = g[i] * saved[i];
  });
}

inline Value relu(const Value& a) {
  const Matrix& A = a.data();
  Matrix out(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] > 0.0 ? A[i] : 0.0;
  return make_value(std::move(out), {a}, [A](const Matrix& g, std::vector<Matrix>& pg) {
    for (std::size_t i = 0; i < g.size(); ++i) pg[0][i] = A[i] > 0.0 ? g[i] : 0.0;
  });
}

// Sum of all entries, as a 1x1 value.
inline Value sum(const Value& a) {
  double total = 0.0;
  for (double v : a.data().values()) total += v;
  return make_value(Matrix(1, 1, total), {a}, [](const Matrix& g, std::vector<Matrix>& pg) {
    pg[0].fill(g[0]);
  });
}

inline Value mean(const Value& a) {
  const std::size_t n = a.data().size();
  if (n == 0) throw DimensionError("mean of empty value");
  double total = 0.0;
  for (double v : a.data().values()) total += v;
  return make_value(Matrix(1, 1, total / static_cast<double>(n)), {a},
                    [n](const Matrix& g, std::vector<Matrix>& pg) {
                      pg[0].fill(g[0] / static_cast<double>(n));
                    });
}

// Columns [begin, end).
inline Value slice_cols(const Value& a, std::size_t begin, std::size_t end) {
  const Matrix& A = a.data();
  if (begin > end || end > A.cols()) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of bounds for " + A.shape_string());
  }
  Matrix out(A.rows(), end - begin);
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = begin; j < end; ++j) out(i, j - begin) = A(i, j);
  return make_value(std::move(out), {a}, [begin, end](const Matrix& g, std::vector<Matrix>& pg) {
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = begin; j < end; ++j) pg[0](i, j) = g(i, j - begin);
  });
}

inline Value concat_cols(const Value& a, const Value& b) {
  const Matrix& A = a.data();
  const Matrix& B = b.data();
  if (A.rows() != B.rows()) {
    throw DimensionError("concat_cols: row counts differ, " + A.shape_string() + " and " +
                         B.shape_string());
  }
  const std::size_t ca = A.cols();
  Matrix out(A.rows(), ca + B.cols());
  for (std::size_t i = 0; i < A.rows(); ++i) {
    for (std::size_t j = 0; j < ca; ++j) out(i, j) = A(i, j);
    for (std::size_t j = 0; j < B.cols(); ++j) out(i, ca + j) = B(i, j);
  }
  return make_value(std::move(out), {a, b}, [ca](const Matrix& g, std::vector<Matrix>& pg) {
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < ca; ++j) pg[0](i, j) = g(i, j);
      for (std::size_t j = ca; j < g.cols(); ++j) pg[1](i, j - ca) = g(i, j);
    }
  });
}

inline Value transpose(const Value& a) {
  return make_value(sfoda::transpose(a.data()), {a},
                    [](const Matrix& g, std::vector<Matrix>& pg) { pg[0] = sfoda::transpose(g); });
}

// Row-wise softmax with max subtraction.
inline Value softmax_rows(const Value& z) {
  const Matrix& Z = z.data();
  if (!Z.all_finite()) throw NumericError("softmax_rows: non-finite input");
  Matrix out(Z.rows(), Z.cols());
  for (std::size_t i = 0; i < Z.rows(); ++i) {
    auto in = Z.row(i);
    auto o = out.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : in) mx = std::max(mx, v);
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (double& v : o) v /= total;
  }
  Matrix s = out;
  return make_value(std::move(out), {z}, [s](const Matrix& g, std::vector<Matrix>& pg) {
    for (std::size_t i = 0; i < s.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < s.cols(); ++j) dot += g(i, j) * s(i, j);
      for (std::size_t j = 0; j < s.cols(); ++j) pg[0](i, j) = s(i, j) * (g(i, j) - dot);
    }
  });
}

inline Value operator+(const Value& a, const Value& b) { return add(a, b); }
inline Value operator-(const Value& a, const Value& b) { return sub(a, b); }
inline Value operator*(double s, const Value& a) { return scale(a, s); }

// Accumulates d(root)/d(node) into grad() of every reachable node that
// requires a gradient.
inline void backward(const Value& root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw ContractError("backward: root must be 1x1, got " + root.data().shape_string());
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_map<Node*, bool> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  visited[root.node().get()] = true;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !visited[parent]) {
        visited[parent] = true;
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_map<Node*, Matrix> pending;
  pending[root.node().get()] = Matrix(1, 1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    auto found = pending.find(node);
    if (found == pending.end()) continue;
    const Matrix upstream = std::move(found->second);
    pending.erase(found);
    for (std::size_t i = 0; i < upstream.size(); ++i) node->grad[i] += upstream[i];
    if (!node->rule) continue;

    std::vector<Matrix> parent_grads;
    parent_grads.reserve(node->parents.size());
    for (const auto& p : node->parents) parent_grads.emplace_back(p->data.rows(), p->data.cols());
    node->rule(upstream, parent_grads);
    for (std::size_t k = 0; k < node->parents.size(); ++k) {
      Node* parent = node->parents[k].get();
      if (!parent->requires_grad) continue;
      auto [slot, inserted] = pending.try_emplace(parent, std::move(parent_grads[k]));
      if (!inserted) {
        for (std::size_t i = 0; i < slot->second.size(); ++i) slot->second[i] += parent_grads[k][i];
      }
    }
  }
}

inline void zero_grad(std::span<Value> values) {
  for (auto& v : values) v.zero_grad();
}

}  // namespace sfoda::ad
