#pragma once

// Dense 2-D tensors with a reverse-mode tape.
//
// Every tensor is a row-major matrix of doubles; scalars are 1x1. A tensor
// either belongs to a Tape (it is a variable or the result of an op with at
// least one tracked input) or is a constant. Ops on constants only are not
// recorded, so inference runs without building a graph.

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace dpot {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

class Tape;

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Matrix value);
  static Tensor scalar(double value);

  const Matrix& value() const { return *value_; }
  const std::shared_ptr<const Matrix>& shared_value() const { return value_; }
  Eigen::Index rows() const { return value_->rows(); }
  Eigen::Index cols() const { return value_->cols(); }
  bool is_scalar() const { return rows() == 1 && cols() == 1; }
  /// Value of a 1x1 tensor.
  double item() const;

  bool tracked() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t node() const { return node_; }

 private:
  friend class Tape;
  std::shared_ptr<const Matrix> value_;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

/// Gradient slots handed to a backward rule, one per op input; null when that
/// input is not tracked.
using GradSlots = std::array<Matrix*, 3>;
using BackwardRule = std::function<void(const Matrix& upstream, GradSlots& inputs)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers a leaf whose gradient is accumulated by backward().
  Tensor variable(Matrix value);

  /// Records an op result. Inputs that are constants get no gradient slot.
  /// Used by the op implementations; the result is constant when no input is
  /// tracked on this tape.
  static Tensor record(std::string_view op, Matrix value, std::initializer_list<Tensor> inputs,
                       BackwardRule rule);

  /// Propagates d(loss)/d(node) to every node. The tape is consumed: a second
  /// call throws.
  void backward(const Tensor& loss);

  /// Gradient of the last backward() loss with respect to a tensor on this
  /// tape. Nodes that the loss does not depend on have zero gradient.
  Matrix grad(const Tensor& t) const;

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    std::shared_ptr<const Matrix> value;
    std::array<long, 3> inputs{-1, -1, -1};
    BackwardRule rule;
    Matrix grad;
    bool has_grad = false;
  };
  Tensor push(Node node);

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// --- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise product.
Tensor hadamard(const Tensor& a, const Tensor& b);
/// alpha * x + beta, elementwise.
Tensor affine(const Tensor& x, double alpha, double beta);
/// x (N x k) plus a 1 x k row added to every row.
Tensor add_row(const Tensor& x, const Tensor& row);
Tensor square(const Tensor& x);
/// max(x, 0) + slope * min(x, 0); slope is a fixed constant.
Tensor leaky_relu(const Tensor& x, double slope = 0.0);
/// Parametric ReLU with a trainable 1x1 slope.
Tensor prelu(const Tensor& x, const Tensor& slope);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// sqrt(max(x, kSqrtGuard)) for a scalar x >= -kSqrtGuard.
Tensor sqrt_guarded(const Tensor& x);
/// Contiguous block of a 1 x P row reshaped to rows x cols.
Tensor slice(const Tensor& flat, Eigen::Index offset, Eigen::Index rows, Eigen::Index cols);
/// [a | b] column concatenation; rows must agree.
Tensor concat_cols(const Tensor& a, const Tensor& b);

inline constexpr double kSqrtGuard = 1e-12;

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(double s, const Tensor& x) { return affine(x, s, 0.0); }

}  // namespace dpot
