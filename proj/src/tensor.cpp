#include "dpot/tensor.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "dpot/errors.hpp"

namespace dpot {

namespace {

std::string shape_of(const Tensor& t) {
  std::ostringstream os;
  os << t.rows() << "x" << t.cols();
  return os.str();
}

[[noreturn]] void shape_error(std::string_view op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_of(a) + " and " +
                       shape_of(b));
}

}  // namespace

Tensor Tensor::constant(Matrix value) {
  Tensor t;
  t.value_ = std::make_shared<const Matrix>(std::move(value));
  return t;
}

Tensor Tensor::scalar(double value) {
  Matrix m(1, 1);
  m(0, 0) = value;
  return constant(std::move(m));
}

double Tensor::item() const {
  if (!is_scalar()) throw DimensionError("item: tensor is " + shape_of(*this) + ", not 1x1");
  return (*value_)(0, 0);
}

Tensor Tape::push(Node node) {
  Tensor t;
  t.value_ = node.value;
  t.tape_ = this;
  t.node_ = nodes_.size();
  nodes_.push_back(std::move(node));
  return t;
}

Tensor Tape::variable(Matrix value) {
  if (consumed_) throw std::logic_error("Tape::variable: tape already consumed");
  Node n;
  n.value = std::make_shared<const Matrix>(std::move(value));
  return push(std::move(n));
}

Tensor Tape::record(std::string_view op, Matrix value, std::initializer_list<Tensor> inputs,
                    BackwardRule rule) {
  if (!value.allFinite()) {
    throw NumericError(std::string(op) + ": non-finite value in forward result");
  }
  Tape* tape = nullptr;
  for (const Tensor& in : inputs) {
    if (!in.tracked()) continue;
    if (tape != nullptr && tape != in.tape()) {
      throw std::logic_error(std::string(op) + ": inputs belong to different tapes");
    }
    tape = in.tape();
  }
  if (tape == nullptr) return Tensor::constant(std::move(value));
  if (tape->consumed_) throw std::logic_error(std::string(op) + ": tape already consumed");

  Node n;
  n.value = std::make_shared<const Matrix>(std::move(value));
  std::size_t k = 0;
  for (const Tensor& in : inputs) {
    n.inputs[k++] = in.tracked() ? static_cast<long>(in.node()) : -1;
  }
  n.rule = std::move(rule);
  return tape->push(std::move(n));
}

void Tape::backward(const Tensor& loss) {
  if (!loss.is_scalar()) {
    throw DimensionError("backward: loss must be 1x1, got " + shape_of(loss));
  }
  if (consumed_) throw std::logic_error("backward: tape already consumed");
  consumed_ = true;
  if (!loss.tracked()) return;  // constant loss: every gradient is zero
  if (loss.tape() != this) throw std::logic_error("backward: loss recorded on another tape");

  Node& root = nodes_[loss.node()];
  root.grad = Matrix::Ones(1, 1);
  root.has_grad = true;

  for (std::size_t idx = loss.node() + 1; idx-- > 0;) {
    Node& node = nodes_[idx];
    if (!node.has_grad || !node.rule) continue;
    GradSlots slots{nullptr, nullptr, nullptr};
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const long in = node.inputs[k];
      if (in < 0) continue;
      Node& src = nodes_[static_cast<std::size_t>(in)];
      if (!src.has_grad) {
        src.grad = Matrix::Zero(src.value->rows(), src.value->cols());
        src.has_grad = true;
      }
      slots[k] = &src.grad;
    }
    node.rule(node.grad, slots);
  }
}

Matrix Tape::grad(const Tensor& t) const {
  if (t.tape() != this) throw std::logic_error("grad: tensor is not on this tape");
  const Node& n = nodes_[t.node()];
  if (!n.has_grad) return Matrix::Zero(n.value->rows(), n.value->cols());
  return n.grad;
}

// --- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  Matrix out = a.value() * b.value();
  return Tape::record("matmul", std::move(out), {a, b},
                      [av = a.shared_value(), bv = b.shared_value()](const Matrix& g,
                                                                     GradSlots& in) {
                        if (in[0]) in[0]->noalias() += g * bv->transpose();
                        if (in[1]) in[1]->noalias() += av->transpose() * g;
                      });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("add", a, b);
  return Tape::record("add", a.value() + b.value(), {a, b}, [](const Matrix& g, GradSlots& in) {
    if (in[0]) *in[0] += g;
    if (in[1]) *in[1] += g;
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("sub", a, b);
  return Tape::record("sub", a.value() - b.value(), {a, b}, [](const Matrix& g, GradSlots& in) {
    if (in[0]) *in[0] += g;
    if (in[1]) *in[1] -= g;
  });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("hadamard", a, b);
  Matrix out = a.value().cwiseProduct(b.value());
  return Tape::record("hadamard", std::move(out), {a, b},
                      [av = a.shared_value(), bv = b.shared_value()](const Matrix& g,
                                                                     GradSlots& in) {
                        if (in[0]) *in[0] += g.cwiseProduct(*bv);
                        if (in[1]) *in[1] += g.cwiseProduct(*av);
                      });
}

Tensor affine(const Tensor& x, double alpha, double beta) {
  Matrix out = (alpha * x.value().array() + beta).matrix();
  return Tape::record("affine", std::move(out), {x}, [alpha](const Matrix& g, GradSlots& in) {
    if (in[0]) *in[0] += alpha * g;
  });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) shape_error("add_row", x, row);
  Matrix out = x.value().rowwise() + row.value().row(0);
  return Tape::record("add_row", std::move(out), {x, row}, [](const Matrix& g, GradSlots& in) {
    if (in[0]) *in[0] += g;
    if (in[1]) *in[1] += g.colwise().sum();
  });
}

Tensor square(const Tensor& x) {
  Matrix out = x.value().array().square().matrix();
  return Tape::record("square", std::move(out), {x},
                      [xv = x.shared_value()](const Matrix& g, GradSlots& in) {
                        if (in[0]) *in[0] += 2.0 * g.cwiseProduct(*xv);
                      });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  Matrix out = x.value().unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
  return Tape::record("leaky_relu", std::move(out), {x},
                      [xv = x.shared_value(), slope](const Matrix& g, GradSlots& in) {
                        if (!in[0]) return;
                        *in[0] += g.binaryExpr(*xv, [slope](double gv, double v) {
                          return v > 0.0 ? gv : slope * gv;
                        });
                      });
}

Tensor prelu(const Tensor& x, const Tensor& slope) {
  if (!slope.is_scalar()) shape_error("prelu", x, slope);
  const double a = slope.item();
  Matrix out = x.value().unaryExpr([a](double v) { return v > 0.0 ? v : a * v; });
  return Tape::record(
      "prelu", std::move(out), {x, slope},
      [xv = x.shared_value(), a](const Matrix& g, GradSlots& in) {
        if (in[0]) {
          *in[0] += g.binaryExpr(*xv, [a](double gv, double v) { return v > 0.0 ? gv : a * gv; });
        }
        if (in[1]) {
          const double ds =
              g.binaryExpr(*xv, [](double gv, double v) { return v > 0.0 ? 0.0 : gv * v; }).sum();
          (*in[1])(0, 0) += ds;
        }
      });
}

Tensor sum(const Tensor& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return Tape::record("sum", std::move(out), {x}, [](const Matrix& g, GradSlots& in) {
    if (in[0]) in[0]->array() += g(0, 0);
  });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.value().size());
  if (n == 0) throw DimensionError("mean: empty tensor");
  Matrix out(1, 1);
  out(0, 0) = x.value().sum() / n;
  return Tape::record("mean", std::move(out), {x}, [n](const Matrix& g, GradSlots& in) {
    if (in[0]) in[0]->array() += g(0, 0) / n;
  });
}

Tensor sqrt_guarded(const Tensor& x) {
  const double v = x.item();
  if (v < -kSqrtGuard) {
    throw DomainError("sqrt_guarded: negative argument " + std::to_string(v));
  }
  const double root = std::sqrt(std::max(v, kSqrtGuard));
  Matrix out(1, 1);
  out(0, 0) = root;
  return Tape::record("sqrt_guarded", std::move(out), {x}, [root](const Matrix& g, GradSlots& in) {
    if (in[0]) (*in[0])(0, 0) += g(0, 0) / (2.0 * root);
  });
}

Tensor slice(const Tensor& flat, Eigen::Index offset, Eigen::Index rows, Eigen::Index cols) {
  if (flat.rows() != 1 || offset < 0 || offset + rows * cols > flat.cols()) {
    throw DimensionError("slice: block [" + std::to_string(offset) + ", " +
                         std::to_string(offset + rows * cols) + ") outside " + shape_of(flat));
  }
  Matrix out = Eigen::Map<const Matrix>(flat.value().data() + offset, rows, cols);
  return Tape::record("slice", std::move(out), {flat},
                      [offset, n = rows * cols](const Matrix& g, GradSlots& in) {
                        if (!in[0]) return;
                        in[0]->block(0, offset, 1, n) +=
                            Eigen::Map<const Matrix>(g.data(), 1, n);
                      });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) shape_error("concat_cols", a, b);
  Matrix out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a.value();
  out.rightCols(b.cols()) = b.value();
  return Tape::record("concat_cols", std::move(out), {a, b},
                      [ca = a.cols(), cb = b.cols()](const Matrix& g, GradSlots& in) {
                        if (in[0]) *in[0] += g.leftCols(ca);
                        if (in[1]) *in[1] += g.rightCols(cb);
                      });
}

}  // namespace dpot
