#include "dpot/nn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dpot/errors.hpp"

namespace dpot {

std::string_view to_string(Architecture arch) {
  switch (arch) {
    case Architecture::mlp: return "mlp";
    case Architecture::modified_mlp: return "modified-mlp";
    case Architecture::resnet: return "resnet";
  }
  return "unknown";
}

Architecture parse_architecture(std::string_view name) {
  if (name == "mlp") return Architecture::mlp;
  if (name == "modified-mlp" || name == "modified_mlp") return Architecture::modified_mlp;
  if (name == "resnet") return Architecture::resnet;
  throw InputError("unknown architecture '" + std::string(name) + "'");
}

std::size_t parameter_count(const NetworkSpec& s) {
  const std::size_t din = static_cast<std::size_t>(s.d_in);
  const std::size_t dout = static_cast<std::size_t>(s.d_out);
  const std::size_t w = static_cast<std::size_t>(s.width);
  const std::size_t depth = static_cast<std::size_t>(s.depth);
  switch (s.arch) {
    case Architecture::mlp:
      return (din * w + w) + (depth - 1) * (w * w + w) + (w * dout + dout);
    case Architecture::modified_mlp:
      return 2 * (din * w + w) + (din * w + w) + (depth - 1) * (w * w + w) + (w * dout + dout);
    case Architecture::resnet:
      return (din * w + w) + depth * static_cast<std::size_t>(s.block_layers) * (w * w + w + 1) +
             (w * dout + dout);
  }
  return 0;
}

Matrix xavier_init(int n_in, int n_out, Rng& rng) {
  if (n_in <= 0 || n_out <= 0) throw DimensionError("xavier_init: dimensions must be positive");
  const double sigma = 1.0 / std::sqrt(0.5 * (n_in + n_out));
  std::normal_distribution<double> normal(0.0, sigma);
  Matrix w(n_in, n_out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng);
  return w;
}

namespace {

void validate(const NetworkSpec& s) {
  if (s.d_in <= 0 || s.d_out <= 0 || s.width <= 0 || s.depth <= 0) {
    throw DimensionError("network dimensions must be positive");
  }
  if (s.arch == Architecture::resnet && s.block_layers <= 0) {
    throw DimensionError("resnet blocks need at least one dense layer");
  }
}

}  // namespace

MapNetwork::MapNetwork(const NetworkSpec& spec) : spec_(spec) {
  validate(spec_);
  build_layout();
  params_ = Vector::Zero(static_cast<Eigen::Index>(parameter_count(spec_)));
}

MapNetwork::MapNetwork(const NetworkSpec& spec, Rng& rng) : MapNetwork(spec) {
  for (const Slot& s : layout_) {
    const bool is_weight = s.name.ends_with(".weight");
    const bool is_slope = s.name.ends_with(".slope");
    if (is_weight) {
      const Matrix w = xavier_init(static_cast<int>(s.rows), static_cast<int>(s.cols), rng);
      params_.segment(s.offset, s.rows * s.cols) = Eigen::Map<const Vector>(w.data(), w.size());
    } else if (is_slope) {
      params_[s.offset] = spec_.prelu_slope;
    }
  }
}

void MapNetwork::build_layout() {
  layout_.clear();
  Eigen::Index offset = 0;
  auto add = [&](std::string name, Eigen::Index rows, Eigen::Index cols) {
    layout_.push_back({std::move(name), offset, rows, cols});
    offset += rows * cols;
  };
  auto dense = [&](const std::string& name, Eigen::Index in, Eigen::Index out) {
    add(name + ".weight", in, out);
    add(name + ".bias", 1, out);
  };
  const Eigen::Index w = spec_.width;
  switch (spec_.arch) {
    case Architecture::mlp:
      for (int l = 0; l < spec_.depth; ++l) dense("hidden" + std::to_string(l), l == 0 ? spec_.d_in : w, w);
      break;
    case Architecture::modified_mlp:
      dense("gate_u", spec_.d_in, w);
      dense("gate_v", spec_.d_in, w);
      for (int l = 0; l < spec_.depth; ++l) dense("hidden" + std::to_string(l), l == 0 ? spec_.d_in : w, w);
      break;
    case Architecture::resnet:
      dense("in", spec_.d_in, w);
      for (int b = 0; b < spec_.depth; ++b) {
        for (int k = 0; k < spec_.block_layers; ++k) {
          const std::string name = "block" + std::to_string(b) + ".layer" + std::to_string(k);
          dense(name, w, w);
          add(name + ".slope", 1, 1);
        }
      }
      break;
  }
  dense("out", w, spec_.d_out);
}

std::string MapNetwork::locate(std::size_t index) const {
  const auto i = static_cast<Eigen::Index>(index);
  for (const Slot& s : layout_) {
    if (i >= s.offset && i < s.offset + s.rows * s.cols) {
      std::ostringstream os;
      os << s.name << "[" << (i - s.offset) << "]";
      return os.str();
    }
  }
  return "<out of range>";
}

const MapNetwork::Slot& MapNetwork::slot(std::string_view name) const {
  const auto it = std::find_if(layout_.begin(), layout_.end(),
                               [&](const Slot& s) { return s.name == name; });
  if (it == layout_.end()) throw InputError("no parameter slot named '" + std::string(name) + "'");
  return *it;
}

Tensor MapNetwork::parameter_tensor() const {
  return Tensor::constant(Eigen::Map<const Matrix>(params_.data(), 1, params_.size()));
}

Tensor MapNetwork::weight(const Tensor& p, std::size_t slot) const {
  const Slot& s = layout_[slot];
  return dpot::slice(p, s.offset, s.rows, s.cols);
}

Tensor MapNetwork::forward(const Tensor& x, const Tensor& params,
                           std::span<const double> condition) const {
  if (params.rows() != 1 || params.cols() != params_.size()) {
    throw DimensionError("forward: parameter tensor has " + std::to_string(params.cols()) +
                         " entries, network expects " + std::to_string(params_.size()));
  }
  const auto cond = static_cast<Eigen::Index>(condition.size());
  if (x.cols() + cond != spec_.d_in) {
    throw DimensionError("forward: input has " + std::to_string(x.cols()) + " columns plus " +
                         std::to_string(cond) + " condition values, network expects " +
                         std::to_string(spec_.d_in));
  }
  Tensor input = x;
  if (cond > 0) {
    Matrix c(x.rows(), cond);
    for (Eigen::Index j = 0; j < cond; ++j) c.col(j).setConstant(condition[static_cast<std::size_t>(j)]);
    input = concat_cols(x, Tensor::constant(std::move(c)));
  }
  switch (spec_.arch) {
    case Architecture::mlp: return forward_mlp(input, params);
    case Architecture::modified_mlp: return forward_modified_mlp(input, params);
    case Architecture::resnet: return forward_resnet(input, params);
  }
  return input;
}

Tensor MapNetwork::forward_mlp(const Tensor& x, const Tensor& p) const {
  std::size_t k = 0;
  Tensor h = x;
  for (int l = 0; l < spec_.depth; ++l) {
    h = leaky_relu(add_row(matmul(h, weight(p, k)), weight(p, k + 1)), spec_.relu_slope);
    k += 2;
  }
  return add_row(matmul(h, weight(p, k)), weight(p, k + 1));
}

// Gates U and V come from the stack input and are shared by every hidden
// layer; each layer blends them with its own Z = relu(H W + b):
//   H <- Z * U + (1 - Z) * V = V + Z * (U - V).
Tensor MapNetwork::forward_modified_mlp(const Tensor& x, const Tensor& p) const {
  const double s = spec_.relu_slope;
  const Tensor u = leaky_relu(add_row(matmul(x, weight(p, 0)), weight(p, 1)), s);
  const Tensor v = leaky_relu(add_row(matmul(x, weight(p, 2)), weight(p, 3)), s);
  const Tensor u_minus_v = u - v;
  std::size_t k = 4;
  Tensor h = x;
  for (int l = 0; l < spec_.depth; ++l) {
    const Tensor z = leaky_relu(add_row(matmul(h, weight(p, k)), weight(p, k + 1)), s);
    h = v + hadamard(z, u_minus_v);
    k += 2;
  }
  return add_row(matmul(h, weight(p, k)), weight(p, k + 1));
}

Tensor MapNetwork::forward_resnet(const Tensor& x, const Tensor& p) const {
  Tensor h = add_row(matmul(x, weight(p, 0)), weight(p, 1));
  std::size_t k = 2;
  for (int b = 0; b < spec_.depth; ++b) {
    Tensor inner = h;
    for (int l = 0; l < spec_.block_layers; ++l) {
      inner = prelu(add_row(matmul(inner, weight(p, k)), weight(p, k + 1)), weight(p, k + 2));
      k += 3;
    }
    h = h + inner;
  }
  return add_row(matmul(h, weight(p, k)), weight(p, k + 1));
}

Matrix MapNetwork::infer(const Matrix& input) const {
  const auto view = [this](std::size_t k) {
    const Slot& s = layout_[k];
    return Eigen::Map<const Matrix>(params_.data() + s.offset, s.rows, s.cols);
  };
  const auto affine = [&view](const Matrix& h, std::size_t k) {
    Matrix out = h * view(k);
    out.rowwise() += view(k + 1).row(0);
    return out;
  };
  const auto leaky = [](Matrix& m, double a) { m = m.unaryExpr([a](double v) { return v > 0.0 ? v : a * v; }); };

  switch (spec_.arch) {
    case Architecture::mlp: {
      std::size_t k = 0;
      Matrix h = input;
      for (int l = 0; l < spec_.depth; ++l, k += 2) {
        h = affine(h, k);
        leaky(h, spec_.relu_slope);
      }
      return affine(h, k);
    }
    case Architecture::modified_mlp: {
      Matrix u = affine(input, 0), v = affine(input, 2);
      leaky(u, spec_.relu_slope);
      leaky(v, spec_.relu_slope);
      const Matrix u_minus_v = u - v;
      std::size_t k = 4;
      Matrix h = input;
      for (int l = 0; l < spec_.depth; ++l, k += 2) {
        Matrix z = affine(h, k);
        leaky(z, spec_.relu_slope);
        z = z.cwiseProduct(u_minus_v);
        h = v + z;
      }
      return affine(h, k);
    }
    case Architecture::resnet: {
      Matrix h = affine(input, 0);
      std::size_t k = 2;
      for (int b = 0; b < spec_.depth; ++b) {
        Matrix inner = h;
        for (int l = 0; l < spec_.block_layers; ++l, k += 3) {
          inner = affine(inner, k);
          leaky(inner, view(k + 2)(0, 0));
        }
        h += inner;
      }
      return affine(h, k);
    }
  }
  return input;
}

Matrix MapNetwork::apply(const Matrix& x, std::span<const double> condition) const {
  constexpr Eigen::Index kChunk = 1024;
  const auto cond = static_cast<Eigen::Index>(condition.size());
  if (x.cols() + cond != spec_.d_in) {
    throw DimensionError("apply: input has " + std::to_string(x.cols()) + " columns plus " +
                         std::to_string(cond) + " condition values, network expects " +
                         std::to_string(spec_.d_in));
  }
  Matrix out(x.rows(), spec_.d_out);
  Matrix input(std::min(kChunk, x.rows()), spec_.d_in);
  for (Eigen::Index j = 0; j < cond; ++j) input.col(x.cols() + j).setConstant(condition[static_cast<std::size_t>(j)]);
  for (Eigen::Index r = 0; r < x.rows(); r += kChunk) {
    const Eigen::Index n = std::min(kChunk, x.rows() - r);
    if (n != input.rows()) input.conservativeResize(n, Eigen::NoChange);
    input.leftCols(x.cols()) = x.middleRows(r, n);
    out.middleRows(r, n) = infer(input);
  }
  return out;
}

void adam_step(AdamState& st, Vector& params, const Vector& grad, const ParameterLocator& locate) {
  if (grad.size() != params.size() || st.m.size() != params.size() ||
      st.v.size() != params.size()) {
    throw DimensionError("adam_step: parameter, gradient and moment sizes differ");
  }
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      std::ostringstream os;
      os << "adam_step: non-finite gradient at step " << (st.step + 1) << ", parameter "
         << (locate ? locate(static_cast<std::size_t>(i)) : std::to_string(i));
      throw NumericError(os.str());
    }
  }
  ++st.step;
  st.m = st.beta1 * st.m + (1.0 - st.beta1) * grad;
  st.v = st.beta2 * st.v + (1.0 - st.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  params.array() -= st.lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + st.eps);
}

}  // namespace dpot
