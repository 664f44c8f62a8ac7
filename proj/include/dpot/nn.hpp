#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dpot/random.hpp"
#include "dpot/tensor.hpp"

namespace dpot {

enum class Architecture { mlp, modified_mlp, resnet };

std::string_view to_string(Architecture arch);
/// Parses "mlp", "modified-mlp" or "resnet"; throws InputError otherwise.
Architecture parse_architecture(std::string_view name);

struct NetworkSpec {
  Architecture arch = Architecture::mlp;
  int d_in = 2;  // includes trailing conditioning coordinates
  int d_out = 2;
  int width = 32;
  /// Hidden layers for mlp / modified-mlp, residual blocks for resnet.
  int depth = 3;
  /// Dense layers inside each residual block (resnet only).
  int block_layers = 2;
  /// Negative slope of the hidden ReLU (mlp / modified-mlp); 0 is plain ReLU.
  double relu_slope = 0.0;
  /// Initial PReLU slope of every residual layer.
  double prelu_slope = -0.25;

  bool operator==(const NetworkSpec&) const = default;
};

/// Closed-form parameter count of an architecture.
std::size_t parameter_count(const NetworkSpec& spec);

/// Xavier (Glorot) normal draw: entries i.i.d. N(0, s^2) with
/// s = 1 / sqrt((n_in + n_out) / 2).
Matrix xavier_init(int n_in, int n_out, Rng& rng);

/// A parameterised map T_theta : R^{d_in} -> R^{d_out} stored as one flat
/// parameter vector; layers are views (slices) into it.
class MapNetwork {
 public:
  struct Slot {
    std::string name;
    Eigen::Index offset = 0;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
  };

  /// Xavier-initialised weights, zero biases, PReLU slopes at spec.prelu_slope.
  MapNetwork(const NetworkSpec& spec, Rng& rng);
  /// All-zero parameters (slopes included); callers fill them in.
  explicit MapNetwork(const NetworkSpec& spec);

  const NetworkSpec& spec() const { return spec_; }
  std::size_t size() const { return static_cast<std::size_t>(params_.size()); }
  Vector& parameters() { return params_; }
  const Vector& parameters() const { return params_; }
  const std::vector<Slot>& layout() const { return layout_; }
  /// Name of the slot that owns flat parameter index i.
  std::string locate(std::size_t index) const;
  /// Finds a slot by name ("hidden0.weight", "block1.layer0.slope", ...).
  const Slot& slot(std::string_view name) const;

  /// Differentiable forward pass. `params` is a 1 x P tensor (tracked when
  /// gradients are wanted); `x` has d_in - condition.size() columns and the
  /// condition values are appended to every row.
  Tensor forward(const Tensor& x, const Tensor& params, std::span<const double> condition = {}) const;

  /// Inference with the stored parameters; processed in row chunks.
  Matrix apply(const Matrix& x, std::span<const double> condition = {}) const;

  /// Flat parameters as a 1 x P constant tensor.
  Tensor parameter_tensor() const;

 private:
  void build_layout();
  Tensor forward_mlp(const Tensor& x, const Tensor& p) const;
  Tensor forward_modified_mlp(const Tensor& x, const Tensor& p) const;
  Tensor forward_resnet(const Tensor& x, const Tensor& p) const;
  Tensor weight(const Tensor& p, std::size_t slot) const;
  /// Tape-free forward pass on inputs that already carry the condition columns.
  Matrix infer(const Matrix& input) const;

  NetworkSpec spec_;
  Vector params_;
  std::vector<Slot> layout_;
};

// --- Adam --------------------------------------------------------------------

struct AdamState {
  Vector m;
  Vector v;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n, double learning_rate = 1e-3)
      : m(Vector::Zero(static_cast<Eigen::Index>(n))),
        v(Vector::Zero(static_cast<Eigen::Index>(n))),
        lr(learning_rate) {}
};

/// Maps a flat parameter index to a human-readable location for diagnostics.
using ParameterLocator = std::function<std::string(std::size_t)>;

/// One bias-corrected Adam update of `params` in place. A non-finite gradient
/// throws NumericError naming the step and the offending parameter.
void adam_step(AdamState& state, Vector& params, const Vector& grad,
               const ParameterLocator& locate = {});

// --- checkpoints ---------------------------------------------------------------

/// Binary checkpoint: 16-byte prefix ("DPOTCKPT", u32 version, u32 header
/// bytes), architecture header, then the flat parameters as little-endian
/// IEEE-754 doubles.
void save_checkpoint(const std::filesystem::path& path, const MapNetwork& net);
MapNetwork load_checkpoint(const std::filesystem::path& path);

}  // namespace dpot
