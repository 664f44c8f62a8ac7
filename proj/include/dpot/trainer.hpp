#pragma once

// Mini-batch DPOT training. Every n_gamma steps each condition draws a fresh
// N-subset from its source and target pools and re-solves the exact plan
// from T(X) to Y; in between, plans stay frozen and only Adam steps run.

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpot/loss.hpp"
#include "dpot/nn.hpp"
#include "dpot/random.hpp"

namespace dpot {

struct TrainConfig {
  std::string experiment = "custom";
  DPOTConfig dpot;
  long steps = 1000;
  std::uint64_t seed = 0;
  double learning_rate = 1e-3;
  NetworkSpec network;
  /// Pool size N0 per condition.
  std::size_t pool_size = 20000;
  /// Steps between diagnostics; 0 means every plan refresh.
  long diagnostic_period = 0;
  /// Held-out source points per condition for the relative L2 error.
  std::size_t eval_size = 2000;
  /// Checkpoint every this many diagnostic periods (and at exit).
  long checkpoint_every = 10;
  /// Empty disables checkpoint files.
  std::filesystem::path checkpoint_dir;
  /// Adam steps fitting T(x) = x on source batches before the first plan;
  /// needs equal source and target dimensions.
  long warm_start_steps = 0;
  /// Solve the very first plans from X instead of T(X) to Y, so the untrained
  /// network's orientation is not locked into the coupling.
  bool first_plan_from_source = false;
  /// Workers for per-condition plan solves.
  int threads = 1;

  long diagnostic_every() const { return diagnostic_period > 0 ? diagnostic_period : dpot.plan_refresh; }
  /// Throws InputError naming the offending field.
  void validate() const;
};

/// Draws n points of one measure for the given condition values.
using ConditionalSampler = std::function<Matrix(std::span<const double> condition, std::size_t n, Rng& rng)>;
/// Ground-truth map for a condition.
using ExactMap = std::function<Matrix(const Matrix& x, std::span<const double> condition)>;

struct TrainingProblem {
  ConditionalSampler source;
  ConditionalSampler target;
  /// Optional; enables the relative L2 error column.
  ExactMap truth;
  /// Draws one condition vector; unset for unconditioned problems.
  std::function<std::vector<double>(Rng&)> draw_condition;
};

/// Source and target pools of one condition.
struct ConditionPool {
  std::vector<double> condition;
  Matrix source;
  Matrix target;
  /// Held-out source points used only for the error metric.
  Matrix eval;
};

/// Draws the n_kappa conditions once, then N0 source and target points and
/// the held-out evaluation set for each.
std::vector<ConditionPool> build_pools(const TrainingProblem& problem, const TrainConfig& cfg, Rng& rng);

struct MetricsRow {
  long step = 0;
  double loss = 0.0;
  /// Averaged over conditions; present on diagnostic steps only.
  std::optional<GapReport> gap;
  /// Present on diagnostic steps when a ground truth exists.
  std::optional<double> rel_l2;
  double seconds = 0.0;
};

/// One line per row; gap and error fields are left empty when absent.
inline constexpr const char* kMetricsHeader = "step,loss,eps1,eps2,eps3,eps_total,rel_l2,seconds";
void write_metrics_csv(std::ostream& os, std::span<const MetricsRow> rows);
void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows);

/// Test and instrumentation hooks.
struct TrainHooks {
  /// Sees (and may modify) the gradient before each optimizer step.
  std::function<void(long step, Vector& grad)> on_gradient;
};

struct TrainResult {
  MapNetwork net;
  std::vector<MetricsRow> metrics;
  double final_learning_rate = 0.0;
  int recoveries = 0;
  std::vector<std::filesystem::path> checkpoints;
};

/// Trains a fresh network on the pools. A non-finite loss or gradient rolls
/// back to the last checkpoint with half the learning rate; a second one
/// throws TrainingAbort. Lower-bound or stale-plan violations throw
/// InvariantError. The last metrics row (step == steps) holds the final
/// diagnostics.
TrainResult train(const TrainConfig& cfg, std::span<const ConditionPool> pools, const ExactMap& truth = {},
                  const TrainHooks& hooks = {});
TrainResult train(const TrainConfig& cfg, const TrainingProblem& problem, const TrainHooks& hooks = {});

/// |T - T_ref|_{L2(emp)} / |T_ref|_{L2(emp)}; throws DomainError when the
/// reference has zero norm.
double relative_l2_error(const Matrix& predicted, const Matrix& reference);
double relative_l2_error(const MapNetwork& net, const ExactMap& truth, const Matrix& x,
                         std::span<const double> condition = {});

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

// --- inverse maps --------------------------------------------------------------

struct CycleRow {
  long step = 0;
  double loss_forward = 0.0;
  double loss_inverse = 0.0;
  double residual_forward = 0.0;  // mean |T_inv(T_fwd(x)) - x|^2
  double residual_inverse = 0.0;  // mean |T_fwd(T_inv(y)) - y|^2
  double seconds = 0.0;
};

inline constexpr const char* kCycleHeader = "step,loss_fwd,loss_inv,residual_fwd,residual_inv,seconds";
void write_cycle_csv(std::ostream& os, std::span<const CycleRow> rows);

struct InverseResult {
  MapNetwork forward;
  MapNetwork inverse;
  std::vector<CycleRow> metrics;
};

/// Alternates one Adam step on L_fwd (forward parameters only) with one on
/// L_inv (inverse parameters only). Forward and inverse plans share the
/// refresh schedule. warm_start_steps fits both maps to the identity first.
/// Non-finite values follow the same recovery policy as train.
InverseResult train_inverse(const TrainConfig& cfg, std::span<const ConditionPool> pools,
                            const TrainHooks& hooks = {});

}  // namespace dpot
