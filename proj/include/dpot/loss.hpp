#pragma once

// DPOT objective and diagnostics.
//
// For a map T, source batch X and target batch Y (N points each):
//   transport cost   I(T)  = 1/(2N) sum_i |x_i - T(x_i)|^2
//   matching cost    M(T)  = 1/(2N) sum_i |T(x_i) - y_sigma(i)|^2
//   loss             P(T)  = lambda sqrt(I(T)) + sqrt(M(T))
// where sigma is an optimal assignment between T(X) and Y. Between plan
// refreshes sigma is frozen data; no gradient flows through it.

#include <span>
#include <vector>

#include "dpot/discrete_ot.hpp"
#include "dpot/nn.hpp"
#include "dpot/particles.hpp"
#include "dpot/tensor.hpp"

namespace dpot {

struct DPOTConfig {
  double lambda = 0.3;
  int plan_refresh = 50;  // n_gamma
  int n_kappa = 1;
  int batch_size = 1000;  // N
  /// Permits lambda in {0, 1}; such runs are flagged as ablations.
  bool ablation = false;

  /// Throws InputError when an invariant is violated.
  void validate() const;
};

/// Optimality-gap decomposition evaluated with fresh exact plans.
struct GapReport {
  double eps1 = 0.0;  // (1 - lambda) W2(T(X), Y)
  double eps2 = 0.0;  // lambda (sqrt(I(T)) - W2(T(X), X))
  double eps3 = 0.0;  // lambda (W2(T(X), X) + W2(T(X), Y) - W2(X, Y))
  double eps_total = 0.0;  // P_fresh(T) - lambda W2(X, Y)
  double w2_reference = 0.0;  // W2(X, Y)
  double w2_mapped_target = 0.0;  // W2(T(X), Y)
  double w2_mapped_source = 0.0;  // W2(T(X), X)
  double transport_root = 0.0;  // sqrt(I(T))
  double fresh_loss = 0.0;  // lambda sqrt(I(T)) + W2(T(X), Y)
};

/// I(T) for mapped = T(X) as a differentiable scalar.
Tensor transport_cost(const Tensor& mapped, const Matrix& source);
Tensor transport_cost(const MapNetwork& net, const Tensor& params, const ParticleBatch& x);

/// Rows of `target` reordered so that row i is target[assignment[i]].
Matrix permute_rows(const Matrix& target, const std::vector<std::size_t>& assignment);

/// lambda sqrt(I) + sqrt(M) with a frozen plan from T(X) to Y.
Tensor dpot_loss(const Tensor& mapped, const Matrix& source, const Matrix& target,
                 const TransportPlan& plan, double lambda);
Tensor dpot_loss(const MapNetwork& net, const Tensor& params, const ParticleBatch& x,
                 const ParticleBatch& y, const DPOTConfig& cfg, const TransportPlan& plan);

struct PlannedBatch {
  ParticleBatch source;
  ParticleBatch target;
  TransportPlan plan;
};

/// Mean of dpot_loss over the kappa-batches.
Tensor conditional_dpot_loss(const MapNetwork& net, const Tensor& params,
                             std::span<const PlannedBatch> batches, const DPOTConfig& cfg);

/// Runs three exact solves: T(X)<->Y, T(X)<->X and X<->Y.
GapReport gap_decomposition(const Matrix& mapped, const Matrix& source, const Matrix& target,
                            double lambda);
GapReport gap_decomposition(const MapNetwork& net, const ParticleBatch& x, const ParticleBatch& y,
                            double lambda);

/// One direction of the cycle objective:
///   total    = dpot_loss(T_a; X -> Y) + residual
///   residual = (1/N) sum_i |T_b(T_a(x_i)) - x_i|^2
struct CycleTerm {
  Tensor total;
  double residual = 0.0;
};

/// Forward direction uses (T_fwd, X, Y, plan_fwd); swap the roles for the
/// inverse direction. Whichever parameter tensor is tracked receives the
/// gradient; the other network acts as a constant.
CycleTerm cycle_term(const MapNetwork& map_a, const Tensor& params_a, const MapNetwork& map_b,
                     const Tensor& params_b, const ParticleBatch& x, const ParticleBatch& y,
                     const TransportPlan& plan, double lambda);

struct CycleLosses {
  CycleTerm forward;
  CycleTerm inverse;
};

CycleLosses cycle_losses(const MapNetwork& fwd, const Tensor& fwd_params, const MapNetwork& inv,
                         const Tensor& inv_params, const ParticleBatch& x, const ParticleBatch& y,
                         const DPOTConfig& cfg, const TransportPlan& plan_fwd,
                         const TransportPlan& plan_inv);

}  // namespace dpot
