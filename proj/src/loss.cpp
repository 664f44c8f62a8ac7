#include "dpot/loss.hpp"

#include <cmath>
#include <string>

#include "dpot/errors.hpp"

namespace dpot {

void DPOTConfig::validate() const {
  if (!std::isfinite(lambda) || lambda < 0.0 || lambda > 1.0)
    throw InputError("lambda must lie in [0, 1]");
  if (!ablation && (lambda == 0.0 || lambda == 1.0))
    throw InputError("lambda in {0, 1} is only allowed in ablation mode");
  if (plan_refresh < 1) throw InputError("plan refresh period must be >= 1");
  if (n_kappa < 1) throw InputError("n_kappa must be >= 1");
  if (batch_size < 2) throw InputError("batch size must be >= 2");
}

namespace {

// 1/(2N) sum_i |a_i - b_i|^2 where b is data.
Tensor half_mean_sq(const Tensor& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("mapped batch and reference batch differ in shape");
  const Tensor diff = sub(a, Tensor::constant(b));
  return affine(sum(square(diff)), 0.5 / static_cast<double>(a.rows()), 0.0);
}

void check_plan(const TransportPlan& plan, Eigen::Index n) {
  if (static_cast<Eigen::Index>(plan.size()) != n)
    throw InputError("plan size " + std::to_string(plan.size()) + " does not match batch size " +
                     std::to_string(n));
}

}  // namespace

Tensor transport_cost(const Tensor& mapped, const Matrix& source) {
  if (source.rows() == 0) throw InputError("transport cost of an empty batch");
  return half_mean_sq(mapped, source);
}

Tensor transport_cost(const MapNetwork& net, const Tensor& params, const ParticleBatch& x) {
  validate_batch(x, "transport_cost");
  return transport_cost(net.forward(Tensor::constant(x.points), params, x.condition), x.points);
}

Matrix permute_rows(const Matrix& target, const std::vector<std::size_t>& assignment) {
  Matrix out(static_cast<Eigen::Index>(assignment.size()), target.cols());
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(assignment[i]);
    if (j >= target.rows()) throw InputError("plan refers to a target row out of range");
    out.row(static_cast<Eigen::Index>(i)) = target.row(j);
  }
  return out;
}

Tensor dpot_loss(const Tensor& mapped, const Matrix& source, const Matrix& target,
                 const TransportPlan& plan, double lambda) {
  if (source.rows() == 0) throw InputError("dpot_loss on an empty batch");
  check_plan(plan, mapped.rows());
  if (target.rows() != mapped.rows()) throw InputError("source and target batch sizes differ");
  const Tensor transport = transport_cost(mapped, source);
  const Tensor matching = half_mean_sq(mapped, permute_rows(target, plan.assignment));
  return add(affine(sqrt_guarded(transport), lambda, 0.0), sqrt_guarded(matching));
}

Tensor dpot_loss(const MapNetwork& net, const Tensor& params, const ParticleBatch& x,
                 const ParticleBatch& y, const DPOTConfig& cfg, const TransportPlan& plan) {
  validate_batch(x, "dpot_loss source");
  validate_batch(y, "dpot_loss target");
  const Tensor mapped = net.forward(Tensor::constant(x.points), params, x.condition);
  return dpot_loss(mapped, x.points, y.points, plan, cfg.lambda);
}

Tensor conditional_dpot_loss(const MapNetwork& net, const Tensor& params,
                             std::span<const PlannedBatch> batches, const DPOTConfig& cfg) {
  if (batches.empty()) throw InputError("conditional_dpot_loss needs at least one batch");
  Tensor total = dpot_loss(net, params, batches[0].source, batches[0].target, cfg, batches[0].plan);
  for (std::size_t k = 1; k < batches.size(); ++k)
    total = add(total, dpot_loss(net, params, batches[k].source, batches[k].target, cfg,
                                 batches[k].plan));
  return affine(total, 1.0 / static_cast<double>(batches.size()), 0.0);
}

GapReport gap_decomposition(const Matrix& mapped, const Matrix& source, const Matrix& target,
                            double lambda) {
  if (mapped.rows() != source.rows() || mapped.cols() != source.cols())
    throw DimensionError("mapped batch and source batch differ in shape");
  GapReport r;
  r.w2_mapped_target = empirical_w2(mapped, target);
  r.w2_mapped_source = empirical_w2(mapped, source);
  r.w2_reference = empirical_w2(source, target);
  const double tc = 0.5 * (mapped - source).squaredNorm() / static_cast<double>(source.rows());
  r.transport_root = std::sqrt(tc);
  r.fresh_loss = lambda * r.transport_root + r.w2_mapped_target;
  r.eps1 = (1.0 - lambda) * r.w2_mapped_target;
  r.eps2 = lambda * (r.transport_root - r.w2_mapped_source);
  r.eps3 = lambda * (r.w2_mapped_source + r.w2_mapped_target - r.w2_reference);
  r.eps_total = r.fresh_loss - lambda * r.w2_reference;
  return r;
}

GapReport gap_decomposition(const MapNetwork& net, const ParticleBatch& x, const ParticleBatch& y,
                            double lambda) {
  validate_batch(x, "gap_decomposition source");
  validate_batch(y, "gap_decomposition target");
  return gap_decomposition(net.apply(x.points, x.condition), x.points, y.points, lambda);
}

CycleTerm cycle_term(const MapNetwork& map_a, const Tensor& params_a, const MapNetwork& map_b,
                     const Tensor& params_b, const ParticleBatch& x, const ParticleBatch& y,
                     const TransportPlan& plan, double lambda) {
  validate_batch(x, "cycle source");
  validate_batch(y, "cycle target");
  const Tensor mapped = map_a.forward(Tensor::constant(x.points), params_a, x.condition);
  const Tensor back = map_b.forward(mapped, params_b, x.condition);
  // half_mean_sq carries 1/(2N); the cycle residual is a plain mean.
  const Tensor residual = affine(half_mean_sq(back, x.points), 2.0, 0.0);
  CycleTerm term;
  term.residual = residual.item();
  term.total = add(dpot_loss(mapped, x.points, y.points, plan, lambda), residual);
  return term;
}

CycleLosses cycle_losses(const MapNetwork& fwd, const Tensor& fwd_params, const MapNetwork& inv,
                         const Tensor& inv_params, const ParticleBatch& x, const ParticleBatch& y,
                         const DPOTConfig& cfg, const TransportPlan& plan_fwd,
                         const TransportPlan& plan_inv) {
  CycleLosses out;
  out.forward = cycle_term(fwd, fwd_params, inv, inv_params, x, y, plan_fwd, cfg.lambda);
  out.inverse = cycle_term(inv, inv_params, fwd, fwd_params, y, x, plan_inv, cfg.lambda);
  return out;
}

}  // namespace dpot
