#include <cmath>
#include <vector>

#include "doctest.h"
#include "dpot/errors.hpp"
#include "dpot/loss.hpp"
#include "test_support.hpp"

using namespace dpot;
using dpot::testing::central_difference;
using dpot::testing::max_relative_error;
using dpot::testing::uniform_matrix;

namespace {

// The guarded square root floors each zero cost term at sqrt(1e-12).
const double kFloor = std::sqrt(kSqrtGuard);

ParticleBatch batch(Matrix points, SampleSource src = SampleSource::mu) {
  ParticleBatch b;
  b.points = std::move(points);
  b.source = src;
  return b;
}

TransportPlan identity_plan(std::size_t n) {
  TransportPlan p;
  p.assignment.resize(n);
  for (std::size_t i = 0; i < n; ++i) p.assignment[i] = i;
  return p;
}

// A network that is exactly the identity on R^2: mlp with one hidden layer
// of width 4 computing relu(x), relu(-x), then out = relu(x) - relu(-x).
MapNetwork identity_network() {
  MapNetwork net({Architecture::mlp, 2, 2, 4, 1});
  Vector& p = net.parameters();
  Matrix w(2, 4);
  w << 1, -1, 0, 0, 0, 0, 1, -1;
  Matrix o(4, 2);
  o << 1, 0, -1, 0, 0, 1, 0, -1;
  const auto& hw = net.slot("hidden0.weight");
  const auto& ow = net.slot("out.weight");
  p.segment(hw.offset, 8) = Eigen::Map<const Vector>(w.data(), 8);
  p.segment(ow.offset, 8) = Eigen::Map<const Vector>(o.data(), 8);
  return net;
}

}  // namespace

TEST_CASE("config validation") {
  DPOTConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.lambda = 1.0;
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg.ablation = true;
  CHECK_NOTHROW(cfg.validate());
  cfg.lambda = 1.2;
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg = DPOTConfig{};
  cfg.plan_refresh = 0;
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg = DPOTConfig{};
  cfg.batch_size = 1;
  CHECK_THROWS_AS(cfg.validate(), InputError);
}

TEST_CASE("transport cost examples") {
  Rng rng = make_rng(1);
  const Matrix x = uniform_matrix(16, 2, rng);
  CHECK(transport_cost(Tensor::constant(x), x).item() == 0.0);

  Matrix origin = Matrix::Zero(1, 2);
  Matrix mapped(1, 2);
  mapped << 3, 4;
  CHECK(transport_cost(Tensor::constant(mapped), origin).item() == 12.5);

  const MapNetwork id = identity_network();
  CHECK(transport_cost(id, id.parameter_tensor(), batch(x)).item() == 0.0);
}

TEST_CASE("transport cost gradient matches finite differences") {
  Rng rng = make_rng(2);
  MapNetwork net({Architecture::mlp, 2, 2, 8, 2}, rng);
  const ParticleBatch x = batch(uniform_matrix(16, 2, rng));
  const Vector theta = net.parameters();
  Tape tape;
  const Tensor p = tape.variable(Eigen::Map<const Matrix>(theta.data(), 1, theta.size()));
  tape.backward(transport_cost(net, p, x));
  const Matrix g = tape.grad(p);
  const Vector numeric = central_difference(
      [&](const Vector& v) {
        return transport_cost(net, Tensor::constant(Eigen::Map<const Matrix>(v.data(), 1, v.size())), x).item();
      },
      theta);
  CHECK(max_relative_error(Eigen::Map<const Vector>(g.data(), g.size()), numeric) < 1e-4);
}

TEST_CASE("dpot loss reductions") {
  Rng rng = make_rng(3);
  const Matrix x = uniform_matrix(20, 2, rng);
  const Matrix y = uniform_matrix(20, 2, rng);
  const double lambda = 0.3;

  // T = Id and Y = X: both costs vanish and only the guard floor remains.
  const double same = dpot_loss(Tensor::constant(x), x, x, identity_plan(20), lambda).item();
  CHECK(same == doctest::Approx((1.0 + lambda) * kFloor).epsilon(1e-12));
  CHECK(same < 2e-6);

  // T = Id, X != Y: the transport term is at its floor, the matching term is the plan cost.
  const TransportPlan plan = solve_exact(cost_matrix(x, y));
  const double id_loss = dpot_loss(Tensor::constant(x), x, y, plan, lambda).item();
  CHECK(std::abs(id_loss - (lambda * kFloor + std::sqrt(plan.cost))) < 1e-12);

  // T tabulated as the optimal assignment pushforward attains the lower bound.
  const Matrix pushed = permute_rows(y, plan.assignment);
  const TransportPlan aligned = solve_exact(cost_matrix(pushed, y));
  const double bound = dpot_loss(Tensor::constant(pushed), x, y, aligned, lambda).item();
  CHECK(std::abs(bound - (lambda * empirical_w2(x, y) + kFloor)) < 1e-9);

  CHECK_THROWS_AS(dpot_loss(Tensor::constant(x), x, y, identity_plan(19), lambda), InputError);
}

TEST_CASE("dpot loss gradient through a network matches finite differences") {
  Rng rng = make_rng(4);
  MapNetwork net({Architecture::mlp, 2, 2, 8, 2}, rng);
  const ParticleBatch x = batch(uniform_matrix(16, 2, rng));
  const ParticleBatch y = batch(uniform_matrix(16, 2, rng, 0.0, 3.0), SampleSource::nu);
  DPOTConfig cfg;
  cfg.batch_size = 16;
  const TransportPlan plan = solve_exact(cost_matrix(net.apply(x.points), y.points));
  const Vector theta = net.parameters();
  auto eval = [&](const Tensor& p) { return dpot_loss(net, p, x, y, cfg, plan); };
  Tape tape;
  const Tensor p = tape.variable(Eigen::Map<const Matrix>(theta.data(), 1, theta.size()));
  tape.backward(eval(p));
  const Matrix g = tape.grad(p);
  const Vector numeric = central_difference(
      [&](const Vector& v) { return eval(Tensor::constant(Eigen::Map<const Matrix>(v.data(), 1, v.size()))).item(); },
      theta);
  CHECK(max_relative_error(Eigen::Map<const Vector>(g.data(), g.size()), numeric) < 1e-4);
}

TEST_CASE("conditional loss averages batch terms") {
  Rng rng = make_rng(5);
  MapNetwork net({Architecture::mlp, 3, 2, 8, 2}, rng);
  DPOTConfig cfg;
  auto make = [&](double kappa) {
    PlannedBatch b;
    b.source = batch(uniform_matrix(12, 2, rng));
    b.source.condition = {kappa};
    b.target = batch(uniform_matrix(12, 2, rng), SampleSource::nu);
    b.target.condition = {kappa};
    b.plan = solve_exact(cost_matrix(net.apply(b.source.points, b.source.condition), b.target.points));
    return b;
  };
  const PlannedBatch b1 = make(0.1);
  const PlannedBatch b2 = make(-0.2);
  const Tensor p = net.parameter_tensor();
  const double single = dpot_loss(net, p, b1.source, b1.target, cfg, b1.plan).item();

  const std::vector<PlannedBatch> one{b1};
  CHECK(conditional_dpot_loss(net, p, one, cfg).item() == single);
  const std::vector<PlannedBatch> twice{b1, b1};
  CHECK(conditional_dpot_loss(net, p, twice, cfg).item() == doctest::Approx(single).epsilon(1e-15));
  const std::vector<PlannedBatch> pair{b1, b2};
  const double second = dpot_loss(net, p, b2.source, b2.target, cfg, b2.plan).item();
  CHECK(conditional_dpot_loss(net, p, pair, cfg).item() ==
        doctest::Approx(0.5 * (single + second)).epsilon(1e-14));
  CHECK_THROWS_AS(conditional_dpot_loss(net, p, std::span<const PlannedBatch>{}, cfg), InputError);
}

TEST_CASE("gap decomposition examples") {
  Rng rng = make_rng(6);
  const Matrix x = uniform_matrix(25, 2, rng);
  const Matrix y = uniform_matrix(25, 2, rng, -1.0, 3.0);
  const double lambda = 0.3;

  const GapReport same = gap_decomposition(x, x, x, lambda);
  CHECK(same.eps1 == 0.0);
  CHECK(same.eps2 == 0.0);
  CHECK(same.eps3 == 0.0);
  CHECK(same.eps_total == 0.0);

  const GapReport id = gap_decomposition(x, x, y, lambda);
  const double w = empirical_w2(x, y);
  CHECK(std::abs(id.eps1 - (1.0 - lambda) * w) < 1e-12);
  CHECK(std::abs(id.eps2) < 1e-12);
  CHECK(std::abs(id.eps3) < 1e-12);
  CHECK(std::abs(id.w2_reference - w) < 1e-15);

  const TransportPlan plan = solve_exact(cost_matrix(x, y));
  const GapReport opt = gap_decomposition(permute_rows(y, plan.assignment), x, y, lambda);
  CHECK(std::abs(opt.eps1) < 1e-9);
  CHECK(std::abs(opt.eps2) < 1e-9);
  CHECK(std::abs(opt.eps3) < 1e-9);
}

TEST_CASE("gap invariants hold for random maps") {
  Rng rng = make_rng(7);
  for (int t = 0; t < 30; ++t) {
    const Matrix x = uniform_matrix(15, 2, rng);
    const Matrix y = uniform_matrix(15, 2, rng, 0.0, 2.0);
    const Matrix tx = uniform_matrix(15, 2, rng, -1.0, 2.5);
    const double lambda = 0.1 + 0.8 * (t / 29.0);
    const GapReport r = gap_decomposition(tx, x, y, lambda);
    CHECK(r.eps1 >= -1e-12);
    CHECK(r.eps2 >= -1e-12);
    CHECK(r.eps3 >= -1e-12);
    CHECK(std::abs(r.eps1 + r.eps2 + r.eps3 - r.eps_total) < 1e-10);
    CHECK(r.fresh_loss >= lambda * r.w2_reference - 1e-9);

    // Fresh-plan loss from the differentiable path agrees up to the guard.
    const TransportPlan fresh = solve_exact(cost_matrix(tx, y));
    const double loss = dpot_loss(Tensor::constant(tx), x, y, fresh, lambda).item();
    CHECK(std::abs(loss - r.fresh_loss) < 1e-12);
  }
}

TEST_CASE("gap decomposition through a network") {
  Rng rng = make_rng(8);
  MapNetwork net({Architecture::resnet, 2, 2, 8, 2, 2}, rng);
  const ParticleBatch x = batch(uniform_matrix(20, 2, rng));
  const ParticleBatch y = batch(uniform_matrix(20, 2, rng), SampleSource::nu);
  const GapReport a = gap_decomposition(net, x, y, 0.3);
  const GapReport b = gap_decomposition(net.apply(x.points), x.points, y.points, 0.3);
  CHECK(a.eps_total == b.eps_total);
}

TEST_CASE("cycle losses") {
  Rng rng = make_rng(9);
  const MapNetwork id = identity_network();
  const ParticleBatch x = batch(uniform_matrix(10, 2, rng));
  DPOTConfig cfg;
  const auto same = cycle_losses(id, id.parameter_tensor(), id, id.parameter_tensor(), x, x, cfg,
                                 identity_plan(10), identity_plan(10));
  CHECK(same.forward.residual == 0.0);
  CHECK(same.inverse.residual == 0.0);
  CHECK(same.forward.total.item() < 2e-6);
  CHECK(same.inverse.total.item() < 2e-6);

  // With the inverse frozen at Id, the forward residual is mean |T(x) - x|^2.
  MapNetwork fwd({Architecture::mlp, 2, 2, 8, 2}, rng);
  const ParticleBatch y = batch(uniform_matrix(10, 2, rng), SampleSource::nu);
  const TransportPlan plan = solve_exact(cost_matrix(fwd.apply(x.points), y.points));
  const CycleTerm term = cycle_term(fwd, fwd.parameter_tensor(), id, id.parameter_tensor(), x, y, plan, 0.3);
  const double expected = (fwd.apply(x.points) - x.points).rowwise().squaredNorm().mean();
  CHECK(term.residual == doctest::Approx(expected).epsilon(1e-13));
  CHECK(term.total.item() ==
        doctest::Approx(dpot_loss(fwd, fwd.parameter_tensor(), x, y, cfg, plan).item() + expected).epsilon(1e-13));
}

TEST_CASE("cycle gradient reaches only the tracked network") {
  Rng rng = make_rng(10);
  MapNetwork fwd({Architecture::mlp, 2, 2, 6, 2}, rng);
  MapNetwork inv({Architecture::mlp, 2, 2, 6, 2}, rng);
  const ParticleBatch x = batch(uniform_matrix(12, 2, rng));
  const ParticleBatch y = batch(uniform_matrix(12, 2, rng), SampleSource::nu);
  const TransportPlan plan = solve_exact(cost_matrix(fwd.apply(x.points), y.points));

  const Vector theta = fwd.parameters();
  auto eval = [&](const Tensor& p) {
    return cycle_term(fwd, p, inv, inv.parameter_tensor(), x, y, plan, 0.3).total;
  };
  Tape tape;
  const Tensor p = tape.variable(Eigen::Map<const Matrix>(theta.data(), 1, theta.size()));
  tape.backward(eval(p));
  const Matrix g = tape.grad(p);
  const Vector numeric = central_difference(
      [&](const Vector& v) { return eval(Tensor::constant(Eigen::Map<const Matrix>(v.data(), 1, v.size()))).item(); },
      theta);
  CHECK(max_relative_error(Eigen::Map<const Vector>(g.data(), g.size()), numeric) < 1e-4);
}
