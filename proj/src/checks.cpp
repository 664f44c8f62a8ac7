#include "dpot/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "dpot/discrete_ot.hpp"
#include "dpot/loss.hpp"
#include "dpot/nn.hpp"

namespace dpot {

namespace {

using Clock = std::chrono::steady_clock;

Matrix uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

std::string format(const char* fmt, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, fmt, a, b);
  return buf;
}

CheckResult finish(CheckResult r, Clock::time_point start) {
  r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return r;
}

}  // namespace

CheckResult check_assignment_oracle(std::uint64_t seed) {
  const auto start = Clock::now();
  Rng rng = make_rng(seed, 11);
  double worst = 0.0;
  int cases = 0;
  for (const auto& [n, count] : {std::pair{6, 200}, std::pair{8, 100}}) {
    for (int c = 0; c < count; ++c, ++cases) {
      // Half the instances are Euclidean costs, half are unstructured.
      const Matrix cost = c % 2 == 0 ? cost_matrix(uniform(n, 2, rng, -1.0, 1.0), uniform(n, 2, rng, -1.0, 1.0))
                                     : uniform(n, n, rng, 0.0, 10.0);
      const double exact = solve_exact(cost).cost;
      const double oracle = solve_oracle(cost).cost;
      worst = std::max(worst, std::abs(exact - oracle));
    }
  }
  CheckResult r{"assignment solver vs enumeration", worst <= 1e-9,
                std::to_string(cases) + " cases, " + format("max |cost - oracle| = %.3g", worst)};
  return finish(std::move(r), start);
}

CheckResult check_loss_gradients(std::uint64_t seed) {
  const auto start = Clock::now();
  Rng rng = make_rng(seed, 12);
  const int n = 16;
  const Matrix x = uniform(n, 2, rng, -1.0, 1.0);
  const Matrix y = uniform(n, 2, rng, 0.0, 2.0);
  double worst = 0.0;
  std::string per_arch;
  for (Architecture arch : {Architecture::mlp, Architecture::modified_mlp, Architecture::resnet}) {
    NetworkSpec spec{arch, 2, 2, 8, 2};
    if (arch == Architecture::resnet) {
      spec.depth = 1;
      spec.block_layers = 2;
    }
    MapNetwork net(spec, rng);
    const TransportPlan plan = solve_exact(cost_matrix(net.apply(x), y));
    const Vector theta = net.parameters();
    const auto loss = [&](const Tensor& p) { return dpot_loss(net.forward(Tensor::constant(x), p), x, y, plan, 0.3); };

    Tape tape;
    const Tensor p = tape.variable(Eigen::Map<const Matrix>(theta.data(), 1, theta.size()));
    tape.backward(loss(p));
    const Matrix g = tape.grad(p);

    const double h = 1e-5;
    double arch_worst = 0.0;
    Vector probe = theta;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const auto at = [&](double v) {
        probe[i] = v;
        const double out = loss(Tensor::constant(Eigen::Map<const Matrix>(probe.data(), 1, probe.size()))).item();
        probe[i] = theta[i];
        return out;
      };
      const double numeric = (at(theta[i] + h) - at(theta[i] - h)) / (2.0 * h);
      arch_worst = std::max(arch_worst, std::abs(g(0, i) - numeric) / (std::abs(numeric) + 1e-8));
    }
    worst = std::max(worst, arch_worst);
    per_arch += std::string(per_arch.empty() ? "" : ", ") + std::string(to_string(arch)) +
                format(" %.2g", arch_worst);
  }
  CheckResult r{"DPOT loss gradient vs central differences", worst < 1e-4, "max relative error: " + per_arch};
  return finish(std::move(r), start);
}

CheckResult check_gap_identity(std::uint64_t seed) {
  const auto start = Clock::now();
  Rng rng = make_rng(seed, 13);
  std::uniform_real_distribution<double> lam(0.05, 0.95);
  std::uniform_int_distribution<int> size(8, 40);
  double min_eps = 0.0, worst_identity = 0.0, worst_tabulated = 0.0;
  for (int t = 0; t < 50; ++t) {
    const int n = size(rng);
    const double lambda = lam(rng);
    const Matrix x = uniform(n, 2, rng, -1.0, 1.0);
    const Matrix y = uniform(n, 2, rng, -0.5, 2.0);
    const Matrix tx = uniform(n, 2, rng, -1.5, 2.5);
    const GapReport g = gap_decomposition(tx, x, y, lambda);
    min_eps = std::min({min_eps, g.eps1, g.eps2, g.eps3});

    // Independent fresh loss: the training loss with a fresh exact plan.
    const TransportPlan fresh = solve_exact(cost_matrix(tx, y));
    const double p_hat = dpot_loss(Tensor::constant(tx), x, y, fresh, lambda).item();
    const double reference = lambda * empirical_w2(x, y);
    worst_identity = std::max(worst_identity, std::abs(g.eps1 + g.eps2 + g.eps3 - (p_hat - reference)));

    const TransportPlan exact = solve_exact(cost_matrix(x, y));
    const GapReport opt = gap_decomposition(permute_rows(y, exact.assignment), x, y, lambda);
    worst_tabulated = std::max({worst_tabulated, opt.eps1, opt.eps2, opt.eps3});
  }
  const bool ok = min_eps >= -1e-12 && worst_identity <= 1e-10 && worst_tabulated < 1e-9;
  CheckResult r{"gap decomposition identity and bounds", ok,
                format("min eps = %.3g, identity residual = %.3g, ", min_eps, worst_identity) +
                    format("tabulated max eps = %.3g", worst_tabulated)};
  return finish(std::move(r), start);
}

std::vector<CheckResult> run_oracle_checks(std::uint64_t seed) {
  return {check_assignment_oracle(seed), check_loss_gradients(seed), check_gap_identity(seed)};
}

void print_check(std::ostream& os, const CheckResult& result) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1fs", result.seconds);
  os << (result.passed ? "PASS " : "FAIL ") << result.name << " (" << buf << ") " << result.detail << '\n';
}

}  // namespace dpot
