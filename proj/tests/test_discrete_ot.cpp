#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "dpot/discrete_ot.hpp"
#include "dpot/errors.hpp"
#include "test_support.hpp"

using namespace dpot;
using dpot::testing::uniform_matrix;

namespace {

// Independent minimum over all permutations, no tie-breaking concerns.
double brute_force_min(const Matrix& c) {
  std::vector<std::size_t> p(static_cast<std::size_t>(c.rows()));
  std::iota(p.begin(), p.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p[i]));
    best = std::min(best, s / static_cast<double>(p.size()));
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

bool is_permutation(const std::vector<std::size_t>& p) {
  std::vector<std::size_t> s = p;
  std::sort(s.begin(), s.end());
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i] != i) return false;
  return true;
}

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double shift = 0.0) {
  std::normal_distribution<double> n(shift, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

}  // namespace

TEST_CASE("cost matrix carries the one-half factor") {
  Matrix a(1, 2), b(2, 2);
  a << 0, 0;
  b << 3, 4, 1, 0;
  const Matrix c = cost_matrix(a, b);
  CHECK(c(0, 0) == 12.5);
  CHECK(c(0, 1) == 0.5);
  CHECK_THROWS_AS(cost_matrix(a, Matrix::Zero(2, 3)), InputError);
}

TEST_CASE("solve_exact small examples") {
  Matrix c(2, 2);
  c << 0, 1, 1, 0;
  auto plan = solve_exact(c);
  CHECK(plan.assignment == std::vector<std::size_t>{0, 1});
  CHECK(plan.cost == 0.0);
  CHECK(plan.solver == PlanSolver::exact);

  c << 1, 0, 0, 1;
  plan = solve_exact(c);
  CHECK(plan.assignment == std::vector<std::size_t>{1, 0});
  CHECK(plan.cost == 0.0);

  Matrix one(1, 1);
  one << 2.5;
  CHECK(solve_exact(one).cost == 2.5);
}

TEST_CASE("solve_exact rejects malformed costs") {
  Matrix c = Matrix::Ones(3, 3);
  c(1, 2) = std::nan("");
  CHECK_THROWS_AS(solve_exact(c), InputError);
  c(1, 2) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(solve_exact(c), InputError);
  c(1, 2) = -1.0;
  CHECK_THROWS_AS(solve_exact(c), InputError);
  CHECK_THROWS_AS(solve_exact(Matrix::Ones(2, 3)), InputError);
}

TEST_CASE("solve_exact matches brute force on 200 random 6x6 instances") {
  Rng rng = make_rng(6);
  for (int t = 0; t < 200; ++t) {
    const Matrix c = uniform_matrix(6, 6, rng, 0.0, 1.0);
    const auto plan = solve_exact(c);
    REQUIRE(is_permutation(plan.assignment));
    CHECK(std::abs(plan.cost - brute_force_min(c)) < 1e-9);
    CHECK(std::abs(plan.cost - plan_cost(c, plan.assignment)) < 1e-12);
  }
}

TEST_CASE("solve_exact agrees with the oracle for every N up to 8") {
  Rng rng = make_rng(8);
  for (int n = 1; n <= 8; ++n) {
    for (int t = 0; t < 10; ++t) {
      const Matrix c = cost_matrix(uniform_matrix(n, 2, rng), uniform_matrix(n, 2, rng));
      CHECK(std::abs(solve_exact(c).cost - solve_oracle(c).cost) < 1e-9);
    }
  }
}

TEST_CASE("solve_exact survives degenerate costs") {
  // Integer costs with many ties exercise the augmenting-row-reduction path.
  Rng rng = make_rng(12);
  std::uniform_int_distribution<int> small(0, 2);
  for (int t = 0; t < 200; ++t) {
    Matrix c(7, 7);
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = small(rng);
    const auto plan = solve_exact(c);
    REQUIRE(is_permutation(plan.assignment));
    CHECK(std::abs(plan.cost - brute_force_min(c)) < 1e-12);
  }
  const auto flat = solve_exact(Matrix::Constant(5, 5, 3.0));
  CHECK(is_permutation(flat.assignment));
  CHECK(flat.cost == 3.0);
}

TEST_CASE("solve_oracle tie-break and limits") {
  Matrix one(1, 1);
  one << 0.7;
  const auto p1 = solve_oracle(one);
  CHECK(p1.assignment == std::vector<std::size_t>{0});
  CHECK(p1.cost == 0.7);
  CHECK(p1.solver == PlanSolver::oracle);

  CHECK(solve_oracle(Matrix::Ones(3, 3)).assignment == std::vector<std::size_t>{0, 1, 2});
  CHECK_THROWS_AS(solve_oracle(Matrix::Ones(10, 10)), InputError);
}

TEST_CASE("solve_oracle matches solve_exact on 500 random 5x5 instances") {
  Rng rng = make_rng(55);
  for (int t = 0; t < 500; ++t) {
    const Matrix c = uniform_matrix(5, 5, rng, 0.0, 1.0);
    CHECK(std::abs(solve_oracle(c).cost - solve_exact(c).cost) < 1e-12);
  }
}

TEST_CASE("exact plan beats random permutations") {
  Rng rng = make_rng(21);
  for (int t = 0; t < 20; ++t) {
    const Matrix c = cost_matrix(uniform_matrix(40, 3, rng), uniform_matrix(40, 3, rng));
    const double best = solve_exact(c).cost;
    std::vector<std::size_t> p(40);
    std::iota(p.begin(), p.end(), 0);
    for (int k = 0; k < 50; ++k) {
      std::shuffle(p.begin(), p.end(), rng);
      CHECK(best <= plan_cost(c, p) + 1e-15);
    }
  }
}

TEST_CASE("empirical_w2 examples") {
  Rng rng = make_rng(4);
  const Matrix a = uniform_matrix(12, 2, rng);
  Matrix shuffled = a.colwise().reverse();
  CHECK(empirical_w2(a, shuffled) == 0.0);

  Matrix z(1, 1), two(1, 1);
  z << 0;
  two << 2;
  CHECK(empirical_w2(z, two) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(empirical_w2(a, Matrix::Zero(11, 2)), InputError);
  CHECK_THROWS_AS(empirical_w2(a, Matrix::Zero(12, 3)), InputError);
}

TEST_CASE("empirical_w2 in 1-D matches the sorted coupling") {
  Rng rng = make_rng(64);
  Matrix a = gaussian_matrix(64, 1, rng, 0.0);
  Matrix b = gaussian_matrix(64, 1, rng, 1.0);
  std::vector<double> sa(a.data(), a.data() + 64), sb(b.data(), b.data() + 64);
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  double sorted = 0.0;
  for (std::size_t i = 0; i < 64; ++i) sorted += 0.5 * (sa[i] - sb[i]) * (sa[i] - sb[i]);
  sorted /= 64.0;
  const double w = empirical_w2(a, b);
  CHECK(std::abs(w * w - sorted) <= 0.15 * sorted);
  // Monotone matching is optimal in 1-D, so the match is in fact exact.
  CHECK(std::abs(w * w - sorted) < 1e-12);
}

TEST_CASE("empirical_w2 metric properties") {
  Rng rng = make_rng(100);
  for (int t = 0; t < 100; ++t) {
    const Matrix a = uniform_matrix(10, 2, rng);
    const Matrix b = uniform_matrix(10, 2, rng);
    const Matrix c = uniform_matrix(10, 2, rng);
    CHECK(empirical_w2(a, b) == empirical_w2(b, a));
    CHECK(empirical_w2(a, c) <= empirical_w2(a, b) + empirical_w2(b, c) + 1e-9);
  }
}

TEST_CASE("empirical_w2 is translation invariant") {
  Rng rng = make_rng(7);
  const Matrix a = uniform_matrix(30, 3, rng);
  const Matrix b = uniform_matrix(30, 3, rng);
  Eigen::RowVector3d shift(0.4, -1.3, 2.2);
  const Matrix as = a.rowwise() + shift;
  const Matrix bs = b.rowwise() + shift;
  CHECK(std::abs(empirical_w2(a, b) - empirical_w2(as, bs)) < 1e-10);
}

TEST_CASE("entropic plan limits and marginals") {
  Rng rng = make_rng(88);
  const Matrix c = uniform_matrix(8, 8, rng, 0.0, 1.0);

  const auto flat = solve_entropic(c, 100.0, 1000, 1e-10);
  CHECK((flat.coupling.array() - 1.0 / 64.0).abs().maxCoeff() < 1e-3);

  const auto sharp = solve_entropic(c, 0.01, 100000, 1e-10);
  const double exact = solve_exact(c).cost;
  CHECK(sharp.cost >= exact - 1e-12);
  CHECK(std::abs(sharp.cost - exact) <= 0.02 * exact);
  const Vector rows = sharp.coupling.rowwise().sum();
  const Vector cols = sharp.coupling.colwise().sum().transpose();
  CHECK((rows.array() - 1.0 / 8.0).abs().maxCoeff() < 1e-8);
  CHECK((cols.array() - 1.0 / 8.0).abs().maxCoeff() < 1e-8);
}

TEST_CASE("entropic solver errors") {
  const Matrix c = Matrix::Ones(3, 3);
  CHECK_THROWS_AS(solve_entropic(c, 0.0, 10, 1e-8), DomainError);
  Rng rng = make_rng(9);
  const Matrix hard = uniform_matrix(20, 20, rng, 0.0, 1.0);
  try {
    solve_entropic(hard, 1e-3, 2, 1e-14);
    FAIL("expected an iteration-limit error");
  } catch (const IterationLimitError& e) {
    CHECK(e.last_violation() > 0.0);
  }
}

TEST_CASE("solve_exact handles N = 3000 within 5 seconds") {
  Rng rng = make_rng(3000);
  const Matrix a = uniform_matrix(3000, 2, rng, 0.0, 1.0);
  const Matrix b = uniform_matrix(3000, 2, rng, 0.0, 1.0);
  const Matrix c = cost_matrix(a, b);
  const auto start = std::chrono::steady_clock::now();
  const auto plan = solve_exact(c);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  MESSAGE("N=3000 assignment took " << seconds << " s");
  CHECK(is_permutation(plan.assignment));
  CHECK(seconds < 5.0);
}
