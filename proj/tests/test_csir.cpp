#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include <doctest.h>

#include "dpot/csir.hpp"
#include "dpot/errors.hpp"

using namespace dpot;

namespace {

CSIRState random_state(int d, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 100.0);
  CSIRState s;
  s.S.resize(d);
  s.I.resize(d);
  s.R.resize(d);
  for (int i = 0; i < d; ++i) {
    s.S[i] = u(rng);
    s.I[i] = u(rng);
    s.R[i] = u(rng);
  }
  return s;
}

CSIRParams random_params(int d, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 2.0);
  CSIRParams p;
  p.d = d;
  for (int k = 0; k < 2 * d; ++k) p.rates.push_back(u(rng));
  return p;
}

Vector flat(const CSIRState& s) {
  Vector v(3 * s.S.size());
  v << s.S, s.I, s.R;
  return v;
}

CSIRState state_at(const CSIRParams& p, double t, double dt) {
  const double times[] = {t};
  return rk4_simulate(p, times, dt).front();
}

}  // namespace

TEST_CASE("csir_rhs reduces to classic SIR for one compartment") {
  CSIRParams p = CSIRParams::from_span(std::vector<double>{0.3, 0.7});
  CSIRState s;
  s.S = Vector::Constant(1, 50.0);
  s.I = Vector::Constant(1, 10.0);
  s.R = Vector::Constant(1, 40.0);
  const CSIRState ds = csir_rhs(s, p);
  CHECK(ds.S[0] == doctest::Approx(-0.3 * 50.0 * 10.0).epsilon(1e-15));
  CHECK(ds.I[0] == doctest::Approx(0.3 * 50.0 * 10.0 - 0.7 * 10.0).epsilon(1e-15));
  CHECK(ds.R[0] == doctest::Approx(0.7 * 10.0).epsilon(1e-15));
}

TEST_CASE("csir_rhs vanishes for equal states at zero rates") {
  CSIRParams p = CSIRParams::from_span(std::vector<double>(6, 0.0));
  CSIRState s;
  s.S = Vector::Constant(3, 20.0);
  s.I = Vector::Constant(3, 5.0);
  s.R = Vector::Constant(3, 75.0);
  const CSIRState ds = csir_rhs(s, p);
  CHECK(flat(ds).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("csir_rhs conserves total population") {
  Rng rng = make_rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 1 + trial % 4;
    const CSIRState ds = csir_rhs(random_state(d, rng), random_params(d, rng));
    CHECK(std::abs(ds.total()) < 1e-12 * 1e4);
  }
}

TEST_CASE("csir_rhs couples cyclic neighbours") {
  CSIRParams p = CSIRParams::from_span(std::vector<double>(6, 0.0));
  CSIRState s;
  s.S = Vector::Zero(3);
  s.I = Vector::Zero(3);
  s.R = Vector::Zero(3);
  s.S[2] = 2.0;
  const CSIRState ds = csir_rhs(s, p);
  CHECK(ds.S[0] == 1.0);
  CHECK(ds.S[1] == 1.0);
  CHECK(ds.S[2] == -2.0);
}

TEST_CASE("initial state matches the stated populations") {
  const CSIRState s = csir_initial_state(3);
  CHECK(s.S[0] == 97.0);
  CHECK(s.S[2] == 99.0);
  CHECK(s.I[0] == 3.0);
  CHECK(s.I[2] == 1.0);
  CHECK(s.total() == 300.0);
}

TEST_CASE("zero rates leave a single compartment constant") {
  CSIRParams p = CSIRParams::from_span(std::vector<double>{0.0, 0.0});
  const auto t = observation_times();
  for (const CSIRState& s : rk4_simulate(p, t, kCsirStep)) {
    CHECK(s.S[0] == 99.0);
    CHECK(s.I[0] == 1.0);
    CHECK(s.R[0] == 0.0);
  }
}

TEST_CASE("observation times are 5j/6") {
  const auto t = observation_times();
  REQUIRE(t.size() == 6);
  CHECK(t[0] == doctest::Approx(5.0 / 6.0));
  CHECK(t[5] == 5.0);
}

TEST_CASE("rk4 converges at fourth order under step halving") {
  for (int d : {1, 2, 4}) {
    const CSIRParams p = CSIRParams::truth(d);
    const Vector a = flat(state_at(p, 5.0, 0.1));
    const Vector b = flat(state_at(p, 5.0, 0.05));
    const Vector c = flat(state_at(p, 5.0, 0.025));
    const double ratio = (a - b).norm() / (b - c).norm();
    INFO("d = " << d << ", ratio = " << ratio);
    CHECK(ratio >= 8.0);
    CHECK(ratio <= 32.0);
  }
}

TEST_CASE("default step resolves the trajectory to 1e-8 relative at d = 4") {
  const CSIRParams p = CSIRParams::truth(4);
  const Vector a = flat(state_at(p, 5.0, kCsirStep));
  const Vector b = flat(state_at(p, 5.0, kCsirStep / 2));
  CHECK((a - b).norm() < 1e-8 * b.norm());
}

TEST_CASE("true parameters produce a single epidemic peak") {
  const CSIRParams p = CSIRParams::truth(1);
  std::vector<double> times;
  for (int k = 0; k <= 500; ++k) times.push_back(0.01 * k);
  const auto states = rk4_simulate(p, times, kCsirStep);
  int sign_changes = 0;
  double prev = csir_rhs(states.front(), p).I[0];
  for (const CSIRState& s : states) {
    const double di = csir_rhs(s, p).I[0];
    if ((di > 0) != (prev > 0)) ++sign_changes;
    prev = di;
  }
  CHECK(sign_changes == 1);
}

TEST_CASE("population is conserved and non-negative across the prior") {
  Rng rng = make_rng(11);
  std::vector<double> times;
  for (int k = 0; k <= 50; ++k) times.push_back(0.1 * k);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 1 + trial % 4;
    const CSIRParams p = random_params(d, rng);
    double drift = 0.0, lowest = 0.0;
    for (const CSIRState& s : rk4_simulate(p, times, kCsirStep)) {
      drift = std::max(drift, std::abs(s.total() - 100.0 * d));
      lowest = std::min(lowest, flat(s).minCoeff());
    }
    CHECK(drift < 1e-6);
    CHECK(lowest >= -1e-6);
  }
}

TEST_CASE("rk4_simulate rejects bad input") {
  CSIRParams p = CSIRParams::truth(1);
  const double times[] = {1.0, 0.5};
  CHECK_THROWS_AS(rk4_simulate(p, times, kCsirStep), InputError);
  const double ok[] = {1.0};
  CHECK_THROWS_AS(rk4_simulate(p, ok, 0.0), DomainError);
  p.rates[0] = 2.5;
  CHECK_THROWS_AS(rk4_simulate(p, ok, kCsirStep), InputError);
}

TEST_CASE("an unstable step size reports blow-up with its time") {
  const CSIRParams p = CSIRParams::from_span(std::vector<double>{2.0, 0.0});
  const double times[] = {5.0};
  try {
    rk4_simulate(p, times, 1.0);
    FAIL("expected BlowUpError");
  } catch (const BlowUpError& e) {
    CHECK(e.time() > 0.0);
    CHECK(e.time() <= 5.0);
  }
}

TEST_CASE("noise-free observations at the truth give zero potential") {
  Rng rng = make_rng(2);
  for (int d : {1, 3}) {
    const ObservationSet obs = make_observations(d, rng, 0.0);
    CHECK(csir_potential(CSIRParams::truth(d), obs) == 0.0);
    CHECK(log_likelihood(CSIRParams::truth(d), obs) == 0.0);
  }
}

TEST_CASE("noisy observations at the truth give half the squared noise") {
  Rng rng = make_rng(4);
  const ObservationSet obs = make_observations(2, rng);
  CHECK(obs.y.cols() == kObservationCount);
  const double expected = 0.5 * obs.noise.squaredNorm();
  CHECK(csir_potential(CSIRParams::truth(2), obs) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("potential is deterministic") {
  Rng rng = make_rng(5);
  const ObservationSet obs = make_observations(2, rng);
  const CSIRParams p = random_params(2, rng);
  CHECK(csir_potential(p, obs) == csir_potential(p, obs));
}

TEST_CASE("potential is continuous in beta") {
  Rng rng = make_rng(1);
  const ObservationSet obs = make_observations(1, rng);
  const auto phi = [&](double beta) {
    return csir_potential(CSIRParams::from_span(std::vector<double>{beta, 1.0}), obs);
  };
  const auto slope = [&](double beta) {
    const double h = 1e-5;
    const double a = std::max(0.0, beta - h), b = std::min(2.0, beta + h);
    return std::abs(phi(b) - phi(a)) / (b - a);
  };
  const int grid = 400;
  const double step = 2.0 / (grid - 1);
  for (int k = 0; k + 1 < grid; ++k) {
    const double b0 = k * step, b1 = (k + 1) * step;
    const double local = std::max(slope(b0), slope(b1));
    CHECK(std::abs(phi(b1) - phi(b0)) <= 10.0 * step * local + 1e-12);
  }
}

TEST_CASE("batched potential matches the scalar path") {
  Rng rng = make_rng(6);
  for (int d : {1, 3}) {
    const ObservationSet obs = make_observations(d, rng);
    const Matrix rates = sample_csir_prior(d, 37, rng);
    const Matrix phi = csir_potential_batch(rates, obs);
    REQUIRE(phi.rows() == 37);
    for (Eigen::Index r = 0; r < rates.rows(); ++r) {
      const double scalar = csir_potential(CSIRParams::from_span({rates.row(r).data(), static_cast<std::size_t>(2 * d)}), obs);
      CHECK(phi(r, 0) == doctest::Approx(scalar).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(csir_potential_batch(Matrix::Zero(4, 3), make_observations(1, rng)), DimensionError);
}

TEST_CASE("prior samples fill the box") {
  Rng rng = make_rng(8);
  const Matrix x = sample_csir_prior(2, 5000, rng);
  CHECK(x.cols() == 4);
  CHECK(x.minCoeff() >= 0.0);
  CHECK(x.maxCoeff() <= 2.0);
  CHECK(x.mean() == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("a zero potential accepts every proposal") {
  Rng rng = make_rng(9);
  const BatchPotential zero = [](const Matrix& x) { return Matrix(Matrix::Zero(x.rows(), 1)); };
  const AcceptRejectResult r = potential_accept_reject(zero, 2, 300, rng);
  CHECK(r.acceptance_rate() == 1.0);
  CHECK(r.samples.rows() == 300);
  CHECK(r.samples.minCoeff() >= 0.0);
  CHECK(r.samples.maxCoeff() <= 2.0);
}

TEST_CASE("a hopeless potential starves") {
  Rng rng = make_rng(10);
  const BatchPotential huge = [](const Matrix& x) { return Matrix(Matrix::Constant(x.rows(), 1, 1e3)); };
  AcceptRejectOptions opts;
  opts.starvation_window = 10000;
  CHECK_THROWS_AS(potential_accept_reject(huge, 1, 1, rng, opts), StarvationError);
}

TEST_CASE("accept-reject is reproducible for a fixed seed") {
  const BatchPotential p = [](const Matrix& x) { return Matrix((x.rowwise().squaredNorm()).eval()); };
  Rng a = make_rng(12), b = make_rng(12);
  const AcceptRejectResult ra = potential_accept_reject(p, 1, 200, a);
  const AcceptRejectResult rb = potential_accept_reject(p, 1, 200, b);
  CHECK(ra.samples == rb.samples);
  CHECK(ra.proposals == rb.proposals);
}

TEST_CASE("posterior accept-reject: seed agreement and bimodal beta marginal") {
  Rng obs_rng = make_rng(1);
  const ObservationSet obs = make_observations(1, obs_rng);
  constexpr std::size_t kPerSeed = 500;
  Rng r1 = make_rng(101), r2 = make_rng(202);
  const AcceptRejectResult a = posterior_accept_reject(obs, kPerSeed, r1);
  const AcceptRejectResult b = posterior_accept_reject(obs, kPerSeed, r2);

  const double pa = a.acceptance_rate(), pb = b.acceptance_rate();
  const double sigma = std::sqrt(pa * (1 - pa) / static_cast<double>(a.proposals) +
                                 pb * (1 - pb) / static_cast<double>(b.proposals));
  INFO("rates " << pa << " " << pb << " sigma " << sigma);
  CHECK(std::abs(pa - pb) < 3.0 * sigma);

  // Histogram of beta over the posterior bulk; each of the two modes must
  // stand above the dip between them by more than two Poisson deviations.
  const double lo = 0.085, width = 0.006;
  std::vector<double> hist(12, 0.0);
  for (const AcceptRejectResult* r : {&a, &b}) {
    for (Eigen::Index k = 0; k < r->samples.rows(); ++k) {
      const auto bin = static_cast<long>(std::floor((r->samples(k, 0) - lo) / width));
      if (bin >= 0 && bin < static_cast<long>(hist.size())) hist[static_cast<std::size_t>(bin)] += 1.0;
    }
  }
  std::vector<std::size_t> peaks;
  for (std::size_t k = 0; k < hist.size(); ++k) {
    const double left = k == 0 ? 0.0 : hist[k - 1];
    const double right = k + 1 == hist.size() ? 0.0 : hist[k + 1];
    if (hist[k] > left && hist[k] >= right) peaks.push_back(k);
  }
  std::ostringstream shown;
  for (double h : hist) shown << h << ' ';
  INFO("histogram " << shown.str());
  REQUIRE(peaks.size() >= 2);
  std::size_t significant = 0;
  for (std::size_t i = 0; i + 1 < peaks.size(); ++i) {
    const double dip = *std::min_element(hist.begin() + static_cast<long>(peaks[i]),
                                         hist.begin() + static_cast<long>(peaks[i + 1]) + 1);
    const double shallower = std::min(hist[peaks[i]], hist[peaks[i + 1]]);
    if (shallower - dip > 2.0 * std::sqrt(shallower + dip)) ++significant;
  }
  CHECK(significant >= 1);
}

TEST_CASE("timing table is tab separated") {
  const TimingRow rows[] = {{1, "accept-reject", 1000, 12.5}, {1, "dpot", 100000, 0.25}};
  std::ostringstream os;
  write_timing_table(os, rows);
  const std::string s = os.str();
  CHECK(s.rfind("d\tmethod\tsamples\tseconds\n", 0) == 0);
  CHECK(s.find("1\taccept-reject\t1000\t") != std::string::npos);
  CHECK(s.find("1\tdpot\t100000\t") != std::string::npos);
}
