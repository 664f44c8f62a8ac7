#include "dpot/csir.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "dpot/errors.hpp"

namespace dpot {

void CSIRParams::validate() const {
  if (d < 1) throw InputError("CSIR: need at least one compartment");
  if (rates.size() != static_cast<std::size_t>(2 * d))
    throw InputError("CSIR: expected " + std::to_string(2 * d) + " rates, got " + std::to_string(rates.size()));
  for (double r : rates)
    if (!(r >= 0.0 && r <= 2.0)) throw InputError("CSIR: rate " + std::to_string(r) + " outside [0, 2]");
}

CSIRParams CSIRParams::from_span(std::span<const double> rates) {
  if (rates.size() % 2 != 0) throw InputError("CSIR: rate vector must have even length");
  CSIRParams p;
  p.d = static_cast<int>(rates.size() / 2);
  p.rates.assign(rates.begin(), rates.end());
  return p;
}

CSIRParams CSIRParams::truth(int d) {
  CSIRParams p;
  p.d = d;
  for (int i = 0; i < d; ++i) {
    p.rates.push_back(0.1);
    p.rates.push_back(1.0);
  }
  return p;
}

CSIRState csir_initial_state(int d) {
  CSIRState s;
  s.S.resize(d);
  s.I.resize(d);
  s.R = Vector::Zero(d);
  for (int k = 0; k < d; ++k) {
    const int i = k + 1;
    s.S[k] = 99.0 - d + i;
    s.I[k] = d + 1.0 - i;
  }
  return s;
}

namespace {

// Flat layout [S_0..S_{d-1}, I_0.., R_0..] for the integrator.
void rhs_flat(const double* y, const CSIRParams& p, double* dy) {
  const int d = p.d;
  const double* S = y;
  const double* I = y + d;
  const double* R = y + 2 * d;
  const double* rates = p.rates.data();
  for (int i = 0; i < d; ++i) {
    const int lo = i == 0 ? d - 1 : i - 1;
    const int hi = i == d - 1 ? 0 : i + 1;
    const double infection = rates[2 * i] * S[i] * I[i];
    const double recovery = rates[2 * i + 1] * I[i];
    dy[i] = -infection + 0.5 * ((S[lo] - S[i]) + (S[hi] - S[i]));
    dy[d + i] = infection - recovery + 0.5 * ((I[lo] - I[i]) + (I[hi] - I[i]));
    dy[2 * d + i] = recovery + 0.5 * ((R[lo] - R[i]) + (R[hi] - R[i]));
  }
}

std::vector<double> flatten(const CSIRState& s) {
  const auto d = s.S.size();
  std::vector<double> y(3 * static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < d; ++i) {
    y[static_cast<std::size_t>(i)] = s.S[i];
    y[static_cast<std::size_t>(d + i)] = s.I[i];
    y[static_cast<std::size_t>(2 * d + i)] = s.R[i];
  }
  return y;
}

CSIRState unflatten(const std::vector<double>& y, int d, double t) {
  CSIRState s;
  s.S = Eigen::Map<const Vector>(y.data(), d);
  s.I = Eigen::Map<const Vector>(y.data() + d, d);
  s.R = Eigen::Map<const Vector>(y.data() + 2 * d, d);
  s.t = t;
  return s;
}

}  // namespace

CSIRState csir_rhs(const CSIRState& state, const CSIRParams& params) {
  const int d = params.d;
  if (state.S.size() != d || state.I.size() != d || state.R.size() != d)
    throw DimensionError("csir_rhs: state size does not match the compartment count");
  const std::vector<double> y = flatten(state);
  std::vector<double> dy(y.size());
  rhs_flat(y.data(), params, dy.data());
  return unflatten(dy, d, state.t);
}

std::array<double, kObservationCount> observation_times() {
  std::array<double, kObservationCount> t{};
  for (int j = 1; j <= kObservationCount; ++j) t[static_cast<std::size_t>(j - 1)] = 5.0 * j / 6.0;
  return t;
}

std::vector<CSIRState> rk4_simulate(const CSIRParams& params, std::span<const double> times, double dt) {
  params.validate();
  if (!(dt > 0.0)) throw DomainError("rk4_simulate: step must be positive");
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] < 0.0 || (k > 0 && times[k] < times[k - 1]))
      throw InputError("rk4_simulate: requested times must be ascending and non-negative");
  }
  const int d = params.d;
  const std::size_t n = 3 * static_cast<std::size_t>(d);
  std::vector<double> y = flatten(csir_initial_state(d));
  std::vector<double> f0(n), k2(n), k3(n), k4(n), tmp(n), y1(n), f1(n);
  rhs_flat(y.data(), params, f0.data());

  std::vector<CSIRState> out;
  out.reserve(times.size());
  std::size_t next = 0;
  while (next < times.size() && times[next] == 0.0) out.push_back(unflatten(y, d, 0.0)), ++next;
  if (next == times.size()) return out;

  const double t_end = times.back();
  const long steps = static_cast<long>(std::ceil(t_end / dt - 1e-9));
  double t = 0.0;
  for (long step = 0; step < steps && next < times.size(); ++step) {
    const double h = step + 1 == steps ? t_end - t : dt;
    for (std::size_t k = 0; k < n; ++k) tmp[k] = y[k] + 0.5 * h * f0[k];
    rhs_flat(tmp.data(), params, k2.data());
    for (std::size_t k = 0; k < n; ++k) tmp[k] = y[k] + 0.5 * h * k2[k];
    rhs_flat(tmp.data(), params, k3.data());
    for (std::size_t k = 0; k < n; ++k) tmp[k] = y[k] + h * k3[k];
    rhs_flat(tmp.data(), params, k4.data());
    bool finite = true;
    for (std::size_t k = 0; k < n; ++k) {
      y1[k] = y[k] + h / 6.0 * (f0[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
      finite = finite && std::isfinite(y1[k]);
    }
    const double t1 = step + 1 == steps ? t_end : t + h;
    if (!finite) throw BlowUpError("rk4_simulate: non-finite state at t = " + std::to_string(t1), t1);
    rhs_flat(y1.data(), params, f1.data());

    while (next < times.size() && times[next] <= t1) {
      const double s = (times[next] - t) / h;
      const double s2 = s * s, s3 = s2 * s;
      const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s, h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
      for (std::size_t k = 0; k < n; ++k) tmp[k] = h00 * y[k] + h10 * h * f0[k] + h01 * y1[k] + h11 * h * f1[k];
      out.push_back(unflatten(tmp, d, times[next]));
      ++next;
    }
    std::swap(y, y1);
    std::swap(f0, f1);
    t = t1;
  }
  return out;
}

Matrix infected_at_observations(const CSIRParams& params, double dt) {
  const auto t = observation_times();
  const auto states = rk4_simulate(params, t, dt);
  Matrix out(params.d, kObservationCount);
  for (int j = 0; j < kObservationCount; ++j) out.col(j) = states[static_cast<std::size_t>(j)].I;
  return out;
}

ObservationSet make_observations(int d, Rng& rng, double noise_sd) {
  ObservationSet obs;
  std::normal_distribution<double> normal(0.0, noise_sd);
  obs.noise.resize(d, kObservationCount);
  for (Eigen::Index i = 0; i < obs.noise.size(); ++i) obs.noise.data()[i] = noise_sd > 0.0 ? normal(rng) : 0.0;
  obs.y = infected_at_observations(CSIRParams::truth(d)) + obs.noise;
  return obs;
}

double csir_potential(const CSIRParams& params, const ObservationSet& obs, double dt) {
  if (obs.d() != params.d) throw DimensionError("csir_potential: observation and parameter sizes differ");
  return 0.5 * (infected_at_observations(params, dt) - obs.y).squaredNorm();
}

double log_likelihood(const CSIRParams& params, const ObservationSet& obs, double dt) {
  return -csir_potential(params, obs, dt);
}

Box csir_prior_box(int d) {
  return {std::vector<double>(static_cast<std::size_t>(2 * d), 0.0),
          std::vector<double>(static_cast<std::size_t>(2 * d), 2.0)};
}

Matrix sample_csir_prior(int d, std::size_t n, Rng& rng) { return sample_uniform_box(csir_prior_box(d), n, rng); }

Matrix csir_potential_batch(const Matrix& rates, const ObservationSet& obs, double dt) {
  const int d = obs.d();
  if (rates.cols() != 2 * d) throw DimensionError("csir_potential_batch: expected 2d rate columns");
  if (!(dt > 0.0)) throw DomainError("csir_potential_batch: step must be positive");
  using Array = Eigen::ArrayXd;
  const Eigen::Index m = rates.rows();
  const auto n = static_cast<std::size_t>(3 * d);
  std::vector<Array> beta(static_cast<std::size_t>(d)), zeta(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) {
    beta[static_cast<std::size_t>(i)] = rates.col(2 * i).array();
    zeta[static_cast<std::size_t>(i)] = rates.col(2 * i + 1).array();
  }
  // Component k of the flat state lives in y[k], one lane per proposal.
  auto rhs = [&](const std::vector<Array>& y, std::vector<Array>& dy) {
    for (int i = 0; i < d; ++i) {
      const auto lo = static_cast<std::size_t>(i == 0 ? d - 1 : i - 1);
      const auto hi = static_cast<std::size_t>(i == d - 1 ? 0 : i + 1);
      const auto si = static_cast<std::size_t>(i);
      const auto ii = static_cast<std::size_t>(d + i);
      const auto ri = static_cast<std::size_t>(2 * d + i);
      const Array infection = beta[si] * y[si] * y[ii];
      const Array recovery = zeta[si] * y[ii];
      dy[si] = -infection + 0.5 * ((y[lo] - y[si]) + (y[hi] - y[si]));
      dy[ii] = infection - recovery + 0.5 * ((y[d + lo] - y[ii]) + (y[d + hi] - y[ii]));
      dy[ri] = recovery + 0.5 * ((y[2 * d + lo] - y[ri]) + (y[2 * d + hi] - y[ri]));
    }
  };
  const CSIRState init = csir_initial_state(d);
  std::vector<Array> y(n), y1(n), f0(n, Array(m)), f1(n, Array(m)), k2(n, Array(m)), k3(n, Array(m)),
      k4(n, Array(m)), tmp(n);
  for (int i = 0; i < d; ++i) {
    y[static_cast<std::size_t>(i)] = Array::Constant(m, init.S[i]);
    y[static_cast<std::size_t>(d + i)] = Array::Constant(m, init.I[i]);
    y[static_cast<std::size_t>(2 * d + i)] = Array::Zero(m);
  }
  y1 = y;
  tmp = y;
  rhs(y, f0);

  const auto times = observation_times();
  Array phi = Array::Zero(m);
  const double t_end = times.back();
  const long steps = static_cast<long>(std::ceil(t_end / dt - 1e-9));
  std::size_t next = 0;
  double t = 0.0;
  for (long step = 0; step < steps; ++step) {
    const double h = step + 1 == steps ? t_end - t : dt;
    for (std::size_t k = 0; k < n; ++k) tmp[k] = y[k] + 0.5 * h * f0[k];
    rhs(tmp, k2);
    for (std::size_t k = 0; k < n; ++k) tmp[k] = y[k] + 0.5 * h * k2[k];
    rhs(tmp, k3);
    for (std::size_t k = 0; k < n; ++k) tmp[k] = y[k] + h * k3[k];
    rhs(tmp, k4);
    for (std::size_t k = 0; k < n; ++k) y1[k] = y[k] + h / 6.0 * (f0[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
    const double t1 = step + 1 == steps ? t_end : t + h;
    rhs(y1, f1);
    while (next < times.size() && times[next] <= t1) {
      const double s = (times[next] - t) / h;
      const double s2 = s * s, s3 = s2 * s;
      const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s, h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
      for (int i = 0; i < d; ++i) {
        const auto k = static_cast<std::size_t>(d + i);
        const Array infected = h00 * y[k] + h10 * h * f0[k] + h01 * y1[k] + h11 * h * f1[k];
        phi += 0.5 * (infected - obs.y(i, static_cast<Eigen::Index>(next))).square();
      }
      ++next;
    }
    std::swap(y, y1);
    std::swap(f0, f1);
    t = t1;
  }
  if (!phi.allFinite()) throw BlowUpError("csir_potential_batch: non-finite state", t_end);
  return phi.matrix();
}

AcceptRejectResult potential_accept_reject(const BatchPotential& potential, int d, std::size_t n, Rng& rng,
                                           const AcceptRejectOptions& options) {
  constexpr Eigen::Index kBlock = 256;
  if (d < 1) throw InputError("potential_accept_reject: d must be >= 1");
  if (n < 1) throw InputError("potential_accept_reject: n must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  std::uniform_real_distribution<double> coord(0.0, 2.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AcceptRejectResult out;
  out.samples.resize(static_cast<Eigen::Index>(n), 2 * d);
  Matrix block(kBlock, 2 * d);
  Vector u(kBlock);
  std::size_t accepted = 0;
  while (accepted < n) {
    for (Eigen::Index r = 0; r < kBlock; ++r) {
      for (Eigen::Index k = 0; k < 2 * d; ++k) block(r, k) = coord(rng);
      u[r] = unit(rng);
    }
    const Matrix phi = potential(block);
    if (phi.rows() != kBlock || phi.cols() != 1) throw DimensionError("potential_accept_reject: potential shape");
    for (Eigen::Index r = 0; r < kBlock && accepted < n; ++r) {
      ++out.proposals;
      if (u[r] < std::exp(-phi(r, 0))) out.samples.row(static_cast<Eigen::Index>(accepted++)) = block.row(r);
    }
    if (out.proposals >= options.starvation_window &&
        static_cast<double>(accepted) < options.min_rate * static_cast<double>(out.proposals)) {
      const double rate = static_cast<double>(accepted) / static_cast<double>(out.proposals);
      throw StarvationError("potential_accept_reject: acceptance rate " + std::to_string(rate) + " after " +
                                std::to_string(out.proposals) + " proposals",
                            rate);
    }
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

AcceptRejectResult posterior_accept_reject(const ObservationSet& obs, std::size_t n, Rng& rng,
                                           const AcceptRejectOptions& options) {
  return potential_accept_reject([&obs](const Matrix& rates) { return csir_potential_batch(rates, obs); },
                                 obs.d(), n, rng, options);
}

void write_timing_table(std::ostream& os, std::span<const TimingRow> rows) {
  os << "d\tmethod\tsamples\tseconds\n";
  for (const TimingRow& r : rows)
    os << r.d << '\t' << r.method << '\t' << r.samples << '\t' << std::setprecision(6) << r.seconds << '\n';
}

}  // namespace dpot
