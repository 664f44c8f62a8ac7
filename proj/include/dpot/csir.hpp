#pragma once

// Compartmental SIR model on a ring of d compartments, its noisy
// observations and an accept-reject posterior sampler.
//
//   dS_i = -b_i S_i I_i          + 1/2 sum_{j in {i-1, i+1}} (S_j - S_i)
//   dI_i =  b_i S_i I_i - z_i I_i + 1/2 sum_{j in {i-1, i+1}} (I_j - I_i)
//   dR_i =            z_i I_i    + 1/2 sum_{j in {i-1, i+1}} (R_j - R_i)
//
// with cyclic neighbours and S_i(0) = 99 - d + i, I_i(0) = d + 1 - i, R_i(0) = 0
// (i = 1..d).

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dpot/bench.hpp"
#include "dpot/random.hpp"
#include "dpot/tensor.hpp"

namespace dpot {

/// Rate vector (b_1, z_1, ..., b_d, z_d), every entry in the prior box [0, 2].
struct CSIRParams {
  int d = 1;
  std::vector<double> rates;

  double beta(int i) const { return rates[static_cast<std::size_t>(2 * i)]; }
  double zeta(int i) const { return rates[static_cast<std::size_t>(2 * i + 1)]; }
  /// Throws InputError on a size mismatch or a rate outside [0, 2].
  void validate() const;

  static CSIRParams from_span(std::span<const double> rates);
  /// (0.1, 1, 0.1, 1, ...)
  static CSIRParams truth(int d);
};

struct CSIRState {
  Vector S;
  Vector I;
  Vector R;
  double t = 0.0;

  double total() const { return S.sum() + I.sum() + R.sum(); }
};

CSIRState csir_initial_state(int d);

/// Time derivative of every compartment; the returned state's t is unused.
CSIRState csir_rhs(const CSIRState& state, const CSIRParams& params);

inline constexpr double kCsirStep = 0.01;
inline constexpr int kObservationCount = 6;

/// t_j = 5 j / 6 for j = 1..6.
std::array<double, kObservationCount> observation_times();

/// Fixed-step classical RK4 from t = 0; the state at each requested time
/// (ascending, >= 0) comes from cubic Hermite interpolation between the two
/// bracketing steps. Throws BlowUpError if the state becomes non-finite.
std::vector<CSIRState> rk4_simulate(const CSIRParams& params, std::span<const double> times,
                                    double dt = kCsirStep);

/// d x 6 matrix of I_i(t_j).
Matrix infected_at_observations(const CSIRParams& params, double dt = kCsirStep);

struct ObservationSet {
  Matrix y;  // d x 6
  Matrix noise;  // d x 6, y = I(t; x_true) + noise

  int d() const { return static_cast<int>(y.rows()); }
};

/// y_ij = I_i(t_j; x_true) + a_ij with a_ij ~ N(0, noise_sd^2).
ObservationSet make_observations(int d, Rng& rng, double noise_sd = 1.0);

/// Phi = 1/2 sum_ij (I_i(t_j; x) - y_ij)^2.
double csir_potential(const CSIRParams& params, const ObservationSet& obs, double dt = kCsirStep);
/// -Phi.
double log_likelihood(const CSIRParams& params, const ObservationSet& obs, double dt = kCsirStep);

/// Phi for every row of an m x 2d rate matrix, integrated in lockstep; same
/// scheme and step as csir_potential. Returns an m x 1 column.
Matrix csir_potential_batch(const Matrix& rates, const ObservationSet& obs, double dt = kCsirStep);

Box csir_prior_box(int d);
Matrix sample_csir_prior(int d, std::size_t n, Rng& rng);

/// Maps an m x 2d block of rate vectors to an m x 1 column of potentials.
using BatchPotential = std::function<Matrix(const Matrix&)>;

/// Uniform proposals on [0, 2]^{2d}, accepted with probability exp(-potential).
/// Proposals are evaluated in blocks and accepted in proposal order.
AcceptRejectResult potential_accept_reject(const BatchPotential& potential, int d, std::size_t n, Rng& rng,
                                           const AcceptRejectOptions& options = {});
/// potential_accept_reject with csir_potential_batch for the given observations.
AcceptRejectResult posterior_accept_reject(const ObservationSet& obs, std::size_t n, Rng& rng,
                                           const AcceptRejectOptions& options = {});

struct TimingRow {
  int d = 1;
  std::string method;
  std::size_t samples = 0;
  double seconds = 0.0;
};

/// Tab-separated table with columns d, method, samples, seconds.
void write_timing_table(std::ostream& os, std::span<const TimingRow> rows);

}  // namespace dpot
