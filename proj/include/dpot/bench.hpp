#pragma once

// Analytic benchmark distributions with known optimal maps.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "dpot/particles.hpp"
#include "dpot/random.hpp"
#include "dpot/tensor.hpp"

namespace dpot {

// --- generic sampling ----------------------------------------------------------

/// Axis-aligned box [lo_k, hi_k] in every coordinate.
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  std::size_t dim() const { return lo.size(); }
  double volume() const;
};

using Density = std::function<double(std::span<const double>)>;

struct AcceptRejectOptions {
  /// After this many proposals, an acceptance rate below `min_rate` aborts.
  std::uint64_t starvation_window = 10'000'000;
  double min_rate = 1e-6;
};

struct AcceptRejectResult {
  Matrix samples;
  std::uint64_t proposals = 0;
  double seconds = 0.0;

  double acceptance_rate() const {
    return proposals == 0 ? 0.0 : static_cast<double>(samples.rows()) / static_cast<double>(proposals);
  }
};

/// Draws uniform proposals in `box` and keeps each with probability
/// density(x) / bound. Throws BoundViolationError when density(x) > bound and
/// StarvationError when acceptance is too rare.
AcceptRejectResult accept_reject(const Density& density, const Box& box, double bound,
                                 std::size_t n, Rng& rng, const AcceptRejectOptions& options = {});

/// Maximum of the density over the midpoints of a grid^dim lattice in `box`.
double grid_maximum(const Density& density, const Box& box, int grid);

/// n uniform samples in the box.
Matrix sample_uniform_box(const Box& box, std::size_t n, Rng& rng);

/// n uniform samples in the disk of the given radius (r = radius sqrt(U)).
Matrix sample_disk(double radius, std::size_t n, Rng& rng);

// --- square: non-uniform to uniform on (-1/4, 1/4)^2 ------------------------------

inline constexpr double kSquareHalfWidth = 0.25;

struct QValues {
  double q = 0.0;
  double dq = 0.0;
  double d2q = 0.0;
};

/// q(z) = (-z^2/(8 pi) + 1/(256 pi^3) + 1/(32 pi)) cos(8 pi z) + z sin(8 pi z)/(32 pi^2)
/// with its first two derivatives in closed form.
QValues q_eval(double z);

/// Source density; equals det DT for the exact map T, so its integral over the
/// square is the square's area. Throws DomainError outside the closed square.
double square_density(double x1, double x2);

/// T(x) = (x1 + 4 q'(x1) q(x2), x2 + 4 q(x1) q'(x2)).
Eigen::Vector2d square_exact_map(double x1, double x2);
Matrix square_exact_map(const Matrix& x);

Box square_box();
/// Envelope for the square density: grid maximum times 1.05.
double square_density_bound();
AcceptRejectResult sample_square_source(std::size_t n, Rng& rng);
Matrix sample_square_target(std::size_t n, Rng& rng);

// --- ellipses --------------------------------------------------------------------

Eigen::Matrix2d ellipse_source_matrix();
Eigen::Matrix2d ellipse_target_matrix(double kappa);
/// Rotation angle a with M_y R_a M_x^{-1} symmetric positive definite.
double ellipse_angle(double kappa);
Eigen::Matrix2d ellipse_map_matrix(double kappa);
Matrix ellipse_exact_map(const Matrix& x, double kappa);

/// M_x applied to uniform samples of the unit disk.
Matrix sample_ellipse_source(std::size_t n, Rng& rng);
/// M_y(kappa) applied to uniform samples of the unit disk.
Matrix sample_ellipse_target(double kappa, std::size_t n, Rng& rng);

// --- disjoint half circles ----------------------------------------------------------

inline constexpr double kHalfCircleRadius = 0.85;

/// Uniform disk of radius 0.85 whose left half (x1 < 0) is moved by -kappa/2
/// and right half by +kappa/2. kappa = 0 is the plain disk.
ParticleBatch sample_half_circles(double kappa, std::size_t n, Rng& rng);
/// True when the point lies in one of the two shifted half disks.
bool in_shifted_half_disks(double x1, double x2, double kappa);
Matrix sample_half_circle_target(std::size_t n, Rng& rng);

// --- Gaussian mixture to centred Gaussian on [-1, 1]^2 --------------------------------

/// 2 + sum over the four corners of exp(-|x - c|^2 / (2 * 0.04)) / 0.04 (unnormalised).
double mixture_source_density(double x1, double x2);
/// 2 + exp(-|y|^2 / (2 * 0.04)) / 0.04 (unnormalised).
double mixture_target_density(double y1, double y2);
Box mixture_box();
AcceptRejectResult sample_mixture_source(std::size_t n, Rng& rng);
AcceptRejectResult sample_mixture_target(std::size_t n, Rng& rng);

}  // namespace dpot
