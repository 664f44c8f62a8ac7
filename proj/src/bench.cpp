#include "dpot/bench.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "dpot/errors.hpp"

namespace dpot {

namespace {

constexpr double kPi = std::numbers::pi;

std::string format_point(std::span<const double> x) {
  std::ostringstream os;
  os << "(";
  for (std::size_t k = 0; k < x.size(); ++k) os << (k ? ", " : "") << x[k];
  os << ")";
  return os.str();
}

}  // namespace

double Box::volume() const {
  double v = 1.0;
  for (std::size_t k = 0; k < lo.size(); ++k) v *= hi[k] - lo[k];
  return v;
}

AcceptRejectResult accept_reject(const Density& density, const Box& box, double bound,
                                 std::size_t n, Rng& rng, const AcceptRejectOptions& options) {
  if (box.lo.size() != box.hi.size() || box.lo.empty()) throw InputError("accept_reject: malformed box");
  if (!(bound > 0.0) || !std::isfinite(bound)) throw InputError("accept_reject: bound must be positive");
  const auto start = std::chrono::steady_clock::now();
  const std::size_t d = box.dim();
  std::vector<std::uniform_real_distribution<double>> coord;
  for (std::size_t k = 0; k < d; ++k) coord.emplace_back(box.lo[k], box.hi[k]);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  AcceptRejectResult out;
  out.samples.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::vector<double> x(d);
  std::size_t accepted = 0;
  while (accepted < n) {
    for (std::size_t k = 0; k < d; ++k) x[k] = coord[k](rng);
    const double u = unit(rng);
    ++out.proposals;
    const double f = density(x);
    if (f > bound || !std::isfinite(f)) {
      throw BoundViolationError("accept_reject: density " + std::to_string(f) + " exceeds bound " +
                                    std::to_string(bound) + " at " + format_point(x),
                                x, f);
    }
    if (u * bound < f) {
      for (std::size_t k = 0; k < d; ++k)
        out.samples(static_cast<Eigen::Index>(accepted), static_cast<Eigen::Index>(k)) = x[k];
      ++accepted;
    }
    if (out.proposals >= options.starvation_window &&
        static_cast<double>(accepted) < options.min_rate * static_cast<double>(out.proposals)) {
      const double rate = static_cast<double>(accepted) / static_cast<double>(out.proposals);
      throw StarvationError("accept_reject: acceptance rate " + std::to_string(rate) + " after " +
                                std::to_string(out.proposals) + " proposals",
                            rate);
    }
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

double grid_maximum(const Density& density, const Box& box, int grid) {
  const std::size_t d = box.dim();
  std::vector<int> index(d, 0);
  std::vector<double> x(d);
  double best = -std::numeric_limits<double>::infinity();
  while (true) {
    for (std::size_t k = 0; k < d; ++k)
      x[k] = box.lo[k] + (index[k] + 0.5) * (box.hi[k] - box.lo[k]) / grid;
    best = std::max(best, density(x));
    std::size_t k = 0;
    while (k < d && ++index[k] == grid) index[k++] = 0;
    if (k == d) break;
  }
  return best;
}

Matrix sample_uniform_box(const Box& box, std::size_t n, Rng& rng) {
  const auto d = static_cast<Eigen::Index>(box.dim());
  Matrix out(static_cast<Eigen::Index>(n), d);
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index k = 0; k < d; ++k) {
      std::uniform_real_distribution<double> u(box.lo[static_cast<std::size_t>(k)], box.hi[static_cast<std::size_t>(k)]);
      out(i, k) = u(rng);
    }
  return out;
}

Matrix sample_disk(double radius, std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix out(static_cast<Eigen::Index>(n), 2);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double r = radius * std::sqrt(unit(rng));
    const double theta = 2.0 * kPi * unit(rng);
    out(i, 0) = r * std::cos(theta);
    out(i, 1) = r * std::sin(theta);
  }
  return out;
}

// --- square ----------------------------------------------------------------------

QValues q_eval(double z) {
  const double k = 8.0 * kPi;
  const double a = -z * z / (8.0 * kPi) + 1.0 / (256.0 * kPi * kPi * kPi) + 1.0 / (32.0 * kPi);
  const double da = -z / (4.0 * kPi);
  const double d2a = -1.0 / (4.0 * kPi);
  const double b = z / (32.0 * kPi * kPi);
  const double db = 1.0 / (32.0 * kPi * kPi);
  const double c = std::cos(k * z);
  const double s = std::sin(k * z);
  QValues v;
  v.q = a * c + b * s;
  v.dq = da * c - a * k * s + db * s + b * k * c;
  v.d2q = d2a * c - 2.0 * da * k * s - a * k * k * c + 2.0 * db * k * c - b * k * k * s;
  return v;
}

double square_density(double x1, double x2) {
  if (std::abs(x1) > kSquareHalfWidth || std::abs(x2) > kSquareHalfWidth) {
    throw DomainError("square_density: point (" + std::to_string(x1) + ", " + std::to_string(x2) +
                      ") outside the square");
  }
  const QValues a = q_eval(x1);
  const QValues b = q_eval(x2);
  return 1.0 + 4.0 * (a.d2q * b.q + a.q * b.d2q) +
         16.0 * (a.q * b.q * a.d2q * b.d2q - a.dq * a.dq * b.dq * b.dq);
}

Eigen::Vector2d square_exact_map(double x1, double x2) {
  const QValues a = q_eval(x1);
  const QValues b = q_eval(x2);
  return {x1 + 4.0 * a.dq * b.q, x2 + 4.0 * a.q * b.dq};
}

Matrix square_exact_map(const Matrix& x) {
  if (x.cols() != 2) throw DimensionError("square_exact_map: points must be 2-D");
  Matrix out(x.rows(), 2);
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) = square_exact_map(x(i, 0), x(i, 1)).transpose();
  return out;
}

Box square_box() {
  return {{-kSquareHalfWidth, -kSquareHalfWidth}, {kSquareHalfWidth, kSquareHalfWidth}};
}

double square_density_bound() {
  static const double bound =
      1.05 * grid_maximum([](std::span<const double> x) { return square_density(x[0], x[1]); },
                          square_box(), 400);
  return bound;
}

AcceptRejectResult sample_square_source(std::size_t n, Rng& rng) {
  return accept_reject([](std::span<const double> x) { return square_density(x[0], x[1]); },
                       square_box(), square_density_bound(), n, rng);
}

Matrix sample_square_target(std::size_t n, Rng& rng) { return sample_uniform_box(square_box(), n, rng); }

// --- ellipses ------------------------------------------------------------------------

Eigen::Matrix2d ellipse_source_matrix() {
  Eigen::Matrix2d m;
  m << 0.8, 0.0, 0.0, 0.4;
  return m;
}

Eigen::Matrix2d ellipse_target_matrix(double kappa) {
  Eigen::Matrix2d m;
  m << 0.6, kappa, kappa, 0.8;
  return m;
}

namespace {

Eigen::Matrix2d rotation(double a) {
  Eigen::Matrix2d r;
  r << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
  return r;
}

bool symmetric_positive(const Eigen::Matrix2d& m) {
  if (std::abs(m(0, 1) - m(1, 0)) > 1e-9 * m.norm()) return false;
  const Eigen::Matrix2d sym = 0.5 * (m + m.transpose());
  return Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(sym).eigenvalues().minCoeff() > 0.0;
}

}  // namespace

double ellipse_angle(double kappa) {
  const Eigen::Matrix2d my = ellipse_target_matrix(kappa);
  if (std::abs(my.determinant()) < 1e-12) throw NumericError("ellipse target matrix is singular");
  const Eigen::Matrix2d m = ellipse_source_matrix().inverse() * my.inverse();
  const Eigen::Matrix2d j = rotation(kPi / 2.0);
  double a = std::atan2((m * j).trace(), m.trace());
  const Eigen::Matrix2d candidate = my * rotation(a) * ellipse_source_matrix().inverse();
  if (!symmetric_positive(candidate)) a += kPi;
  return a;
}

Eigen::Matrix2d ellipse_map_matrix(double kappa) {
  const Eigen::Matrix2d map =
      ellipse_target_matrix(kappa) * rotation(ellipse_angle(kappa)) * ellipse_source_matrix().inverse();
  if (!symmetric_positive(map)) {
    throw NumericError("ellipse map for kappa = " + std::to_string(kappa) +
                       " is not symmetric positive definite");
  }
  return map;
}

Matrix ellipse_exact_map(const Matrix& x, double kappa) {
  if (x.cols() != 2) throw DimensionError("ellipse_exact_map: points must be 2-D");
  const Eigen::Matrix2d a = ellipse_map_matrix(kappa);
  return x * a.transpose();
}

Matrix sample_ellipse_source(std::size_t n, Rng& rng) {
  return sample_disk(1.0, n, rng) * ellipse_source_matrix().transpose();
}

Matrix sample_ellipse_target(double kappa, std::size_t n, Rng& rng) {
  return sample_disk(1.0, n, rng) * ellipse_target_matrix(kappa).transpose();
}

// --- half circles --------------------------------------------------------------------------

ParticleBatch sample_half_circles(double kappa, std::size_t n, Rng& rng) {
  if (kappa < 0.0) throw DomainError("sample_half_circles: kappa must be non-negative");
  ParticleBatch b;
  b.points = sample_disk(kHalfCircleRadius, n, rng);
  for (Eigen::Index i = 0; i < b.points.rows(); ++i)
    b.points(i, 0) += b.points(i, 0) < 0.0 ? -0.5 * kappa : 0.5 * kappa;
  b.source = SampleSource::mu;
  return b;
}

bool in_shifted_half_disks(double x1, double x2, double kappa) {
  const double r2 = kHalfCircleRadius * kHalfCircleRadius * (1.0 + 1e-12);
  const double left = x1 + 0.5 * kappa;
  const double right = x1 - 0.5 * kappa;
  return (left < 0.0 && left * left + x2 * x2 <= r2) || (right >= 0.0 && right * right + x2 * x2 <= r2);
}

Matrix sample_half_circle_target(std::size_t n, Rng& rng) { return sample_disk(kHalfCircleRadius, n, rng); }

// --- mixture --------------------------------------------------------------------------------

namespace {

constexpr double kBumpVariance = 0.04;

double bump(double dx, double dy) {
  return std::exp(-0.5 * (dx * dx + dy * dy) / kBumpVariance) / kBumpVariance;
}

}  // namespace

double mixture_source_density(double x1, double x2) {
  // The four corner bumps factor into (g(x1 - 1) + g(x1 + 1)) (g(x2 - 1) + g(x2 + 1)).
  auto g = [](double t) { return std::exp(-0.5 * t * t / kBumpVariance); };
  return 2.0 + (g(x1 - 1.0) + g(x1 + 1.0)) * (g(x2 - 1.0) + g(x2 + 1.0)) / kBumpVariance;
}

double mixture_target_density(double y1, double y2) { return 2.0 + bump(y1, y2); }

Box mixture_box() { return {{-1.0, -1.0}, {1.0, 1.0}}; }

AcceptRejectResult sample_mixture_source(std::size_t n, Rng& rng) {
  // Each corner bump peaks at 25 in its own corner; the other three and the
  // offset add at most 2 + 3 * 25 * exp(-50).
  return accept_reject([](std::span<const double> x) { return mixture_source_density(x[0], x[1]); },
                       mixture_box(), 27.5, n, rng);
}

AcceptRejectResult sample_mixture_target(std::size_t n, Rng& rng) {
  return accept_reject([](std::span<const double> y) { return mixture_target_density(y[0], y[1]); },
                       mixture_box(), 27.0 + 1e-9, n, rng);
}

}  // namespace dpot
