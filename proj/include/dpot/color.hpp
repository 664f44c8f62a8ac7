#pragma once

// Colour transfer: forward and inverse DPOT maps between the RGB pixel clouds
// of two images, applied per pixel, with displacement interpolation
// T_t(x) = (1 - t) x + t T(x).

#include <utility>
#include <vector>

#include "dpot/image.hpp"
#include "dpot/trainer.hpp"

namespace dpot {

struct ColorTransferConfig {
  /// network must be 3 -> 3; pool_size is ignored (every training pixel is in
  /// the pool).
  TrainConfig train;
  /// Training images are downsampled to this side; maps apply at full size.
  int train_max_side = 256;
  std::vector<double> frame_times{0.2, 0.4, 0.6, 0.8, 1.0};
  /// Source and target pixels sampled for the cycle round-trip check.
  std::size_t round_trip_samples = 4096;
  double round_trip_radius = 0.1;

  /// Throws InputError naming the offending field.
  void validate() const;
};

struct ColorTransferResult {
  InverseResult maps;
  ImageTensor source_with_target_palette;
  ImageTensor target_with_source_palette;
  /// Source image moved toward the target palette, one per frame time.
  std::vector<std::pair<double, ImageTensor>> frames;
  std::size_t clamped_forward = 0;
  std::size_t clamped_inverse = 0;
  /// Fraction of sampled pixels p with |T_inv(T_fwd(p)) - p| < radius, and the
  /// same for target pixels through T_fwd(T_inv(q)).
  double round_trip_source = 0.0;
  double round_trip_target = 0.0;

  double clamp_rate_forward() const;
  double clamp_rate_inverse() const;
};

/// (1 - t) x + t mapped, row by row.
Matrix displacement_interpolation(const Matrix& x, const Matrix& mapped, double t);

/// Fraction of rows with |back - x| < radius.
double round_trip_fraction(const Matrix& x, const Matrix& back, double radius);

ColorTransferResult color_transfer(const ImageTensor& source, const ImageTensor& target,
                                   const ColorTransferConfig& cfg, const TrainHooks& hooks = {});

}  // namespace dpot
