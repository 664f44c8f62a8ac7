#include "dpot/color.hpp"

#include <algorithm>
#include <string>

#include "dpot/errors.hpp"

namespace dpot {

void ColorTransferConfig::validate() const {
  if (train.network.d_in != 3 || train.network.d_out != 3) throw InputError("network: colour maps must be 3 -> 3");
  if (train_max_side < 1) throw InputError("train_max_side: must be positive");
  for (double t : frame_times)
    if (!(t >= 0.0 && t <= 1.0)) throw InputError("frame_times: every time must lie in [0, 1]");
  if (round_trip_samples < 1) throw InputError("round_trip_samples: must be positive");
  if (!(round_trip_radius > 0.0)) throw InputError("round_trip_radius: must be positive");
}

double ColorTransferResult::clamp_rate_forward() const {
  return static_cast<double>(clamped_forward) / static_cast<double>(source_with_target_palette.pixel_count());
}

double ColorTransferResult::clamp_rate_inverse() const {
  return static_cast<double>(clamped_inverse) / static_cast<double>(target_with_source_palette.pixel_count());
}

Matrix displacement_interpolation(const Matrix& x, const Matrix& mapped, double t) {
  if (x.rows() != mapped.rows() || x.cols() != mapped.cols())
    throw DimensionError("displacement_interpolation: shapes differ");
  return (1.0 - t) * x + t * mapped;
}

double round_trip_fraction(const Matrix& x, const Matrix& back, double radius) {
  if (x.rows() != back.rows() || x.cols() != back.cols()) throw DimensionError("round_trip_fraction: shapes differ");
  if (x.rows() == 0) throw InputError("round_trip_fraction: no points");
  const auto within = ((back - x).rowwise().norm().array() < radius).count();
  return static_cast<double>(within) / static_cast<double>(x.rows());
}

namespace {

Matrix sample_rows(const Matrix& m, std::size_t n, Rng& rng) {
  std::uniform_int_distribution<Eigen::Index> pick(0, m.rows() - 1);
  Matrix out(static_cast<Eigen::Index>(n), m.cols());
  for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) = m.row(pick(rng));
  return out;
}

}  // namespace

ColorTransferResult color_transfer(const ImageTensor& source, const ImageTensor& target,
                                   const ColorTransferConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  source.validate();
  target.validate();
  const ImageTensor small_src = resize_to_fit(source, cfg.train_max_side);
  const ImageTensor small_tgt = resize_to_fit(target, cfg.train_max_side);

  TrainConfig train = cfg.train;
  train.pool_size = std::min(small_src.pixel_count(), small_tgt.pixel_count());
  if (train.pool_size < static_cast<std::size_t>(train.dpot.batch_size))
    throw InputError("batch_size: larger than the training image pixel count (" + std::to_string(train.pool_size) +
                     ")");
  std::vector<ConditionPool> pools(static_cast<std::size_t>(train.dpot.n_kappa));
  for (ConditionPool& p : pools) {
    p.source = small_src.pixels;
    p.target = small_tgt.pixels;
  }

  ColorTransferResult out{train_inverse(train, pools, hooks), {}, {}, {}, 0, 0, 0.0, 0.0};
  const Matrix forward = out.maps.forward.apply(source.pixels);
  const Matrix inverse = out.maps.inverse.apply(target.pixels);
  out.source_with_target_palette = image_from_colors(forward, source.width, source.height, &out.clamped_forward);
  out.target_with_source_palette = image_from_colors(inverse, target.width, target.height, &out.clamped_inverse);
  for (double t : cfg.frame_times)
    out.frames.emplace_back(
        t, image_from_colors(displacement_interpolation(source.pixels, forward, t), source.width, source.height));

  Rng rng = make_rng(cfg.train.seed, 6);
  const Matrix xs = sample_rows(source.pixels, cfg.round_trip_samples, rng);
  const Matrix ys = sample_rows(target.pixels, cfg.round_trip_samples, rng);
  out.round_trip_source = round_trip_fraction(xs, out.maps.inverse.apply(out.maps.forward.apply(xs)),
                                              cfg.round_trip_radius);
  out.round_trip_target = round_trip_fraction(ys, out.maps.forward.apply(out.maps.inverse.apply(ys)),
                                              cfg.round_trip_radius);
  return out;
}

}  // namespace dpot
