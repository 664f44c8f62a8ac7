#pragma once

#include <filesystem>
#include <vector>

#include "dpot/tensor.hpp"

namespace dpot {

enum class SampleSource { mu, nu };

/// N x d point cloud with optional conditioning values kappa; the empirical
/// stand-in for mu_kappa or nu_kappa.
struct ParticleBatch {
  Matrix points;
  std::vector<double> condition;
  SampleSource source = SampleSource::mu;

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }
};

/// Throws InputError when any entry is non-finite or the batch is empty.
void validate_batch(const ParticleBatch& batch, const char* what);

/// Binary point cloud: u64 count, u64 dimension, then count * dimension
/// little-endian doubles in row-major order.
void write_point_cloud(const std::filesystem::path& path, const Matrix& points);
Matrix read_point_cloud(const std::filesystem::path& path);

/// Plain-text variant: one point per line, tab-separated, 17 significant digits.
void write_point_cloud_text(const std::filesystem::path& path, const Matrix& points);

}  // namespace dpot
