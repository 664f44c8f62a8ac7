#include "dpot/particles.hpp"

#include <fstream>
#include <iomanip>
#include <string>

#include "binary_io.hpp"
#include "dpot/errors.hpp"

namespace dpot {

void validate_batch(const ParticleBatch& batch, const char* what) {
  if (batch.size() == 0 || batch.dim() == 0) throw InputError(std::string(what) + ": empty batch");
  if (!batch.points.allFinite()) throw InputError(std::string(what) + ": non-finite sample");
}

void write_point_cloud(const std::filesystem::path& path, const Matrix& points) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open point cloud for writing: " + path.string());
  detail::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(points.rows()));
  detail::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(points.cols()));
  for (Eigen::Index i = 0; i < points.size(); ++i) detail::write_le<double>(os, points.data()[i]);
  if (!os) throw IoError("failed writing point cloud: " + path.string());
}

Matrix read_point_cloud(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open point cloud: " + path.string());
  const auto rows = detail::read_le<std::uint64_t>(is);
  const auto cols = detail::read_le<std::uint64_t>(is);
  const auto expected = rows * cols * sizeof(double);
  const auto actual = std::filesystem::file_size(path) - 2 * sizeof(std::uint64_t);
  if (actual != expected) throw IoError("point cloud size does not match header: " + path.string());
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = detail::read_le<double>(is);
  return m;
}

void write_point_cloud_text(const std::filesystem::path& path, const Matrix& points) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open point cloud for writing: " + path.string());
  os << std::setprecision(17);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (Eigen::Index j = 0; j < points.cols(); ++j) {
      if (j > 0) os << '\t';
      os << points(i, j);
    }
    os << '\n';
  }
}

}  // namespace dpot
