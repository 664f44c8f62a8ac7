#pragma once

#include <algorithm>
#include <cmath>

#include "dpot/image.hpp"

namespace dpot::testing {

/// Smooth synthetic photo stand-ins: variant 0 is a warm sunset gradient with
/// a bright disc, variant 1 a cool sea-and-foliage scene.
inline ImageTensor synthetic_image(int width, int height, int variant) {
  ImageTensor img{width, height, Matrix(static_cast<Eigen::Index>(width) * height, 3)};
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double u = (x + 0.5) / width, v = (y + 0.5) / height;
      double r, g, b;
      if (variant == 0) {
        const double sun = std::exp(-((u - 0.7) * (u - 0.7) + (v - 0.35) * (v - 0.35)) / 0.01);
        r = 0.85 - 0.35 * v + 0.1 * sun;
        g = 0.35 + 0.25 * (1.0 - v) * u + 0.45 * sun;
        b = 0.25 + 0.35 * v + 0.1 * std::sin(6.0 * u);
      } else {
        const double leaf = 0.5 + 0.5 * std::sin(9.0 * u + 4.0 * v);
        r = 0.1 + 0.2 * u * v;
        g = 0.3 + 0.4 * leaf * v;
        b = 0.75 - 0.4 * v + 0.1 * std::cos(5.0 * u);
      }
      const Eigen::Index i = static_cast<Eigen::Index>(y) * width + x;
      img.pixels(i, 0) = std::clamp(r, 0.02, 0.98);
      img.pixels(i, 1) = std::clamp(g, 0.02, 0.98);
      img.pixels(i, 2) = std::clamp(b, 0.02, 0.98);
    }
  }
  return img;
}

}  // namespace dpot::testing
