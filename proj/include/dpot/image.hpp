#pragma once

// RGB images as point clouds: PNG/JPEG decode and encode, resizing, and the
// pixel matrix view used by colour transfer.

#include <filesystem>

#include "dpot/tensor.hpp"

namespace dpot {

/// width x height RGB image; pixels is (width * height) x 3 in scanline order
/// with every channel in [0, 1].
struct ImageTensor {
  int width = 0;
  int height = 0;
  Matrix pixels;

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  /// Throws InputError on non-positive dimensions, a shape mismatch or a
  /// channel outside [0, 1].
  void validate() const;
};

/// Builds an image from colours, clamping each channel into [0, 1]; returns
/// the number of pixels that had at least one channel clamped.
ImageTensor image_from_colors(const Matrix& colors, int width, int height, std::size_t* clamped = nullptr);

/// Decodes PNG or JPEG (detected from the file signature). Throws IoError if
/// the file cannot be read and InputError if it does not decode.
ImageTensor load_image(const std::filesystem::path& path);

/// Encodes as PNG or JPEG by extension (.png, .jpg, .jpeg) with 8 bits per
/// channel.
void save_image(const std::filesystem::path& path, const ImageTensor& image, int jpeg_quality = 95);

/// Area-averaged downsample so that max(width, height) <= max_side; images
/// that already fit are returned unchanged.
ImageTensor resize_to_fit(const ImageTensor& image, int max_side);

}  // namespace dpot
