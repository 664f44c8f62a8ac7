#include "dpot/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "dpot/errors.hpp"

namespace dpot {

void ImageTensor::validate() const {
  if (width <= 0 || height <= 0) throw InputError("image: dimensions must be positive");
  if (pixels.rows() != static_cast<Eigen::Index>(pixel_count()) || pixels.cols() != 3)
    throw InputError("image: pixel matrix must be (width * height) x 3");
  if (!pixels.allFinite() || pixels.minCoeff() < 0.0 || pixels.maxCoeff() > 1.0)
    throw InputError("image: channel values must lie in [0, 1]");
}

ImageTensor image_from_colors(const Matrix& colors, int width, int height, std::size_t* clamped) {
  if (width <= 0 || height <= 0) throw InputError("image: dimensions must be positive");
  if (colors.rows() != static_cast<Eigen::Index>(width) * height || colors.cols() != 3)
    throw DimensionError("image_from_colors: expected (width * height) x 3 colours");
  ImageTensor img{width, height, colors};
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < img.pixels.rows(); ++i) {
    bool hit = false;
    for (Eigen::Index c = 0; c < 3; ++c) {
      double& v = img.pixels(i, c);
      if (std::isnan(v)) throw NumericError("image_from_colors: NaN colour");
      if (v < 0.0 || v > 1.0) {
        v = std::clamp(v, 0.0, 1.0);
        hit = true;
      }
    }
    count += hit ? 1 : 0;
  }
  if (clamped) *clamped = count;
  return img;
}

namespace {

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (is.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

ImageTensor from_rgb8(const unsigned char* data, int width, int height) {
  ImageTensor img{width, height, Matrix(static_cast<Eigen::Index>(width) * height, 3)};
  for (Eigen::Index i = 0; i < img.pixels.size(); ++i) img.pixels.data()[i] = data[i] / 255.0;
  return img;
}

std::vector<unsigned char> to_rgb8(const ImageTensor& image) {
  std::vector<unsigned char> out(static_cast<std::size_t>(image.pixels.size()));
  for (Eigen::Index i = 0; i < image.pixels.size(); ++i)
    out[static_cast<std::size_t>(i)] =
        static_cast<unsigned char>(std::lround(std::clamp(image.pixels.data()[i], 0.0, 1.0) * 255.0));
  return out;
}

ImageTensor decode_png(const std::vector<unsigned char>& bytes, const std::string& name) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size()))
    throw InputError("cannot decode PNG " + name + ": " + png.message);
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> rgb(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, rgb.data(), 0, nullptr)) {
    png_image_free(&png);
    throw InputError("cannot decode PNG " + name + ": " + png.message);
  }
  return from_rgb8(rgb.data(), static_cast<int>(png.width), static_cast<int>(png.height));
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_quiet(j_common_ptr) {}

void jpeg_fail(j_common_ptr info) {
  auto* err = reinterpret_cast<JpegError*>(info->err);
  (*info->err->format_message)(info, err->message);
  std::longjmp(err->jump, 1);
}

ImageTensor decode_jpeg(const std::vector<unsigned char>& bytes, const std::string& name) {
  jpeg_decompress_struct info{};
  JpegError err{};
  info.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_fail;
  err.mgr.output_message = jpeg_quiet;
  std::vector<unsigned char> rgb;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&info);
    throw InputError("cannot decode JPEG " + name + ": " + err.message);
  }
  jpeg_create_decompress(&info);
  jpeg_mem_src(&info, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&info, TRUE);
  info.out_color_space = JCS_RGB;
  jpeg_start_decompress(&info);
  const auto stride = static_cast<std::size_t>(info.output_width) * 3;
  rgb.resize(stride * info.output_height);
  while (info.output_scanline < info.output_height) {
    JSAMPROW row = rgb.data() + stride * info.output_scanline;
    jpeg_read_scanlines(&info, &row, 1);
  }
  const int width = static_cast<int>(info.output_width), height = static_cast<int>(info.output_height);
  jpeg_finish_decompress(&info);
  jpeg_destroy_decompress(&info);
  return from_rgb8(rgb.data(), width, height);
}

void encode_png(const std::filesystem::path& path, const ImageTensor& image) {
  const std::vector<unsigned char> rgb = to_rgb8(image);
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, rgb.data(), 0, nullptr))
    throw IoError("cannot write PNG " + path.string() + ": " + png.message);
}

void encode_jpeg(const std::filesystem::path& path, const ImageTensor& image, int quality) {
  std::vector<unsigned char> rgb = to_rgb8(image);
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!file) throw IoError("cannot open " + path.string() + " for writing");
  jpeg_compress_struct info{};
  JpegError err{};
  info.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_fail;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&info);
    throw IoError("cannot write JPEG " + path.string() + ": " + err.message);
  }
  jpeg_create_compress(&info);
  jpeg_stdio_dest(&info, file.get());
  info.image_width = static_cast<JDIMENSION>(image.width);
  info.image_height = static_cast<JDIMENSION>(image.height);
  info.input_components = 3;
  info.in_color_space = JCS_RGB;
  jpeg_set_defaults(&info);
  jpeg_set_quality(&info, quality, TRUE);
  jpeg_start_compress(&info, TRUE);
  const auto stride = static_cast<std::size_t>(image.width) * 3;
  while (info.next_scanline < info.image_height) {
    JSAMPROW row = rgb.data() + stride * info.next_scanline;
    jpeg_write_scanlines(&info, &row, 1);
  }
  jpeg_finish_compress(&info);
  jpeg_destroy_compress(&info);
  if (std::fflush(file.get()) != 0) throw IoError("write failed: " + path.string());
}

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

}  // namespace

ImageTensor load_image(const std::filesystem::path& path) {
  const std::vector<unsigned char> bytes = read_bytes(path);
  static constexpr std::array<unsigned char, 8> kPng{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= kPng.size() && std::equal(kPng.begin(), kPng.end(), bytes.begin()))
    return decode_png(bytes, path.string());
  if (bytes.size() >= 3 && bytes[0] == 0xff && bytes[1] == 0xd8 && bytes[2] == 0xff)
    return decode_jpeg(bytes, path.string());
  throw InputError("unrecognised image format: " + path.string());
}

void save_image(const std::filesystem::path& path, const ImageTensor& image, int jpeg_quality) {
  image.validate();
  const std::string ext = lower_extension(path);
  if (ext == ".png")
    encode_png(path, image);
  else if (ext == ".jpg" || ext == ".jpeg")
    encode_jpeg(path, image, jpeg_quality);
  else
    throw InputError("save_image: unsupported extension '" + ext + "'");
}

ImageTensor resize_to_fit(const ImageTensor& image, int max_side) {
  if (max_side <= 0) throw InputError("resize_to_fit: max_side must be positive");
  image.validate();
  if (std::max(image.width, image.height) <= max_side) return image;
  const double scale = static_cast<double>(max_side) / std::max(image.width, image.height);
  const int w = std::max(1, static_cast<int>(std::lround(image.width * scale)));
  const int h = std::max(1, static_cast<int>(std::lround(image.height * scale)));
  ImageTensor out{w, h, Matrix::Zero(static_cast<Eigen::Index>(w) * h, 3)};
  std::vector<double> counts(out.pixel_count(), 0.0);
  for (int y = 0; y < image.height; ++y) {
    const int ty = static_cast<int>(static_cast<long>(y) * h / image.height);
    for (int x = 0; x < image.width; ++x) {
      const int tx = static_cast<int>(static_cast<long>(x) * w / image.width);
      const Eigen::Index t = static_cast<Eigen::Index>(ty) * w + tx;
      out.pixels.row(t) += image.pixels.row(static_cast<Eigen::Index>(y) * image.width + x);
      counts[static_cast<std::size_t>(t)] += 1.0;
    }
  }
  for (Eigen::Index t = 0; t < out.pixels.rows(); ++t) out.pixels.row(t) /= counts[static_cast<std::size_t>(t)];
  return out;
}

}  // namespace dpot
