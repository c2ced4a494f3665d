#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "asymvq/masks.hpp"
#include "asymvq/tensor.hpp"

namespace asymvq {

/// 8-bit interleaved raster (1 or 3 channels).
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  Image8() = default;
  Image8(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, fill) {}

  std::uint8_t& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  [[nodiscard]] std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// PNG or JPEG (sniffed from the leading bytes), converted to RGB.
Image8 read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& image);

/// 1-bit grayscale PNG; edited pixels are white.
void write_mask_png(const std::filesystem::path& path, const MaskGrid& mask);
MaskGrid read_mask_png(const std::filesystem::path& path);

/// Largest centred square, area-resampled to size x size.
Image8 center_crop_resize(const Image8& image, int size);

/// RGB images to an N x 3 x H x W tensor scaled to [-1, 1].
template <typename S>
Tensor<S> images_to_tensor(const std::vector<Image8>& images);
/// Item `n` of an N x 3 x H x W tensor in [-1, 1] to 8-bit RGB (clamped, rounded).
template <typename S>
Image8 tensor_to_image(const Tensor<S>& t, int n);

/// Tiles `rows` (all images the same size) into one RGB image with the labels drawn in a
/// top and a left margin.
Image8 compose_grid(const std::vector<std::vector<Image8>>& rows, const std::vector<std::string>& row_labels,
                    const std::vector<std::string>& column_labels);

inline constexpr int kGridTopMargin = 12;
/// Left margin width for the given row labels.
int grid_left_margin(const std::vector<std::string>& row_labels);

}  // namespace asymvq
