#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string_view>

#include "cxrnet/tensor.hpp"

namespace cxrnet {

/// How decoded pixels map onto model channels.
enum class ChannelPolicy {
  Gray1,       ///< one luminance channel
  Replicate3,  ///< three channels; grayscale sources are replicated
};

std::string_view to_string(ChannelPolicy policy);
ChannelPolicy parse_channel_policy(std::string_view name);
std::size_t channel_count(ChannelPolicy policy);

/// Raised when an image file cannot be decoded. what() names the path.
class ImageReadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decodes an 8-bit PNG/JPEG into an H x W x C tensor with values v / 255.
TensorF read_image(const std::filesystem::path& path, ChannelPolicy policy);

/// True if the file decodes as an image.
bool is_readable_image(const std::filesystem::path& path);

/// Writes an 8-bit single-channel PNG.
void write_gray_png(const std::filesystem::path& path, std::size_t height, std::size_t width,
                    std::span<const std::uint8_t> pixels);

/// Bilinear sample of channel `c` at continuous pixel coordinates (y, x);
/// coordinates outside the frame are clamped to the nearest edge pixel.
inline float sample_bilinear(const TensorF& image, double y, double x, std::size_t c) {
  const std::size_t h = image.dim(0), w = image.dim(1), ch = image.dim(2);
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const auto y0 = static_cast<std::size_t>(y);
  const auto x0 = static_cast<std::size_t>(x);
  const std::size_t y1 = std::min(y0 + 1, h - 1);
  const std::size_t x1 = std::min(x0 + 1, w - 1);
  const double fy = y - static_cast<double>(y0);
  const double fx = x - static_cast<double>(x0);
  const float* d = image.data();
  const double top = d[(y0 * w + x0) * ch + c] * (1.0 - fx) + d[(y0 * w + x1) * ch + c] * fx;
  const double bottom = d[(y1 * w + x0) * ch + c] * (1.0 - fx) + d[(y1 * w + x1) * ch + c] * fx;
  return static_cast<float>(top * (1.0 - fy) + bottom * fy);
}

/// Bilinear resize of an H x W x C image (half-pixel centre alignment).
TensorF resize_bilinear(const TensorF& image, std::size_t height, std::size_t width);

}  // namespace cxrnet
