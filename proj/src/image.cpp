#include "cxrnet/image.hpp"

#include <stdexcept>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace cxrnet {

std::string_view to_string(ChannelPolicy policy) {
  return policy == ChannelPolicy::Gray1 ? "gray1" : "replicate3";
}

ChannelPolicy parse_channel_policy(std::string_view name) {
  if (name == "gray1") return ChannelPolicy::Gray1;
  if (name == "replicate3") return ChannelPolicy::Replicate3;
  throw std::invalid_argument("unknown channel policy '" + std::string(name) +
                              "' (expected gray1 or replicate3)");
}

std::size_t channel_count(ChannelPolicy policy) {
  return policy == ChannelPolicy::Gray1 ? 1 : 3;
}

namespace {

cv::Mat decode(const std::filesystem::path& path) {
  cv::Mat img;
  try {
    img = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception& e) {
    throw ImageReadError("cannot decode image " + path.string() + ": " + e.what());
  }
  if (img.empty()) throw ImageReadError("cannot decode image " + path.string());
  if (img.depth() != CV_8U) {
    throw ImageReadError("image " + path.string() + " is not 8-bit");
  }
  if (img.channels() != 1 && img.channels() != 3 && img.channels() != 4) {
    throw ImageReadError("image " + path.string() + " has unsupported channel count " +
                         std::to_string(img.channels()));
  }
  return img;
}

}  // namespace

TensorF read_image(const std::filesystem::path& path, ChannelPolicy policy) {
  const cv::Mat img = decode(path);
  const auto h = static_cast<std::size_t>(img.rows);
  const auto w = static_cast<std::size_t>(img.cols);
  const std::size_t src_channels = static_cast<std::size_t>(img.channels());
  const std::size_t out_channels = channel_count(policy);
  TensorF out({h, w, out_channels});
  for (std::size_t y = 0; y < h; ++y) {
    const std::uint8_t* row = img.ptr<std::uint8_t>(static_cast<int>(y));
    for (std::size_t x = 0; x < w; ++x) {
      const std::uint8_t* px = row + x * src_channels;
      float* dst = out.data() + (y * w + x) * out_channels;
      if (src_channels == 1) {
        for (std::size_t c = 0; c < out_channels; ++c) dst[c] = static_cast<float>(px[0]) / 255.0f;
        continue;
      }
      // OpenCV decodes colour as BGR(A).
      const float r = static_cast<float>(px[2]) / 255.0f;
      const float g = static_cast<float>(px[1]) / 255.0f;
      const float b = static_cast<float>(px[0]) / 255.0f;
      if (policy == ChannelPolicy::Gray1) {
        dst[0] = 0.299f * r + 0.587f * g + 0.114f * b;
      } else {
        dst[0] = r;
        dst[1] = g;
        dst[2] = b;
      }
    }
  }
  return out;
}

bool is_readable_image(const std::filesystem::path& path) {
  try {
    decode(path);
    return true;
  } catch (const ImageReadError&) {
    return false;
  }
}

void write_gray_png(const std::filesystem::path& path, std::size_t height, std::size_t width,
                    std::span<const std::uint8_t> pixels) {
  if (pixels.size() != height * width) {
    throw std::invalid_argument("write_gray_png: pixel count does not match " +
                                std::to_string(height) + "x" + std::to_string(width));
  }
  const cv::Mat img(static_cast<int>(height), static_cast<int>(width), CV_8UC1,
                    const_cast<std::uint8_t*>(pixels.data()));
  if (!cv::imwrite(path.string(), img, {cv::IMWRITE_PNG_COMPRESSION, 6})) {
    throw std::runtime_error("cannot write " + path.string());
  }
}

TensorF resize_bilinear(const TensorF& image, std::size_t height, std::size_t width) {
  if (image.rank() != 3) {
    throw ShapeError("resize_bilinear expects H x W x C, got " + to_string(image.shape()));
  }
  if (height == 0 || width == 0) throw ShapeError("resize_bilinear: zero target size");
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (h == height && w == width) return image;
  TensorF out({height, width, c});
  const double sy = static_cast<double>(h) / static_cast<double>(height);
  const double sx = static_cast<double>(w) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double src_y = (static_cast<double>(y) + 0.5) * sy - 0.5;
    for (std::size_t x = 0; x < width; ++x) {
      const double src_x = (static_cast<double>(x) + 0.5) * sx - 0.5;
      for (std::size_t ch = 0; ch < c; ++ch) {
        out[(y * width + x) * c + ch] = sample_bilinear(image, src_y, src_x, ch);
      }
    }
  }
  return out;
}

}  // namespace cxrnet
