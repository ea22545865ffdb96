#include "cxrnet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "cxrnet/image.hpp"
#include "cxrnet/seeding.hpp"

namespace cxrnet {

AugmentationPolicy AugmentationPolicy::from_flags(const std::array<bool, 5>& flags) {
  AugmentationPolicy p;
  p.rotation = flags[0];
  p.translation = flags[1];
  p.horizontal_flip = flags[2];
  p.intensity_shift = flags[3];
  p.zoom = flags[4];
  return p;
}

bool AugmentationPolicy::any() const {
  const auto f = flags();
  return std::any_of(f.begin(), f.end(), [](bool b) { return b; });
}

std::string AugmentationPolicy::label() const {
  const auto f = flags();
  const auto enabled = std::count(f.begin(), f.end(), true);
  if (enabled == 0) return "none";
  if (enabled == 5) return "all";
  std::string out;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!f[i]) continue;
    if (!out.empty()) out += "+";
    out += kFlagNames[i];
  }
  return out;
}

nlohmann::json to_json(const AugmentationPolicy& policy) {
  nlohmann::json j;
  const auto f = policy.flags();
  for (std::size_t i = 0; i < f.size(); ++i) j[std::string(AugmentationPolicy::kFlagNames[i])] = f[i];
  j["ranges"] = {{"rotation_deg", policy.ranges.rotation_deg},
                 {"translation_frac", policy.ranges.translation_frac},
                 {"intensity_frac", policy.ranges.intensity_frac},
                 {"zoom_frac", policy.ranges.zoom_frac}};
  return j;
}

AugmentationPolicy policy_from_json(const nlohmann::json& j) {
  std::array<bool, 5> flags{};
  AugmentationPolicy policy;
  for (const auto& [key, value] : j.items()) {
    const auto* it = std::find(AugmentationPolicy::kFlagNames.begin(),
                               AugmentationPolicy::kFlagNames.end(), key);
    if (it != AugmentationPolicy::kFlagNames.end()) {
      flags[static_cast<std::size_t>(it - AugmentationPolicy::kFlagNames.begin())] =
          value.get<bool>();
    } else if (key != "ranges") {
      throw std::invalid_argument("unknown augmentation key '" + key + "'");
    }
  }
  policy = AugmentationPolicy::from_flags(flags);
  if (j.contains("ranges")) {
    for (const auto& [key, value] : j.at("ranges").items()) {
      const double v = value.get<double>();
      if (!(v >= 0.0)) throw std::invalid_argument("augmentation range '" + key + "' must be >= 0");
      if (key == "rotation_deg") {
        policy.ranges.rotation_deg = v;
      } else if (key == "translation_frac") {
        policy.ranges.translation_frac = v;
      } else if (key == "intensity_frac") {
        policy.ranges.intensity_frac = v;
      } else if (key == "zoom_frac") {
        if (v >= 1.0) throw std::invalid_argument("zoom_frac must be < 1");
        policy.ranges.zoom_frac = v;
      } else {
        throw std::invalid_argument("unknown augmentation range '" + key + "'");
      }
    }
  }
  return policy;
}

bool AugmentationParams::is_identity() const { return *this == AugmentationParams{}; }

AugmentationParams sample_params(const AugmentationPolicy& policy, std::mt19937_64& stream) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Fixed draw order: rotation, shift x, shift y, flip, intensity, zoom.
  const double u_rot = unit(stream);
  const double u_tx = unit(stream);
  const double u_ty = unit(stream);
  const double u_flip = unit(stream);
  const double u_int = unit(stream);
  const double u_zoom = unit(stream);
  auto symmetric = [](double u, double range) { return (2.0 * u - 1.0) * range; };

  const AugmentationRanges& r = policy.ranges;
  AugmentationParams p;
  if (policy.rotation) p.theta_deg = symmetric(u_rot, r.rotation_deg);
  if (policy.translation) {
    p.shift_x = symmetric(u_tx, r.translation_frac);
    p.shift_y = symmetric(u_ty, r.translation_frac);
  }
  if (policy.horizontal_flip) p.flip = u_flip < 0.5;
  if (policy.intensity_shift) p.delta_intensity = symmetric(u_int, r.intensity_frac);
  if (policy.zoom) p.zoom_factor = 1.0 + symmetric(u_zoom, r.zoom_frac);
  return p;
}

std::mt19937_64 augmentation_stream(std::uint64_t run_seed, std::uint64_t epoch,
                                    std::uint64_t image_index, std::uint64_t split_tag) {
  return make_stream({run_seed, 0xa06ULL, epoch, image_index, split_tag});
}

TensorF apply(const TensorF& image, const AugmentationParams& params) {
  if (image.rank() != 3) {
    throw ShapeError("augment::apply expects H x W x C, got " + to_string(image.shape()));
  }
  if (params.is_identity()) return image;
  if (!(params.zoom_factor > 0.0)) throw std::invalid_argument("zoom_factor must be positive");
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  const bool geometric = params.theta_deg != 0.0 || params.shift_x != 0.0 ||
                         params.shift_y != 0.0 || params.flip || params.zoom_factor != 1.0;
  TensorF out = image;
  if (geometric) {
    const double cy = (static_cast<double>(h) - 1.0) / 2.0;
    const double cx = (static_cast<double>(w) - 1.0) / 2.0;
    const double theta = params.theta_deg * std::numbers::pi / 180.0;
    const double cos_t = std::cos(theta), sin_t = std::sin(theta);
    const double tx = params.shift_x * static_cast<double>(w);
    const double ty = params.shift_y * static_cast<double>(h);
    // Inverse map from output pixel to source pixel: undo rotation, zoom,
    // translation and flip in that order.
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double qx = static_cast<double>(x) - cx;
        const double qy = static_cast<double>(y) - cy;
        double sx = cos_t * qx + sin_t * qy;
        double sy = -sin_t * qx + cos_t * qy;
        sx = sx / params.zoom_factor - tx;
        sy = sy / params.zoom_factor - ty;
        if (params.flip) sx = -sx;
        for (std::size_t ch = 0; ch < c; ++ch) {
          out[(y * w + x) * c + ch] = sample_bilinear(image, sy + cy, sx + cx, ch);
        }
      }
    }
  }
  const auto delta = static_cast<float>(params.delta_intensity);
  for (float& v : out.values()) v = std::clamp(v + delta, 0.0f, 1.0f);
  return out;
}

std::vector<AugmentationPolicy> enumerate_policies(const AugmentationRanges& ranges) {
  std::vector<std::array<bool, 5>> order;
  order.push_back({});
  order.push_back({true, true, true, true, true});
  for (std::size_t k = 1; k <= 4; ++k) {
    // Combinations of k flags in lexicographic index order.
    std::vector<std::size_t> idx(k);
    for (std::size_t i = 0; i < k; ++i) idx[i] = i;
    while (true) {
      std::array<bool, 5> flags{};
      for (std::size_t i : idx) flags[i] = true;
      order.push_back(flags);
      std::size_t pos = k;
      while (pos > 0 && idx[pos - 1] == 5 - k + (pos - 1)) --pos;
      if (pos == 0) break;
      ++idx[pos - 1];
      for (std::size_t i = pos; i < k; ++i) idx[i] = idx[i - 1] + 1;
    }
  }
  std::vector<AugmentationPolicy> out;
  for (const auto& flags : order) {
    auto p = AugmentationPolicy::from_flags(flags);
    p.ranges = ranges;
    out.push_back(p);
  }
  return out;
}

}  // namespace cxrnet
