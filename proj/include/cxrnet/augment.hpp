#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cxrnet/tensor.hpp"

namespace cxrnet {

/// Sampling ranges; each transform draws uniformly in [-range, +range].
struct AugmentationRanges {
  double rotation_deg = 10.0;
  double translation_frac = 0.10;  // per axis, fraction of width / height
  double intensity_frac = 0.10;    // additive, in normalized intensity units
  double zoom_frac = 0.15;         // zoom factor in [1 - zoom_frac, 1 + zoom_frac]

  friend bool operator==(const AugmentationRanges&, const AugmentationRanges&) = default;
};

struct AugmentationPolicy {
  bool rotation = false;
  bool translation = false;
  bool horizontal_flip = false;
  bool intensity_shift = false;
  bool zoom = false;
  AugmentationRanges ranges;

  static constexpr std::array<std::string_view, 5> kFlagNames{
      "rotation", "translation", "horizontal_flip", "intensity_shift", "zoom"};

  std::array<bool, 5> flags() const {
    return {rotation, translation, horizontal_flip, intensity_shift, zoom};
  }
  static AugmentationPolicy from_flags(const std::array<bool, 5>& flags);

  bool any() const;
  /// "none", "all", or the enabled flag names joined by '+'.
  std::string label() const;

  friend bool operator==(const AugmentationPolicy&, const AugmentationPolicy&) = default;
};

nlohmann::json to_json(const AugmentationPolicy& policy);
/// Five booleans plus an optional "ranges" object; unknown keys are rejected.
AugmentationPolicy policy_from_json(const nlohmann::json& j);

/// Concrete per-image transform. Disabled transforms hold identity values.
struct AugmentationParams {
  double theta_deg = 0.0;
  double shift_x = 0.0;  // fraction of width
  double shift_y = 0.0;  // fraction of height
  bool flip = false;
  double delta_intensity = 0.0;
  double zoom_factor = 1.0;

  bool is_identity() const;
  friend bool operator==(const AugmentationParams&, const AugmentationParams&) = default;
};

// Draws one parameter set. Every call consumes the same number of variates
// from `stream` whatever the flags, so enabling one transform never changes
// the values drawn for another.
AugmentationParams sample_params(const AugmentationPolicy& policy, std::mt19937_64& stream);

/// Per-image stream keyed by (run seed, epoch, image index, split tag).
std::mt19937_64 augmentation_stream(std::uint64_t run_seed, std::uint64_t epoch,
                                    std::uint64_t image_index, std::uint64_t split_tag);

// Warps an H x W x C image in one bilinear resampling pass (horizontal
// flip, then translation, then zoom, then rotation, all about the image
// centre, with nearest-edge fill), adds delta_intensity and clips to
// [0, 1]. Identity params return the input unchanged.
TensorF apply(const TensorF& image, const AugmentationParams& params);

/// All 32 flag subsets: none, all, then the 1-, 2-, 3- and 4-element
/// subsets, each group in lexicographic order over the flag order.
std::vector<AugmentationPolicy> enumerate_policies(const AugmentationRanges& ranges = {});

}  // namespace cxrnet
