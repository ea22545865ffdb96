#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "cxrnet/image.hpp"
#include "cxrnet/tensor.hpp"

namespace cxrnet {

enum class Split { Unassigned, Train, Validation, Test };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

struct ImageRecord {
  std::string path;
  std::size_t label = 0;  // index into DatasetManifest::class_names
  Split split = Split::Unassigned;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct DatasetManifest {
  std::vector<std::string> class_names;
  std::vector<ImageRecord> records;

  std::size_t num_classes() const noexcept { return class_names.size(); }
  std::vector<std::size_t> class_counts() const;
  /// Records of one split, in manifest order.
  std::vector<ImageRecord> subset(Split split) const;
  std::size_t count(Split split, std::size_t label) const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

nlohmann::json to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& j);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

struct IngestSummary {
  std::size_t accepted = 0;
  std::size_t skipped = 0;
  std::vector<std::string> warnings;
};

// One record per readable PNG/JPEG under root/<class>/. Classes are the
// subdirectories in lexicographic order; files within a class are sorted.
// Undecodable files are skipped and reported in `summary`.
DatasetManifest ingest(const std::filesystem::path& root, IngestSummary* summary = nullptr);

/// Downsamples every class, uniformly without replacement, to the smallest
/// class size. Surviving records keep their relative order.
DatasetManifest balance(const DatasetManifest& manifest, std::uint64_t seed);

struct SplitRatios {
  double test_fraction = 0.2;
  double validation_fraction = 0.2;  // of the records left after the test split
};

struct SplitCounts {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

struct SplitSpec {
  std::variant<SplitRatios, SplitCounts> sizes = SplitRatios{};
  std::uint64_t seed = 10;
};

nlohmann::json to_json(const SplitSpec& spec);
SplitSpec split_spec_from_json(const nlohmann::json& j);

/// Per-class (train, validation, test) sizes for a class of n records.
SplitCounts resolve_split_counts(const SplitSpec& spec, std::size_t n);

// Stratified assignment: each class is shuffled with a seeded stream and
// its first `test` records go to test, the next `validation` to validation,
// the rest to train.
DatasetManifest split(const DatasetManifest& manifest, const SplitSpec& spec);

/// Decodes, rescales to [0, 1] and bilinearly resizes one image to H x W x C.
TensorF load_image(const std::string& path, std::size_t height, std::size_t width,
                   ChannelPolicy policy);

struct Batch {
  TensorF images;  // N x H x W x C
  TensorF labels;  // N x K one-hot
};

Batch load_batch(const std::vector<ImageRecord>& records, std::size_t num_classes,
                 std::size_t height = 256, std::size_t width = 256,
                 ChannelPolicy policy = ChannelPolicy::Replicate3);

/// Class directory names of the synthetic corpus.
const std::vector<std::string>& synthetic_class_names();

// Writes num_per_class grayscale PNGs of size image_size per class into
// root/<class>/. The class is encoded by the vertical position of a bright
// Gaussian blob (upper, middle or lower band) on a noisy background; the
// horizontal position is random, so horizontal flips preserve the class.
void generate_synthetic(const std::filesystem::path& root, std::size_t num_per_class,
                        std::size_t image_size, std::uint64_t seed);

}  // namespace cxrnet
