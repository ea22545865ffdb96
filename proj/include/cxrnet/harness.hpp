#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cxrnet/augment.hpp"
#include "cxrnet/dataset.hpp"
#include "cxrnet/metrics.hpp"
#include "cxrnet/model_spec.hpp"
#include "cxrnet/network.hpp"

namespace cxrnet {

struct HyperParameters {
  double learning_rate = 0.001;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::uint64_t seed = 10;
};

struct DatasetConfig {
  std::string root;      // folder-per-class corpus; used when `manifest` is empty
  std::string manifest;  // pre-split manifest JSON; takes precedence over `root`
  bool balance = true;
  SplitSpec split;
};

struct RunConfig {
  Architecture architecture = Architecture::ResNet50;
  double width_scale = 1.0;
  std::size_t input_size = 256;
  ChannelPolicy channel_policy = ChannelPolicy::Replicate3;
  DatasetConfig dataset;
  AugmentationPolicy augmentation;
  bool augment_validation = true;
  HyperParameters hyper;
  std::string output_dir = "runs/default";
};

nlohmann::json to_json(const RunConfig& config);
/// Parses a run config; every level rejects unknown keys. Missing keys keep
/// their defaults.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::size_t train_samples = 0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  std::size_t val_samples = 0;
};

/// Number of images passed through augment::apply, per split.
struct AugmentationCounts {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

struct RunRecord {
  RunConfig config;
  std::string status = "completed";  // or "failed"
  std::string failure;
  std::size_t parameter_count = 0;
  std::string spec_hash;
  std::string params_hash;
  std::vector<EpochMetrics> epochs;
  std::optional<ConfusionMatrix> test_confusion;
  std::optional<ClassificationReport> test_report;
  AugmentationCounts augment_calls;
  double wall_seconds = 0.0;
  std::string content_hash;

  bool failed() const { return status != "completed"; }
  double test_accuracy() const { return test_report ? test_report->accuracy : 0.0; }
};

nlohmann::json to_json(const RunRecord& record);
/// SHA-256 over every deterministic field: excludes wall time, the output
/// directory and the hash itself.
std::string content_hash(const RunRecord& record);

/// Images of one split decoded and resized once, aligned with `records`.
struct ImageSet {
  std::vector<std::size_t> record_ids;  // index into DatasetManifest::records
  std::vector<TensorF> images;          // H x W x C each
  std::vector<std::size_t> labels;

  std::size_t size() const noexcept { return images.size(); }
};

struct PreparedData {
  DatasetManifest manifest;
  ImageSet train;
  ImageSet validation;
  ImageSet test;
};

/// Ingest, balance and split (or load the manifest), then decode every
/// assigned image at the configured size and channel policy.
DatasetManifest prepare_manifest(const DatasetConfig& config);
PreparedData prepare_data(const RunConfig& config);

ModelSpec model_for(const RunConfig& config, std::size_t num_classes);

struct TrainOptions {
  /// Reuse already-decoded images (must come from an equivalent config).
  const PreparedData* data = nullptr;
  /// Write config, manifest, record, report and checkpoint to output_dir.
  bool write_outputs = true;
  std::function<void(const std::string&)> log;
};

struct TrainResult {
  RunRecord record;
  ModelSpec spec;
  ParamStore<float> params;
  DatasetManifest manifest;
};

// Seeded initialisation, then `epochs` passes over the train split in a
// per-epoch seeded order with on-the-fly augmentation, Adam updates, and a
// validation pass per epoch. The last-epoch weights are evaluated on the
// test split without augmentation. A non-finite loss ends the run with a
// record marked failed.
TrainResult train(const RunConfig& config, const TrainOptions& options = {});

struct Checkpoint {
  std::string spec_hash;
  RunConfig config;
  DatasetManifest manifest;
  ParamStore<float> params;
};

void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec,
                     const RunConfig& config, const DatasetManifest& manifest,
                     const ParamStore<float>& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct Evaluation {
  ConfusionMatrix confusion;
  ClassificationReport report;
};

/// Inference-mode evaluation without augmentation of already-loaded images.
Evaluation evaluate(const ModelSpec& spec, const ParamStore<float>& params, const ImageSet& images,
                    const std::vector<std::string>& class_names, std::size_t batch_size);

/// Rebuilds the model from the checkpoint's config and evaluates one split.
/// Throws if the rebuilt model (or `expected`, when given) does not match
/// the checkpoint's model hash.
Evaluation evaluate(const Checkpoint& checkpoint, Split split,
                    const ModelSpec* expected = nullptr);

struct AblationRow {
  std::string run_label;
  AugmentationPolicy policy;
  bool failed = false;
  double test_accuracy = 0.0;
};

struct AblationResult {
  std::vector<RunRecord> records;
  std::vector<AblationRow> rows;
};

/// Runs every augmentation subset in enumerate_policies() order with the
/// same seed and data; `jobs` > 1 runs that many trainings concurrently.
AblationResult ablate(const RunConfig& base, std::size_t jobs = 1,
                      std::function<void(const std::string&)> log = {});
std::string ablation_csv(const std::vector<AblationRow>& rows);

struct ComparisonRow {
  std::string architecture;
  std::size_t parameter_count = 0;
  bool failed = false;
  double test_accuracy = 0.0;
  double wall_seconds = 0.0;
};

/// Trains modified VGG-16, ResNet-50 and DenseNet-121 with identical
/// settings; rows in that order.
std::vector<ComparisonRow> compare_architectures(const RunConfig& base,
                                                 std::function<void(const std::string&)> log = {});
std::string comparison_csv(const std::vector<ComparisonRow>& rows);

}  // namespace cxrnet
