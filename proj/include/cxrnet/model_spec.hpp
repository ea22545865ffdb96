#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cxrnet/layers.hpp"

namespace cxrnet {

enum class LayerKind { Input, Conv, BatchNorm, Relu, MaxPool, AvgPool, GlobalAvgPool, Dense, Add, Concat };

std::string_view to_string(LayerKind kind);

/// One node of the layer graph. `inputs` index earlier nodes, so node order
/// is a topological order. `output_shape` is per sample: H x W x C for
/// feature maps, a single extent for dense outputs.
struct LayerNode {
  std::string name;
  std::string stage;
  LayerKind kind = LayerKind::Input;
  std::vector<std::size_t> inputs;
  std::size_t kernel = 0;  // conv kernel or pool window
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t filters = 0;  // conv output channels or dense units
  bool use_bias = false;
  Shape output_shape;
};

struct InputShape {
  std::size_t height = 256;
  std::size_t width = 256;
  std::size_t channels = 3;

  friend bool operator==(const InputShape&, const InputShape&) = default;
};

enum class Architecture { ModifiedVgg16, ResNet50, DenseNet121 };

std::string_view to_string(Architecture arch);
Architecture parse_architecture(std::string_view name);

/// Channel count after width scaling: nearest integer, at least 1.
std::size_t scaled_width(std::size_t channels, double width_scale);

/// Immutable layer graph with a single input node (index 0) and a single
/// output node (the last one).
class ModelSpec {
 public:
  const std::string& name() const noexcept { return name_; }
  const InputShape& input_shape() const noexcept { return input_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  double width_scale() const noexcept { return width_scale_; }
  const std::vector<LayerNode>& layers() const noexcept { return layers_; }
  const LayerNode& layer(std::size_t i) const { return layers_.at(i); }
  std::size_t output_node() const noexcept { return layers_.size() - 1; }

 private:
  friend class GraphBuilder;
  std::string name_;
  InputShape input_;
  std::size_t num_classes_ = 0;
  double width_scale_ = 1.0;
  std::vector<LayerNode> layers_;
};

/// Appends nodes with shape inference; every add_* returns the new node's
/// index. Shape errors surface at build time.
class GraphBuilder {
 public:
  GraphBuilder(std::string name, InputShape input, std::size_t num_classes, double width_scale);

  void set_stage(std::string stage) { stage_ = std::move(stage); }

  std::size_t input() const noexcept { return 0; }
  std::size_t conv(std::size_t from, std::size_t filters, std::size_t kernel, std::size_t stride,
                   PadSpec pad, bool use_bias, std::string name = {});
  std::size_t batch_norm(std::size_t from, std::string name = {});
  std::size_t relu(std::size_t from, std::string name = {});
  std::size_t max_pool(std::size_t from, std::size_t window, std::size_t stride,
                       std::size_t padding = 0, std::string name = {});
  std::size_t avg_pool(std::size_t from, std::size_t window, std::size_t stride,
                       std::string name = {});
  std::size_t global_avg_pool(std::size_t from, std::string name = {});
  std::size_t dense(std::size_t from, std::size_t units, bool use_bias = true,
                    std::string name = {});
  std::size_t add(std::vector<std::size_t> from, std::string name = {});
  std::size_t concat(std::vector<std::size_t> from, std::string name = {});

  const Shape& shape(std::size_t node) const { return spec_.layers_.at(node).output_shape; }

  ModelSpec build() &&;

 private:
  std::size_t push(LayerNode node, std::string name);
  ModelSpec spec_;
  std::string stage_;
};

ModelSpec build_resnet50(InputShape input, std::size_t num_classes, double width_scale = 1.0);
ModelSpec build_densenet121(InputShape input, std::size_t num_classes, double width_scale = 1.0);
ModelSpec build_modified_vgg16(InputShape input, std::size_t num_classes,
                               double width_scale = 1.0);
ModelSpec build_model(Architecture arch, InputShape input, std::size_t num_classes,
                      double width_scale = 1.0);

/// Copy of `spec` in which every additive join keeps only its residual
/// branch, so the shortcut edges carry nothing.
ModelSpec remove_skip_edges(const ModelSpec& spec);

/// Trainable and running-statistic scalars of one node.
std::size_t count_parameters(const LayerNode& node, const ModelSpec& spec);
std::size_t count_parameters(const ModelSpec& spec);

struct StageShape {
  std::string stage;
  Shape shape;

  friend bool operator==(const StageShape&, const StageShape&) = default;
};
using ShapeTrace = std::vector<StageShape>;

/// Output shape of the last node of each named stage, in graph order.
ShapeTrace trace_shapes(const ModelSpec& spec);

nlohmann::json to_json(const ModelSpec& spec);
/// SHA-256 over the canonical JSON form.
std::string spec_hash(const ModelSpec& spec);

}  // namespace cxrnet
