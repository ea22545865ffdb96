#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cxrnet/gradient_check.hpp"
#include "cxrnet/harness.hpp"
#include "cxrnet/network.hpp"

namespace cxrnet::testing {

inline TensorD gaussian(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  TensorD t(std::move(shape));
  for (double& v : t.values()) v = n(rng);
  return t;
}

// Finite differences are meaningless across a kink: push values off zero
// (relu) and pairwise apart (max-pool ties) by more than the probe step.
inline TensorD away_from_kinks(TensorD t, double margin = 1e-2) {
  for (double& v : t.values()) v += v < 0 ? -margin : margin;
  std::vector<double> sorted(t.values().begin(), t.values().end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i] - sorted[i - 1] < 1e-4) {
      for (double& v : t.values()) {
        if (v == sorted[i]) v += 2e-4;
      }
    }
  }
  return t;
}

inline TensorF uniform_image(std::size_t h, std::size_t w, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  TensorF t({h, w, c});
  for (float& v : t.values()) v = u(rng);
  return t;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("cxrnet_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Whole-network differentiable: inputs are the batch followed by the
// selected trainable tensors (in trainable_tensors() order). The output is
// the logits of a train-mode forward pass.
inline Differentiable network_op(const ModelSpec& spec, const ParamStore<double>& base,
                                 const std::vector<std::size_t>& selected) {
  Differentiable op;
  op.name = "network(" + spec.name() + ")";
  auto load = [spec, base, selected](const std::vector<TensorD>& inputs) {
    ParamStore<double> params = base;
    auto tensors = trainable_tensors(spec, params);
    for (std::size_t i = 0; i < selected.size(); ++i) *tensors[selected[i]].second = inputs[i + 1];
    return params;
  };
  op.forward = [spec, load](const std::vector<TensorD>& inputs) {
    ParamStore<double> params = load(inputs);
    return forward(spec, params, inputs[0], Mode::Train);
  };
  op.backward = [spec, load, selected](const std::vector<TensorD>& inputs, const TensorD& grad) {
    ParamStore<double> params = load(inputs);
    ForwardTape<double> tape;
    forward(spec, params, inputs[0], Mode::Train, &tape);
    TensorD grad_input;
    const auto grads = backward(spec, params, tape, grad, &grad_input);
    const auto all = gradient_tensors(spec, grads);
    std::vector<TensorD> out{grad_input};
    for (std::size_t i : selected) out.push_back(*all[i]);
    return out;
  };
  return op;
}

/// Small-corpus run config used by the harness tests.
inline RunConfig desk_config(const std::filesystem::path& data_root,
                             const std::filesystem::path& out, std::size_t epochs) {
  RunConfig c;
  c.width_scale = 1.0 / 16.0;
  c.input_size = 32;
  c.dataset.root = data_root.string();
  c.hyper.epochs = epochs;
  c.hyper.batch_size = 16;
  c.output_dir = out.string();
  return c;
}

}  // namespace cxrnet::testing
