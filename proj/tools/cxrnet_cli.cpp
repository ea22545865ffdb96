#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <string>

#include <CLI11.hpp>

#include "cxrnet/dataset.hpp"
#include "cxrnet/gradient_check.hpp"
#include "cxrnet/harness.hpp"
#include "cxrnet/model_spec.hpp"
#include "cxrnet/network.hpp"

namespace fs = std::filesystem;
using namespace cxrnet;

namespace {

void log_line(const std::string& msg) { std::cerr << msg << '\n'; }

int run_synth(const std::string& out, std::size_t per_class, std::size_t size,
              std::uint64_t seed) {
  generate_synthetic(out, per_class, size, seed);
  std::cout << "wrote " << per_class * synthetic_class_names().size() << " images to " << out
            << '\n';
  return 0;
}

int run_split(const std::string& root, const std::string& out, bool no_balance, double test_frac,
              double val_frac, std::uint64_t seed) {
  IngestSummary summary;
  DatasetManifest m = ingest(root, &summary);
  for (const auto& w : summary.warnings) log_line("warning: " + w);
  if (!no_balance) m = balance(m, seed);
  SplitSpec spec;
  spec.sizes = SplitRatios{test_frac, val_frac};
  spec.seed = seed;
  m = split(m, spec);
  save_manifest(m, out);
  std::cout << std::left << std::setw(20) << "class" << std::right << std::setw(8) << "train"
            << std::setw(12) << "validation" << std::setw(8) << "test" << '\n';
  for (std::size_t c = 0; c < m.num_classes(); ++c) {
    std::cout << std::left << std::setw(20) << m.class_names[c] << std::right << std::setw(8)
              << m.count(Split::Train, c) << std::setw(12) << m.count(Split::Validation, c)
              << std::setw(8) << m.count(Split::Test, c) << '\n';
  }
  std::cout << "skipped " << summary.skipped << " unreadable file(s); manifest " << out << '\n';
  return 0;
}

int run_train(const std::string& config_path) {
  const RunConfig config = load_run_config(config_path);
  TrainOptions options;
  options.log = log_line;
  const TrainResult result = train(config, options);
  const RunRecord& r = result.record;
  std::cout << "status " << r.status << (r.failed() ? ": " + r.failure : "") << '\n';
  if (r.test_report) std::cout << format_report(*r.test_report);
  std::cout << "outputs in " << config.output_dir << '\n';
  return r.failed() ? 2 : 0;
}

int run_eval(const std::string& checkpoint_path, const std::string& split_name) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const Split which = parse_split(split_name);
  if (which != Split::Test && which != Split::Validation) {
    throw std::invalid_argument("--split must be test or validation");
  }
  const Evaluation e = evaluate(ck, which);
  std::cout << format_report(e.report) << '\n' << format_confusion_matrix(e.confusion);
  return 0;
}

int run_ablate(const std::string& config_path, std::size_t jobs) {
  const RunConfig base = load_run_config(config_path);
  const AblationResult result = ablate(base, jobs, log_line);
  std::cout << ablation_csv(result.rows);
  return 0;
}

int run_compare(const std::string& config_path) {
  const RunConfig base = load_run_config(config_path);
  std::cout << comparison_csv(compare_architectures(base, log_line));
  return 0;
}

int run_params(const std::string& arch, std::size_t input, std::size_t channels,
               std::size_t classes, double width_scale, bool trace) {
  const ModelSpec spec =
      build_model(parse_architecture(arch), {input, input, channels}, classes, width_scale);
  if (trace) {
    for (const auto& s : trace_shapes(spec)) {
      std::cout << std::left << std::setw(20) << s.stage << to_string(s.shape) << '\n';
    }
  }
  std::cout << count_parameters(spec) << '\n';
  return 0;
}

TensorD gaussian(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  TensorD t(std::move(shape));
  for (double& v : t.values()) v = n(rng);
  return t;
}

int run_gradcheck(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  struct Case {
    Differentiable op;
    std::vector<TensorD> inputs;
  };
  TensorD labels({3, 4});
  for (std::size_t i = 0; i < 3; ++i) labels[i * 4 + i] = 1.0;
  std::vector<Case> cases;
  cases.push_back({conv2d_op(1, PadSpec::same(), true),
                   {gaussian({2, 5, 5, 3}, rng), gaussian({3, 3, 3, 4}, rng), gaussian({4}, rng)}});
  cases.push_back({conv2d_op(2, PadSpec::symmetric(3), false),
                   {gaussian({2, 9, 9, 2}, rng), gaussian({7, 7, 2, 3}, rng)}});
  cases.push_back({dense_op(true), {gaussian({3, 5}, rng), gaussian({5, 4}, rng), gaussian({4}, rng)}});
  cases.push_back({relu_op(), {gaussian({2, 4, 4, 3}, rng)}});
  cases.push_back({maxpool2d_op(3, 2, 1), {gaussian({2, 8, 8, 2}, rng)}});
  cases.push_back({avgpool2d_op(2, 2), {gaussian({2, 6, 6, 3}, rng)}});
  cases.push_back({global_avgpool_op(), {gaussian({2, 4, 4, 3}, rng)}});
  cases.push_back({batchnorm_op(Mode::Train),
                   {gaussian({4, 3, 3, 2}, rng), gaussian({2}, rng), gaussian({2}, rng)}});
  cases.push_back({batchnorm_op(Mode::Inference),
                   {gaussian({2, 3, 3, 2}, rng), gaussian({2}, rng), gaussian({2}, rng)}});
  cases.push_back({softmax_cross_entropy_op(labels), {gaussian({3, 4}, rng)}});

  GradCheckOptions options;
  options.seed = seed;
  double worst = 0.0;
  for (const auto& c : cases) {
    const auto r = gradient_check(c.op, c.inputs, options);
    worst = std::max(worst, r.max_relative_error);
    std::cout << std::left << std::setw(28) << c.op.name << std::scientific << std::setprecision(3)
              << r.max_relative_error << '\n';
  }
  std::cout << "worst " << worst << (worst < 1e-4 ? "  ok" : "  FAILED") << '\n';
  return worst < 1e-4 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chest X-ray CNN training engine and experiment harness"};
  app.require_subcommand(1);

  std::string out = "data/synthetic";
  std::size_t per_class = 100, size = 64;
  std::uint64_t seed = 10;
  auto* synth = app.add_subcommand("synth", "Generate the synthetic 3-class corpus");
  synth->add_option("--out", out, "Output directory")->capture_default_str();
  synth->add_option("--per-class", per_class, "Images per class")->capture_default_str();
  synth->add_option("--size", size, "Image side in pixels")->capture_default_str();
  synth->add_option("--seed", seed)->capture_default_str();

  std::string root, manifest_out = "manifest.json";
  bool no_balance = false;
  double test_frac = 0.2, val_frac = 0.2;
  auto* split_cmd = app.add_subcommand("split", "Ingest, balance and split into a manifest");
  split_cmd->add_option("--root", root, "Folder-per-class image root")->required();
  split_cmd->add_option("--out", manifest_out, "Manifest path")->capture_default_str();
  split_cmd->add_flag("--no-balance", no_balance, "Keep every image of every class");
  split_cmd->add_option("--test-fraction", test_frac)->capture_default_str();
  split_cmd->add_option("--validation-fraction", val_frac)->capture_default_str();
  split_cmd->add_option("--seed", seed)->capture_default_str();

  std::string config_path;
  auto* train_cmd = app.add_subcommand("train", "Train one model from a JSON config");
  train_cmd->add_option("--config", config_path)->required()->check(CLI::ExistingFile);

  std::string checkpoint, split_name = "test";
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  eval_cmd->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--split", split_name)->capture_default_str();

  std::size_t jobs = 1;
  auto* ablate_cmd = app.add_subcommand("ablate", "Run all 32 augmentation subsets");
  ablate_cmd->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  ablate_cmd->add_option("--jobs", jobs, "Concurrent runs")->capture_default_str();

  auto* compare_cmd = app.add_subcommand("compare", "Train VGG, ResNet and DenseNet alike");
  compare_cmd->add_option("--config", config_path)->required()->check(CLI::ExistingFile);

  std::string arch = "resnet50";
  std::size_t input = 256, channels = 3, classes = 3;
  double width_scale = 1.0;
  bool trace = false;
  auto* params_cmd = app.add_subcommand("params", "Print a model's parameter count");
  params_cmd->add_option("--arch", arch, "modified_vgg16, resnet50 or densenet121")
      ->capture_default_str();
  params_cmd->add_option("--input", input)->capture_default_str();
  params_cmd->add_option("--channels", channels)->capture_default_str();
  params_cmd->add_option("--classes", classes)->capture_default_str();
  params_cmd->add_option("--width-scale", width_scale)->capture_default_str();
  params_cmd->add_flag("--trace", trace, "Also print per-stage output shapes");

  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Check every layer's backward pass");
  gradcheck_cmd->add_option("--seed", seed)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return run_synth(out, per_class, size, seed);
    if (*split_cmd) return run_split(root, manifest_out, no_balance, test_frac, val_frac, seed);
    if (*train_cmd) return run_train(config_path);
    if (*eval_cmd) return run_eval(checkpoint, split_name);
    if (*ablate_cmd) return run_ablate(config_path, jobs);
    if (*compare_cmd) return run_compare(config_path);
    if (*params_cmd) return run_params(arch, input, channels, classes, width_scale, trace);
    if (*gradcheck_cmd) return run_gradcheck(seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
