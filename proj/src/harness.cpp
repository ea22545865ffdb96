#include "cxrnet/harness.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "cxrnet/adam.hpp"
#include "cxrnet/hash.hpp"
#include "cxrnet/seeding.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cxrnet {

// ---------------------------------------------------------------------------
// Config

namespace {

void reject_unknown(const json& j, std::initializer_list<std::string_view> allowed,
                    const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw std::invalid_argument("unknown key '" + key + "' in " + where);
    }
  }
}

}  // namespace

json to_json(const RunConfig& c) {
  return {{"architecture", to_string(c.architecture)},
          {"width_scale", c.width_scale},
          {"input_size", c.input_size},
          {"channel_policy", to_string(c.channel_policy)},
          {"dataset",
           {{"root", c.dataset.root},
            {"manifest", c.dataset.manifest},
            {"balance", c.dataset.balance},
            {"split", to_json(c.dataset.split)}}},
          {"augmentation", to_json(c.augmentation)},
          {"augment_validation", c.augment_validation},
          {"hyperparameters",
           {{"learning_rate", c.hyper.learning_rate},
            {"epochs", c.hyper.epochs},
            {"batch_size", c.hyper.batch_size},
            {"seed", c.hyper.seed}}},
          {"output_dir", c.output_dir}};
}

RunConfig run_config_from_json(const json& j) {
  reject_unknown(j,
                 {"architecture", "width_scale", "input_size", "channel_policy", "dataset",
                  "augmentation", "augment_validation", "hyperparameters", "output_dir"},
                 "run config");
  RunConfig c;
  if (j.contains("architecture")) {
    c.architecture = parse_architecture(j.at("architecture").get<std::string>());
  }
  c.width_scale = j.value("width_scale", c.width_scale);
  c.input_size = j.value("input_size", c.input_size);
  if (j.contains("channel_policy")) {
    c.channel_policy = parse_channel_policy(j.at("channel_policy").get<std::string>());
  }
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    reject_unknown(d, {"root", "manifest", "balance", "split"}, "dataset");
    c.dataset.root = d.value("root", std::string());
    c.dataset.manifest = d.value("manifest", std::string());
    c.dataset.balance = d.value("balance", true);
    if (d.contains("split")) c.dataset.split = split_spec_from_json(d.at("split"));
  }
  if (j.contains("augmentation")) c.augmentation = policy_from_json(j.at("augmentation"));
  c.augment_validation = j.value("augment_validation", c.augment_validation);
  if (j.contains("hyperparameters")) {
    const json& h = j.at("hyperparameters");
    reject_unknown(h, {"learning_rate", "epochs", "batch_size", "seed"}, "hyperparameters");
    c.hyper.learning_rate = h.value("learning_rate", c.hyper.learning_rate);
    c.hyper.epochs = h.value("epochs", c.hyper.epochs);
    c.hyper.batch_size = h.value("batch_size", c.hyper.batch_size);
    c.hyper.seed = h.value("seed", c.hyper.seed);
  }
  c.output_dir = j.value("output_dir", c.output_dir);
  if (c.hyper.epochs == 0 || c.hyper.batch_size == 0) {
    throw std::invalid_argument("epochs and batch_size must be positive");
  }
  if (!(c.hyper.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  return run_config_from_json(json::parse(in));
}

// ---------------------------------------------------------------------------
// Run record

json to_json(const RunRecord& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"train_accuracy", e.train_accuracy},
                      {"train_samples", e.train_samples},
                      {"val_loss", e.val_loss},
                      {"val_accuracy", e.val_accuracy},
                      {"val_samples", e.val_samples}});
  }
  json j{{"config", to_json(r.config)},
         {"status", r.status},
         {"failure", r.failure},
         {"parameter_count", r.parameter_count},
         {"spec_hash", r.spec_hash},
         {"params_hash", r.params_hash},
         {"epochs", std::move(epochs)},
         {"augment_calls",
          {{"train", r.augment_calls.train},
           {"validation", r.augment_calls.validation},
           {"test", r.augment_calls.test}}},
         {"wall_seconds", r.wall_seconds},
         {"content_hash", r.content_hash}};
  j["test_confusion"] = r.test_confusion ? to_json(*r.test_confusion) : json(nullptr);
  j["test_report"] = r.test_report ? to_json(*r.test_report) : json(nullptr);
  if (r.test_report) j["test_accuracy_exact"] = r.test_report->accuracy;
  return j;
}

std::string content_hash(const RunRecord& record) {
  json j = to_json(record);
  j.erase("wall_seconds");
  j.erase("content_hash");
  j["config"].erase("output_dir");
  return sha256_hex(j.dump());
}

namespace {

std::string params_hash(const ParamStore<float>& params) {
  Sha256 h;
  for (const auto& l : params.layers) {
    for (const TensorF* t :
         {&l.weights, &l.bias, &l.gamma, &l.beta, &l.running_mean, &l.running_var}) {
      h.update_values(t->values());
    }
  }
  return h.hex();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

constexpr std::uint64_t kTrainTag = 1;
constexpr std::uint64_t kValidationTag = 2;

}  // namespace

// ---------------------------------------------------------------------------
// Data

DatasetManifest prepare_manifest(const DatasetConfig& config) {
  if (!config.manifest.empty()) {
    DatasetManifest m = load_manifest(config.manifest);
    for (const auto& r : m.records) {
      if (r.split == Split::Unassigned) {
        throw std::invalid_argument("manifest " + config.manifest + " has unassigned records");
      }
    }
    return m;
  }
  if (config.root.empty()) throw std::invalid_argument("dataset needs a root or a manifest");
  DatasetManifest m = ingest(config.root);
  if (config.balance) m = balance(m, config.split.seed);
  return split(m, config.split);
}

namespace {

ImageSet load_images(const DatasetManifest& m, Split which, const RunConfig& config) {
  ImageSet set;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const ImageRecord& r = m.records[i];
    if (r.split != which) continue;
    set.record_ids.push_back(i);
    set.images.push_back(
        load_image(r.path, config.input_size, config.input_size, config.channel_policy));
    set.labels.push_back(r.label);
  }
  return set;
}

}  // namespace

PreparedData prepare_data(const RunConfig& config) {
  PreparedData data;
  data.manifest = prepare_manifest(config.dataset);
  data.train = load_images(data.manifest, Split::Train, config);
  data.validation = load_images(data.manifest, Split::Validation, config);
  data.test = load_images(data.manifest, Split::Test, config);
  if (data.train.size() < 2) throw std::invalid_argument("train split needs at least 2 images");
  return data;
}

ModelSpec model_for(const RunConfig& config, std::size_t num_classes) {
  return build_model(config.architecture,
                     {config.input_size, config.input_size, channel_count(config.channel_policy)},
                     num_classes, config.width_scale);
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct BatchTensors {
  TensorF images;
  TensorF labels;
};

// Assembles items [first, first + count) of `order` into a batch. With a
// non-null policy each image is augmented from its own seeded stream.
BatchTensors assemble(const ImageSet& set, const std::vector<std::size_t>& order,
                      std::size_t first, std::size_t count, std::size_t num_classes,
                      const AugmentationPolicy* policy, std::uint64_t seed, std::size_t epoch,
                      std::uint64_t tag, std::size_t* augment_counter) {
  const Shape& s = set.images.front().shape();
  BatchTensors b{TensorF({count, s[0], s[1], s[2]}), TensorF({count, num_classes})};
  const std::size_t plane = numel(s);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t item = order[first + k];
    const TensorF* img = &set.images[item];
    TensorF augmented;
    if (policy) {
      auto stream = augmentation_stream(seed, epoch, set.record_ids[item], tag);
      augmented = apply(*img, sample_params(*policy, stream));
      ++*augment_counter;
      img = &augmented;
    }
    std::copy(img->data(), img->data() + plane, b.images.data() + k * plane);
    b.labels[k * num_classes + set.labels[item]] = 1.0f;
  }
  return b;
}

// Batch boundaries over n items; a trailing batch of one sample is merged
// into its predecessor because train-mode batch norm needs two samples.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t size) {
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (std::size_t first = 0; first < n; first += size) {
    ranges.emplace_back(first, std::min(size, n - first));
  }
  if (ranges.size() > 1 && ranges.back().second == 1) {
    ranges.pop_back();
    ranges.back().second += 1;
  }
  return ranges;
}

struct PassStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

PassStats inference_pass(const ModelSpec& spec, const ParamStore<float>& params,
                         const ImageSet& set, std::size_t num_classes, std::size_t batch_size,
                         const AugmentationPolicy* policy, std::uint64_t seed, std::size_t epoch,
                         std::uint64_t tag, std::size_t* augment_counter,
                         std::vector<std::size_t>* predictions = nullptr) {
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double loss = 0.0;
  std::size_t correct = 0;
  for (const auto& [first, count] : batch_ranges(set.size(), batch_size)) {
    auto b = assemble(set, order, first, count, num_classes, policy, seed, epoch, tag,
                      augment_counter);
    const TensorF logits = predict(spec, params, b.images);
    loss += softmax_cross_entropy(logits, b.labels).loss * static_cast<double>(count);
    const auto pred = argmax_rows(logits);
    for (std::size_t k = 0; k < count; ++k) {
      if (pred[k] == set.labels[order[first + k]]) ++correct;
      if (predictions) predictions->push_back(pred[k]);
    }
  }
  const double n = static_cast<double>(set.size());
  return {loss / n, static_cast<double>(correct) / n};
}

}  // namespace

Evaluation evaluate(const ModelSpec& spec, const ParamStore<float>& params, const ImageSet& images,
                    const std::vector<std::string>& class_names, std::size_t batch_size) {
  if (images.size() == 0) throw std::invalid_argument("evaluate: split is empty");
  std::vector<std::size_t> predictions;
  std::size_t no_augmentation = 0;
  inference_pass(spec, params, images, class_names.size(), batch_size, nullptr, 0, 0, 0,
                 &no_augmentation, &predictions);
  Evaluation e;
  e.confusion = confusion_matrix(predictions, images.labels, class_names.size(), class_names);
  e.report = classification_report(e.confusion);
  return e;
}

TrainResult train(const RunConfig& config, const TrainOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  auto log = [&](const std::string& msg) {
    if (options.log) options.log(msg);
  };

  PreparedData owned;
  const PreparedData* data = options.data;
  if (!data) {
    owned = prepare_data(config);
    data = &owned;
  }
  const std::size_t num_classes = data->manifest.num_classes();
  const ModelSpec spec = model_for(config, num_classes);
  const HyperParameters& hp = config.hyper;

  TrainResult result{RunRecord{}, spec, initialize_params<float>(spec, derive_seed({hp.seed, 1})),
                     data->manifest};
  RunRecord& record = result.record;
  record.config = config;
  record.parameter_count = count_parameters(spec);
  record.spec_hash = spec_hash(spec);

  auto trainables = trainable_tensors(spec, result.params);
  std::vector<Tensor<float>*> param_ptrs;
  std::vector<const Tensor<float>*> param_views;
  std::vector<std::string> names;
  for (auto& [name, t] : trainables) {
    names.push_back(name);
    param_ptrs.push_back(t);
    param_views.push_back(t);
  }
  AdamState<float> adam = adam_init(param_views, AdamHyper{hp.learning_rate});

  const AugmentationPolicy* train_policy = config.augmentation.any() ? &config.augmentation : nullptr;
  const AugmentationPolicy* val_policy = config.augment_validation ? train_policy : nullptr;

  try {
    for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
      std::vector<std::size_t> order(data->train.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      auto shuffle_stream = make_stream({hp.seed, 2, epoch});
      std::shuffle(order.begin(), order.end(), shuffle_stream);

      EpochMetrics m;
      m.epoch = epoch + 1;
      double loss_sum = 0.0;
      std::size_t correct = 0;
      for (const auto& [first, count] : batch_ranges(order.size(), hp.batch_size)) {
        auto b = assemble(data->train, order, first, count, num_classes, train_policy, hp.seed,
                          epoch, kTrainTag, &record.augment_calls.train);
        ForwardTape<float> tape;
        const TensorF logits = forward(spec, result.params, b.images, Mode::Train, &tape);
        auto lg = softmax_cross_entropy(logits, b.labels);
        const auto pred = argmax_rows(logits);
        for (std::size_t k = 0; k < count; ++k) {
          if (pred[k] == data->train.labels[order[first + k]]) ++correct;
        }
        loss_sum += lg.loss * static_cast<double>(count);
        const auto grads = backward(spec, result.params, tape, lg.grad_logits);
        adam_step(param_ptrs, gradient_tensors(spec, grads), adam, names);
        m.train_samples += count;
      }
      m.train_loss = loss_sum / static_cast<double>(m.train_samples);
      m.train_accuracy = static_cast<double>(correct) / static_cast<double>(m.train_samples);
      if (data->validation.size() > 0) {
        const auto v = inference_pass(spec, result.params, data->validation, num_classes,
                                      hp.batch_size, val_policy, hp.seed, epoch, kValidationTag,
                                      &record.augment_calls.validation);
        m.val_loss = v.loss;
        m.val_accuracy = v.accuracy;
        m.val_samples = data->validation.size();
      }
      std::ostringstream msg;
      msg << std::fixed << std::setprecision(4) << "epoch " << m.epoch << "/" << hp.epochs
          << " loss " << m.train_loss << " acc " << m.train_accuracy << " val_loss " << m.val_loss
          << " val_acc " << m.val_accuracy;
      log(msg.str());
      record.epochs.push_back(m);
    }
    if (data->test.size() > 0) {
      const Evaluation e = evaluate(spec, result.params, data->test, data->manifest.class_names,
                                    hp.batch_size);
      record.test_confusion = e.confusion;
      record.test_report = e.report;
    }
  } catch (const NumericFault& fault) {
    record.status = "failed";
    record.failure = fault.what();
    log(std::string("run failed: ") + fault.what());
  }

  record.params_hash = params_hash(result.params);
  record.content_hash = content_hash(record);
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  if (options.write_outputs) {
    const fs::path dir = config.output_dir;
    fs::create_directories(dir);
    write_text(dir / "config.json", to_json(config).dump(2) + "\n");
    save_manifest(data->manifest, dir / "manifest.json");
    write_text(dir / "run_record.json", to_json(record).dump(2) + "\n");
    if (record.test_report) {
      write_text(dir / "report.txt", format_report(*record.test_report) + "\n" +
                                         format_confusion_matrix(*record.test_confusion));
    }
    if (!record.failed()) {
      save_checkpoint(dir / "checkpoint.bin", spec, config, data->manifest, result.params);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints: "CXRNETCK", u32 version, u64 header length, JSON header, then
// each tensor listed in the header as little-endian float32.

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'C', 'X', 'R', 'N', 'E', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint truncated");
  return v;
}

std::vector<std::pair<std::string, TensorF LayerParams<float>::*>> member_table() {
  return {{"weights", &LayerParams<float>::weights},
          {"bias", &LayerParams<float>::bias},
          {"gamma", &LayerParams<float>::gamma},
          {"beta", &LayerParams<float>::beta},
          {"running_mean", &LayerParams<float>::running_mean},
          {"running_var", &LayerParams<float>::running_var}};
}

}  // namespace

void save_checkpoint(const fs::path& path, const ModelSpec& spec, const RunConfig& config,
                     const DatasetManifest& manifest, const ParamStore<float>& params) {
  validate_params(spec, params);
  json tensors = json::array();
  std::vector<const TensorF*> order;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    for (const auto& [member, ptr] : member_table()) {
      const TensorF& t = params.layers[i].*ptr;
      if (t.empty()) continue;
      tensors.push_back({{"node", i}, {"member", member}, {"shape", t.shape()}});
      order.push_back(&t);
    }
  }
  const json header{{"spec_hash", spec_hash(spec)},
                    {"config", to_json(config)},
                    {"manifest", to_json(manifest)},
                    {"layers", params.layers.size()},
                    {"tensors", std::move(tensors)}};
  const std::string text = header.dump();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const TensorF* t : order) {
    out.write(reinterpret_cast<const char*>(t->data()),
              static_cast<std::streamsize>(t->size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error(path.string() + " is not a checkpoint");
  }
  if (read_pod<std::uint32_t>(in) != kVersion) {
    throw std::runtime_error("unsupported checkpoint version in " + path.string());
  }
  const auto length = read_pod<std::uint64_t>(in);
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw std::runtime_error("checkpoint truncated");
  const json header = json::parse(text);

  Checkpoint ck;
  ck.spec_hash = header.at("spec_hash").get<std::string>();
  ck.config = run_config_from_json(header.at("config"));
  ck.manifest = manifest_from_json(header.at("manifest"));
  ck.params.layers.resize(header.at("layers").get<std::size_t>());
  const auto members = member_table();
  for (const json& t : header.at("tensors")) {
    const auto node = t.at("node").get<std::size_t>();
    const auto member = t.at("member").get<std::string>();
    const auto it = std::find_if(members.begin(), members.end(),
                                 [&](const auto& m) { return m.first == member; });
    if (it == members.end() || node >= ck.params.layers.size()) {
      throw std::runtime_error("corrupt checkpoint tensor table");
    }
    TensorF tensor(t.at("shape").get<Shape>());
    in.read(reinterpret_cast<char*>(tensor.data()),
            static_cast<std::streamsize>(tensor.size() * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint truncated");
    ck.params.layers[node].*(it->second) = std::move(tensor);
  }
  return ck;
}

Evaluation evaluate(const Checkpoint& checkpoint, Split split, const ModelSpec* expected) {
  const ModelSpec spec = model_for(checkpoint.config, checkpoint.manifest.num_classes());
  const std::string rebuilt = spec_hash(spec);
  if (rebuilt != checkpoint.spec_hash ||
      (expected && spec_hash(*expected) != checkpoint.spec_hash)) {
    throw std::invalid_argument("architecture does not match checkpoint (model hash " +
                                checkpoint.spec_hash.substr(0, 12) + ")");
  }
  validate_params(spec, checkpoint.params);
  ImageSet images;
  const RunConfig& c = checkpoint.config;
  for (std::size_t i = 0; i < checkpoint.manifest.records.size(); ++i) {
    const auto& r = checkpoint.manifest.records[i];
    if (r.split != split) continue;
    images.record_ids.push_back(i);
    images.images.push_back(load_image(r.path, c.input_size, c.input_size, c.channel_policy));
    images.labels.push_back(r.label);
  }
  if (images.size() == 0) {
    throw std::invalid_argument("split '" + std::string(to_string(split)) + "' is empty");
  }
  return evaluate(spec, checkpoint.params, images, checkpoint.manifest.class_names,
                  c.hyper.batch_size);
}

// ---------------------------------------------------------------------------
// Sweeps

AblationResult ablate(const RunConfig& base, std::size_t jobs,
                      std::function<void(const std::string&)> log) {
  const PreparedData data = prepare_data(base);
  const auto policies = enumerate_policies(base.augmentation.ranges);
  AblationResult result;
  result.records.resize(policies.size());
  result.rows.resize(policies.size());
  std::mutex log_mutex;
  auto say = [&](const std::string& msg) {
    if (!log) return;
    std::lock_guard lock(log_mutex);
    log(msg);
  };

  auto run_one = [&](std::size_t i) {
    RunConfig config = base;
    config.augmentation = policies[i];
    std::ostringstream dir;
    dir << std::setw(2) << std::setfill('0') << i << "_" << policies[i].label();
    config.output_dir = (fs::path(base.output_dir) / "ablation" / dir.str()).string();
    AblationRow& row = result.rows[i];
    row.run_label = policies[i].label();
    row.policy = policies[i];
    try {
      TrainOptions options;
      options.data = &data;
      result.records[i] = train(config, options).record;
      row.failed = result.records[i].failed();
      row.test_accuracy = result.records[i].test_accuracy();
    } catch (const std::exception& e) {
      result.records[i].config = config;
      result.records[i].status = "failed";
      result.records[i].failure = e.what();
      row.failed = true;
    }
    std::ostringstream msg;
    msg << "[" << (i + 1) << "/" << policies.size() << "] " << row.run_label << ": "
        << (row.failed ? "failed" : std::to_string(row.test_accuracy));
    say(msg.str());
  };

  if (jobs <= 1) {
    for (std::size_t i = 0; i < policies.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < std::min(jobs, policies.size()); ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < policies.size(); i = next++) run_one(i);
      });
    }
    for (auto& t : workers) t.join();
  }
  write_text(fs::path(base.output_dir) / "ablation.csv", ablation_csv(result.rows));
  return result;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "run_label,rotation,translation,horizontal_flip,intensity_shift,zoom,test_accuracy\n";
  out << std::fixed << std::setprecision(6);
  for (const auto& row : rows) {
    out << row.run_label;
    for (bool f : row.policy.flags()) out << ',' << (f ? "true" : "false");
    out << ',';
    if (row.failed) {
      out << "failed";
    } else {
      out << row.test_accuracy;
    }
    out << '\n';
  }
  return out.str();
}

std::vector<ComparisonRow> compare_architectures(const RunConfig& base,
                                                 std::function<void(const std::string&)> log) {
  const PreparedData data = prepare_data(base);
  std::vector<ComparisonRow> rows;
  for (Architecture arch :
       {Architecture::ModifiedVgg16, Architecture::ResNet50, Architecture::DenseNet121}) {
    RunConfig config = base;
    config.architecture = arch;
    config.output_dir = (fs::path(base.output_dir) / "compare" / to_string(arch)).string();
    ComparisonRow row;
    row.architecture = std::string(to_string(arch));
    row.parameter_count = count_parameters(model_for(config, data.manifest.num_classes()));
    try {
      TrainOptions options;
      options.data = &data;
      options.log = log;
      const RunRecord record = train(config, options).record;
      row.failed = record.failed();
      row.test_accuracy = record.test_accuracy();
      row.wall_seconds = record.wall_seconds;
    } catch (const std::exception& e) {
      row.failed = true;
      if (log) log(row.architecture + " failed: " + e.what());
    }
    rows.push_back(row);
  }
  write_text(fs::path(base.output_dir) / "compare.csv", comparison_csv(rows));
  return rows;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::ostringstream out;
  out << "architecture,parameter_count,test_accuracy,wall_seconds\n";
  for (const auto& row : rows) {
    out << row.architecture << ',' << row.parameter_count << ',';
    if (row.failed) {
      out << "failed";
    } else {
      out << std::fixed << std::setprecision(6) << row.test_accuracy;
    }
    out << ',' << std::fixed << std::setprecision(3) << row.wall_seconds << '\n';
  }
  return out.str();
}

}  // namespace cxrnet
