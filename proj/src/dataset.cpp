#include "cxrnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "cxrnet/seeding.hpp"

namespace fs = std::filesystem;

namespace cxrnet {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Unassigned: return "unassigned";
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "unassigned";
}

Split parse_split(std::string_view name) {
  for (Split s : {Split::Unassigned, Split::Train, Split::Validation, Split::Test}) {
    if (to_string(s) == name) return s;
  }
  throw std::invalid_argument("unknown split '" + std::string(name) + "'");
}

std::vector<std::size_t> DatasetManifest::class_counts() const {
  std::vector<std::size_t> counts(class_names.size(), 0);
  for (const auto& r : records) ++counts.at(r.label);
  return counts;
}

std::vector<ImageRecord> DatasetManifest::subset(Split split) const {
  std::vector<ImageRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [split](const ImageRecord& r) { return r.split == split; });
  return out;
}

std::size_t DatasetManifest::count(Split split, std::size_t label) const {
  return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [&](const auto& r) {
    return r.split == split && r.label == label;
  }));
}

nlohmann::json to_json(const DatasetManifest& manifest) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : manifest.records) {
    records.push_back({{"path", r.path},
                       {"label", manifest.class_names.at(r.label)},
                       {"split", to_string(r.split)}});
  }
  return {{"class_names", manifest.class_names}, {"records", std::move(records)}};
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  m.class_names = j.at("class_names").get<std::vector<std::string>>();
  for (const auto& r : j.at("records")) {
    const auto label = r.at("label").get<std::string>();
    const auto it = std::find(m.class_names.begin(), m.class_names.end(), label);
    if (it == m.class_names.end()) {
      throw std::invalid_argument("manifest record has unknown class '" + label + "'");
    }
    m.records.push_back({r.at("path").get<std::string>(),
                         static_cast<std::size_t>(it - m.class_names.begin()),
                         parse_split(r.value("split", std::string("unassigned")))});
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(manifest).dump(2) << '\n';
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read manifest " + path.string());
  return manifest_from_json(nlohmann::json::parse(in));
}

namespace {

bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

DatasetManifest ingest(const fs::path& root, IngestSummary* summary) {
  if (!fs::is_directory(root)) {
    throw std::invalid_argument("dataset root " + root.string() + " is not a directory");
  }
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  if (class_dirs.empty()) {
    throw std::invalid_argument("dataset root " + root.string() + " has no class directories");
  }
  std::sort(class_dirs.begin(), class_dirs.end());

  IngestSummary local;
  IngestSummary& s = summary ? *summary : local;
  DatasetManifest m;
  for (const auto& dir : class_dirs) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && has_image_extension(entry.path())) {
        files.push_back(entry.path());
      }
    }
    if (files.empty()) {
      throw std::invalid_argument("class directory " + dir.string() + " contains no images");
    }
    std::sort(files.begin(), files.end());
    const std::size_t label = m.class_names.size();
    m.class_names.push_back(dir.filename().string());
    for (const auto& f : files) {
      if (!is_readable_image(f)) {
        ++s.skipped;
        s.warnings.push_back("skipped unreadable image " + f.string());
        continue;
      }
      ++s.accepted;
      m.records.push_back({f.string(), label, Split::Unassigned});
    }
  }
  return m;
}

DatasetManifest balance(const DatasetManifest& manifest, std::uint64_t seed) {
  const auto counts = manifest.class_counts();
  if (counts.empty() || *std::min_element(counts.begin(), counts.end()) == 0) {
    throw std::invalid_argument("balance: every class needs at least one record");
  }
  const std::size_t target = *std::min_element(counts.begin(), counts.end());
  std::vector<bool> keep(manifest.records.size(), false);
  for (std::size_t label = 0; label < counts.size(); ++label) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
      if (manifest.records[i].label == label) members.push_back(i);
    }
    auto rng = make_stream({seed, 0xba1a9cULL, label});
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t k = 0; k < target; ++k) keep[members[k]] = true;
  }
  DatasetManifest out;
  out.class_names = manifest.class_names;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    if (keep[i]) out.records.push_back(manifest.records[i]);
  }
  return out;
}

nlohmann::json to_json(const SplitSpec& spec) {
  nlohmann::json j{{"seed", spec.seed}};
  if (const auto* r = std::get_if<SplitRatios>(&spec.sizes)) {
    j["test_fraction"] = r->test_fraction;
    j["validation_fraction"] = r->validation_fraction;
  } else {
    const auto& c = std::get<SplitCounts>(spec.sizes);
    j["train"] = c.train;
    j["validation"] = c.validation;
    j["test"] = c.test;
  }
  return j;
}

SplitSpec split_spec_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> kKeys{"seed", "test_fraction", "validation_fraction",
                                              "train", "validation", "test"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
      throw std::invalid_argument("unknown split key '" + key + "'");
    }
  }
  SplitSpec spec;
  spec.seed = j.value("seed", std::uint64_t{10});
  const bool counts = j.contains("train") || j.contains("validation") || j.contains("test");
  const bool ratios = j.contains("test_fraction") || j.contains("validation_fraction");
  if (counts && ratios) throw std::invalid_argument("split: give either ratios or counts");
  if (counts) {
    spec.sizes = SplitCounts{j.at("train").get<std::size_t>(),
                             j.at("validation").get<std::size_t>(), j.at("test").get<std::size_t>()};
  } else {
    spec.sizes = SplitRatios{j.value("test_fraction", 0.2), j.value("validation_fraction", 0.2)};
  }
  return spec;
}

SplitCounts resolve_split_counts(const SplitSpec& spec, std::size_t n) {
  if (const auto* c = std::get_if<SplitCounts>(&spec.sizes)) {
    const std::size_t total = c->train + c->validation + c->test;
    if (total > n) {
      throw std::invalid_argument("split counts " + std::to_string(total) +
                                  " exceed class size " + std::to_string(n));
    }
    if (total != n) {
      throw std::invalid_argument("split counts " + std::to_string(total) +
                                  " do not sum to class size " + std::to_string(n));
    }
    return *c;
  }
  const auto& r = std::get<SplitRatios>(spec.sizes);
  for (double f : {r.test_fraction, r.validation_fraction}) {
    if (!(f > 0.0 && f < 1.0)) {
      throw std::invalid_argument("split fractions must lie in (0, 1), got " + std::to_string(f));
    }
  }
  auto round_half_up = [](double x) { return static_cast<std::size_t>(std::floor(x + 0.5)); };
  SplitCounts out;
  out.test = round_half_up(static_cast<double>(n) * r.test_fraction);
  out.validation = round_half_up(static_cast<double>(n - out.test) * r.validation_fraction);
  out.train = n - out.test - out.validation;
  return out;
}

DatasetManifest split(const DatasetManifest& manifest, const SplitSpec& spec) {
  DatasetManifest out = manifest;
  const auto counts = manifest.class_counts();
  for (std::size_t label = 0; label < counts.size(); ++label) {
    const SplitCounts sizes = resolve_split_counts(spec, counts[label]);
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < out.records.size(); ++i) {
      if (out.records[i].label == label) members.push_back(i);
    }
    auto rng = make_stream({spec.seed, 0x5b117ULL, label});
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t k = 0; k < members.size(); ++k) {
      Split s = Split::Train;
      if (k < sizes.test) {
        s = Split::Test;
      } else if (k < sizes.test + sizes.validation) {
        s = Split::Validation;
      }
      out.records[members[k]].split = s;
    }
  }
  return out;
}

TensorF load_image(const std::string& path, std::size_t height, std::size_t width,
                   ChannelPolicy policy) {
  return resize_bilinear(read_image(path, policy), height, width);
}

Batch load_batch(const std::vector<ImageRecord>& records, std::size_t num_classes,
                 std::size_t height, std::size_t width, ChannelPolicy policy) {
  if (records.empty()) throw std::invalid_argument("load_batch: no records");
  const std::size_t c = channel_count(policy);
  Batch batch{TensorF({records.size(), height, width, c}), TensorF({records.size(), num_classes})};
  const std::size_t plane = height * width * c;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].label >= num_classes) {
      throw std::invalid_argument("record " + records[i].path + " has label out of range");
    }
    const TensorF img = load_image(records[i].path, height, width, policy);
    std::copy(img.data(), img.data() + plane, batch.images.data() + i * plane);
    batch.labels[i * num_classes + records[i].label] = 1.0f;
  }
  return batch;
}

const std::vector<std::string>& synthetic_class_names() {
  static const std::vector<std::string> kNames{"covid19", "normal", "viral_pneumonia"};
  return kNames;
}

void generate_synthetic(const fs::path& root, std::size_t num_per_class, std::size_t image_size,
                        std::uint64_t seed) {
  if (num_per_class == 0) throw std::invalid_argument("generate_synthetic: num_per_class >= 1");
  if (image_size < 8) throw std::invalid_argument("generate_synthetic: image_size >= 8");
  const auto& names = synthetic_class_names();
  const double size = static_cast<double>(image_size);
  const double sigma = size / 10.0;
  std::vector<std::uint8_t> pixels(image_size * image_size);
  for (std::size_t label = 0; label < names.size(); ++label) {
    const fs::path dir = root / names[label];
    fs::create_directories(dir);
    const double band = (0.25 + 0.25 * static_cast<double>(label)) * size;
    for (std::size_t i = 0; i < num_per_class; ++i) {
      auto rng = make_stream({seed, 0x5e7ULL, label, i});
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      const double cy = band + (unit(rng) - 0.5) * size / 10.0;
      const double cx = (0.25 + 0.5 * unit(rng)) * size;
      const double amplitude = 0.45 + 0.2 * unit(rng);
      const double background = 0.15 + 0.1 * unit(rng);
      for (std::size_t y = 0; y < image_size; ++y) {
        for (std::size_t x = 0; x < image_size; ++x) {
          const double dy = static_cast<double>(y) - cy;
          const double dx = static_cast<double>(x) - cx;
          double v = background + amplitude * std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)) +
                     (unit(rng) - 0.5) * 0.12;
          v = std::clamp(v, 0.0, 1.0);
          pixels[y * image_size + x] = static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
      }
      char name[32];
      std::snprintf(name, sizeof(name), "img_%05zu.png", i);
      write_gray_png(dir / name, image_size, image_size, pixels);
    }
  }
}

}  // namespace cxrnet
