#include <doctest.h>

#include <fstream>
#include <map>
#include <set>

#include "cxrnet/dataset.hpp"
#include "cxrnet/image.hpp"
#include "support.hpp"

using namespace cxrnet;
using cxrnet::testing::TempDir;

namespace fs = std::filesystem;

namespace {

void write_pixel_png(const fs::path& path, std::uint8_t value, std::size_t size = 4) {
  std::vector<std::uint8_t> px(size * size, value);
  write_gray_png(path, size, size, px);
}

DatasetManifest fake_manifest(const std::vector<std::size_t>& sizes) {
  DatasetManifest m;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    m.class_names.push_back("class" + std::to_string(c));
    for (std::size_t i = 0; i < sizes[c]; ++i) {
      m.records.push_back({"c" + std::to_string(c) + "/" + std::to_string(i) + ".png", c});
    }
  }
  return m;
}

std::vector<std::size_t> split_counts(const DatasetManifest& m, Split s) {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < m.num_classes(); ++c) out.push_back(m.count(s, c));
  return out;
}

}  // namespace

TEST_CASE("ingest orders classes lexicographically and counts records") {
  TempDir dir("ingest");
  const std::vector<std::pair<std::string, std::size_t>> classes{
      {"covid", 1341}, {"normal", 1200}, {"viral", 1345}};
  for (const auto& [name, n] : classes) {
    fs::create_directories(dir.path() / name);
    for (std::size_t i = 0; i < n; ++i) {
      write_pixel_png(dir.path() / name / (std::to_string(i) + ".png"), 7, 2);
    }
  }
  IngestSummary summary;
  const DatasetManifest m = ingest(dir.path(), &summary);
  CHECK(m.records.size() == 3886);
  CHECK(m.class_names == std::vector<std::string>{"covid", "normal", "viral"});
  CHECK(m.class_counts() == std::vector<std::size_t>{1341, 1200, 1345});
  CHECK(summary.skipped == 0);

  SUBCASE("balance to the smallest class") {
    const DatasetManifest b = balance(m, 10);
    CHECK(b.class_counts() == std::vector<std::size_t>{1200, 1200, 1200});
  }
}

TEST_CASE("ingest edge cases") {
  TempDir dir("ingest_edge");
  CHECK_THROWS(ingest(dir.path() / "missing"));
  CHECK_THROWS(ingest(dir.path()));

  fs::create_directories(dir.path() / "only");
  write_pixel_png(dir.path() / "only" / "a.png", 200);
  CHECK(ingest(dir.path()).records.size() == 1);

  std::ofstream(dir.path() / "only" / "broken.png") << "not an image";
  IngestSummary summary;
  const auto m = ingest(dir.path(), &summary);
  CHECK(m.records.size() == 1);
  CHECK(summary.skipped == 1);
  CHECK(summary.warnings.size() == 1);

  fs::create_directories(dir.path() / "empty");
  CHECK_THROWS(ingest(dir.path()));
}

TEST_CASE("balance") {
  const DatasetManifest m = fake_manifest({10, 7, 9});
  const DatasetManifest b = balance(m, 3);
  CHECK(b.class_counts() == std::vector<std::size_t>{7, 7, 7});
  CHECK(balance(m, 3) == b);
  CHECK(balance(m, 4) != b);

  // Surviving records keep their original relative order.
  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < m.records.size(); ++i) position[m.records[i].path] = i;
  for (std::size_t i = 1; i < b.records.size(); ++i) {
    CHECK(position[b.records[i - 1].path] < position[b.records[i].path]);
  }
  const DatasetManifest even = fake_manifest({5, 5});
  CHECK(balance(even, 1) == even);
}

TEST_CASE("split with explicit counts reproduces the published per-class sizes") {
  const DatasetManifest m = fake_manifest({1199, 1199, 1199});
  SplitSpec spec;
  spec.sizes = SplitCounts{752, 188, 259};
  const DatasetManifest s = split(m, spec);
  CHECK(split_counts(s, Split::Train) == std::vector<std::size_t>{752, 752, 752});
  CHECK(split_counts(s, Split::Validation) == std::vector<std::size_t>{188, 188, 188});
  CHECK(split_counts(s, Split::Test) == std::vector<std::size_t>{259, 259, 259});
  CHECK(s.subset(Split::Train).size() == 2256);
  CHECK(s.subset(Split::Validation).size() == 564);
  CHECK(s.subset(Split::Test).size() == 777);

  spec.sizes = SplitCounts{900, 188, 259};
  CHECK_THROWS(split(m, spec));
  spec.sizes = SplitCounts{700, 188, 259};
  CHECK_THROWS(split(m, spec));
}

TEST_CASE("split with ratios") {
  CHECK(resolve_split_counts({}, 100).train == 64);
  CHECK(resolve_split_counts({}, 100).validation == 16);
  CHECK(resolve_split_counts({}, 100).test == 20);
  // 0.2 * 1199 = 239.8 -> 240; 0.2 * 959 = 191.8 -> 192.
  CHECK(resolve_split_counts({}, 1199).test == 240);
  CHECK(resolve_split_counts({}, 1199).validation == 192);
  SplitSpec bad;
  bad.sizes = SplitRatios{1.0, 0.2};
  CHECK_THROWS(resolve_split_counts(bad, 10));

  const DatasetManifest m = fake_manifest({100, 100, 100});
  const DatasetManifest a = split(m, {});
  CHECK(a == split(m, {}));
  SplitSpec other;
  other.seed = 11;
  CHECK(split(m, other) != a);

  // Partition and no leakage.
  std::set<std::string> seen;
  for (Split s : {Split::Train, Split::Validation, Split::Test}) {
    for (const auto& r : a.subset(s)) CHECK(seen.insert(r.path).second);
  }
  CHECK(seen.size() == 300);
  for (const auto& r : a.records) CHECK(r.split != Split::Unassigned);
}

TEST_CASE("split spec json rejects unknown keys") {
  SplitSpec spec;
  spec.sizes = SplitCounts{752, 188, 259};
  spec.seed = 4;
  const SplitSpec back = split_spec_from_json(to_json(spec));
  CHECK(std::get<SplitCounts>(back.sizes).test == 259);
  CHECK(back.seed == 4);
  auto j = to_json(spec);
  j["surprise"] = 1;
  CHECK_THROWS(split_spec_from_json(j));
}

TEST_CASE("manifest round trip") {
  TempDir dir("manifest");
  const DatasetManifest m = split(fake_manifest({5, 6}), {});
  save_manifest(m, dir.path() / "m.json");
  CHECK(load_manifest(dir.path() / "m.json") == m);
}

TEST_CASE("loading normalizes and resizes") {
  TempDir dir("load");
  write_pixel_png(dir.path() / "white.png", 255, 8);
  write_pixel_png(dir.path() / "black.png", 0, 8);
  const TensorF w = load_image((dir.path() / "white.png").string(), 256, 256,
                               ChannelPolicy::Replicate3);
  CHECK(w.shape() == Shape{256, 256, 3});
  for (float v : w.values()) CHECK(v == 1.0f);
  const TensorF k = load_image((dir.path() / "black.png").string(), 16, 16, ChannelPolicy::Gray1);
  CHECK(k.shape() == Shape{16, 16, 1});
  for (float v : k.values()) CHECK(v == 0.0f);

  std::vector<std::uint8_t> ramp(9 * 5);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<std::uint8_t>(i * 5);
  write_gray_png(dir.path() / "ramp.png", 9, 5, ramp);
  const TensorF r =
      load_image((dir.path() / "ramp.png").string(), 12, 12, ChannelPolicy::Replicate3);
  for (std::size_t i = 0; i < r.size(); i += 3) {
    CHECK(r[i] == r[i + 1]);
    CHECK(r[i] == r[i + 2]);
    CHECK(r[i] >= 0.0f);
    CHECK(r[i] <= 1.0f);
  }

  const std::vector<ImageRecord> records{{(dir.path() / "white.png").string(), 1},
                                         {(dir.path() / "black.png").string(), 0}};
  const Batch b = load_batch(records, 3, 8, 8);
  CHECK(b.images.shape() == Shape{2, 8, 8, 3});
  CHECK(b.labels == TensorF({2, 3}, {0, 1, 0, 1, 0, 0}));

  std::ofstream(dir.path() / "corrupt.png") << "garbage";
  try {
    load_image((dir.path() / "corrupt.png").string(), 8, 8, ChannelPolicy::Gray1);
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("corrupt.png") != std::string::npos);
  }
}

TEST_CASE("synthetic corpus") {
  TempDir a("synth_a"), b("synth_b");
  generate_synthetic(a.path(), 100, 64, 5);
  generate_synthetic(b.path(), 100, 64, 5);
  const DatasetManifest m = ingest(a.path());
  CHECK(m.records.size() == 300);
  CHECK(m.class_names == synthetic_class_names());

  // Byte-identical for the same seed.
  for (const auto& r : m.records) {
    const fs::path rel = fs::relative(r.path, a.path());
    std::ifstream fa(r.path, std::ios::binary), fb(b.path() / rel, std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(fa)), {});
    const std::string sb((std::istreambuf_iterator<char>(fb)), {});
    CHECK(sa == sb);
  }

  // Nearest-centroid oracle on raw pixels: centroids from even-indexed
  // images, accuracy measured on the odd-indexed ones.
  const std::size_t k = m.num_classes(), d = 64 * 64;
  std::vector<std::vector<double>> centroid(k, std::vector<double>(d, 0.0));
  std::vector<std::size_t> seen(k, 0);
  std::vector<TensorF> images;
  for (const auto& r : m.records) images.push_back(load_image(r.path, 64, 64, ChannelPolicy::Gray1));
  for (std::size_t i = 0; i < images.size(); i += 2) {
    const std::size_t c = m.records[i].label;
    for (std::size_t p = 0; p < d; ++p) centroid[c][p] += images[i][p];
    ++seen[c];
  }
  for (std::size_t c = 0; c < k; ++c) {
    for (double& v : centroid[c]) v /= static_cast<double>(seen[c]);
  }
  std::size_t correct = 0, total = 0;
  for (std::size_t i = 1; i < images.size(); i += 2) {
    std::size_t best = 0;
    double best_dist = 1e300;
    for (std::size_t c = 0; c < k; ++c) {
      double dist = 0;
      for (std::size_t p = 0; p < d; ++p) {
        const double diff = images[i][p] - centroid[c][p];
        dist += diff * diff;
      }
      if (dist < best_dist) {
        best_dist = dist;
        best = c;
      }
    }
    correct += best == m.records[i].label;
    ++total;
  }
  const double accuracy = static_cast<double>(correct) / static_cast<double>(total);
  MESSAGE("nearest-centroid accuracy " << accuracy);
  CHECK(accuracy > 0.9);
}
