#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "vvpipe/feature_store.hpp"
#include "vvpipe/synth.hpp"

#include "helpers.hpp"

using namespace vvpipe;
using testutil::TempDir;

TEST_CASE("default layout partitions 426 dims") {
  const auto layout = ComponentLayout::dense_trajectory();
  REQUIRE(layout.total_dims() == 426);
  REQUIRE(layout.num_components() == 5);
  REQUIRE(layout.record_bytes() == 1704);
  REQUIRE(layout.component(0).name == "traj");
  REQUIRE(layout.offset(1) == 30);
  REQUIRE(layout.offset(4) == 30 + 96 + 108 + 96);
  const auto parsed = ComponentLayout::parse(layout.to_string());
  REQUIRE(parsed == layout);
}

TEST_CASE("write_features produces the exact byte count") {
  TempDir dir("write");
  const auto layout = ComponentLayout::dense_trajectory();
  Rng rng(7);
  const MatrixF rows = testutil::random_rows(10, 426, rng);
  const auto path = dir.path() / "x.bin";
  const VideoEntry entry = write_features(rows, layout, path, "x", 0);
  REQUIRE(entry.feature_count == 10);
  REQUIRE(std::filesystem::file_size(path) == 10u * 426u * 4u);
}

TEST_CASE("write_features with no records yields an empty file") {
  TempDir dir("empty");
  const auto layout = testutil::tiny_layout();
  const auto path = dir.path() / "empty.bin";
  const VideoEntry entry = write_features(MatrixF(0, 5), layout, path);
  REQUIRE(entry.feature_count == 0);
  REQUIRE(std::filesystem::file_size(path) == 0);
  FeatureStream stream(path, layout);
  MatrixF block;
  REQUIRE(stream.total_records() == 0);
  REQUIRE(stream.next_block(block) == 0);
}

TEST_CASE("write_features rejects wrong dims and non-finite values") {
  TempDir dir("bad");
  const auto layout = ComponentLayout::dense_trajectory();
  Rng rng(3);
  const MatrixF rows = testutil::random_rows(1, 425, rng);
  REQUIRE_THROWS_AS(write_features(rows, layout, dir.path() / "bad.bin"),
                    DimensionError);
  MatrixF nan_rows = testutil::random_rows(2, 426, rng);
  nan_rows(1, 4) = std::numeric_limits<float>::quiet_NaN();
  REQUIRE_THROWS_AS(write_features(nan_rows, layout, dir.path() / "nan.bin"),
                    InvalidArgument);
}

TEST_CASE("write then stream round-trips bit-exactly") {
  TempDir dir("roundtrip");
  const auto layout = testutil::tiny_layout();
  Rng rng(11);
  const MatrixF rows = testutil::random_rows(257, 5, rng, 3.5f);
  const auto path = dir.path() / "rt.bin";
  write_features(rows, layout, path);
  const MatrixF back = read_all_features(path, layout);
  REQUIRE(back.rows() == rows.rows());
  REQUIRE(back.cols() == rows.cols());
  REQUIRE((back.array() == rows.array()).all());
}

TEST_CASE("stream rejects truncated files") {
  TempDir dir("trunc");
  const auto layout = ComponentLayout::dense_trajectory();
  const auto path = dir.path() / "t.bin";
  {
    std::ofstream out(path, std::ios::binary);
    std::vector<char> bytes(17041, 0);  // one byte past 10 records
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  REQUIRE_THROWS_AS(FeatureStream(path, layout), FormatError);
}

TEST_CASE("stream detects manifest count mismatch") {
  TempDir dir("mismatch");
  const auto layout = testutil::tiny_layout();
  Rng rng(5);
  const auto path = dir.path() / "m.bin";
  write_features(testutil::random_rows(6, 5, rng), layout, path);
  REQUIRE_NOTHROW(FeatureStream(path, layout, 6));
  REQUIRE_THROWS_AS(FeatureStream(path, layout, 7), FormatError);
}

TEST_CASE("streaming a large file keeps a fixed-size buffer") {
  TempDir dir("bounded");
  const ComponentLayout layout({{"x", 2}});
  const std::size_t n = 1000000;
  const auto path = dir.path() / "big.bin";
  {
    // Write directly; synthesizing via MatrixF would also hold it in memory.
    std::ofstream out(path, std::ios::binary);
    std::vector<char> chunk(8 * 4096, 1);
    std::size_t written = 0;
    while (written < n * 8) {
      const std::size_t take = std::min(chunk.size(), n * 8 - written);
      out.write(chunk.data(), static_cast<std::streamsize>(take));
      written += take;
    }
  }
  FeatureStream stream(path, layout, n);
  std::vector<float> record;
  std::uint64_t seen = 0;
  while (stream.next_record(record)) ++seen;
  REQUIRE(seen == n);
  // The scratch buffer must not scale with the record count.
  REQUIRE(stream.peak_buffer_bytes() < 1024);
}

TEST_CASE("dataset_stats matches hand-computed examples") {
  using testutil::counts_manifest;
  SECTION("symmetric counts") {
    const auto m = counts_manifest({2, 4, 6}, {0, 1, 0}, 2);
    const auto s = dataset_stats(m);
    REQUIRE(s.mean == Catch::Approx(4.0));
    REQUIRE(s.median == Catch::Approx(4.0));
    REQUIRE(s.min == 2);
    REQUIRE(s.max == 6);
    REQUIRE(s.sum == 12);
  }
  SECTION("skewed counts") {
    const auto m = counts_manifest({1, 1, 1, 97}, {0, 1, 0, 1}, 2);
    const auto s = dataset_stats(m);
    REQUIRE(s.mean == Catch::Approx(25.0));
    REQUIRE(s.median == Catch::Approx(1.0));
    REQUIRE(s.max == 97);
  }
  SECTION("memory footprint for one million default-layout features") {
    const auto m = counts_manifest({500000, 500000}, {0, 1}, 2);
    const auto s = dataset_stats(m);
    REQUIRE(s.memory_gb == Catch::Approx(1.587).margin(0.01));
  }
  SECTION("empty manifest errors") {
    const auto m = counts_manifest({}, {}, 2);
    REQUIRE_THROWS_AS(dataset_stats(m), InvalidArgument);
  }
}

TEST_CASE("dataset_stats agrees with a brute-force recomputation") {
  Rng rng(99);
  std::vector<std::uint64_t> counts;
  std::vector<int> labels;
  for (int i = 0; i < 500; ++i) {
    counts.push_back(1 + rng.next_below(5000));
    labels.push_back(static_cast<int>(rng.next_below(4)));
  }
  const auto m = testutil::counts_manifest(counts, labels, 4);
  const auto s = dataset_stats(m);

  // Independent single-pass recomputation.
  double sum = 0, sumsq = 0;
  std::uint64_t mn = counts[0], mx = counts[0];
  for (auto c : counts) {
    sum += static_cast<double>(c);
    sumsq += static_cast<double>(c) * static_cast<double>(c);
    mn = std::min(mn, c);
    mx = std::max(mx, c);
  }
  const double mean = sum / static_cast<double>(counts.size());
  const double var = sumsq / static_cast<double>(counts.size()) - mean * mean;
  REQUIRE(s.mean == Catch::Approx(mean).epsilon(1e-12));
  REQUIRE(s.std_dev == Catch::Approx(std::sqrt(var)).epsilon(1e-9));
  REQUIRE(s.min == mn);
  REQUIRE(s.max == mx);
}

TEST_CASE("manifest save/load round-trips") {
  TempDir dir("manifest");
  DatasetManifest m;
  m.name = "demo";
  m.layout = testutil::tiny_layout();
  m.class_names = {"walk", "run"};
  for (int i = 0; i < 4; ++i) {
    VideoEntry v;
    v.video_id = "v" + std::to_string(i);
    v.class_label = i % 2;
    v.feature_count = 10 + static_cast<std::uint64_t>(i);
    v.feature_path = "features/v" + std::to_string(i) + ".bin";
    m.videos.push_back(v);
  }
  m.splits.push_back({{"v0", "v1"}, {"v2", "v3"}});
  m.rebuild_index();
  m.validate();
  const auto path = dir.path() / "manifest.txt";
  m.save(path);

  const auto back = DatasetManifest::load(path);
  REQUIRE(back.name == "demo");
  REQUIRE(back.layout == m.layout);
  REQUIRE(back.class_names == m.class_names);
  REQUIRE(back.videos.size() == 4);
  REQUIRE(back.videos[2].feature_count == 12);
  REQUIRE(back.videos[2].class_label == 0);
  REQUIRE(back.splits.size() == 1);
  REQUIRE(back.splits[0].train_ids == m.splits[0].train_ids);
  REQUIRE(back.splits[0].test_ids == m.splits[0].test_ids);
  REQUIRE(back.root() == std::filesystem::absolute(dir.path()));
}

TEST_CASE("manifest validation catches overlapping splits") {
  DatasetManifest m = testutil::counts_manifest({5, 5, 5, 5}, {0, 0, 1, 1}, 2);
  m.splits.push_back({{"vid0", "vid2"}, {"vid0", "vid3"}});
  REQUIRE_THROWS_AS(m.validate(), FormatError);
  m.splits[0] = {{"vid0", "vid1"}, {"vid2", "vid3"}};  // class 1 untrained
  REQUIRE_THROWS_AS(m.validate(), FormatError);
}

TEST_CASE("synth generator produces the requested shape") {
  TempDir dir("synth");
  SynthSpec spec;
  spec.num_classes = 3;
  spec.videos_per_class = 4;
  spec.features_per_video = 100;
  spec.layout = testutil::tiny_layout();
  spec.seed = 1234;
  const auto manifest = synth_generate(spec, dir.path());
  REQUIRE(manifest.videos.size() == 12);
  for (const auto& v : manifest.videos) REQUIRE(v.feature_count == 100);
  REQUIRE(manifest.splits.size() == 1);
  manifest.validate();
  // files exist with the right sizes
  for (const auto& v : manifest.videos) {
    REQUIRE(std::filesystem::file_size(manifest.feature_file(v)) ==
            100 * manifest.layout.record_bytes());
  }
  const auto reloaded = DatasetManifest::load(dir.path() / "manifest.txt");
  REQUIRE(reloaded.videos.size() == 12);
}

TEST_CASE("synth generation is deterministic per seed") {
  TempDir a("synth_a"), b("synth_b"), c("synth_c");
  SynthSpec spec;
  spec.num_classes = 2;
  spec.videos_per_class = 3;
  spec.features_per_video = 40;
  spec.feature_count_jitter = 0.3;
  spec.layout = testutil::tiny_layout();
  spec.seed = 777;
  const auto ma = synth_generate(spec, a.path());
  const auto mb = synth_generate(spec, b.path());
  spec.seed = 778;
  const auto mc = synth_generate(spec, c.path());

  for (std::size_t i = 0; i < ma.videos.size(); ++i) {
    REQUIRE(hash_file(ma.feature_file(ma.videos[i]).string()) ==
            hash_file(mb.feature_file(mb.videos[i]).string()));
  }
  bool any_differs = false;
  for (std::size_t i = 0; i < ma.videos.size(); ++i) {
    if (ma.videos[i].feature_count != mc.videos[i].feature_count ||
        hash_file(ma.feature_file(ma.videos[i]).string()) !=
            hash_file(mc.feature_file(mc.videos[i]).string())) {
      any_differs = true;
    }
  }
  REQUIRE(any_differs);
}

TEST_CASE("synth rejects invalid specs") {
  TempDir dir("synth_bad");
  SynthSpec spec;
  spec.num_classes = 1;
  REQUIRE_THROWS_AS(synth_generate(spec, dir.path()), InvalidArgument);
  spec.num_classes = 2;
  spec.feature_count_jitter = 1.5;
  REQUIRE_THROWS_AS(synth_generate(spec, dir.path()), InvalidArgument);
  spec.feature_count_jitter = 0.1;
  spec.train_fraction = 1.0;
  REQUIRE_THROWS_AS(synth_generate(spec, dir.path()), InvalidArgument);
  spec.train_fraction = 0.5;
  spec.class_length_scale = {1.0};  // wrong length
  REQUIRE_THROWS_AS(synth_generate(spec, dir.path()), InvalidArgument);
}

TEST_CASE("synth class skew shows up in the statistics") {
  TempDir dir("synth_skew");
  SynthSpec spec;
  spec.num_classes = 2;
  spec.videos_per_class = 30;
  spec.features_per_video = 50;
  spec.feature_count_jitter = 0.2;
  spec.class_length_scale = {1.0, 10.0};
  spec.layout = testutil::tiny_layout();
  spec.seed = 5;
  const auto manifest = synth_generate(spec, dir.path());
  const auto stats = dataset_stats(manifest);
  REQUIRE(stats.std_dev > 0.0);

  double mean0 = 0, mean1 = 0;
  for (const auto& v : manifest.videos) {
    (v.class_label == 0 ? mean0 : mean1) +=
        static_cast<double>(v.feature_count);
  }
  mean0 /= 30.0;
  mean1 /= 30.0;
  // Jitter is uniform with mean 1, so class means sit near 50 and 500.
  REQUIRE(mean1 / mean0 == Catch::Approx(10.0).margin(1.5));
}
