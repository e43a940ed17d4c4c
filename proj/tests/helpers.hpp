#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include "vvpipe/feature_store.hpp"
#include "vvpipe/rng.hpp"

namespace testutil {

// Fresh scratch directory under the system temp root, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("vvpipe_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline vvpipe::ComponentLayout tiny_layout() {
  return vvpipe::ComponentLayout({{"a", 2}, {"b", 3}});
}

inline vvpipe::MatrixF random_rows(int n, int d, vvpipe::Rng& rng,
                                   float scale = 1.0f) {
  vvpipe::MatrixF m(n, d);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < d; ++c) {
      m(r, c) = scale * static_cast<float>(rng.next_normal());
    }
  }
  return m;
}

// Manifest of count-only videos (no files on disk); enough for the
// statistics and arithmetic paths.
inline vvpipe::DatasetManifest counts_manifest(
    const std::vector<std::uint64_t>& counts,
    const std::vector<int>& labels, int num_classes,
    vvpipe::ComponentLayout layout = vvpipe::ComponentLayout::dense_trajectory()) {
  vvpipe::DatasetManifest m;
  m.name = "counts";
  m.layout = std::move(layout);
  for (int c = 0; c < num_classes; ++c) {
    m.class_names.push_back("c" + std::to_string(c));
  }
  for (std::size_t i = 0; i < counts.size(); ++i) {
    vvpipe::VideoEntry v;
    v.video_id = "vid" + std::to_string(i);
    v.class_label = labels[i];
    v.feature_count = counts[i];
    v.feature_path = "none/" + v.video_id + ".bin";
    m.videos.push_back(std::move(v));
  }
  m.rebuild_index();
  return m;
}

}  // namespace testutil
