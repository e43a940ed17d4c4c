#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "vvpipe/feature_store.hpp"
#include "vvpipe/layout.hpp"
#include "vvpipe/rng.hpp"

namespace vvpipe {

// Synthetic dataset recipe. Per class and per layout component a small
// Gaussian mixture is drawn once from the seed; every feature of a video is
// a sample from its class mixture. class_separation scales the spread of
// mixture means across classes relative to noise_sigma, so separability is
// tunable. Per-video feature counts are
//   max(1, round(features_per_video * class_length_scale[c] * u)),
// u uniform in [1 - jitter, 1 + jitter], which reproduces the long-video /
// short-video skew seen in real action datasets.
struct SynthSpec {
  std::string name = "synthetic";
  int num_classes = 3;
  int videos_per_class = 4;
  std::vector<int> class_video_counts;  // overrides videos_per_class if set
  int features_per_video = 100;
  double feature_count_jitter = 0.0;       // in [0, 1)
  std::vector<double> class_length_scale;  // empty = all 1.0
  int mixture_components = 2;
  double class_separation = 1.5;
  double noise_sigma = 1.0;
  int num_splits = 1;
  double train_fraction = 0.5;
  ComponentLayout layout = ComponentLayout::dense_trajectory();
  std::uint64_t seed = 0;

  void validate() const {
    if (num_classes < 2) throw InvalidArgument("synth: need >= 2 classes");
    if (class_video_counts.empty()) {
      if (videos_per_class < 1) {
        throw InvalidArgument("synth: videos_per_class must be >= 1");
      }
    } else if (static_cast<int>(class_video_counts.size()) != num_classes) {
      throw InvalidArgument("synth: class_video_counts size != num_classes");
    } else {
      for (int n : class_video_counts) {
        if (n < 1) throw InvalidArgument("synth: class video count < 1");
      }
    }
    if (features_per_video < 1) {
      throw InvalidArgument("synth: features_per_video must be >= 1");
    }
    if (feature_count_jitter < 0 || feature_count_jitter >= 1) {
      throw InvalidArgument("synth: jitter must be in [0, 1)");
    }
    if (!class_length_scale.empty() &&
        static_cast<int>(class_length_scale.size()) != num_classes) {
      throw InvalidArgument("synth: class_length_scale size != num_classes");
    }
    for (double s : class_length_scale) {
      if (!(s > 0)) throw InvalidArgument("synth: length scale must be > 0");
    }
    if (mixture_components < 1) {
      throw InvalidArgument("synth: mixture_components must be >= 1");
    }
    if (!(noise_sigma > 0)) {
      throw InvalidArgument("synth: noise_sigma must be > 0");
    }
    if (num_splits < 1) throw InvalidArgument("synth: need >= 1 split");
    if (!(train_fraction > 0.0) || !(train_fraction < 1.0)) {
      throw InvalidArgument("synth: train_fraction must be in (0, 1)");
    }
  }

  int videos_in_class(int c) const {
    return class_video_counts.empty() ? videos_per_class
                                      : class_video_counts[c];
  }
  double length_scale(int c) const {
    return class_length_scale.empty() ? 1.0 : class_length_scale[c];
  }
};

namespace detail {

// Mixture means for one (class, component) pair: rows are mixture centers.
inline MatrixD synth_mixture_means(const SynthSpec& spec, int cls, int comp,
                                   const Rng& root) {
  Rng rng = root.split("mixture-model", static_cast<std::uint64_t>(cls))
                .split("component", static_cast<std::uint64_t>(comp));
  const int dims = spec.layout.component(static_cast<std::size_t>(comp)).dims;
  MatrixD means(spec.mixture_components, dims);
  for (int j = 0; j < spec.mixture_components; ++j) {
    for (int d = 0; d < dims; ++d) {
      means(j, d) = spec.class_separation * rng.next_normal();
    }
  }
  return means;
}

}  // namespace detail

// Generates feature files plus a manifest under out_dir. Deterministic for a
// fixed spec: repeated calls produce byte-identical files.
inline DatasetManifest synth_generate(const SynthSpec& spec,
                                      const std::filesystem::path& out_dir) {
  spec.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "features");

  const Rng root(spec.seed);

  // Class mixture models, one per (class, component).
  std::vector<std::vector<MatrixD>> means(
      static_cast<std::size_t>(spec.num_classes));
  for (int c = 0; c < spec.num_classes; ++c) {
    for (std::size_t m = 0; m < spec.layout.num_components(); ++m) {
      means[static_cast<std::size_t>(c)].push_back(
          detail::synth_mixture_means(spec, c, static_cast<int>(m), root));
    }
  }

  DatasetManifest manifest;
  manifest.name = spec.name;
  manifest.layout = spec.layout;
  manifest.set_root(fs::absolute(out_dir));
  for (int c = 0; c < spec.num_classes; ++c) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "class%02d", c);
    manifest.class_names.emplace_back(buf);
  }

  int video_index = 0;
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int v = 0; v < spec.videos_in_class(c); ++v, ++video_index) {
      Rng vid_rng =
          root.split("video", static_cast<std::uint64_t>(video_index));
      const double u = 1.0 + spec.feature_count_jitter *
                                 (2.0 * vid_rng.next_double() - 1.0);
      const auto count = static_cast<std::uint64_t>(std::max<long long>(
          1, std::llround(spec.features_per_video * spec.length_scale(c) * u)));

      MatrixF rows(static_cast<Eigen::Index>(count),
                   spec.layout.total_dims());
      for (std::uint64_t r = 0; r < count; ++r) {
        for (std::size_t m = 0; m < spec.layout.num_components(); ++m) {
          const auto& mix = means[static_cast<std::size_t>(c)][m];
          const int j = static_cast<int>(vid_rng.next_below(
              static_cast<std::uint64_t>(spec.mixture_components)));
          const int off = spec.layout.offset(m);
          const int dims = spec.layout.component(m).dims;
          for (int d = 0; d < dims; ++d) {
            rows(static_cast<Eigen::Index>(r), off + d) = static_cast<float>(
                mix(j, d) + spec.noise_sigma * vid_rng.next_normal());
          }
        }
      }

      char idbuf[32];
      std::snprintf(idbuf, sizeof(idbuf), "v%04d_c%02d", video_index, c);
      const std::string rel = "features/" + std::string(idbuf) + ".bin";
      VideoEntry entry =
          write_features(rows, spec.layout, out_dir / rel, idbuf, c);
      entry.feature_path = rel;  // keep the manifest relocatable
      manifest.videos.push_back(std::move(entry));
    }
  }
  manifest.rebuild_index();

  // Stratified splits: per class, shuffle then cut at train_fraction with at
  // least one video on each side (when the class has two or more).
  for (int s = 0; s < spec.num_splits; ++s) {
    Rng split_rng = root.split("split", static_cast<std::uint64_t>(s));
    DatasetSplit split;
    for (int c = 0; c < spec.num_classes; ++c) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < manifest.videos.size(); ++i) {
        if (manifest.videos[i].class_label == c) members.push_back(i);
      }
      split_rng.shuffle(members.begin(), members.end());
      const auto n = members.size();
      std::size_t n_train = static_cast<std::size_t>(
          std::llround(spec.train_fraction * static_cast<double>(n)));
      n_train = std::max<std::size_t>(1, n_train);
      if (n >= 2 && n_train == n) n_train = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        auto& dst = i < n_train ? split.train_ids : split.test_ids;
        dst.push_back(manifest.videos[members[i]].video_id);
      }
    }
    manifest.splits.push_back(std::move(split));
  }

  manifest.validate();
  manifest.save(out_dir / "manifest.txt");
  return manifest;
}

}  // namespace vvpipe
