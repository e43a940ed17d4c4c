#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "vvpipe/feature_store.hpp"
#include "vvpipe/parallel.hpp"
#include "vvpipe/rng.hpp"

namespace vvpipe {

enum class SamplingMode { balanced_1a, uniform_1b };

inline const char* to_string(SamplingMode m) {
  return m == SamplingMode::balanced_1a ? "1a" : "1b";
}

inline SamplingMode sampling_mode_from_string(const std::string& s) {
  if (s == "1a" || s == "balanced") return SamplingMode::balanced_1a;
  if (s == "1b" || s == "uniform") return SamplingMode::uniform_1b;
  throw InvalidArgument("unknown sampling mode: " + s);
}

struct SamplingConfig {
  SamplingMode mode = SamplingMode::balanced_1a;
  double memory_gb = 1.6;  // M_Gb, the feature-pool memory budget
  int k = 1;               // cluster count; drives the final pool cap
  std::uint64_t seed = 0;
  int split_index = 0;

  void validate() const {
    if (!(memory_gb > 0)) throw InvalidArgument("memory_gb must be positive");
    if (k < 1) throw InvalidArgument("k must be >= 1");
  }
};

// Sampled feature matrix with per-row (video, class) provenance. Rows stay
// grouped by source video in manifest order.
class FeaturePool {
 public:
  FeaturePool() = default;
  FeaturePool(ComponentLayout layout, int num_classes)
      : layout_(std::move(layout)), num_classes_(num_classes) {}

  const ComponentLayout& layout() const { return layout_; }
  int num_classes() const { return num_classes_; }
  Eigen::Index size() const { return rows_.rows(); }
  const MatrixF& rows() const { return rows_; }
  MatrixF& mutable_rows() { return rows_; }

  int class_of_row(Eigen::Index r) const {
    return class_of_row_[static_cast<std::size_t>(r)];
  }
  const std::string& video_of_row(Eigen::Index r) const {
    return video_ids_[video_of_row_[static_cast<std::size_t>(r)]];
  }
  const std::vector<std::int32_t>& row_classes() const {
    return class_of_row_;
  }

  void reserve_rows(Eigen::Index n, int dims) {
    rows_.resize(n, dims);
    class_of_row_.resize(static_cast<std::size_t>(n));
    video_of_row_.resize(static_cast<std::size_t>(n));
  }

  // Registers a video and returns its provenance handle.
  std::uint32_t add_video(const std::string& video_id) {
    video_ids_.push_back(video_id);
    return static_cast<std::uint32_t>(video_ids_.size() - 1);
  }
  void tag_rows(Eigen::Index lo, Eigen::Index hi, std::uint32_t video,
                std::int32_t cls) {
    for (Eigen::Index r = lo; r < hi; ++r) {
      class_of_row_[static_cast<std::size_t>(r)] = cls;
      video_of_row_[static_cast<std::size_t>(r)] = video;
    }
  }

  // Row subset, preserving order. Provenance follows.
  FeaturePool select(const std::vector<std::size_t>& row_indices) const {
    FeaturePool out(layout_, num_classes_);
    out.rows_.resize(static_cast<Eigen::Index>(row_indices.size()),
                     rows_.cols());
    out.class_of_row_.resize(row_indices.size());
    out.video_of_row_.resize(row_indices.size());
    std::vector<std::int64_t> remap(video_ids_.size(), -1);
    for (std::size_t i = 0; i < row_indices.size(); ++i) {
      const auto r = row_indices[i];
      out.rows_.row(static_cast<Eigen::Index>(i)) =
          rows_.row(static_cast<Eigen::Index>(r));
      out.class_of_row_[i] = class_of_row_[r];
      auto& slot = remap[video_of_row_[r]];
      if (slot < 0) {
        slot = static_cast<std::int64_t>(out.video_ids_.size());
        out.video_ids_.push_back(video_ids_[video_of_row_[r]]);
      }
      out.video_of_row_[i] = static_cast<std::uint32_t>(slot);
    }
    return out;
  }

  void save(const std::filesystem::path& data_path,
            const std::filesystem::path& sidecar_path) const;
  static FeaturePool load(const std::filesystem::path& data_path,
                          const std::filesystem::path& sidecar_path);

 private:
  ComponentLayout layout_;
  int num_classes_ = 0;
  MatrixF rows_;
  std::vector<std::int32_t> class_of_row_;
  std::vector<std::uint32_t> video_of_row_;
  std::vector<std::string> video_ids_;
};

// Mean feature count over all videos in the dataset.
inline double mean_feature_count(const DatasetManifest& manifest) {
  if (manifest.videos.empty()) {
    throw InvalidArgument("mean_feature_count: empty manifest");
  }
  long double sum = 0;
  for (const auto& v : manifest.videos) sum += v.feature_count;
  return static_cast<double>(sum / manifest.videos.size());
}

// Bytes of one feature record expressed in gigabytes.
inline double feature_size_gb(const ComponentLayout& layout) {
  return static_cast<double>(layout.record_bytes()) /
         (1024.0 * 1024.0 * 1024.0);
}

// Videos that fit the memory budget at the dataset's mean feature count.
inline std::int64_t compute_vmax(double memory_gb, double mean_count,
                                 double record_gb) {
  if (!(memory_gb > 0) || !(mean_count > 0) || !(record_gb > 0)) {
    throw InvalidArgument("compute_vmax: all inputs must be positive");
  }
  return static_cast<std::int64_t>(
      std::floor(memory_gb / (mean_count * record_gb)));
}

// Picks which training videos contribute to the pool.
// balanced_1a: floor(V_max / C) per class (all of a class when it is
// smaller); uniform_1b: min(V_max, N_train) from the whole training set.
// Returned ids are in manifest order.
inline std::vector<std::string> sample_videos(const DatasetManifest& manifest,
                                              int split_index,
                                              std::int64_t v_max,
                                              SamplingMode mode, Rng rng) {
  if (v_max < 1) {
    throw InvalidArgument(
        "sample_videos: V_max is 0; memory budget cannot hold one average "
        "video");
  }
  if (split_index < 0 ||
      static_cast<std::size_t>(split_index) >= manifest.splits.size()) {
    throw InvalidArgument("sample_videos: split index out of range");
  }
  const auto& split = manifest.splits[static_cast<std::size_t>(split_index)];
  const int num_classes = manifest.num_classes();

  std::vector<std::size_t> picked;
  if (mode == SamplingMode::balanced_1a) {
    const auto quota = static_cast<std::size_t>(
        v_max / static_cast<std::int64_t>(num_classes));
    if (quota == 0) {
      throw InvalidArgument(
          "sample_videos: balanced quota floor(V_max/C) is 0");
    }
    std::vector<std::vector<std::size_t>> by_class(
        static_cast<std::size_t>(num_classes));
    for (const auto& id : split.train_ids) {
      const auto idx = manifest.index_of(id);
      by_class[static_cast<std::size_t>(manifest.videos[idx].class_label)]
          .push_back(idx);
    }
    for (int c = 0; c < num_classes; ++c) {
      auto& members = by_class[static_cast<std::size_t>(c)];
      if (members.empty()) {
        throw InvalidArgument("sample_videos: class " + std::to_string(c) +
                              " has no training videos");
      }
      std::sort(members.begin(), members.end());
      Rng class_rng = rng.split("class", static_cast<std::uint64_t>(c));
      const auto take = std::min(quota, members.size());
      for (auto j :
           class_rng.sample_without_replacement(members.size(), take)) {
        picked.push_back(members[j]);
      }
    }
  } else {
    std::vector<std::size_t> train;
    for (const auto& id : split.train_ids) train.push_back(manifest.index_of(id));
    std::sort(train.begin(), train.end());
    const auto take =
        std::min<std::size_t>(static_cast<std::size_t>(v_max), train.size());
    for (auto j : rng.split("uniform").sample_without_replacement(
             train.size(), take)) {
      picked.push_back(train[j]);
    }
  }
  std::sort(picked.begin(), picked.end());
  std::vector<std::string> ids;
  ids.reserve(picked.size());
  for (auto i : picked) ids.push_back(manifest.videos[i].video_id);
  return ids;
}

// Loads the selected videos' features. balanced_1a keeps at most
// floor(mean_count) rows per video (uniformly, without replacement);
// uniform_1b loads every row. Videos load in parallel into disjoint
// pre-assigned row ranges, so the pool is identical for any thread count.
inline FeaturePool load_pool(const DatasetManifest& manifest,
                             const std::vector<std::string>& selected_ids,
                             SamplingMode mode, double mean_count, Rng rng,
                             int threads = 0) {
  if (selected_ids.empty()) {
    throw InvalidArgument("load_pool: no videos selected");
  }
  const auto per_video_cap = static_cast<std::uint64_t>(
      std::max(1.0, std::floor(mean_count)));

  struct Job {
    std::size_t manifest_index;
    std::uint64_t take;
    Eigen::Index row_offset;
  };
  std::vector<Job> jobs;
  jobs.reserve(selected_ids.size());
  Eigen::Index total = 0;
  for (const auto& id : selected_ids) {
    const auto idx = manifest.index_of(id);
    const auto n = manifest.videos[idx].feature_count;
    const std::uint64_t take =
        mode == SamplingMode::balanced_1a ? std::min(n, per_video_cap) : n;
    jobs.push_back({idx, take, total});
    total += static_cast<Eigen::Index>(take);
  }

  FeaturePool pool(manifest.layout, manifest.num_classes());
  pool.reserve_rows(total, manifest.layout.total_dims());
  std::vector<std::uint32_t> handles(jobs.size());
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    handles[j] = pool.add_video(manifest.videos[jobs[j].manifest_index].video_id);
  }

  MatrixF& rows = pool.mutable_rows();
  parallel_for(
      0, jobs.size(),
      [&](std::size_t j) {
        const Job& job = jobs[j];
        const VideoEntry& entry = manifest.videos[job.manifest_index];
        FeatureStream stream(manifest.feature_file(entry), manifest.layout,
                             entry.feature_count);
        Eigen::Index at = job.row_offset;
        if (job.take == entry.feature_count) {
          MatrixF block;
          while (std::size_t n = stream.next_block(block)) {
            rows.middleRows(at, static_cast<Eigen::Index>(n)) =
                block.topRows(static_cast<Eigen::Index>(n));
            at += static_cast<Eigen::Index>(n);
          }
        } else {
          // Uniform subset: draw sorted record indices, then stream past the
          // file once keeping the chosen ones.
          Rng vid_rng =
              rng.split("video-rows", static_cast<std::uint64_t>(
                                          job.manifest_index));
          const auto keep = vid_rng.sample_without_replacement(
              static_cast<std::size_t>(entry.feature_count),
              static_cast<std::size_t>(job.take));
          MatrixF block;
          std::size_t next_keep = 0;
          std::uint64_t base = 0;
          while (std::size_t n = stream.next_block(block)) {
            const std::uint64_t hi = base + n;
            while (next_keep < keep.size() && keep[next_keep] < hi) {
              rows.row(at++) = block.row(
                  static_cast<Eigen::Index>(keep[next_keep] - base));
              ++next_keep;
            }
            base = hi;
          }
        }
        pool.tag_rows(job.row_offset,
                      job.row_offset + static_cast<Eigen::Index>(job.take),
                      handles[j], entry.class_label);
      },
      threads);

  if (rows.size() > 0 && !rows.allFinite()) {
    throw InvalidArgument("load_pool: non-finite feature value in input");
  }
  return pool;
}

// Final pool cap from the cluster count.
inline std::uint64_t pool_cap(int k) {
  return std::min<std::uint64_t>(1000000ull,
                                 static_cast<std::uint64_t>(k) * 10000ull);
}

// Step-6 subsample down to min(10^6, K*10^4) rows. balanced_1a water-fills
// across classes (equal takes, +1 extras assigned at random among classes
// with spare rows) so per-class counts differ by at most one whenever data
// allows; uniform_1b draws rows uniformly. Row order is preserved.
inline FeaturePool final_subsample(const FeaturePool& pool, int k,
                                   SamplingMode mode, Rng rng) {
  if (pool.size() == 0) throw InvalidArgument("final_subsample: empty pool");
  if (k < 1) throw InvalidArgument("final_subsample: k must be >= 1");
  const auto n = static_cast<std::uint64_t>(pool.size());
  const std::uint64_t target = std::min(pool_cap(k), n);
  if (target == n) return pool;

  std::vector<std::size_t> chosen;
  chosen.reserve(static_cast<std::size_t>(target));
  if (mode == SamplingMode::uniform_1b) {
    chosen = rng.split("uniform-rows")
                 .sample_without_replacement(static_cast<std::size_t>(n),
                                             static_cast<std::size_t>(target));
  } else {
    const int num_classes = pool.num_classes();
    std::vector<std::vector<std::size_t>> by_class(
        static_cast<std::size_t>(num_classes));
    for (Eigen::Index r = 0; r < pool.size(); ++r) {
      by_class[static_cast<std::size_t>(pool.class_of_row(r))].push_back(
          static_cast<std::size_t>(r));
    }
    // Water-fill: the largest level L with sum_c min(|c|, L) <= target.
    std::uint64_t lo = 0, hi = target;
    const auto filled = [&](std::uint64_t level) {
      std::uint64_t s = 0;
      for (const auto& m : by_class) {
        s += std::min<std::uint64_t>(m.size(), level);
      }
      return s;
    };
    while (lo < hi) {
      const std::uint64_t mid = (lo + hi + 1) / 2;
      if (filled(mid) <= target) {
        lo = mid;
      } else {
        hi = mid - 1;
      }
    }
    const std::uint64_t level = lo;
    std::vector<std::uint64_t> take(static_cast<std::size_t>(num_classes));
    std::uint64_t assigned = 0;
    for (int c = 0; c < num_classes; ++c) {
      take[static_cast<std::size_t>(c)] = std::min<std::uint64_t>(
          by_class[static_cast<std::size_t>(c)].size(), level);
      assigned += take[static_cast<std::size_t>(c)];
    }
    std::uint64_t extras = target - assigned;
    // Classes with spare rows receive at most one extra each, picked at
    // random so no class index is systematically favored.
    std::vector<int> eligible;
    for (int c = 0; c < num_classes; ++c) {
      if (by_class[static_cast<std::size_t>(c)].size() >
          take[static_cast<std::size_t>(c)]) {
        eligible.push_back(c);
      }
    }
    Rng extra_rng = rng.split("extras");
    extra_rng.shuffle(eligible.begin(), eligible.end());
    for (std::uint64_t e = 0; e < extras && e < eligible.size(); ++e) {
      take[static_cast<std::size_t>(eligible[e])]++;
    }
    for (int c = 0; c < num_classes; ++c) {
      const auto& members = by_class[static_cast<std::size_t>(c)];
      Rng class_rng = rng.split("class-rows", static_cast<std::uint64_t>(c));
      for (auto j : class_rng.sample_without_replacement(
               members.size(),
               static_cast<std::size_t>(take[static_cast<std::size_t>(c)]))) {
        chosen.push_back(members[j]);
      }
    }
    std::sort(chosen.begin(), chosen.end());
  }
  return pool.select(chosen);
}

// Steps 2-5: memory-budgeted video selection plus per-video loading. The
// result does not depend on K, so it is the natural unit to cache.
inline FeaturePool load_stage_pool(const DatasetManifest& manifest,
                                   const SamplingConfig& config,
                                   int threads = 0) {
  config.validate();
  const double mu = mean_feature_count(manifest);
  const double s_gb = feature_size_gb(manifest.layout);
  const std::int64_t v_max = compute_vmax(config.memory_gb, mu, s_gb);
  Rng rng(config.seed);
  const auto ids = sample_videos(manifest, config.split_index, v_max,
                                 config.mode, rng.split("videos"));
  return load_pool(manifest, ids, config.mode, mu, rng.split("rows"), threads);
}

// Steps 2-6 end to end for one split.
inline FeaturePool run_sampling(const DatasetManifest& manifest,
                                const SamplingConfig& config,
                                int threads = 0) {
  FeaturePool pool = load_stage_pool(manifest, config, threads);
  return final_subsample(pool, config.k, config.mode,
                         Rng(config.seed).split("final"));
}

// ---------------------------------------------------------------------------
// Pool files: the data file reuses the raw feature-record format; provenance
// rides in a text sidecar of per-video segments (rows stay grouped by video).
// ---------------------------------------------------------------------------

inline void FeaturePool::save(const std::filesystem::path& data_path,
                              const std::filesystem::path& sidecar_path) const {
  atomic_write_file(data_path, [&](std::ostream& out) {
    const int d = layout_.total_dims();
    std::vector<float> row(static_cast<std::size_t>(d));
    std::vector<char> bytes(static_cast<std::size_t>(d) * 4);
    for (Eigen::Index r = 0; r < rows_.rows(); ++r) {
      for (int j = 0; j < d; ++j) {
        row[static_cast<std::size_t>(j)] = rows_(r, j);
      }
      encode_f32_le(row.data(), row.size(), bytes.data());
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
  });
  atomic_write_file(sidecar_path, [&](std::ostream& out) {
    out << "vvpipe-pool 1\n";
    out << "layout " << layout_.to_string() << "\n";
    out << "classes " << num_classes_ << "\n";
    out << "rows " << rows_.rows() << "\n";
    Eigen::Index r = 0;
    while (r < rows_.rows()) {
      Eigen::Index end = r;
      const auto vid = video_of_row_[static_cast<std::size_t>(r)];
      const auto cls = class_of_row_[static_cast<std::size_t>(r)];
      while (end < rows_.rows() &&
             video_of_row_[static_cast<std::size_t>(end)] == vid &&
             class_of_row_[static_cast<std::size_t>(end)] == cls) {
        ++end;
      }
      out << "seg " << video_ids_[vid] << ' ' << cls << ' ' << (end - r)
          << "\n";
      r = end;
    }
  });
}

inline FeaturePool FeaturePool::load(const std::filesystem::path& data_path,
                                     const std::filesystem::path& sidecar_path) {
  std::ifstream side(sidecar_path);
  if (!side) throw IoError("cannot open pool sidecar: " + sidecar_path.string());
  std::string tok;
  int version = 0;
  side >> tok >> version;
  if (tok != "vvpipe-pool" || version != 1) {
    throw FormatError("bad pool sidecar header: " + sidecar_path.string());
  }
  std::string layout_spec;
  int num_classes = 0;
  Eigen::Index rows = 0;
  side >> tok >> layout_spec;
  if (tok != "layout") throw FormatError("pool sidecar: expected layout");
  side >> tok >> num_classes;
  if (tok != "classes") throw FormatError("pool sidecar: expected classes");
  side >> tok >> rows;
  if (tok != "rows") throw FormatError("pool sidecar: expected rows");

  FeaturePool pool(ComponentLayout::parse(layout_spec), num_classes);
  pool.reserve_rows(rows, pool.layout().total_dims());
  Eigen::Index at = 0;
  while (side >> tok) {
    if (tok != "seg") throw FormatError("pool sidecar: expected seg");
    std::string video_id;
    std::int32_t cls;
    Eigen::Index count;
    if (!(side >> video_id >> cls >> count)) {
      throw FormatError("pool sidecar: bad seg line");
    }
    const auto handle = pool.add_video(video_id);
    pool.tag_rows(at, at + count, handle, cls);
    at += count;
  }
  if (at != rows) {
    throw FormatError("pool sidecar: segments cover " + std::to_string(at) +
                      " rows, header says " + std::to_string(rows));
  }
  FeatureStream stream(data_path, pool.layout(),
                       static_cast<std::uint64_t>(rows));
  MatrixF block;
  at = 0;
  while (std::size_t n = stream.next_block(block)) {
    pool.mutable_rows().middleRows(at, static_cast<Eigen::Index>(n)) =
        block.topRows(static_cast<Eigen::Index>(n));
    at += static_cast<Eigen::Index>(n);
  }
  return pool;
}

}  // namespace vvpipe
