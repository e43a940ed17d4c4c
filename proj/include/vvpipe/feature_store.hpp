#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "vvpipe/common.hpp"
#include "vvpipe/io_util.hpp"
#include "vvpipe/layout.hpp"

namespace vvpipe {

struct VideoEntry {
  std::string video_id;
  int class_label = -1;
  std::uint64_t feature_count = 0;
  std::string feature_path;  // relative paths resolve against manifest root
};

struct DatasetSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

struct DatasetStats {
  std::uint64_t sum = 0;
  double mean = 0;
  double std_dev = 0;  // population standard deviation over videos
  double median = 0;
  std::uint64_t max = 0;
  std::uint64_t min = 0;
  double memory_gb = 0;  // sum * total_dims * 4 / 1024^3
};

// Dataset description: labeled videos, their feature files, and train/test
// splits. Immutable in practice once loaded; all pipeline stages share it
// by const reference.
class DatasetManifest {
 public:
  std::string name;
  ComponentLayout layout;
  std::vector<std::string> class_names;
  std::vector<VideoEntry> videos;
  std::vector<DatasetSplit> splits;

  int num_classes() const { return static_cast<int>(class_names.size()); }

  const VideoEntry& video(std::size_t i) const { return videos.at(i); }

  std::size_t index_of(const std::string& video_id) const {
    const auto it = index_.find(video_id);
    if (it == index_.end()) {
      throw InvalidArgument("unknown video id: " + video_id);
    }
    return it->second;
  }

  bool has_video(const std::string& video_id) const {
    return index_.find(video_id) != index_.end();
  }

  // Absolute location of a video's feature file.
  std::filesystem::path feature_file(const VideoEntry& entry) const {
    std::filesystem::path p(entry.feature_path);
    if (p.is_absolute() || root_.empty()) return p;
    return root_ / p;
  }

  const std::filesystem::path& root() const { return root_; }
  void set_root(std::filesystem::path root) { root_ = std::move(root); }

  void rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < videos.size(); ++i) {
      if (!index_.emplace(videos[i].video_id, i).second) {
        throw FormatError("duplicate video id: " + videos[i].video_id);
      }
    }
  }

  // Structural invariants: class labels in range, split ids known and
  // disjoint, at least one training video per class in every split.
  void validate() const {
    if (num_classes() < 2) {
      throw FormatError("manifest needs at least 2 classes");
    }
    for (const auto& v : videos) {
      if (v.class_label < 0 || v.class_label >= num_classes()) {
        throw FormatError("video '" + v.video_id + "' has class " +
                          std::to_string(v.class_label) + " out of range");
      }
    }
    for (std::size_t s = 0; s < splits.size(); ++s) {
      std::set<std::string> train(splits[s].train_ids.begin(),
                                  splits[s].train_ids.end());
      std::vector<int> train_per_class(num_classes(), 0);
      for (const auto& id : splits[s].train_ids) {
        train_per_class[videos[index_of(id)].class_label]++;
      }
      for (const auto& id : splits[s].test_ids) {
        if (train.count(id)) {
          throw FormatError("split " + std::to_string(s) + ": video '" + id +
                            "' appears in both train and test");
        }
        index_of(id);  // must exist
      }
      for (int c = 0; c < num_classes(); ++c) {
        if (train_per_class[c] == 0) {
          throw FormatError("split " + std::to_string(s) + ": class '" +
                            class_names[c] + "' has no training videos");
        }
      }
    }
  }

  void save(const std::filesystem::path& path) const;
  static DatasetManifest load(const std::filesystem::path& path);

 private:
  std::filesystem::path root_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Binary feature files: headerless little-endian float32 records, one file
// per video. A record is one descriptor row of layout.total_dims() values.
// ---------------------------------------------------------------------------

// Writes rows contiguously to `path` and returns the manifest entry.
// Rejects non-finite values and layout mismatches.
inline VideoEntry write_features(const MatrixF& rows,
                                 const ComponentLayout& layout,
                                 const std::filesystem::path& path,
                                 const std::string& video_id = "",
                                 int class_label = -1) {
  if (rows.cols() != layout.total_dims() && rows.rows() > 0) {
    throw DimensionError("write_features: rows have " +
                         std::to_string(rows.cols()) + " dims, layout wants " +
                         std::to_string(layout.total_dims()));
  }
  if (rows.size() > 0 && !rows.allFinite()) {
    throw InvalidArgument("write_features: non-finite feature value");
  }
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open feature file for write: " + path.string());
  const int d = layout.total_dims();
  std::vector<float> row(static_cast<std::size_t>(d));
  std::vector<char> bytes(static_cast<std::size_t>(d) * 4);
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    for (int j = 0; j < d; ++j) row[static_cast<std::size_t>(j)] = rows(r, j);
    encode_f32_le(row.data(), row.size(), bytes.data());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  out.flush();
  if (!out) throw IoError("feature write failed: " + path.string());
  VideoEntry entry;
  entry.video_id = video_id;
  entry.class_label = class_label;
  entry.feature_count = static_cast<std::uint64_t>(rows.rows());
  entry.feature_path = path.string();
  return entry;
}

// Streams records out of one feature file with a fixed-size buffer, so peak
// memory is independent of the file's record count.
class FeatureStream {
 public:
  static constexpr std::size_t kDefaultBlockRows = 4096;

  FeatureStream(const std::filesystem::path& path,
                const ComponentLayout& layout,
                std::uint64_t expected_count = kUnknownCount)
      : layout_(layout), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open feature file: " + path.string());
    const std::uint64_t rec = layout.record_bytes();
    in_.seekg(0, std::ios::end);
    const auto size = static_cast<std::uint64_t>(in_.tellg());
    in_.seekg(0, std::ios::beg);
    if (size % rec != 0) {
      throw FormatError("truncated feature file (" + std::to_string(size) +
                        " bytes is not a multiple of " + std::to_string(rec) +
                        "): " + path.string());
    }
    total_ = size / rec;
    if (expected_count != kUnknownCount && expected_count != total_) {
      throw FormatError("feature count mismatch for " + path.string() +
                        ": manifest says " + std::to_string(expected_count) +
                        ", file holds " + std::to_string(total_));
    }
  }

  std::uint64_t total_records() const { return total_; }
  std::uint64_t records_read() const { return read_; }

  // Fills `block` with up to max_rows records; returns rows produced
  // (0 at end of file).
  std::size_t next_block(MatrixF& block,
                         std::size_t max_rows = kDefaultBlockRows) {
    const std::uint64_t remaining = total_ - read_;
    const std::size_t n = static_cast<std::size_t>(
        std::min<std::uint64_t>(remaining, max_rows == 0 ? 1 : max_rows));
    const int d = layout_.total_dims();
    block.resize(static_cast<Eigen::Index>(n), d);
    if (n == 0) return 0;
    const std::size_t bytes = n * layout_.record_bytes();
    if (buffer_.size() < bytes) buffer_.resize(bytes);
    peak_buffer_bytes_ = std::max(peak_buffer_bytes_, buffer_.size());
    if (!in_.read(buffer_.data(), static_cast<std::streamsize>(bytes))) {
      throw IoError("read failed mid-file");
    }
    if (floats_.size() < n * static_cast<std::size_t>(d)) {
      floats_.resize(n * static_cast<std::size_t>(d));
    }
    decode_f32_le(buffer_.data(), n * static_cast<std::size_t>(d),
                  floats_.data());
    for (std::size_t r = 0; r < n; ++r) {
      for (int j = 0; j < d; ++j) {
        block(static_cast<Eigen::Index>(r), j) =
            floats_[r * static_cast<std::size_t>(d) +
                    static_cast<std::size_t>(j)];
      }
    }
    read_ += n;
    return n;
  }

  // Single-record convenience for incremental consumers.
  bool next_record(std::vector<float>& out) {
    if (read_ >= total_) return false;
    const int d = layout_.total_dims();
    out.resize(static_cast<std::size_t>(d));
    const std::size_t bytes = layout_.record_bytes();
    if (buffer_.size() < bytes) buffer_.resize(bytes);
    peak_buffer_bytes_ = std::max(peak_buffer_bytes_, buffer_.size());
    if (!in_.read(buffer_.data(), static_cast<std::streamsize>(bytes))) {
      throw IoError("read failed mid-file");
    }
    decode_f32_le(buffer_.data(), out.size(), out.data());
    ++read_;
    return true;
  }

  // Largest scratch allocation so far; lets tests pin the memory bound.
  std::size_t peak_buffer_bytes() const {
    return peak_buffer_bytes_ + floats_.size() * sizeof(float);
  }

 private:
  static constexpr std::uint64_t kUnknownCount = ~std::uint64_t{0};
  ComponentLayout layout_;
  std::ifstream in_;
  std::uint64_t total_ = 0;
  std::uint64_t read_ = 0;
  std::vector<char> buffer_;
  std::vector<float> floats_;
  std::size_t peak_buffer_bytes_ = 0;
};

// Loads a whole feature file. Intended for small files and tests; the
// pipeline itself streams.
inline MatrixF read_all_features(const std::filesystem::path& path,
                                 const ComponentLayout& layout,
                                 std::uint64_t expected_count =
                                     ~std::uint64_t{0}) {
  FeatureStream stream(path, layout, expected_count);
  MatrixF all(static_cast<Eigen::Index>(stream.total_records()),
              layout.total_dims());
  MatrixF block;
  Eigen::Index at = 0;
  while (std::size_t n = stream.next_block(block)) {
    all.middleRows(at, static_cast<Eigen::Index>(n)) =
        block.topRows(static_cast<Eigen::Index>(n));
    at += static_cast<Eigen::Index>(n);
  }
  return all;
}

// Per-dataset feature-count statistics plus the implied storage footprint.
inline DatasetStats dataset_stats(const DatasetManifest& manifest) {
  if (manifest.videos.empty()) {
    throw InvalidArgument("dataset_stats: empty manifest");
  }
  DatasetStats s;
  std::vector<std::uint64_t> counts;
  counts.reserve(manifest.videos.size());
  for (const auto& v : manifest.videos) counts.push_back(v.feature_count);
  s.sum = 0;
  for (auto c : counts) s.sum += c;
  const double n = static_cast<double>(counts.size());
  s.mean = static_cast<double>(s.sum) / n;
  double sq = 0;
  for (auto c : counts) {
    const double d = static_cast<double>(c) - s.mean;
    sq += d * d;
  }
  s.std_dev = std::sqrt(sq / n);
  std::sort(counts.begin(), counts.end());
  s.min = counts.front();
  s.max = counts.back();
  const std::size_t m = counts.size();
  s.median = (m % 2 == 1) ? static_cast<double>(counts[m / 2])
                          : (static_cast<double>(counts[m / 2 - 1]) +
                             static_cast<double>(counts[m / 2])) /
                                2.0;
  s.memory_gb = static_cast<double>(s.sum) *
                static_cast<double>(manifest.layout.total_dims()) * 4.0 /
                (1024.0 * 1024.0 * 1024.0);
  return s;
}

// ---------------------------------------------------------------------------
// Manifest text format (fixed column order: video_id, class, count, path):
//
//   vvpipe-manifest 1
//   name <dataset name>
//   layout traj:30,hog:96,hof:108,mbhx:96,mbhy:96
//   classes <C>
//   class <index> <name>
//   videos <N>
//   video <video_id> <class> <count> <path>
//   splits <S>
//   split <index> train <id> <id> ...
//   split <index> test <id> <id> ...
// ---------------------------------------------------------------------------

inline void DatasetManifest::save(const std::filesystem::path& path) const {
  atomic_write_file(path, [&](std::ostream& out) {
    out << "vvpipe-manifest 1\n";
    out << "name " << name << "\n";
    out << "layout " << layout.to_string() << "\n";
    out << "classes " << class_names.size() << "\n";
    for (std::size_t c = 0; c < class_names.size(); ++c) {
      out << "class " << c << ' ' << class_names[c] << "\n";
    }
    out << "videos " << videos.size() << "\n";
    for (const auto& v : videos) {
      out << "video " << v.video_id << ' ' << v.class_label << ' '
          << v.feature_count << ' ' << v.feature_path << "\n";
    }
    out << "splits " << splits.size() << "\n";
    for (std::size_t s = 0; s < splits.size(); ++s) {
      out << "split " << s << " train";
      for (const auto& id : splits[s].train_ids) out << ' ' << id;
      out << "\n";
      out << "split " << s << " test";
      for (const auto& id : splits[s].test_ids) out << ' ' << id;
      out << "\n";
    }
  });
}

inline DatasetManifest DatasetManifest::load(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  DatasetManifest m;
  m.root_ = std::filesystem::absolute(path).parent_path();

  std::string line;
  std::size_t line_no = 0;
  const auto fail = [&](const std::string& what) -> void {
    throw FormatError("manifest " + path.string() + " line " +
                      std::to_string(line_no) + ": " + what);
  };
  const auto next_line = [&](std::istringstream& ls) {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line[0] == '#') continue;
      ls.clear();
      ls.str(line);
      return true;
    }
    return false;
  };

  std::istringstream ls;
  std::string tok;
  int version = 0;
  if (!next_line(ls) || !(ls >> tok >> version) || tok != "vvpipe-manifest") {
    fail("expected 'vvpipe-manifest <version>' header");
  }
  if (version != 1) fail("unsupported manifest version");

  std::size_t expect_classes = 0, expect_videos = 0, expect_splits = 0;
  while (next_line(ls)) {
    ls >> tok;
    if (tok == "name") {
      std::string rest;
      std::getline(ls, rest);
      const auto pos = rest.find_first_not_of(' ');
      m.name = pos == std::string::npos ? "" : rest.substr(pos);
    } else if (tok == "layout") {
      std::string spec;
      if (!(ls >> spec)) fail("missing layout spec");
      m.layout = ComponentLayout::parse(spec);
    } else if (tok == "classes") {
      if (!(ls >> expect_classes)) fail("bad classes count");
      m.class_names.resize(expect_classes);
    } else if (tok == "class") {
      std::size_t idx;
      std::string cname;
      if (!(ls >> idx >> cname) || idx >= m.class_names.size()) {
        fail("bad class line");
      }
      m.class_names[idx] = cname;
    } else if (tok == "videos") {
      if (!(ls >> expect_videos)) fail("bad videos count");
      m.videos.reserve(expect_videos);
    } else if (tok == "video") {
      VideoEntry v;
      if (!(ls >> v.video_id >> v.class_label >> v.feature_count >>
            v.feature_path)) {
        fail("bad video line (want: video <id> <class> <count> <path>)");
      }
      m.videos.push_back(std::move(v));
    } else if (tok == "splits") {
      if (!(ls >> expect_splits)) fail("bad splits count");
      m.splits.resize(expect_splits);
    } else if (tok == "split") {
      std::size_t idx;
      std::string side;
      if (!(ls >> idx >> side) || idx >= m.splits.size()) fail("bad split line");
      auto& dst = side == "train"  ? m.splits[idx].train_ids
                  : side == "test" ? m.splits[idx].test_ids
                                   : (fail("split side must be train|test"),
                                      m.splits[idx].train_ids);
      std::string id;
      while (ls >> id) dst.push_back(id);
    } else {
      fail("unknown directive '" + tok + "'");
    }
  }
  if (m.videos.size() != expect_videos) {
    fail("video count mismatch: declared " + std::to_string(expect_videos) +
         ", found " + std::to_string(m.videos.size()));
  }
  if (m.layout.total_dims() == 0) fail("manifest missing layout");
  m.rebuild_index();
  m.validate();
  return m;
}

}  // namespace vvpipe
