#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "vvpipe/feature_store.hpp"
#include "vvpipe/vocabulary.hpp"

namespace vvpipe {

enum class Representation {
  bof_3a,
  bof_per_category_3b,
  vlad_3c,
  fisher_3d,
};

inline const char* to_string(Representation r) {
  switch (r) {
    case Representation::bof_3a: return "3a";
    case Representation::bof_per_category_3b: return "3b";
    case Representation::vlad_3c: return "3c";
    case Representation::fisher_3d: return "3d";
  }
  return "?";
}

inline Representation representation_from_string(const std::string& s) {
  if (s == "3a" || s == "bof") return Representation::bof_3a;
  if (s == "3b" || s == "bof-percat") return Representation::bof_per_category_3b;
  if (s == "3c" || s == "vlad") return Representation::vlad_3c;
  if (s == "3d" || s == "fisher") return Representation::fisher_3d;
  throw InvalidArgument("unknown representation: " + s);
}

inline VocabKind vocab_kind_for(Representation r) {
  switch (r) {
    case Representation::bof_3a: return VocabKind::bof;
    case Representation::bof_per_category_3b: return VocabKind::bof_per_category;
    case Representation::vlad_3c: return VocabKind::vlad;
    case Representation::fisher_3d: return VocabKind::fisher;
  }
  throw InvalidArgument("bad representation");
}

// Fixed-length vector dimensionality for one (method, scheme) choice.
//   3a: K per slot              3b: K*C per slot
//   3c: dims*K per slot         3d: 2*dims*K per slot
// where 2a contributes one slot per component and 2b a single joint slot.
inline int encoding_dim(Representation repr, Scheme scheme, int k,
                        int num_classes, const ComponentLayout& layout,
                        int pca_dims = 24) {
  const int comps = static_cast<int>(layout.num_components());
  const int slots = scheme == Scheme::per_component_2a ? comps : 1;
  switch (repr) {
    case Representation::bof_3a:
      return k * slots;
    case Representation::bof_per_category_3b:
      return k * num_classes * slots;
    case Representation::vlad_3c:
      return pca_dims * comps * k;
    case Representation::fisher_3d:
      return 2 * pca_dims * comps * k;
  }
  throw InvalidArgument("bad representation");
}

struct Encoding {
  VectorD values;
  Representation method = Representation::bof_3a;
  Scheme scheme = Scheme::joint_2b;
  // Set for empty or residual-free videos, which encode as all zeros
  // instead of failing the run.
  bool degenerate = false;

  int dim() const { return static_cast<int>(values.size()); }
};

// Signed power normalization with exponent 1/2; the identity map composed
// with sqrt on non-negative input.
inline VectorD signed_sqrt(const VectorD& v) {
  return v.array().sign() * v.array().abs().sqrt();
}

// Streaming per-video encoder: feature blocks go in, the fixed-length
// vector comes out of finish(). Memory is bounded by the block size, never
// by the video length.
class VideoEncoder {
 public:
  VideoEncoder(const VocabularySet& vocab, Representation repr)
      : vocab_(vocab), repr_(repr) {
    if (vocab_kind_for(repr) != vocab.kind) {
      throw InvalidArgument(
          std::string("vocabulary kind '") + to_string(vocab.kind) +
          "' does not serve representation " + to_string(repr));
    }
    const auto slots = vocab.num_slots();
    switch (repr_) {
      case Representation::bof_3a:
      case Representation::bof_per_category_3b:
        counts_.assign(slots, VectorD::Zero(vocab.bins_per_slot()));
        for (std::size_t s = 0; s < slots; ++s) {
          books_.push_back(vocab.universal_codebook(s));
        }
        break;
      case Representation::vlad_3c:
        residuals_.assign(slots, MatrixD());
        input_sq_.assign(slots, 0.0);
        for (std::size_t s = 0; s < slots; ++s) {
          books_.push_back(vocab.universal_codebook(s));
          residuals_[s] = MatrixD::Zero(vocab.k, vocab.slot_dims(s));
        }
        break;
      case Representation::fisher_3d:
        s0_.assign(slots, VectorD());
        s1_.assign(slots, MatrixD());
        s2_.assign(slots, MatrixD());
        for (std::size_t s = 0; s < slots; ++s) {
          s0_[s] = VectorD::Zero(vocab.k);
          s1_[s] = MatrixD::Zero(vocab.k, vocab.slot_dims(s));
          s2_[s] = MatrixD::Zero(vocab.k, vocab.slot_dims(s));
        }
        break;
    }
  }

  void add(const MatrixF& block) {
    if (block.rows() == 0) return;
    if (block.cols() != vocab_.layout.total_dims()) {
      throw DimensionError("VideoEncoder::add: block dims " +
                           std::to_string(block.cols()) +
                           " != layout total " +
                           std::to_string(vocab_.layout.total_dims()));
    }
    n_features_ += static_cast<std::uint64_t>(block.rows());
    for (std::size_t s = 0; s < vocab_.num_slots(); ++s) {
      switch (repr_) {
        case Representation::bof_3a:
        case Representation::bof_per_category_3b: {
          const MatrixF slot_rows = detail::raw_slot_rows(
              vocab_.layout, vocab_.scheme, block, s);
          for (int a : assign_nearest(books_[s], slot_rows)) {
            counts_[s](a) += 1.0;
          }
          break;
        }
        case Representation::vlad_3c: {
          const MatrixF reduced = reduced_slot_rows(vocab_, block, s);
          const auto assign = assign_nearest(books_[s], reduced);
          for (Eigen::Index r = 0; r < reduced.rows(); ++r) {
            const int a = assign[static_cast<std::size_t>(r)];
            residuals_[s].row(a) +=
                reduced.row(r).cast<double>() - books_[s].row(a);
          }
          input_sq_[s] += static_cast<double>(reduced.squaredNorm());
          break;
        }
        case Representation::fisher_3d: {
          const MatrixD reduced =
              reduced_slot_rows(vocab_, block, s).cast<double>();
          const MatrixD gamma = gmm_responsibilities(vocab_.gmms[s], reduced);
          s0_[s] += gamma.colwise().sum().transpose();
          s1_[s] += gamma.transpose() * reduced;
          s2_[s] += gamma.transpose() * reduced.cwiseProduct(reduced);
          break;
        }
      }
    }
  }

  // raw_out, when given, receives the concatenated blocks before any
  // normalization (diagnostics and tests).
  Encoding finish(VectorD* raw_out = nullptr) {
    Encoding enc;
    enc.method = repr_;
    enc.scheme = vocab_.scheme;
    const int total_dim =
        encoding_dim(repr_, vocab_.scheme, vocab_.k, vocab_.num_categories,
                     vocab_.layout, vocab_.pca_dims);
    enc.values = VectorD::Zero(total_dim);
    if (raw_out) *raw_out = VectorD::Zero(total_dim);
    if (n_features_ == 0) {
      enc.degenerate = true;
      return enc;
    }

    int at = 0;
    switch (repr_) {
      case Representation::bof_3a:
      case Representation::bof_per_category_3b: {
        // L1 per component block, then L1 jointly.
        for (auto& h : counts_) {
          if (raw_out) raw_out->segment(at, h.size()) = h;
          const double sum = h.sum();
          if (sum > 0) h /= sum;
          enc.values.segment(at, h.size()) = h;
          at += static_cast<int>(h.size());
        }
        const double joint = enc.values.lpNorm<1>();
        if (joint > 0) enc.values /= joint;
        break;
      }
      case Representation::vlad_3c: {
        // L2 per component block, then L2 jointly. Residual mass at the
        // float32 noise floor of the inputs counts as zero, so a video
        // sitting exactly on the centroids stays a zero vector.
        for (std::size_t s = 0; s < residuals_.size(); ++s) {
          MatrixD& res = residuals_[s];
          VectorD block(res.size());
          int b = 0;
          for (Eigen::Index c = 0; c < res.rows(); ++c) {
            block.segment(b, res.cols()) = res.row(c).transpose();
            b += static_cast<int>(res.cols());
          }
          if (raw_out) raw_out->segment(at, block.size()) = block;
          const double floor = 1e-6 * std::sqrt(input_sq_[s]);
          const double norm = block.norm();
          if (norm > floor && norm > 0) {
            block /= norm;
          } else {
            block.setZero();
          }
          enc.values.segment(at, block.size()) = block;
          at += static_cast<int>(block.size());
        }
        break;
      }
      case Representation::fisher_3d: {
        const double n = static_cast<double>(n_features_);
        for (std::size_t s = 0; s < vocab_.num_slots(); ++s) {
          const GmmModel& g = vocab_.gmms[s];
          const int dims = vocab_.slot_dims(s);
          VectorD block(2 * dims * vocab_.k);
          const MatrixD sigma = g.variances.cwiseSqrt();
          for (int c = 0; c < vocab_.k; ++c) {
            const double wk = g.weights(c);
            // Mean-gradient and variance-gradient rows for Gaussian c.
            const Eigen::RowVectorXd mean_grad =
                (s1_[s].row(c) - g.means.row(c) * s0_[s](c))
                    .cwiseQuotient(sigma.row(c)) /
                (n * std::sqrt(wk));
            const Eigen::RowVectorXd var_grad =
                ((s2_[s].row(c) -
                  2.0 * g.means.row(c).cwiseProduct(s1_[s].row(c)) +
                  g.means.row(c).cwiseProduct(g.means.row(c)) * s0_[s](c))
                     .cwiseQuotient(g.variances.row(c)) -
                 Eigen::RowVectorXd::Constant(dims, s0_[s](c))) /
                (n * std::sqrt(2.0 * wk));
            block.segment(c * dims, dims) = mean_grad.transpose();
            block.segment(vocab_.k * dims + c * dims, dims) =
                var_grad.transpose();
          }
          if (raw_out) raw_out->segment(at, block.size()) = block;
          // Power normalization then L2, per component block.
          block = signed_sqrt(block);
          const double norm = block.norm();
          if (norm > 0) block /= norm;
          enc.values.segment(at, block.size()) = block;
          at += static_cast<int>(block.size());
        }
        break;
      }
    }

    // Joint normalization across blocks.
    if (repr_ == Representation::vlad_3c ||
        repr_ == Representation::fisher_3d) {
      const double norm = enc.values.norm();
      if (norm > 0) {
        enc.values /= norm;
      } else {
        enc.degenerate = true;
        enc.values.setZero();
      }
    }
    return enc;
  }

 private:
  const VocabularySet& vocab_;
  Representation repr_;
  std::uint64_t n_features_ = 0;
  std::vector<MatrixD> books_;      // universal codebooks per slot
  std::vector<VectorD> counts_;     // bof histograms
  std::vector<MatrixD> residuals_;  // vlad accumulators
  std::vector<double> input_sq_;    // vlad reduced-input mass per slot
  std::vector<VectorD> s0_;         // fisher sufficient statistics
  std::vector<MatrixD> s1_, s2_;
};

// One-shot encoding of an in-memory feature set.
inline Encoding encode_features(const MatrixF& rows,
                                const VocabularySet& vocab,
                                Representation repr) {
  VideoEncoder enc(vocab, repr);
  enc.add(rows);
  return enc.finish();
}

struct EncodedDataset {
  Representation method = Representation::bof_3a;
  Scheme scheme = Scheme::joint_2b;
  int k = 0;
  int d = 0;
  std::uint64_t layout_hash = 0;
  std::vector<std::string> video_ids;
  std::vector<int> labels;
  std::vector<std::uint8_t> degenerate;
  MatrixD vectors;  // one row per video, manifest order

  void save(const std::filesystem::path& path) const;
  static EncodedDataset load(const std::filesystem::path& path);
};

// Encodes every video in the manifest, streaming features video by video.
// Rows follow manifest order regardless of thread count.
inline EncodedDataset encode_dataset(const DatasetManifest& manifest,
                                     const VocabularySet& vocab,
                                     Representation repr, int threads = 0) {
  EncodedDataset out;
  out.method = repr;
  out.scheme = vocab.scheme;
  out.k = vocab.k;
  out.d = encoding_dim(repr, vocab.scheme, vocab.k, vocab.num_categories,
                       vocab.layout, vocab.pca_dims);
  out.layout_hash = vocab.layout.hash();
  const auto n = manifest.videos.size();
  out.video_ids.resize(n);
  out.labels.resize(n);
  out.degenerate.assign(n, 0);
  out.vectors.resize(static_cast<Eigen::Index>(n), out.d);

  parallel_for(
      0, n,
      [&](std::size_t i) {
        const VideoEntry& entry = manifest.videos[i];
        try {
          FeatureStream stream(manifest.feature_file(entry), manifest.layout,
                               entry.feature_count);
          VideoEncoder encoder(vocab, repr);
          MatrixF block;
          while (std::size_t got = stream.next_block(block)) {
            encoder.add(block.topRows(static_cast<Eigen::Index>(got)));
          }
          Encoding enc = encoder.finish();
          out.vectors.row(static_cast<Eigen::Index>(i)) =
              enc.values.transpose();
          out.degenerate[i] = enc.degenerate ? 1 : 0;
        } catch (const Error& e) {
          throw Error("video '" + entry.video_id + "': " + e.what());
        }
        out.video_ids[i] = entry.video_id;
        out.labels[i] = entry.class_label;
      },
      threads);
  return out;
}

// ---------------------------------------------------------------------------
// Encoded dataset files: text header then raw row-major float64.
// ---------------------------------------------------------------------------

inline void EncodedDataset::save(const std::filesystem::path& path) const {
  atomic_write_file(path, [&](std::ostream& out) {
    out << "vvpipe-encoding 1\n";
    out << "method " << to_string(method) << "\n";
    out << "scheme " << to_string(scheme) << "\n";
    out << "k " << k << "\n";
    out << "d " << d << "\n";
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(layout_hash));
    out << "layout_hash " << hex << "\n";
    out << "rows " << video_ids.size() << "\n";
    for (std::size_t i = 0; i < video_ids.size(); ++i) {
      out << "row " << video_ids[i] << ' ' << labels[i] << ' '
          << static_cast<int>(degenerate[i]) << "\n";
    }
    out << "end\n";
    for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
      for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
        put_f64(out, vectors(r, c));
      }
    }
  });
}

inline EncodedDataset EncodedDataset::load(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open encoded dataset: " + path.string());
  EncodedDataset e;
  std::string line;
  if (!std::getline(in, line) || line != "vvpipe-encoding 1") {
    throw FormatError("bad encoding header: " + path.string());
  }
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line == "end") break;
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "method") {
      std::string v;
      ls >> v;
      e.method = representation_from_string(v);
    } else if (tok == "scheme") {
      std::string v;
      ls >> v;
      e.scheme = scheme_from_string(v);
    } else if (tok == "k") {
      ls >> e.k;
    } else if (tok == "d") {
      ls >> e.d;
    } else if (tok == "layout_hash") {
      std::string v;
      ls >> v;
      e.layout_hash = std::stoull(v, nullptr, 16);
    } else if (tok == "rows") {
      ls >> rows;
    } else if (tok == "row") {
      std::string id;
      int label, flag;
      if (!(ls >> id >> label >> flag)) {
        throw FormatError("bad row line in " + path.string());
      }
      e.video_ids.push_back(id);
      e.labels.push_back(label);
      e.degenerate.push_back(static_cast<std::uint8_t>(flag));
    } else {
      throw FormatError("unknown encoding header line: " + line);
    }
  }
  if (e.video_ids.size() != rows) {
    throw FormatError("encoding row count mismatch in " + path.string());
  }
  e.vectors.resize(static_cast<Eigen::Index>(rows), e.d);
  for (std::size_t r = 0; r < rows; ++r) {
    for (int c = 0; c < e.d; ++c) {
      e.vectors(static_cast<Eigen::Index>(r), c) = get_f64(in);
    }
  }
  return e;
}

}  // namespace vvpipe
