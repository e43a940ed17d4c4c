#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vvpipe/gmm.hpp"
#include "vvpipe/io_util.hpp"
#include "vvpipe/kmeans.hpp"
#include "vvpipe/pca.hpp"
#include "vvpipe/sampler.hpp"

namespace vvpipe {

enum class Scheme { per_component_2a, joint_2b };

inline const char* to_string(Scheme s) {
  return s == Scheme::per_component_2a ? "2a" : "2b";
}
inline Scheme scheme_from_string(const std::string& s) {
  if (s == "2a" || s == "separate") return Scheme::per_component_2a;
  if (s == "2b" || s == "joint") return Scheme::joint_2b;
  throw InvalidArgument("unknown scheme: " + s);
}

// What a vocabulary holds, which follows the representation it serves:
//   bof              raw-space k-means codebooks
//   bof_per_category raw-space k-means codebooks per class, joined
//   vlad             per-component PCA + reduced-space k-means codebooks
//   fisher           per-component PCA + reduced-space GMMs
enum class VocabKind { bof, bof_per_category, vlad, fisher };

inline const char* to_string(VocabKind k) {
  switch (k) {
    case VocabKind::bof: return "bof";
    case VocabKind::bof_per_category: return "bof-percat";
    case VocabKind::vlad: return "vlad";
    case VocabKind::fisher: return "fisher";
  }
  return "?";
}
inline VocabKind vocab_kind_from_string(const std::string& s) {
  if (s == "bof") return VocabKind::bof;
  if (s == "bof-percat" || s == "bof_per_category") {
    return VocabKind::bof_per_category;
  }
  if (s == "vlad") return VocabKind::vlad;
  if (s == "fisher") return VocabKind::fisher;
  throw InvalidArgument("unknown vocabulary kind: " + s);
}

struct VocabFitOptions {
  int pca_dims = 24;
  int kmeans_restarts = 8;
  int kmeans_max_iters = 300;
  std::uint64_t seed = 0;
  int threads = 0;
};

// A fitted vocabulary: models keyed by (slot, category). Under 2a there is
// one slot per layout component; under 2b a single "joint" slot. Immutable
// once fitted.
struct VocabularySet {
  ComponentLayout layout;
  Scheme scheme = Scheme::joint_2b;
  VocabKind kind = VocabKind::bof;
  int k = 0;
  int num_categories = 0;  // C when per-category, else 0
  int pca_dims = 0;        // 0 for raw-space (BoF) vocabularies

  std::vector<PcaModel> pcas;       // one per layout component when reduced
  std::vector<Codebook> codebooks;  // slot-major, category-minor
  std::vector<GmmModel> gmms;       // one per slot (fisher)

  std::size_t num_slots() const {
    return scheme == Scheme::per_component_2a ? layout.num_components() : 1;
  }

  std::string slot_name(std::size_t slot) const {
    return scheme == Scheme::per_component_2a ? layout.component(slot).name
                                              : std::string("joint");
  }

  // Dimensionality the slot's models live in.
  int slot_dims(std::size_t slot) const {
    if (pca_dims > 0) {
      return scheme == Scheme::per_component_2a
                 ? pca_dims
                 : pca_dims * static_cast<int>(layout.num_components());
    }
    return scheme == Scheme::per_component_2a ? layout.component(slot).dims
                                              : layout.total_dims();
  }

  // Codeword count per slot: K, or K*C for joined per-category books.
  int bins_per_slot() const {
    return kind == VocabKind::bof_per_category ? k * num_categories : k;
  }

  const Codebook& codebook_at(std::size_t slot, int category) const {
    if (kind == VocabKind::bof_per_category) {
      return codebooks.at(slot * static_cast<std::size_t>(num_categories) +
                          static_cast<std::size_t>(category));
    }
    return codebooks.at(slot);
  }

  // Universal codebook for a slot; per-category books stack class-major, so
  // bin c*K+j is word j of class c.
  MatrixD universal_codebook(std::size_t slot) const {
    if (kind != VocabKind::bof_per_category) {
      return codebooks.at(slot).centroids;
    }
    MatrixD all(bins_per_slot(), slot_dims(slot));
    for (int c = 0; c < num_categories; ++c) {
      all.middleRows(c * k, k) = codebook_at(slot, c).centroids;
    }
    return all;
  }

  bool has_pca() const { return pca_dims > 0; }

  void save(const std::filesystem::path& path) const;
  static VocabularySet load(const std::filesystem::path& path);
};

namespace detail {

// Raw feature columns belonging to a slot (the whole row under 2b).
inline MatrixF raw_slot_rows(const ComponentLayout& layout, Scheme scheme,
                             const MatrixF& rows, std::size_t slot) {
  if (scheme == Scheme::joint_2b) return rows;
  return rows.middleCols(layout.offset(slot), layout.component(slot).dims);
}

}  // namespace detail

// PCA-reduced representation of a slot. Under 2a this is the slot's
// component projected to pca_dims; under 2b the per-component reductions
// concatenated in layout order.
inline MatrixF reduced_slot_rows(const VocabularySet& vocab,
                                 const MatrixF& rows, std::size_t slot,
                                 int threads = 0) {
  if (!vocab.has_pca()) {
    throw InvalidArgument("reduced_slot_rows: vocabulary has no PCA models");
  }
  const auto& layout = vocab.layout;
  if (vocab.scheme == Scheme::per_component_2a) {
    const MatrixF comp =
        rows.middleCols(layout.offset(slot), layout.component(slot).dims);
    return pca_apply(vocab.pcas.at(slot), comp, threads);
  }
  MatrixF out(rows.rows(), vocab.slot_dims(0));
  int at = 0;
  for (std::size_t m = 0; m < layout.num_components(); ++m) {
    const MatrixF comp =
        rows.middleCols(layout.offset(m), layout.component(m).dims);
    out.middleCols(at, vocab.pca_dims) =
        pca_apply(vocab.pcas.at(m), comp, threads);
    at += vocab.pca_dims;
  }
  return out;
}

// Fits every model a representation of the given kind needs, from one pool.
inline VocabularySet fit_vocabularies(const FeaturePool& pool, int k,
                                      Scheme scheme, VocabKind kind,
                                      const VocabFitOptions& opt = {}) {
  if (k < 1) throw InvalidArgument("fit_vocabularies: k must be >= 1");
  if (pool.size() == 0) throw InvalidArgument("fit_vocabularies: empty pool");

  VocabularySet vocab;
  vocab.layout = pool.layout();
  vocab.scheme = scheme;
  vocab.kind = kind;
  vocab.k = k;
  const bool reduced = kind == VocabKind::vlad || kind == VocabKind::fisher;
  vocab.pca_dims = reduced ? opt.pca_dims : 0;

  const Rng rng(opt.seed);
  KmeansOptions kopt;
  kopt.restarts = opt.kmeans_restarts;
  kopt.max_iters = opt.kmeans_max_iters;
  kopt.threads = opt.threads;

  if (reduced) {
    // Per-component PCA on the same pool the codebooks are learned from.
    for (std::size_t m = 0; m < vocab.layout.num_components(); ++m) {
      const auto& comp = vocab.layout.component(m);
      if (comp.dims < opt.pca_dims) {
        throw InvalidArgument("fit_vocabularies: component '" + comp.name +
                              "' has fewer dims than pca target");
      }
      PcaOptions popt;
      popt.target_dims = opt.pca_dims;
      popt.seed = rng.split("pca").split(comp.name).seed();
      popt.threads = opt.threads;
      const MatrixF comp_rows =
          pool.rows().middleCols(vocab.layout.offset(m), comp.dims);
      vocab.pcas.push_back(pca_fit(comp_rows, popt, comp.name));
    }
  }

  if (kind == VocabKind::bof_per_category) {
    vocab.num_categories = pool.num_classes();
    std::vector<std::vector<std::size_t>> by_class(
        static_cast<std::size_t>(pool.num_classes()));
    for (Eigen::Index r = 0; r < pool.size(); ++r) {
      by_class[static_cast<std::size_t>(pool.class_of_row(r))].push_back(
          static_cast<std::size_t>(r));
    }
    for (int c = 0; c < pool.num_classes(); ++c) {
      if (by_class[static_cast<std::size_t>(c)].size() <
          static_cast<std::size_t>(k)) {
        throw InvalidArgument("fit_vocabularies: class " + std::to_string(c) +
                              " has fewer pool rows than k");
      }
    }
    for (std::size_t slot = 0; slot < vocab.num_slots(); ++slot) {
      const MatrixF slot_rows = detail::raw_slot_rows(
          vocab.layout, scheme, pool.rows(), slot);
      for (int c = 0; c < pool.num_classes(); ++c) {
        const auto& members = by_class[static_cast<std::size_t>(c)];
        MatrixF class_rows(static_cast<Eigen::Index>(members.size()),
                           slot_rows.cols());
        for (std::size_t i = 0; i < members.size(); ++i) {
          class_rows.row(static_cast<Eigen::Index>(i)) =
              slot_rows.row(static_cast<Eigen::Index>(members[i]));
        }
        // One seed per slot, shared across categories: with a single class
        // this reduces exactly to the plain fit.
        kopt.seed = rng.split("kmeans").split(vocab.slot_name(slot)).seed();
        vocab.codebooks.push_back(
            kmeans_fit(class_rows, k, kopt, vocab.slot_name(slot), c));
      }
    }
    return vocab;
  }

  for (std::size_t slot = 0; slot < vocab.num_slots(); ++slot) {
    const MatrixF slot_rows =
        reduced ? reduced_slot_rows(vocab, pool.rows(), slot, opt.threads)
                : MatrixF(detail::raw_slot_rows(vocab.layout, scheme,
                                                pool.rows(), slot));
    if (kind == VocabKind::fisher) {
      GmmOptions gopt;
      gopt.seed = rng.split("gmm").split(vocab.slot_name(slot)).seed();
      gopt.init.restarts = opt.kmeans_restarts;
      gopt.init.max_iters = opt.kmeans_max_iters;
      gopt.threads = opt.threads;
      vocab.gmms.push_back(gmm_fit(slot_rows, k, gopt, vocab.slot_name(slot)));
    } else {
      kopt.seed = rng.split("kmeans").split(vocab.slot_name(slot)).seed();
      vocab.codebooks.push_back(
          kmeans_fit(slot_rows, k, kopt, vocab.slot_name(slot)));
    }
  }
  return vocab;
}

// ---------------------------------------------------------------------------
// Serialization: one versioned binary file, all matrices in 64-bit.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_matrix(std::ostream& out, const MatrixD& m) {
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
  }
}

inline MatrixD get_matrix(std::istream& in) {
  const auto rows = get_u32(in);
  const auto cols = get_u32(in);
  MatrixD m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = get_f64(in);
  }
  return m;
}

inline void put_vector(std::ostream& out, const VectorD& v) {
  put_u32(out, static_cast<std::uint32_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(out, v(i));
}

inline VectorD get_vector(std::istream& in) {
  const auto n = get_u32(in);
  VectorD v(n);
  for (std::uint32_t i = 0; i < n; ++i) v(i) = get_f64(in);
  return v;
}

constexpr char kVocabMagic[8] = {'V', 'V', 'P', 'V', 'O', 'C', '0', '1'};

}  // namespace detail

inline void VocabularySet::save(const std::filesystem::path& path) const {
  atomic_write_file(path, [&](std::ostream& out) {
    out.write(detail::kVocabMagic, sizeof(detail::kVocabMagic));
    put_string(out, layout.to_string());
    put_u32(out, scheme == Scheme::per_component_2a ? 0u : 1u);
    put_u32(out, static_cast<std::uint32_t>(kind));
    put_u32(out, static_cast<std::uint32_t>(k));
    put_u32(out, static_cast<std::uint32_t>(num_categories));
    put_u32(out, static_cast<std::uint32_t>(pca_dims));

    put_u32(out, static_cast<std::uint32_t>(pcas.size()));
    for (const auto& p : pcas) {
      put_string(out, p.component_name);
      detail::put_vector(out, p.mean);
      detail::put_matrix(out, p.projection);
      detail::put_vector(out, p.singular_values);
    }
    put_u32(out, static_cast<std::uint32_t>(codebooks.size()));
    for (const auto& b : codebooks) {
      put_string(out, b.component_name);
      put_i32(out, b.category);
      put_f64(out, b.training_error);
      detail::put_matrix(out, b.centroids);
    }
    put_u32(out, static_cast<std::uint32_t>(gmms.size()));
    for (const auto& g : gmms) {
      put_string(out, g.component_name);
      detail::put_vector(out, g.weights);
      detail::put_matrix(out, g.means);
      detail::put_matrix(out, g.variances);
    }
  });
}

inline VocabularySet VocabularySet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open vocabulary: " + path.string());
  char magic[8];
  if (!in.read(magic, 8) ||
      std::memcmp(magic, detail::kVocabMagic, 8) != 0) {
    throw FormatError("bad vocabulary magic: " + path.string());
  }
  VocabularySet v;
  v.layout = ComponentLayout::parse(get_string(in));
  v.scheme = get_u32(in) == 0 ? Scheme::per_component_2a : Scheme::joint_2b;
  v.kind = static_cast<VocabKind>(get_u32(in));
  v.k = static_cast<int>(get_u32(in));
  v.num_categories = static_cast<int>(get_u32(in));
  v.pca_dims = static_cast<int>(get_u32(in));

  const auto n_pcas = get_u32(in);
  for (std::uint32_t i = 0; i < n_pcas; ++i) {
    PcaModel p;
    p.component_name = get_string(in);
    p.mean = detail::get_vector(in);
    p.projection = detail::get_matrix(in);
    p.singular_values = detail::get_vector(in);
    v.pcas.push_back(std::move(p));
  }
  const auto n_books = get_u32(in);
  for (std::uint32_t i = 0; i < n_books; ++i) {
    Codebook b;
    b.component_name = get_string(in);
    b.category = get_i32(in);
    b.training_error = get_f64(in);
    b.centroids = detail::get_matrix(in);
    v.codebooks.push_back(std::move(b));
  }
  const auto n_gmms = get_u32(in);
  for (std::uint32_t i = 0; i < n_gmms; ++i) {
    GmmModel g;
    g.component_name = get_string(in);
    g.weights = detail::get_vector(in);
    g.means = detail::get_matrix(in);
    g.variances = detail::get_matrix(in);
    v.gmms.push_back(std::move(g));
  }
  return v;
}

}  // namespace vvpipe
