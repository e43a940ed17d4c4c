#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "vvpipe/common.hpp"
#include "vvpipe/io_util.hpp"
#include "vvpipe/parallel.hpp"
#include "vvpipe/rng.hpp"
#include "vvpipe/vocabulary.hpp"

namespace vvpipe {

// Chi-squared histogram distance: 0.5 * sum (a-b)^2 / (a+b), with empty-bin
// 0/0 terms contributing nothing.
inline double chi2_distance(const VectorD& a, const VectorD& b) {
  if (a.size() != b.size()) {
    throw DimensionError("chi2_distance: length mismatch");
  }
  double acc = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double x = a(i), y = b(i);
    if (x < 0 || y < 0) {
      throw InvalidArgument("chi2_distance: negative histogram entry");
    }
    const double sum = x + y;
    if (sum > 0) {
      const double diff = x - y;
      acc += diff * diff / sum;
    }
  }
  return 0.5 * acc;
}

struct KernelGram {
  MatrixD matrix;  // N x N, entries exp(-dist / (2A))
  double a_mean = 0;  // mean pairwise training distance
};

// Exponentiated chi-squared kernel over training histograms. A is the mean
// of the off-diagonal pairwise distances; self-distances are always zero
// and are left out so they cannot deflate it.
inline KernelGram chi2_gram(const MatrixD& train, int threads = 0) {
  const auto n = train.rows();
  if (n < 1) throw InvalidArgument("chi2_gram: empty training set");
  MatrixD dist(n, n);
  parallel_for(
      0, static_cast<std::size_t>(n),
      [&](std::size_t i) {
        const auto r = static_cast<Eigen::Index>(i);
        dist(r, r) = 0;
        for (Eigen::Index j = r + 1; j < n; ++j) {
          dist(r, j) = chi2_distance(train.row(r).transpose(),
                                     train.row(j).transpose());
        }
      },
      threads);
  double total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      dist(j, i) = dist(i, j);
      total += dist(i, j);
    }
  }
  const auto pairs = static_cast<double>(n) * (static_cast<double>(n) - 1) / 2;
  KernelGram gram;
  gram.a_mean = pairs > 0 ? total / pairs : 0;
  if (gram.a_mean <= 0) {
    throw DegenerateInput("chi2_gram: all training histograms identical");
  }
  gram.matrix = (-dist / (2.0 * gram.a_mean)).array().exp();
  return gram;
}

// Kernel rows of test histograms against training histograms, using the
// training-set A.
inline MatrixD chi2_cross_gram(const MatrixD& test, const MatrixD& train,
                               double a_mean, int threads = 0) {
  if (!(a_mean > 0)) throw InvalidArgument("chi2_cross_gram: A must be > 0");
  MatrixD out(test.rows(), train.rows());
  parallel_for(
      0, static_cast<std::size_t>(test.rows()),
      [&](std::size_t i) {
        const auto r = static_cast<Eigen::Index>(i);
        for (Eigen::Index j = 0; j < train.rows(); ++j) {
          out(r, j) = std::exp(-chi2_distance(test.row(r).transpose(),
                                              train.row(j).transpose()) /
                               (2.0 * a_mean));
        }
      },
      threads);
  return out;
}

enum class SvmKind { chi2_kernel, linear };

inline const char* to_string(SvmKind k) {
  return k == SvmKind::chi2_kernel ? "chi2" : "linear";
}
inline SvmKind svm_kind_from_string(const std::string& s) {
  if (s == "chi2" || s == "chi2_kernel") return SvmKind::chi2_kernel;
  if (s == "linear") return SvmKind::linear;
  throw InvalidArgument("unknown svm kind: " + s);
}

// One-vs-all classifier bank. Kernel machines keep their support vectors
// (rows of the training encodings); linear machines keep a primal weight
// vector and bias per class.
struct SvmModel {
  SvmKind kind = SvmKind::linear;
  double c = 100.0;
  int num_classes = 0;
  double a_mean = 0;  // chi2 only

  // Kernel path: shared support-vector rows plus per-class coefficients
  // over them (zero where a row is inactive for that class).
  MatrixD support_vectors;   // S x D
  MatrixD dual_coefs;        // C x S, alpha_i * y_i
  VectorD kernel_bias;       // C

  // Linear path.
  MatrixD weights;  // C x D
  VectorD bias;     // C

  void save(const std::filesystem::path& path) const;
  static SvmModel load(const std::filesystem::path& path);
};

struct SvmTrainOptions {
  double c = 100.0;
  double tolerance = 1e-3;
  std::uint64_t max_steps = 10000000;  // pairwise updates / coordinate steps
  std::uint64_t seed = 0;
  int threads = 0;
};

namespace detail {

// Maximal-violating-pair SMO on a precomputed kernel, solving
//   min 0.5 a^T Q a - e^T a,  y^T a = 0,  0 <= a <= C
// with Q_ij = y_i y_j K_ij. Periodically shrinks variables pinned at their
// bounds; convergence is always re-verified against the full set before
// returning.
struct BinaryDual {
  VectorD alpha;  // size n
  double rho = 0; // decision f(x) = sum_i alpha_i y_i K(x_i, x) - rho
  double objective = 0;
};

inline BinaryDual smo_solve(const MatrixD& kernel,
                            const std::vector<double>& y, double c,
                            double tol, std::uint64_t max_steps) {
  const auto n = static_cast<Eigen::Index>(y.size());
  VectorD yv(n);
  for (Eigen::Index i = 0; i < n; ++i) yv(i) = y[static_cast<std::size_t>(i)];
  VectorD alpha = VectorD::Zero(n);
  VectorD grad = VectorD::Constant(n, -1.0);  // d/da of the min objective
  std::vector<char> active(static_cast<std::size_t>(n), 1);
  std::uint64_t steps = 0;
  const std::uint64_t shrink_every = 1000;
  std::uint64_t next_shrink = shrink_every;

  const auto is_upper = [&](Eigen::Index i) {
    return (yv(i) > 0 && alpha(i) < c) || (yv(i) < 0 && alpha(i) > 0);
  };
  const auto is_lower = [&](Eigen::Index i) {
    return (yv(i) > 0 && alpha(i) > 0) || (yv(i) < 0 && alpha(i) < c);
  };

  // Selects the maximal violating pair within the active set; returns
  // {-1,-1} when the active set satisfies the tolerance.
  const auto select_pair = [&](double& gap_out) {
    double m_up = -std::numeric_limits<double>::infinity();
    double m_low = std::numeric_limits<double>::infinity();
    Eigen::Index i = -1, j = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (!active[static_cast<std::size_t>(t)]) continue;
      const double v = -yv(t) * grad(t);
      if (is_upper(t) && v > m_up) {
        m_up = v;
        i = t;
      }
      if (is_lower(t) && v < m_low) {
        m_low = v;
        j = t;
      }
    }
    gap_out = m_up - m_low;
    if (gap_out <= tol || i < 0 || j < 0) {
      return std::pair<Eigen::Index, Eigen::Index>{-1, -1};
    }
    return std::pair<Eigen::Index, Eigen::Index>{i, j};
  };

  bool shrunk = false;
  for (;;) {
    double gap = 0;
    auto [i, j] = select_pair(gap);
    if (i < 0) {
      if (shrunk) {
        // Reactivate everything and re-check before declaring victory.
        std::fill(active.begin(), active.end(), 1);
        shrunk = false;
        auto [i2, j2] = select_pair(gap);
        if (i2 < 0) break;
        i = i2;
        j = j2;
      } else {
        break;
      }
    }
    if (steps >= max_steps) {
      throw Error("smo_solve: step cap reached without convergence");
    }
    ++steps;

    const double yi = yv(i), yj = yv(j);
    double quad = kernel(i, i) + kernel(j, j) - 2.0 * kernel(i, j);
    if (quad <= 1e-12) quad = 1e-12;

    // Working-set step along the equality-feasible direction.
    const double delta = (-yi * grad(i) + yj * grad(j)) / quad;
    const double old_ai = alpha(i), old_aj = alpha(j);
    double ai = old_ai + yi * delta;
    double aj;

    // Clip to the box while preserving y^T a.
    const double sum = yi * old_ai + yj * old_aj;
    ai = std::min(std::max(ai, 0.0), c);
    aj = yj * (sum - yi * ai);
    if (aj < 0) {
      aj = 0;
      ai = yi * (sum - yj * aj);
    } else if (aj > c) {
      aj = c;
      ai = yi * (sum - yj * aj);
    }
    ai = std::min(std::max(ai, 0.0), c);

    const double dai = ai - old_ai;
    const double daj = aj - old_aj;
    if (std::abs(dai) < 1e-16 && std::abs(daj) < 1e-16) {
      // Numerically stuck pair; park it until the next full re-check.
      active[static_cast<std::size_t>(i)] = 0;
      shrunk = true;
      continue;
    }
    alpha(i) = ai;
    alpha(j) = aj;
    // grad_t += y_t (y_i K_ti dai + y_j K_tj daj)
    grad += yv.cwiseProduct(kernel.col(i) * (yi * dai) +
                            kernel.col(j) * (yj * daj));

    if (steps >= next_shrink) {
      next_shrink += shrink_every;
      // Park bound variables that are pushing hard away from feasibility;
      // the final full re-check catches any mistake.
      for (Eigen::Index t = 0; t < n; ++t) {
        if (!active[static_cast<std::size_t>(t)]) continue;
        if (alpha(t) > 0 && alpha(t) < c) continue;
        const double v = -yv(t) * grad(t);
        const bool only_up = is_upper(t) && !is_lower(t);
        const bool only_low = is_lower(t) && !is_upper(t);
        if ((only_up && v < -10 * tol) || (only_low && v > 10 * tol)) {
          active[static_cast<std::size_t>(t)] = 0;
          shrunk = true;
        }
      }
    }
  }

  // Bias from the free support vectors, or the violating-pair bounds when
  // none are free.
  double m_up = -std::numeric_limits<double>::infinity();
  double m_low = std::numeric_limits<double>::infinity();
  double free_sum = 0;
  int free_count = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double v = -yv(t) * grad(t);
    if (alpha(t) > 0 && alpha(t) < c) {
      free_sum += v;
      ++free_count;
    }
    if (is_upper(t)) m_up = std::max(m_up, v);
    if (is_lower(t)) m_low = std::min(m_low, v);
  }
  BinaryDual out;
  out.alpha = alpha;
  out.rho = free_count > 0 ? -free_sum / free_count : -(m_up + m_low) / 2;

  // Dual objective of the maximization form: sum a - 0.5 a^T Q a.
  double quad_term = 0;
  for (Eigen::Index a = 0; a < n; ++a) {
    if (alpha(a) == 0) continue;
    for (Eigen::Index b = 0; b < n; ++b) {
      if (alpha(b) == 0) continue;
      quad_term += alpha(a) * alpha(b) * yv(a) * yv(b) * kernel(a, b);
    }
  }
  out.objective = alpha.sum() - 0.5 * quad_term;
  return out;
}

// Dual coordinate descent for the L1-loss linear SVM (no kernel). The bias
// is an augmented constant feature. Epochs sweep a seeded permutation;
// stops when the maximal projected gradient spread falls under tol.
struct BinaryLinear {
  VectorD w;  // D + 1, last entry is the bias
  double objective = 0;
};

inline BinaryLinear linear_dual_cd(const MatrixD& x,
                                   const std::vector<double>& y, double c,
                                   double tol, std::uint64_t max_steps,
                                   Rng rng) {
  const auto n = x.rows();
  const auto d = x.cols();
  VectorD alpha = VectorD::Zero(n);
  VectorD w = VectorD::Zero(d + 1);
  VectorD sq_norm(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    sq_norm(i) = x.row(i).squaredNorm() + 1.0;  // + bias feature
  }
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  std::uint64_t steps = 0;
  bool converged = false;
  while (!converged) {
    rng.shuffle(order.begin(), order.end());
    double pg_max = -std::numeric_limits<double>::infinity();
    double pg_min = std::numeric_limits<double>::infinity();
    for (const auto idx : order) {
      if (++steps > max_steps) {
        throw Error("linear_dual_cd: step cap reached without convergence");
      }
      const auto i = static_cast<Eigen::Index>(idx);
      const double yi = y[idx];
      const double margin =
          yi * (x.row(i).dot(w.head(d)) + w(d)) - 1.0;
      // Projected gradient at the box.
      double pg = margin;
      if (alpha(i) <= 0) {
        pg = std::min(margin, 0.0);
      } else if (alpha(i) >= c) {
        pg = std::max(margin, 0.0);
      }
      pg_max = std::max(pg_max, pg);
      pg_min = std::min(pg_min, pg);
      if (pg != 0.0) {
        const double old = alpha(i);
        alpha(i) = std::min(std::max(old - margin / sq_norm(i), 0.0), c);
        const double da = (alpha(i) - old) * yi;
        if (da != 0.0) {
          w.head(d) += da * x.row(i).transpose();
          w(d) += da;
        }
      }
    }
    converged = pg_max - pg_min < tol;
  }

  BinaryLinear out;
  out.w = w;
  out.objective = alpha.sum() - 0.5 * w.squaredNorm();
  return out;
}

}  // namespace detail

// Trains C one-vs-all kernel machines on a precomputed Gram matrix.
inline SvmModel svm_train_kernel(const KernelGram& gram,
                                 const MatrixD& train_rows,
                                 const std::vector<int>& labels,
                                 int num_classes,
                                 const SvmTrainOptions& opt = {}) {
  const auto n = train_rows.rows();
  if (gram.matrix.rows() != n || static_cast<Eigen::Index>(labels.size()) != n) {
    throw DimensionError("svm_train_kernel: gram/labels/rows disagree");
  }
  if (num_classes < 2) {
    throw InvalidArgument("svm_train_kernel: need at least two classes");
  }

  MatrixD all_coefs = MatrixD::Zero(num_classes, n);
  VectorD bias(num_classes);
  parallel_for(
      0, static_cast<std::size_t>(num_classes),
      [&](std::size_t cls) {
        std::vector<double> y(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
          y[static_cast<std::size_t>(i)] =
              labels[static_cast<std::size_t>(i)] == static_cast<int>(cls)
                  ? 1.0
                  : -1.0;
        }
        const auto sol = detail::smo_solve(gram.matrix, y, opt.c,
                                           opt.tolerance, opt.max_steps);
        for (Eigen::Index i = 0; i < n; ++i) {
          all_coefs(static_cast<Eigen::Index>(cls), i) =
              sol.alpha(i) * y[static_cast<std::size_t>(i)];
        }
        bias(static_cast<Eigen::Index>(cls)) = -sol.rho;
      },
      opt.threads);

  // Keep only rows some machine actually uses.
  std::vector<Eigen::Index> support;
  for (Eigen::Index i = 0; i < n; ++i) {
    if ((all_coefs.col(i).array() != 0.0).any()) support.push_back(i);
  }
  SvmModel model;
  model.kind = SvmKind::chi2_kernel;
  model.c = opt.c;
  model.num_classes = num_classes;
  model.a_mean = gram.a_mean;
  model.support_vectors.resize(
      static_cast<Eigen::Index>(support.size()), train_rows.cols());
  model.dual_coefs.resize(num_classes,
                          static_cast<Eigen::Index>(support.size()));
  for (std::size_t s = 0; s < support.size(); ++s) {
    model.support_vectors.row(static_cast<Eigen::Index>(s)) =
        train_rows.row(support[s]);
    model.dual_coefs.col(static_cast<Eigen::Index>(s)) =
        all_coefs.col(support[s]);
  }
  model.kernel_bias = bias;
  return model;
}

// Trains C one-vs-all linear machines.
inline SvmModel svm_train_linear(const MatrixD& rows,
                                 const std::vector<int>& labels,
                                 int num_classes,
                                 const SvmTrainOptions& opt = {}) {
  const auto n = rows.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw DimensionError("svm_train_linear: labels/rows disagree");
  }
  if (num_classes < 2) {
    throw InvalidArgument("svm_train_linear: need at least two classes");
  }
  SvmModel model;
  model.kind = SvmKind::linear;
  model.c = opt.c;
  model.num_classes = num_classes;
  model.weights = MatrixD::Zero(num_classes, rows.cols());
  model.bias = VectorD::Zero(num_classes);
  const Rng rng(opt.seed);
  parallel_for(
      0, static_cast<std::size_t>(num_classes),
      [&](std::size_t cls) {
        std::vector<double> y(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
          y[static_cast<std::size_t>(i)] =
              labels[static_cast<std::size_t>(i)] == static_cast<int>(cls)
                  ? 1.0
                  : -1.0;
        }
        const auto sol = detail::linear_dual_cd(
            rows, y, opt.c, opt.tolerance, opt.max_steps,
            rng.split("class", cls));
        model.weights.row(static_cast<Eigen::Index>(cls)) =
            sol.w.head(rows.cols()).transpose();
        model.bias(static_cast<Eigen::Index>(cls)) = sol.w(rows.cols());
      },
      opt.threads);
  return model;
}

// Convenience wrapper choosing the gram computation internally.
inline SvmModel svm_train(const MatrixD& rows, const std::vector<int>& labels,
                          int num_classes, SvmKind kind,
                          const SvmTrainOptions& opt = {}) {
  std::vector<int> present(static_cast<std::size_t>(num_classes), 0);
  for (int l : labels) {
    if (l < 0 || l >= num_classes) {
      throw InvalidArgument("svm_train: label out of range");
    }
    present[static_cast<std::size_t>(l)] = 1;
  }
  if (std::accumulate(present.begin(), present.end(), 0) < 2) {
    throw InvalidArgument("svm_train: need at least two classes present");
  }
  if (kind == SvmKind::chi2_kernel) {
    return svm_train_kernel(chi2_gram(rows, opt.threads), rows, labels,
                            num_classes, opt);
  }
  return svm_train_linear(rows, labels, num_classes, opt);
}

struct Predictions {
  std::vector<int> labels;
  MatrixD scores;  // N x C decision values
};

// Argmax of the per-class decision values; ties go to the lowest index.
inline Predictions svm_predict(const SvmModel& model, const MatrixD& rows,
                               int threads = 0) {
  Predictions out;
  MatrixD scores;
  if (model.kind == SvmKind::chi2_kernel) {
    if (rows.cols() != model.support_vectors.cols()) {
      throw DimensionError("svm_predict: encoding width mismatch");
    }
    const MatrixD cross =
        chi2_cross_gram(rows, model.support_vectors, model.a_mean, threads);
    scores = cross * model.dual_coefs.transpose();
    scores.rowwise() += model.kernel_bias.transpose();
  } else {
    if (rows.cols() != model.weights.cols()) {
      throw DimensionError("svm_predict: encoding width mismatch");
    }
    scores = rows * model.weights.transpose();
    scores.rowwise() += model.bias.transpose();
  }
  out.scores = std::move(scores);
  out.labels.resize(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    Eigen::Index best = 0;
    out.scores.row(r).maxCoeff(&best);
    out.labels[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model files.
// ---------------------------------------------------------------------------

namespace detail {
constexpr char kSvmMagic[8] = {'V', 'V', 'P', 'S', 'V', 'M', '0', '1'};
}

inline void SvmModel::save(const std::filesystem::path& path) const {
  atomic_write_file(path, [&](std::ostream& out) {
    out.write(detail::kSvmMagic, sizeof(detail::kSvmMagic));
    put_u32(out, kind == SvmKind::chi2_kernel ? 0u : 1u);
    put_f64(out, c);
    put_u32(out, static_cast<std::uint32_t>(num_classes));
    put_f64(out, a_mean);
    detail::put_matrix(out, support_vectors);
    detail::put_matrix(out, dual_coefs);
    detail::put_vector(out, kernel_bias);
    detail::put_matrix(out, weights);
    detail::put_vector(out, bias);
  });
}

inline SvmModel SvmModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open svm model: " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, detail::kSvmMagic, 8) != 0) {
    throw FormatError("bad svm model magic: " + path.string());
  }
  SvmModel m;
  m.kind = get_u32(in) == 0 ? SvmKind::chi2_kernel : SvmKind::linear;
  m.c = get_f64(in);
  m.num_classes = static_cast<int>(get_u32(in));
  m.a_mean = get_f64(in);
  m.support_vectors = detail::get_matrix(in);
  m.dual_coefs = detail::get_matrix(in);
  m.kernel_bias = detail::get_vector(in);
  m.weights = detail::get_matrix(in);
  m.bias = detail::get_vector(in);
  return m;
}

}  // namespace vvpipe
