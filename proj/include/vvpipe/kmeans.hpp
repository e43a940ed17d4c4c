#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "vvpipe/common.hpp"
#include "vvpipe/parallel.hpp"
#include "vvpipe/rng.hpp"

namespace vvpipe {

struct Codebook {
  MatrixD centroids;  // K x d
  std::string component_name = "joint";
  int category = -1;  // class index for per-category books, -1 otherwise
  double training_error = 0;  // sum of squared distances at convergence

  int k() const { return static_cast<int>(centroids.rows()); }
  int dims() const { return static_cast<int>(centroids.cols()); }
};

struct KmeansOptions {
  int restarts = 8;
  int max_iters = 300;
  std::uint64_t seed = 0;
  int threads = 0;
};

namespace detail {

struct Assignment {
  std::vector<std::int32_t> cluster;  // per row
  VectorD distance_sq;                // per row, to its centroid
  double sse = 0;
};

// Nearest-centroid assignment. Distances are evaluated in double via the
// expansion |x|^2 - 2<x,c> + |c|^2 over fixed row chunks; ties go to the
// lowest centroid index.
inline Assignment assign_rows(const MatrixF& rows, const MatrixD& centroids,
                              int threads = 0) {
  const auto n = static_cast<std::size_t>(rows.rows());
  Assignment out;
  out.cluster.resize(n);
  out.distance_sq.resize(static_cast<Eigen::Index>(n));
  const VectorD c_norms = centroids.rowwise().squaredNorm();
  constexpr std::size_t kChunk = 4096;

  const auto partials = parallel_chunk_map<double>(
      n, kChunk,
      [&](std::size_t, std::size_t lo, std::size_t hi) {
        const auto m = static_cast<Eigen::Index>(hi - lo);
        const MatrixD x =
            rows.middleRows(static_cast<Eigen::Index>(lo), m).cast<double>();
        const MatrixD gram = x * centroids.transpose();  // m x K
        double sse = 0;
        for (Eigen::Index r = 0; r < m; ++r) {
          Eigen::Index best = 0;
          const double score =
              (c_norms - 2.0 * gram.row(r).transpose()).minCoeff(&best);
          const double dist =
              std::max(0.0, score + x.row(r).squaredNorm());
          out.cluster[lo + static_cast<std::size_t>(r)] =
              static_cast<std::int32_t>(best);
          out.distance_sq[static_cast<Eigen::Index>(lo) + r] = dist;
          sse += dist;
        }
        return sse;
      },
      threads);
  for (double s : partials) out.sse += s;
  return out;
}

struct LloydResult {
  MatrixD centroids;
  double sse = 0;
};

inline LloydResult lloyd_once(const MatrixF& rows, int k, Rng rng,
                              int max_iters, int threads) {
  const auto n = static_cast<std::size_t>(rows.rows());
  const int d = static_cast<int>(rows.cols());

  MatrixD centroids(k, d);
  const auto init =
      rng.sample_without_replacement(n, static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    centroids.row(c) =
        rows.row(static_cast<Eigen::Index>(init[static_cast<std::size_t>(c)]))
            .cast<double>();
  }

  struct Suff {
    MatrixD sums;
    std::vector<std::int64_t> counts;
  };
  constexpr std::size_t kChunk = 4096;

  std::vector<std::int32_t> prev;
  Assignment a;
  for (int iter = 0; iter < max_iters; ++iter) {
    a = assign_rows(rows, centroids, threads);
    if (!prev.empty() && a.cluster == prev) {
      return {std::move(centroids), a.sse};
    }
    prev = a.cluster;

    auto partials = parallel_chunk_map<Suff>(
        n, kChunk,
        [&](std::size_t, std::size_t lo, std::size_t hi) {
          Suff s;
          s.sums = MatrixD::Zero(k, d);
          s.counts.assign(static_cast<std::size_t>(k), 0);
          for (std::size_t r = lo; r < hi; ++r) {
            const int c = a.cluster[r];
            s.sums.row(c) +=
                rows.row(static_cast<Eigen::Index>(r)).cast<double>();
            s.counts[static_cast<std::size_t>(c)]++;
          }
          return s;
        },
        threads);
    MatrixD sums = MatrixD::Zero(k, d);
    std::vector<std::int64_t> counts(static_cast<std::size_t>(k), 0);
    for (const auto& p : partials) {
      sums += p.sums;
      for (int c = 0; c < k; ++c) counts[static_cast<std::size_t>(c)] += p.counts[static_cast<std::size_t>(c)];
    }

    bool reseeded = false;
    std::vector<bool> stolen(n, false);
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centroids.row(c) =
            sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      }
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      // Re-seed an empty cluster from the point farthest from its centroid.
      double best = -1;
      std::size_t pick = 0;
      for (std::size_t r = 0; r < n; ++r) {
        if (stolen[r]) continue;
        const double dist = a.distance_sq[static_cast<Eigen::Index>(r)];
        if (dist > best) {
          best = dist;
          pick = r;
        }
      }
      centroids.row(c) =
          rows.row(static_cast<Eigen::Index>(pick)).cast<double>();
      stolen[pick] = true;
      reseeded = true;
    }
    if (reseeded) prev.clear();  // force at least one more full pass
  }
  a = assign_rows(rows, centroids, threads);
  return {std::move(centroids), a.sse};
}

}  // namespace detail

// Restarted Lloyd clustering; keeps the restart with the lowest error.
inline Codebook kmeans_fit(const MatrixF& rows, int k,
                           const KmeansOptions& opt = {},
                           std::string component_name = "joint",
                           int category = -1) {
  if (k < 1) throw InvalidArgument("kmeans_fit: k must be >= 1");
  if (rows.rows() < k) {
    throw InvalidArgument("kmeans_fit: " + std::to_string(rows.rows()) +
                          " rows < k=" + std::to_string(k));
  }
  if (!rows.allFinite()) {
    throw InvalidArgument("kmeans_fit: non-finite input");
  }
  if (opt.restarts < 1) throw InvalidArgument("kmeans_fit: restarts >= 1");

  const Rng rng(opt.seed);
  std::vector<detail::LloydResult> results(
      static_cast<std::size_t>(opt.restarts));
  // Restarts are independent; distances inside each restart may themselves
  // fan out, so restarts run serially here when an inner pool is active.
  parallel_for(
      0, static_cast<std::size_t>(opt.restarts),
      [&](std::size_t r) {
        results[r] = detail::lloyd_once(rows, k, rng.split("restart", r),
                                        opt.max_iters, 1);
      },
      opt.threads);

  std::size_t best = 0;
  for (std::size_t r = 1; r < results.size(); ++r) {
    if (results[r].sse < results[best].sse) best = r;
  }
  Codebook book;
  book.centroids = std::move(results[best].centroids);
  book.training_error = results[best].sse;
  book.component_name = std::move(component_name);
  book.category = category;
  return book;
}

// Nearest-centroid index per row (exposed for encoders and tests).
inline std::vector<std::int32_t> assign_nearest(const MatrixD& centroids,
                                                const MatrixF& rows,
                                                int threads = 0) {
  return detail::assign_rows(rows, centroids, threads).cluster;
}

}  // namespace vvpipe
