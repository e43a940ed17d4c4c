#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "vvpipe/common.hpp"
#include "vvpipe/kmeans.hpp"
#include "vvpipe/parallel.hpp"
#include "vvpipe/rng.hpp"

namespace vvpipe {

struct GmmModel {
  VectorD weights;    // K, sums to 1
  MatrixD means;      // K x d
  MatrixD variances;  // K x d, diagonal covariances, floored away from 0
  std::string component_name;
  std::vector<double> log_likelihood_history;  // mean log-likelihood per step

  int k() const { return static_cast<int>(means.rows()); }
  int dims() const { return static_cast<int>(means.cols()); }
};

struct GmmOptions {
  int max_iters = 100;
  double rel_tol = 1e-6;
  // Floor = variance_floor_scale * per-dimension data variance.
  double variance_floor_scale = 1e-4;
  double degenerate_weight = 1e-8;
  KmeansOptions init;  // seed is taken from GmmOptions::seed
  std::uint64_t seed = 0;
  int threads = 0;
};

namespace detail {

constexpr std::size_t kGmmChunk = 2048;

// Cached per-component terms for the diagonal Gaussian log-density.
struct GmmEval {
  MatrixD inv_var;      // K x d
  MatrixD mean_inv_var; // K x d
  VectorD mean_sq_term; // K
  VectorD log_const;    // K, log w_k - 0.5 sum log(2 pi var)

  explicit GmmEval(const GmmModel& m) {
    const int k = m.k();
    const int d = m.dims();
    inv_var = m.variances.cwiseInverse();
    mean_inv_var = m.means.cwiseProduct(inv_var);
    mean_sq_term.resize(k);
    log_const.resize(k);
    const double log2pi = std::log(2.0 * 3.141592653589793238462643383279502884);
    for (int c = 0; c < k; ++c) {
      mean_sq_term(c) = m.means.row(c).cwiseProduct(mean_inv_var.row(c)).sum();
      log_const(c) = std::log(m.weights(c)) -
                     0.5 * (d * log2pi + m.variances.row(c).array().log().sum());
    }
  }

  // Joint log-densities log(w_k N(x | mu_k, var_k)) for a block of rows.
  MatrixD log_joint(const MatrixD& x) const {
    const MatrixD x2 = x.cwiseProduct(x);
    MatrixD lp = x2 * (-0.5 * inv_var).transpose();
    lp += x * mean_inv_var.transpose();
    lp.rowwise() += (log_const - 0.5 * mean_sq_term).transpose();
    return lp;
  }
};

struct GmmSuff {
  VectorD nk;
  MatrixD s1, s2;
  double ll = 0;
};

// One E-step over all rows: returns sufficient statistics and the total
// log-likelihood, accumulated over fixed chunks in index order.
inline GmmSuff gmm_estep(const MatrixF& rows, const GmmEval& eval, int k,
                         int threads) {
  const int d = static_cast<int>(rows.cols());
  const auto partials = parallel_chunk_map<GmmSuff>(
      static_cast<std::size_t>(rows.rows()), kGmmChunk,
      [&](std::size_t, std::size_t lo, std::size_t hi) {
        const auto len = static_cast<Eigen::Index>(hi - lo);
        const MatrixD x =
            rows.middleRows(static_cast<Eigen::Index>(lo), len).cast<double>();
        MatrixD lp = eval.log_joint(x);
        GmmSuff s;
        s.nk = VectorD::Zero(k);
        // Log-sum-exp per row, then responsibilities in place.
        for (Eigen::Index r = 0; r < len; ++r) {
          const double mx = lp.row(r).maxCoeff();
          const double lse =
              mx + std::log((lp.row(r).array() - mx).exp().sum());
          s.ll += lse;
          lp.row(r) = (lp.row(r).array() - lse).exp();
        }
        s.s1 = lp.transpose() * x;
        s.s2 = lp.transpose() * x.cwiseProduct(x);
        s.nk = lp.colwise().sum().transpose();
        return s;
      },
      threads);
  GmmSuff total;
  total.nk = VectorD::Zero(k);
  total.s1 = MatrixD::Zero(k, d);
  total.s2 = MatrixD::Zero(k, d);
  for (const auto& p : partials) {
    total.nk += p.nk;
    total.s1 += p.s1;
    total.s2 += p.s2;
    total.ll += p.ll;
  }
  return total;
}

inline GmmModel gmm_fit_attempt(const MatrixF& rows, int k,
                                const GmmOptions& opt, Rng rng,
                                const VectorD& var_floor,
                                const std::string& component_name) {
  const auto n = rows.rows();
  const int d = static_cast<int>(rows.cols());

  // k-means initialization: means from centroids, weights from cluster
  // shares, variances from within-cluster spread.
  KmeansOptions kopt = opt.init;
  kopt.seed = rng.split("init").seed();
  kopt.threads = opt.threads;
  const Codebook book = kmeans_fit(rows, k, kopt, component_name);
  const auto assign = assign_nearest(book.centroids, rows, opt.threads);

  GmmModel m;
  m.component_name = component_name;
  m.means = book.centroids;
  m.weights = VectorD::Zero(k);
  m.variances = MatrixD::Zero(k, d);
  {
    MatrixD sq = MatrixD::Zero(k, d);
    for (Eigen::Index r = 0; r < n; ++r) {
      const int c = assign[static_cast<std::size_t>(r)];
      m.weights(c) += 1.0;
      const VectorD diff =
          rows.row(r).cast<double>().transpose() - m.means.row(c).transpose();
      sq.row(c) += diff.cwiseProduct(diff).transpose();
    }
    for (int c = 0; c < k; ++c) {
      const double cnt = std::max(1.0, m.weights(c));
      m.variances.row(c) =
          (sq.row(c) / cnt).cwiseMax(var_floor.transpose());
    }
    m.weights /= static_cast<double>(n);
    m.weights = m.weights.cwiseMax(1e-12);
    m.weights /= m.weights.sum();
  }

  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < opt.max_iters; ++iter) {
    const detail::GmmSuff suff = gmm_estep(rows, detail::GmmEval(m), k,
                                           opt.threads);
    const double mean_ll = suff.ll / static_cast<double>(n);
    m.log_likelihood_history.push_back(mean_ll);

    // M-step.
    for (int c = 0; c < k; ++c) {
      const double nk = suff.nk(c);
      if (nk > 0) {
        m.means.row(c) = suff.s1.row(c) / nk;
        m.variances.row(c) =
            (suff.s2.row(c) / nk -
             m.means.row(c).cwiseProduct(m.means.row(c)))
                .cwiseMax(var_floor.transpose());
      }
    }
    m.weights = (suff.nk / static_cast<double>(n)).cwiseMax(0.0);
    const double wsum = m.weights.sum();
    if (wsum > 0) m.weights /= wsum;

    if (iter > 0) {
      const double denom = std::max(1.0, std::abs(mean_ll));
      if (std::abs(mean_ll - prev_ll) / denom < opt.rel_tol) {
        prev_ll = mean_ll;
        break;
      }
    }
    prev_ll = mean_ll;
  }
  return m;
}

}  // namespace detail

// Diagonal-covariance Gaussian mixture via EM.
inline GmmModel gmm_fit(const MatrixF& rows, int k, const GmmOptions& opt = {},
                        std::string component_name = "joint") {
  if (k < 1) throw InvalidArgument("gmm_fit: k must be >= 1");
  if (rows.rows() < k) {
    throw InvalidArgument("gmm_fit: fewer rows than components");
  }
  if (!rows.allFinite()) throw InvalidArgument("gmm_fit: non-finite input");

  // Per-dimension data variance sets the floor scale.
  const auto n = rows.rows();
  VectorD mean = VectorD::Zero(rows.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    mean += rows.row(r).cast<double>().transpose();
  }
  mean /= static_cast<double>(n);
  VectorD var = VectorD::Zero(rows.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const VectorD diff = rows.row(r).cast<double>().transpose() - mean;
    var += diff.cwiseProduct(diff);
  }
  var /= static_cast<double>(n);
  const VectorD floor =
      (opt.variance_floor_scale * var).cwiseMax(1e-12);

  const Rng rng(opt.seed);
  GmmModel m = detail::gmm_fit_attempt(rows, k, opt, rng.split("attempt", 0),
                                       floor, component_name);
  if (m.weights.minCoeff() < opt.degenerate_weight) {
    m = detail::gmm_fit_attempt(rows, k, opt, rng.split("attempt", 1), floor,
                                component_name);
    if (m.weights.minCoeff() < opt.degenerate_weight) {
      throw DegenerateInput("gmm_fit: degenerate component after re-seed");
    }
  }
  return m;
}

// Posterior responsibilities for a block of (already reduced) rows.
inline MatrixD gmm_responsibilities(const GmmModel& model, const MatrixD& x) {
  if (x.cols() != model.dims()) {
    throw DimensionError("gmm_responsibilities: dimension mismatch");
  }
  const detail::GmmEval eval(model);
  MatrixD lp = eval.log_joint(x);
  for (Eigen::Index r = 0; r < lp.rows(); ++r) {
    const double mx = lp.row(r).maxCoeff();
    const double lse = mx + std::log((lp.row(r).array() - mx).exp().sum());
    lp.row(r) = (lp.row(r).array() - lse).exp();
  }
  return lp;
}

}  // namespace vvpipe
