#pragma once

#include <cstdint>
#include <string>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "vvpipe/common.hpp"
#include "vvpipe/parallel.hpp"
#include "vvpipe/rng.hpp"

namespace vvpipe {

struct PcaModel {
  VectorD mean;        // d
  MatrixD projection;  // t x d, orthonormal rows, top principal directions
  VectorD singular_values;  // t, of the centered data matrix
  std::string component_name;

  int input_dims() const { return static_cast<int>(projection.cols()); }
  int output_dims() const { return static_cast<int>(projection.rows()); }
};

struct PcaOptions {
  int target_dims = 24;
  int oversampling = 10;
  int power_iters = 2;
  std::uint64_t seed = 0;
  int threads = 0;
};

namespace detail {

constexpr std::size_t kPcaChunk = 8192;

inline VectorD column_mean(const MatrixF& rows, int threads) {
  const auto n = static_cast<std::size_t>(rows.rows());
  const auto partials = parallel_chunk_map<VectorD>(
      n, kPcaChunk,
      [&](std::size_t, std::size_t lo, std::size_t hi) {
        return VectorD(rows.middleRows(static_cast<Eigen::Index>(lo),
                                       static_cast<Eigen::Index>(hi - lo))
                           .cast<double>()
                           .colwise()
                           .sum()
                           .transpose());
      },
      threads);
  VectorD sum = VectorD::Zero(rows.cols());
  for (const auto& p : partials) sum += p;
  return sum / static_cast<double>(n);
}

// (X - 1 mu^T) * M, computed over row chunks (disjoint writes).
inline MatrixD centered_times(const MatrixF& rows, const VectorD& mean,
                              const MatrixD& m, int threads) {
  MatrixD out(rows.rows(), m.cols());
  parallel_chunk_map<int>(
      static_cast<std::size_t>(rows.rows()), kPcaChunk,
      [&](std::size_t, std::size_t lo, std::size_t hi) {
        const auto len = static_cast<Eigen::Index>(hi - lo);
        MatrixD x = rows.middleRows(static_cast<Eigen::Index>(lo), len)
                        .cast<double>();
        x.rowwise() -= mean.transpose();
        out.middleRows(static_cast<Eigen::Index>(lo), len) = x * m;
        return 0;
      },
      threads);
  return out;
}

// (X - 1 mu^T)^T * W, merged over chunks in index order.
inline MatrixD centered_transpose_times(const MatrixF& rows,
                                        const VectorD& mean, const MatrixD& w,
                                        int threads) {
  const auto partials = parallel_chunk_map<MatrixD>(
      static_cast<std::size_t>(rows.rows()), kPcaChunk,
      [&](std::size_t, std::size_t lo, std::size_t hi) {
        const auto len = static_cast<Eigen::Index>(hi - lo);
        MatrixD x = rows.middleRows(static_cast<Eigen::Index>(lo), len)
                        .cast<double>();
        x.rowwise() -= mean.transpose();
        return MatrixD(x.transpose() *
                       w.middleRows(static_cast<Eigen::Index>(lo), len));
      },
      threads);
  MatrixD out = MatrixD::Zero(rows.cols(), w.cols());
  for (const auto& p : partials) out += p;
  return out;
}

inline MatrixD thin_q(MatrixD y) {
  Eigen::HouseholderQR<MatrixD> qr(std::move(y));
  return qr.householderQ() * MatrixD::Identity(qr.matrixQR().rows(),
                                               qr.matrixQR().cols());
}

}  // namespace detail

// Randomized-range-finder PCA (Gaussian sketch, QR re-orthonormalized power
// iterations, small exact SVD at the end). Suited to tall feature pools
// where an exact decomposition of the full matrix is wasteful.
inline PcaModel pca_fit(const MatrixF& rows, const PcaOptions& opt = {},
                        std::string component_name = "") {
  const auto n = rows.rows();
  const int d = static_cast<int>(rows.cols());
  const int t = opt.target_dims;
  if (t < 1) throw InvalidArgument("pca_fit: target_dims must be >= 1");
  if (t > d) {
    throw InvalidArgument("pca_fit: target_dims " + std::to_string(t) +
                          " exceeds input dims " + std::to_string(d));
  }
  if (n < t) {
    throw InvalidArgument("pca_fit: need at least target_dims rows");
  }
  if (!rows.allFinite()) throw InvalidArgument("pca_fit: non-finite input");

  const int sketch = std::min(d, t + opt.oversampling);

  PcaModel model;
  model.component_name = std::move(component_name);
  model.mean = detail::column_mean(rows, opt.threads);

  Rng rng = Rng(opt.seed).split("pca-sketch");
  MatrixD omega(d, sketch);
  for (int j = 0; j < sketch; ++j) {
    for (int i = 0; i < d; ++i) omega(i, j) = rng.next_normal();
  }

  MatrixD q = detail::thin_q(
      detail::centered_times(rows, model.mean, omega, opt.threads));
  for (int it = 0; it < opt.power_iters; ++it) {
    const MatrixD z = detail::thin_q(
        detail::centered_transpose_times(rows, model.mean, q, opt.threads));
    q = detail::thin_q(detail::centered_times(rows, model.mean, z, opt.threads));
  }

  // b = Q^T Xc is sketch x d; its right singular vectors approximate the
  // principal directions of Xc.
  const MatrixD b =
      detail::centered_transpose_times(rows, model.mean, q, opt.threads)
          .transpose();
  Eigen::JacobiSVD<MatrixD> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorD& sv = svd.singularValues();
  if (sv(0) <= 0) {
    throw DegenerateInput("pca_fit: zero-variance input");
  }
  // Rows arrive in 32-bit precision, so directions at the float32 noise
  // floor are treated as absent.
  if (sv(t - 1) <= sv(0) * 1e-6) {
    throw DegenerateInput("pca_fit: input rank below target_dims");
  }
  model.projection = svd.matrixV().leftCols(t).transpose();
  model.singular_values = sv.head(t);
  return model;
}

// Projects rows into the principal subspace: y = P (x - mean).
inline MatrixF pca_apply(const PcaModel& model, const MatrixF& rows,
                         int threads = 0) {
  if (rows.cols() != model.projection.cols()) {
    throw DimensionError("pca_apply: row dims do not match model");
  }
  MatrixF out(rows.rows(), model.output_dims());
  parallel_chunk_map<int>(
      static_cast<std::size_t>(rows.rows()), detail::kPcaChunk,
      [&](std::size_t, std::size_t lo, std::size_t hi) {
        const auto len = static_cast<Eigen::Index>(hi - lo);
        MatrixD x = rows.middleRows(static_cast<Eigen::Index>(lo), len)
                        .cast<double>();
        x.rowwise() -= model.mean.transpose();
        out.middleRows(static_cast<Eigen::Index>(lo), len) =
            (x * model.projection.transpose()).cast<float>();
        return 0;
      },
      threads);
  return out;
}

}  // namespace vvpipe
