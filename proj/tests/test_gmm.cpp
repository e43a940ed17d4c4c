#include <catch2/catch_amalgamated.hpp>

#include "vvpipe/gmm.hpp"

#include "helpers.hpp"

using namespace vvpipe;

TEST_CASE("k=1 closed form: sample mean and per-dim variance") {
  Rng rng(6);
  const MatrixF rows = testutil::random_rows(2000, 4, rng, 2.0f);
  GmmOptions opt;
  opt.seed = 1;
  const GmmModel m = gmm_fit(rows, 1, opt);
  REQUIRE(m.weights(0) == Catch::Approx(1.0));

  VectorD mean = VectorD::Zero(4);
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    mean += rows.row(r).cast<double>().transpose();
  }
  mean /= static_cast<double>(rows.rows());
  VectorD var = VectorD::Zero(4);
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    const VectorD d = rows.row(r).cast<double>().transpose() - mean;
    var += d.cwiseProduct(d);
  }
  var /= static_cast<double>(rows.rows());

  REQUIRE((m.means.row(0).transpose() - mean).norm() < 1e-6);
  REQUIRE((m.variances.row(0).transpose() - var).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("two separated Gaussians are recovered") {
  Rng rng(12);
  const int n_half = 3000, d = 3;
  MatrixF rows(2 * n_half, d);
  const double mu0 = -4.0, mu1 = 4.0, sigma = 1.0;
  for (int i = 0; i < n_half; ++i) {
    for (int j = 0; j < d; ++j) {
      rows(i, j) = static_cast<float>(mu0 + sigma * rng.next_normal());
      rows(n_half + i, j) =
          static_cast<float>(mu1 + sigma * rng.next_normal());
    }
  }
  GmmOptions opt;
  opt.seed = 7;
  const GmmModel m = gmm_fit(rows, 2, opt);

  // 3 standard errors of a component mean estimated from ~n_half points.
  const double se3 = 3.0 * sigma / std::sqrt(static_cast<double>(n_half));
  const int lo = m.means(0, 0) < m.means(1, 0) ? 0 : 1;
  for (int j = 0; j < d; ++j) {
    REQUIRE(std::abs(m.means(lo, j) - mu0) < se3);
    REQUIRE(std::abs(m.means(1 - lo, j) - mu1) < se3);
  }
  REQUIRE(m.weights(0) == Catch::Approx(0.5).margin(0.02));
  REQUIRE(m.weights.sum() == Catch::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("log-likelihood is non-decreasing across EM steps") {
  Rng rng(3);
  MatrixF rows(1500, 5);
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    const double shift = (r % 3) * 3.0;
    for (int j = 0; j < 5; ++j) {
      rows(r, j) = static_cast<float>(shift + rng.next_normal());
    }
  }
  GmmOptions opt;
  opt.seed = 2;
  const GmmModel m = gmm_fit(rows, 3, opt);
  REQUIRE(m.log_likelihood_history.size() >= 2);
  for (std::size_t i = 1; i < m.log_likelihood_history.size(); ++i) {
    const double prev = m.log_likelihood_history[i - 1];
    const double cur = m.log_likelihood_history[i];
    REQUIRE(cur >= prev - 1e-8 * std::max(1.0, std::abs(prev)));
  }
}

TEST_CASE("responsibilities sum to one per row") {
  Rng rng(8);
  const MatrixF rows = testutil::random_rows(400, 6, rng);
  GmmOptions opt;
  opt.seed = 4;
  const GmmModel m = gmm_fit(rows, 4, opt);
  const MatrixD probes = testutil::random_rows(50, 6, rng).cast<double>();
  const MatrixD gamma = gmm_responsibilities(m, probes);
  REQUIRE(gamma.rows() == 50);
  REQUIRE(gamma.cols() == 4);
  for (Eigen::Index r = 0; r < gamma.rows(); ++r) {
    REQUIRE(gamma.row(r).sum() == Catch::Approx(1.0).epsilon(1e-9));
    REQUIRE(gamma.row(r).minCoeff() >= 0.0);
  }
}

TEST_CASE("variances respect the floor") {
  // One dimension is (almost) constant; the floor must keep it positive.
  Rng rng(10);
  MatrixF rows(500, 3);
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    rows(r, 0) = static_cast<float>(rng.next_normal());
    rows(r, 1) = static_cast<float>(2.0 * rng.next_normal());
    rows(r, 2) = 1.0f;  // zero variance
  }
  GmmOptions opt;
  opt.seed = 5;
  const GmmModel m = gmm_fit(rows, 2, opt);
  REQUIRE(m.variances.minCoeff() > 0.0);
}

TEST_CASE("gmm input validation") {
  Rng rng(2);
  const MatrixF rows = testutil::random_rows(3, 4, rng);
  REQUIRE_THROWS_AS(gmm_fit(rows, 5), InvalidArgument);
}

TEST_CASE("unsalvageable degenerate mixtures error after the re-seed") {
  // Two identical points cannot support two components; the second keeps a
  // collapsed weight through both attempts.
  MatrixF rows(2, 3);
  rows << 1.f, 2.f, 3.f, 1.f, 2.f, 3.f;
  GmmOptions opt;
  opt.seed = 3;
  REQUIRE_THROWS_AS(gmm_fit(rows, 2, opt), DegenerateInput);
}

TEST_CASE("gmm fits are deterministic per seed") {
  Rng rng(13);
  const MatrixF rows = testutil::random_rows(800, 4, rng);
  GmmOptions opt;
  opt.seed = 21;
  const GmmModel a = gmm_fit(rows, 3, opt);
  const GmmModel b = gmm_fit(rows, 3, opt);
  REQUIRE((a.means.array() == b.means.array()).all());
  REQUIRE((a.variances.array() == b.variances.array()).all());
  REQUIRE((a.weights.array() == b.weights.array()).all());
}
