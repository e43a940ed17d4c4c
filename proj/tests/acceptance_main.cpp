// Acceptance suite: one check per release criterion, one pass/fail line
// each. Exits nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "vvpipe/encoders.hpp"
#include "vvpipe/harness.hpp"
#include "vvpipe/metrics.hpp"
#include "vvpipe/sampler.hpp"
#include "vvpipe/svm.hpp"
#include "vvpipe/synth.hpp"

using namespace vvpipe;

namespace {

namespace fs = std::filesystem;

struct Outcome {
  int id;
  std::string name;
  bool pass;
  std::string detail;
  double seconds;
};

std::vector<Outcome> g_outcomes;

void run_criterion(int id, const std::string& name,
                   const std::function<std::string()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out{id, name, true, "", 0};
  try {
    out.detail = body();
  } catch (const std::exception& e) {
    out.pass = false;
    out.detail = e.what();
  }
  out.seconds = std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  g_outcomes.push_back(out);
  std::printf("%s  criterion %d: %-28s %s  [%.1fs]\n",
              out.pass ? "PASS" : "FAIL", id, name.c_str(),
              out.detail.c_str(), out.seconds);
  std::fflush(stdout);
}

void require(bool cond, const std::string& what) {
  if (!cond) throw Error("check failed: " + what);
}

class Scratch {
 public:
  explicit Scratch(const std::string& tag) {
    dir_ = fs::temp_directory_path() /
           ("vvpipe_accept_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }
  const fs::path& path() const { return dir_; }

 private:
  fs::path dir_;
};

ComponentLayout small_layout() {
  return ComponentLayout({{"a", 2}, {"b", 3}});
}

// --------------------------------------------------------------------------
// 1. Sampling arithmetic.
// --------------------------------------------------------------------------
std::string criterion_sampling_arithmetic() {
  const double s_gb = feature_size_gb(ComponentLayout::dense_trajectory());
  const auto v_max = compute_vmax(1.6, 9000.0, s_gb);
  require(v_max == 112, "V_max(1.6GB, 9000) = " + std::to_string(v_max) +
                            ", want 112");
  require(pool_cap(4) == 40000, "cap at K=4 must be 40,000");
  require(pool_cap(256) == 1000000, "cap at K=256 must be 1,000,000");
  return "V_max=112, caps 40,000 / 1,000,000";
}

// --------------------------------------------------------------------------
// 2. Balance property under 10:1 video and 20:1 feature-count skew.
// --------------------------------------------------------------------------
std::string criterion_balance() {
  Scratch scratch("balance");
  SynthSpec spec;
  spec.num_classes = 3;
  spec.class_video_counts = {40, 4, 4};       // 10:1 video skew
  spec.features_per_video = 1500;
  spec.class_length_scale = {1.0, 20.0, 20.0};  // 20:1 feature skew
  spec.feature_count_jitter = 0.15;
  spec.layout = small_layout();
  spec.seed = 2024;
  spec.train_fraction = 0.5;
  const auto manifest = synth_generate(spec, scratch.path());

  // Balanced mode: per-class rows in the final pool differ by at most 1.
  {
    SamplingConfig config;
    config.mode = SamplingMode::balanced_1a;
    config.memory_gb = 0.01;
    config.k = 1;  // target 10,000 rows
    config.seed = 5;
    const FeaturePool pool = run_sampling(manifest, config);
    require(pool.size() == 10000, "balanced pool must hit the 10,000 cap");
    std::map<int, long> per_class;
    for (Eigen::Index r = 0; r < pool.size(); ++r) {
      per_class[pool.class_of_row(r)]++;
    }
    long mn = 1 << 30, mx = 0;
    for (const auto& [c, n] : per_class) {
      mn = std::min(mn, n);
      mx = std::max(mx, n);
    }
    require(mx - mn <= 1, "balanced per-class counts differ by " +
                              std::to_string(mx - mn));
  }

  // Uniform mode: per-class shares across 50 seeds match the hypergeometric
  // expectation (class share of loaded rows) within 3 sigma of the mean.
  {
    SamplingConfig config;
    config.mode = SamplingMode::uniform_1b;
    config.memory_gb = 0.01;
    config.k = 1;
    config.seed = 0;
    const FeaturePool full = load_stage_pool(manifest, config);
    std::map<int, double> class_rows;
    for (Eigen::Index r = 0; r < full.size(); ++r) {
      class_rows[full.class_of_row(r)] += 1.0;
    }
    const double total = static_cast<double>(full.size());

    std::map<int, std::vector<double>> shares;
    for (int seed = 0; seed < 50; ++seed) {
      config.seed = static_cast<std::uint64_t>(seed);
      const FeaturePool pool = run_sampling(manifest, config);
      std::map<int, double> count;
      for (Eigen::Index r = 0; r < pool.size(); ++r) {
        count[pool.class_of_row(r)] += 1.0;
      }
      for (int c = 0; c < 3; ++c) {
        shares[c].push_back(count[c] / static_cast<double>(pool.size()));
      }
    }
    for (int c = 0; c < 3; ++c) {
      const auto& v = shares[c];
      const double mean =
          std::accumulate(v.begin(), v.end(), 0.0) / v.size();
      double sq = 0;
      for (double x : v) sq += (x - mean) * (x - mean);
      const double sem = std::sqrt(sq / (v.size() - 1)) /
                         std::sqrt(static_cast<double>(v.size()));
      const double expected = class_rows[c] / total;
      require(std::abs(mean - expected) <= 3.0 * sem + 1e-9,
              "class " + std::to_string(c) + " share " +
                  std::to_string(mean) + " vs expected " +
                  std::to_string(expected) + " (3*SEM " +
                  std::to_string(3 * sem) + ")");
    }
  }
  return "balanced diff <= 1; uniform shares within 3 sigma over 50 seeds";
}

// --------------------------------------------------------------------------
// 3. Clustering oracle.
// --------------------------------------------------------------------------
std::string criterion_clustering() {
  Rng rng(301);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 20 + static_cast<int>(rng.next_below(81));  // <= 100
    const int d = 2 + static_cast<int>(rng.next_below(4));
    const int k = 2 + static_cast<int>(rng.next_below(3));  // <= 4
    MatrixF rows(n, d);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) {
        rows(i, j) = static_cast<float>(rng.next_normal());
      }
    }
    KmeansOptions opt;
    opt.seed = 9000 + static_cast<std::uint64_t>(trial);
    const Codebook book = kmeans_fit(rows, k, opt);

    // Exact nearest-centroid agreement.
    const auto fast = assign_nearest(book.centroids, rows);
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (int c = 0; c < k; ++c) {
        const double dist =
            (rows.row(i).cast<double>() - book.centroids.row(c)).squaredNorm();
        if (dist < best) {
          best = dist;
          arg = c;
        }
      }
      require(fast[static_cast<std::size_t>(i)] == arg,
              "assignment mismatch on trial " + std::to_string(trial));
    }

    // Best-of-8 error no worse than any individual restart.
    for (int r = 0; r < 8; ++r) {
      const auto one = detail::lloyd_once(
          rows, k, Rng(opt.seed).split("restart", static_cast<std::uint64_t>(r)),
          opt.max_iters, 1);
      require(book.training_error <= one.sse + 1e-9,
              "restart " + std::to_string(r) + " beats the best-of-8");
    }
  }
  return "20 instances: exact assignments, best-of-8 dominates";
}

// --------------------------------------------------------------------------
// 4. Encoding contracts.
// --------------------------------------------------------------------------
std::string criterion_encoding() {
  const auto big = ComponentLayout::dense_trajectory();
  // Published dimensionalities.
  require(encoding_dim(Representation::fisher_3d, Scheme::per_component_2a,
                       128, 6, big) == 30720,
          "Fisher 2a K=128 must be 30,720-dimensional");
  require(encoding_dim(Representation::bof_per_category_3b, Scheme::joint_2b,
                       32, 6, big) == 192,
          "per-category joint K=32 C=6 must be 192-dimensional");
  require(encoding_dim(Representation::vlad_3c, Scheme::per_component_2a, 64,
                       6, big) == 7680,
          "VLAD 2a K=64 must be 7,680-dimensional");

  // Formula holds for every combination on both layouts.
  for (const auto& layout : {big, small_layout()}) {
    const int comps = static_cast<int>(layout.num_components());
    for (int k : {4, 8, 16, 32, 64, 128, 256}) {
      for (int c : {2, 6, 12}) {
        for (auto scheme : {Scheme::per_component_2a, Scheme::joint_2b}) {
          const int slots = scheme == Scheme::per_component_2a ? comps : 1;
          require(encoding_dim(Representation::bof_3a, scheme, k, c, layout) ==
                      k * slots,
                  "BoF dimensionality");
          require(encoding_dim(Representation::bof_per_category_3b, scheme, k,
                               c, layout) == k * c * slots,
                  "BoF per-category dimensionality");
          require(encoding_dim(Representation::vlad_3c, scheme, k, c, layout,
                               24) == 24 * comps * k,
                  "VLAD dimensionality");
          require(encoding_dim(Representation::fisher_3d, scheme, k, c, layout,
                               24) == 2 * 24 * comps * k,
                  "Fisher dimensionality");
        }
      }
    }
  }

  // Constructed encodings: norms and dimensions over 1000 random videos.
  const auto layout = small_layout();
  FeaturePool pool(layout, 3);
  Rng prng(77);
  pool.reserve_rows(3 * 400, layout.total_dims());
  Eigen::Index at = 0;
  for (int c = 0; c < 3; ++c) {
    const auto handle = pool.add_video("v" + std::to_string(c));
    VectorD center(layout.total_dims());
    for (int j = 0; j < layout.total_dims(); ++j) {
      center(j) = 4.0 * prng.next_normal();
    }
    for (int r = 0; r < 400; ++r, ++at) {
      for (int j = 0; j < layout.total_dims(); ++j) {
        pool.mutable_rows()(at, j) =
            static_cast<float>(center(j) + prng.next_normal());
      }
    }
    pool.tag_rows(at - 400, at, handle, c);
  }

  VocabFitOptions fopt;
  fopt.seed = 5;
  fopt.pca_dims = 2;
  std::map<Representation, VocabularySet> vocabs;
  for (auto repr : {Representation::bof_3a, Representation::bof_per_category_3b,
                    Representation::vlad_3c, Representation::fisher_3d}) {
    vocabs.emplace(repr, fit_vocabularies(pool, 4, Scheme::per_component_2a,
                                          vocab_kind_for(repr), fopt));
  }

  Rng vrng(88);
  for (int video = 0; video < 1000; ++video) {
    const int n = 1 + static_cast<int>(vrng.next_below(40));
    MatrixF rows(n, layout.total_dims());
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < layout.total_dims(); ++j) {
        rows(i, j) = static_cast<float>(3.0 * vrng.next_normal());
      }
    }
    for (auto& [repr, vocab] : vocabs) {
      const Encoding enc = encode_features(rows, vocab, repr);
      require(enc.dim() == encoding_dim(repr, Scheme::per_component_2a, 4, 3,
                                        layout, 2),
              "constructed dimensionality mismatch");
      if (repr == Representation::bof_3a ||
          repr == Representation::bof_per_category_3b) {
        require(std::abs(enc.values.sum() - 1.0) < 1e-12,
                "BoF sum deviates beyond 1e-12");
        require(enc.values.minCoeff() >= 0, "BoF histogram went negative");
      } else if (!enc.degenerate) {
        require(std::abs(enc.values.norm() - 1.0) < 1e-10,
                "joint L2 norm deviates beyond 1e-10");
      }
    }
  }
  return "1000 videos: BoF sums exact, L2 norms exact, D formulas hold";
}

// --------------------------------------------------------------------------
// 5. Kernel correctness.
// --------------------------------------------------------------------------
std::string criterion_kernel() {
  // Two-point closed form.
  MatrixD two(2, 4);
  two << 0.4, 0.3, 0.2, 0.1, 0.1, 0.2, 0.3, 0.4;
  const double d01 =
      chi2_distance(two.row(0).transpose(), two.row(1).transpose());
  const KernelGram gram2 = chi2_gram(two);
  require(std::abs(gram2.a_mean - d01) < 1e-12, "A must equal the distance");
  require(std::abs(gram2.matrix(0, 1) - std::exp(-0.5)) < 1e-12,
          "two-point off-diagonal must be exp(-1/2)");
  require(gram2.matrix(0, 0) == 1.0 && gram2.matrix(1, 1) == 1.0,
          "diagonal must be exactly 1");

  // PSD on random histogram sets.
  Rng rng(501);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 5 + static_cast<int>(rng.next_below(46));
    const int bins = 4 + static_cast<int>(rng.next_below(9));
    MatrixD h(n, bins);
    for (int i = 0; i < n; ++i) {
      double sum = 0;
      for (int j = 0; j < bins; ++j) {
        h(i, j) = -std::log(1.0 - rng.next_double());
        sum += h(i, j);
      }
      h.row(i) /= sum;
    }
    const KernelGram gram = chi2_gram(h);
    Eigen::SelfAdjointEigenSolver<MatrixD> eig(gram.matrix);
    require(eig.eigenvalues().minCoeff() >= -1e-8,
            "gram matrix not PSD within -1e-8 on trial " +
                std::to_string(trial));
  }
  return "closed form within 1e-12; 20 grams PSD within -1e-8";
}

// --------------------------------------------------------------------------
// 6. SVM oracle.
// --------------------------------------------------------------------------
double brute_force_dual(const MatrixD& kernel, const std::vector<double>& y,
                        double c) {
  const int n = static_cast<int>(y.size());
  MatrixD q(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      q(i, j) = y[static_cast<std::size_t>(i)] *
                y[static_cast<std::size_t>(j)] * kernel(i, j);
    }
  }
  double best = -std::numeric_limits<double>::infinity();
  std::uint64_t total = 1;
  for (int i = 0; i < n; ++i) total *= 3;
  std::vector<int> state(static_cast<std::size_t>(n));
  for (std::uint64_t code = 0; code < total; ++code) {
    std::uint64_t rest = code;
    std::vector<int> free_idx;
    VectorD alpha = VectorD::Zero(n);
    double equality = 0;
    for (int i = 0; i < n; ++i) {
      state[static_cast<std::size_t>(i)] = static_cast<int>(rest % 3);
      rest /= 3;
      if (state[static_cast<std::size_t>(i)] == 1) {
        alpha(i) = c;
        equality += y[static_cast<std::size_t>(i)] * c;
      } else if (state[static_cast<std::size_t>(i)] == 2) {
        free_idx.push_back(i);
      }
    }
    const int f = static_cast<int>(free_idx.size());
    if (f == 0) {
      if (std::abs(equality) > 1e-12) continue;
      const double obj = alpha.sum() - 0.5 * alpha.dot(q * alpha);
      best = std::max(best, obj);
      continue;
    }
    MatrixD sys = MatrixD::Zero(f + 1, f + 1);
    VectorD rhs(f + 1);
    for (int a = 0; a < f; ++a) {
      for (int b = 0; b < f; ++b) sys(a, b) = q(free_idx[a], free_idx[b]);
      sys(a, f) = y[static_cast<std::size_t>(free_idx[a])];
      sys(f, a) = y[static_cast<std::size_t>(free_idx[a])];
      double dot = 0;
      for (int i = 0; i < n; ++i) {
        if (state[static_cast<std::size_t>(i)] == 1) dot += q(free_idx[a], i) * c;
      }
      rhs(a) = 1.0 - dot;
    }
    rhs(f) = -equality;
    const Eigen::FullPivLU<MatrixD> lu(sys);
    if (!lu.isInvertible()) continue;
    const VectorD sol = lu.solve(rhs);
    bool feasible = true;
    for (int a = 0; a < f; ++a) {
      if (sol(a) < -1e-10 || sol(a) > c + 1e-10) {
        feasible = false;
        break;
      }
      alpha(free_idx[a]) = std::min(std::max(sol(a), 0.0), c);
    }
    if (!feasible) continue;
    const double obj = alpha.sum() - 0.5 * alpha.dot(q * alpha);
    best = std::max(best, obj);
  }
  return best;
}

std::string criterion_svm() {
  Rng rng(601);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 4 + static_cast<int>(rng.next_below(7));
    MatrixD b(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) b(i, j) = rng.next_normal();
    }
    MatrixD kernel = b * b.transpose() + 0.1 * MatrixD::Identity(n, n);
    std::vector<double> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      y[static_cast<std::size_t>(i)] = rng.next_below(2) == 0 ? -1.0 : 1.0;
    }
    y[0] = 1.0;
    y[1] = -1.0;
    const double c = trial % 2 == 0 ? 1.0 : 100.0;
    const auto sol = detail::smo_solve(kernel, y, c, 1e-6, 10000000);
    const double oracle = brute_force_dual(kernel, y, c);
    require(std::abs(sol.objective - oracle) < 1e-4,
            "dual objective off by " +
                std::to_string(std::abs(sol.objective - oracle)) +
                " on trial " + std::to_string(trial));
  }

  // Separable 2-D data trains to accuracy 1.
  Rng drng(602);
  MatrixD x(60, 2);
  std::vector<int> labels;
  for (int i = 0; i < 60; ++i) {
    const int cls = i < 30 ? 0 : 1;
    x(i, 0) = (cls == 0 ? -2.0 : 2.0) + 0.4 * drng.next_normal();
    x(i, 1) = (cls == 0 ? -2.0 : 2.0) + 0.4 * drng.next_normal();
    labels.push_back(cls);
  }
  SvmTrainOptions opt;
  opt.seed = 4;
  const SvmModel model = svm_train(x, labels, 2, SvmKind::linear, opt);
  const Predictions pred = svm_predict(model, x);
  require(accuracy(pred.labels, labels) == 1.0,
          "separable data must reach training accuracy 1.0");
  return "10 duals within 1e-4 of the QP oracle; separable data exact";
}

// --------------------------------------------------------------------------
// 7. Metric oracles.
// --------------------------------------------------------------------------
std::string criterion_metrics() {
  Rng rng(701);
  int map_checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 5 + static_cast<int>(rng.next_below(96));
    const int classes = 2 + static_cast<int>(rng.next_below(5));
    MatrixD scores(n, classes);
    std::vector<int> truth, pred;
    for (int i = 0; i < n; ++i) {
      truth.push_back(static_cast<int>(
          rng.next_below(static_cast<std::uint64_t>(classes))));
      pred.push_back(static_cast<int>(
          rng.next_below(static_cast<std::uint64_t>(classes))));
      for (int c = 0; c < classes; ++c) {
        scores(i, c) = std::floor(20.0 * rng.next_double()) / 20.0;
      }
    }

    // Macro-F1 against an independent confusion-count oracle.
    double f1_oracle = 0;
    for (int c = 0; c < classes; ++c) {
      int tp = 0, fp = 0, fn = 0;
      for (int i = 0; i < n; ++i) {
        if (pred[static_cast<std::size_t>(i)] == c &&
            truth[static_cast<std::size_t>(i)] == c) {
          ++tp;
        } else if (pred[static_cast<std::size_t>(i)] == c) {
          ++fp;
        } else if (truth[static_cast<std::size_t>(i)] == c) {
          ++fn;
        }
      }
      const double p = tp + fp > 0 ? double(tp) / (tp + fp) : 0;
      const double r = tp + fn > 0 ? double(tp) / (tp + fn) : 0;
      f1_oracle += p + r > 0 ? 2 * p * r / (p + r) : 0;
    }
    f1_oracle /= classes;
    require(std::abs(mean_f1(pred, truth, classes) - f1_oracle) < 1e-12,
            "macro-F1 disagrees with the confusion oracle");

    // mAP against exhaustive prefix counting.
    bool all_present = true;
    for (int c = 0; c < classes; ++c) {
      if (std::find(truth.begin(), truth.end(), c) == truth.end()) {
        all_present = false;
      }
    }
    if (!all_present) continue;
    ++map_checked;
    double map_oracle = 0;
    for (int c = 0; c < classes; ++c) {
      std::vector<std::size_t> order(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) {
                         return scores(static_cast<Eigen::Index>(a), c) >
                                scores(static_cast<Eigen::Index>(b), c);
                       });
      int positives = 0;
      for (int t : truth) positives += t == c ? 1 : 0;
      double ap = 0;
      for (int k = 1; k <= n; ++k) {
        if (truth[order[static_cast<std::size_t>(k - 1)]] != c) continue;
        int in_prefix = 0;
        for (int t = 0; t < k; ++t) {
          in_prefix +=
              truth[order[static_cast<std::size_t>(t)]] == c ? 1 : 0;
        }
        ap += static_cast<double>(in_prefix) / k;
      }
      map_oracle += ap / positives;
    }
    map_oracle /= classes;
    require(std::abs(mean_average_precision(scores, truth) - map_oracle) <
                1e-12,
            "mAP disagrees with the prefix-counting oracle");
  }
  return std::to_string(map_checked) +
         " mAP sets and 100 F1 sets exact to 1e-12";
}

// --------------------------------------------------------------------------
// 8. End-to-end qualitative reproduction.
// --------------------------------------------------------------------------
std::string criterion_end_to_end() {
  double sum_2a = 0, sum_2b = 0;
  const int num_seeds = 5;
  for (int seed = 0; seed < num_seeds; ++seed) {
    Scratch scratch("e2e_" + std::to_string(seed));
    SynthSpec spec;
    spec.num_classes = 6;
    spec.videos_per_class = 40;
    spec.features_per_video = 150;
    spec.feature_count_jitter = 0.2;
    spec.class_separation = 1.5;
    spec.mixture_components = 2;
    spec.seed = 9000 + static_cast<std::uint64_t>(seed);
    synth_generate(spec, scratch.path() / "data");

    ExperimentConfig cfg;
    cfg.manifest_path = (scratch.path() / "data" / "manifest.txt").string();
    cfg.output_dir = (scratch.path() / "out").string();
    cfg.sampling_modes = {SamplingMode::balanced_1a};
    cfg.schemes = {Scheme::per_component_2a, Scheme::joint_2b};
    cfg.representations = {Representation::fisher_3d};
    cfg.k_values = {32};
    cfg.memory_gb = 0.05;
    cfg.seed = 100 + static_cast<std::uint64_t>(seed);
    ExperimentRunner runner(cfg);
    const auto records = runner.run_grid(2);
    require(records.size() == 2, "expected the two Fisher cells");
    for (const auto& r : records) {
      require(!r.failed, "cell " + r.cell.name() + " failed: " + r.error);
      (r.cell.scheme == Scheme::per_component_2a ? sum_2a : sum_2b) +=
          r.report.acc.mean;
    }
  }
  const double acc_2a = sum_2a / num_seeds;
  const double acc_2b = sum_2b / num_seeds;
  require(std::max(acc_2a, acc_2b) >= 0.90,
          "no representation reached 90% accuracy (2a " +
              std::to_string(acc_2a) + ", 2b " + std::to_string(acc_2b) + ")");
  require(acc_2a >= acc_2b - 0.01,
          "per-component vocabularies fell more than 1pp behind joint (2a " +
              std::to_string(acc_2a) + " vs 2b " + std::to_string(acc_2b) +
              ")");
  char buf[96];
  std::snprintf(buf, sizeof(buf), "Fisher K=32 over 5 seeds: 2a %.4f, 2b %.4f",
                acc_2a, acc_2b);
  return buf;
}

// --------------------------------------------------------------------------
// 9. Determinism.
// --------------------------------------------------------------------------
std::string criterion_determinism() {
  Scratch scratch("det");
  SynthSpec spec;
  spec.num_classes = 3;
  spec.videos_per_class = 8;
  spec.features_per_video = 60;
  spec.feature_count_jitter = 0.25;
  spec.layout = small_layout();
  spec.seed = 31337;
  synth_generate(spec, scratch.path() / "data");

  const CellKey cell{SamplingMode::balanced_1a, Scheme::per_component_2a,
                     Representation::fisher_3d, 8};
  std::vector<EvalReport> reports;
  for (int run = 0; run < 3; ++run) {
    ExperimentConfig cfg;
    cfg.manifest_path = (scratch.path() / "data" / "manifest.txt").string();
    // The third run re-uses the first run's cache directory.
    cfg.output_dir =
        (scratch.path() / ("out" + std::to_string(run == 2 ? 0 : run)))
            .string();
    cfg.memory_gb = 0.005;
    cfg.seed = 77;
    cfg.pca_dims = 2;
    ExperimentRunner runner(cfg);
    const RunRecord record = runner.run_cell(cell);
    require(!record.failed, "cell failed: " + record.error);
    reports.push_back(record.report);
  }
  for (std::size_t r = 1; r < reports.size(); ++r) {
    require(reports[r].per_split.size() == reports[0].per_split.size(),
            "split count drifted");
    for (std::size_t s = 0; s < reports[0].per_split.size(); ++s) {
      require(reports[r].per_split[s].acc == reports[0].per_split[s].acc &&
                  reports[r].per_split[s].map == reports[0].per_split[s].map &&
                  reports[r].per_split[s].mf1 == reports[0].per_split[s].mf1,
              "per-split metrics differ bitwise on run " + std::to_string(r));
    }
    require(reports[r].acc.mean == reports[0].acc.mean &&
                reports[r].map.mean == reports[0].map.mean &&
                reports[r].mf1.mean == reports[0].mf1.mean &&
                reports[r].acc.std_dev == reports[0].acc.std_dev,
            "aggregates differ bitwise on run " + std::to_string(r));
  }
  return "3 runs (cold, cold, cached) bit-identical";
}

}  // namespace

int main() {
  std::printf("vvpipe acceptance suite\n");
  run_criterion(1, "sampling arithmetic", criterion_sampling_arithmetic);
  run_criterion(2, "balanced/uniform sampling", criterion_balance);
  run_criterion(3, "clustering oracle", criterion_clustering);
  run_criterion(4, "encoding contracts", criterion_encoding);
  run_criterion(5, "kernel correctness", criterion_kernel);
  run_criterion(6, "svm oracle", criterion_svm);
  run_criterion(7, "metric oracles", criterion_metrics);
  run_criterion(8, "end-to-end reproduction", criterion_end_to_end);
  run_criterion(9, "determinism", criterion_determinism);

  int failures = 0;
  for (const auto& o : g_outcomes) failures += o.pass ? 0 : 1;
  std::printf("%d/%zu criteria passed\n", static_cast<int>(g_outcomes.size()) - failures,
              g_outcomes.size());
  return failures == 0 ? 0 : 1;
}
