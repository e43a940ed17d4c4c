#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "vvpipe/common.hpp"

namespace vvpipe {

inline double accuracy(const std::vector<int>& predicted,
                       const std::vector<int>& truth) {
  if (predicted.size() != truth.size()) {
    throw DimensionError("accuracy: length mismatch");
  }
  if (predicted.empty()) throw InvalidArgument("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] == truth[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

// Non-interpolated average precision per class: rank items by the class's
// score column (descending, ties by original index), average precision-at-k
// over the positions holding positives, then mean over classes. Classes
// absent from the truth are skipped and reported through `skipped`.
inline double mean_average_precision(const MatrixD& scores,
                                     const std::vector<int>& truth,
                                     std::vector<int>* skipped = nullptr) {
  const auto n = static_cast<std::size_t>(scores.rows());
  if (truth.size() != n) {
    throw DimensionError("mean_average_precision: length mismatch");
  }
  if (n == 0) throw InvalidArgument("mean_average_precision: empty input");
  const int num_classes = static_cast<int>(scores.cols());

  double ap_sum = 0;
  int counted = 0;
  std::vector<std::size_t> order(n);
  for (int c = 0; c < num_classes; ++c) {
    std::size_t positives = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (truth[i] == c) ++positives;
    }
    if (positives == 0) {
      if (skipped) skipped->push_back(c);
      continue;
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return scores(static_cast<Eigen::Index>(a), c) >
                              scores(static_cast<Eigen::Index>(b), c);
                     });
    double ap = 0;
    std::size_t seen_pos = 0;
    for (std::size_t rank = 0; rank < n; ++rank) {
      if (truth[order[rank]] == c) {
        ++seen_pos;
        ap += static_cast<double>(seen_pos) / static_cast<double>(rank + 1);
      }
    }
    ap_sum += ap / static_cast<double>(positives);
    ++counted;
  }
  if (counted == 0) {
    throw InvalidArgument("mean_average_precision: no class present in truth");
  }
  return ap_sum / counted;
}

// Macro-averaged F1 over one-vs-rest confusion counts; a class with neither
// predictions nor positives contributes 0.
inline double mean_f1(const std::vector<int>& predicted,
                      const std::vector<int>& truth, int num_classes = -1) {
  if (predicted.size() != truth.size()) {
    throw DimensionError("mean_f1: length mismatch");
  }
  if (predicted.empty()) throw InvalidArgument("mean_f1: empty input");
  if (num_classes < 0) {
    for (std::size_t i = 0; i < truth.size(); ++i) {
      num_classes = std::max(num_classes, std::max(predicted[i], truth[i]));
    }
    num_classes += 1;
  }
  double f1_sum = 0;
  for (int c = 0; c < num_classes; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool is_pred = predicted[i] == c;
      const bool is_true = truth[i] == c;
      if (is_pred && is_true) ++tp;
      if (is_pred && !is_true) ++fp;
      if (!is_pred && is_true) ++fn;
    }
    const double denom = 2.0 * static_cast<double>(tp) +
                         static_cast<double>(fp) + static_cast<double>(fn);
    f1_sum += denom > 0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
  }
  return f1_sum / num_classes;
}

struct SplitMetrics {
  double acc = 0;
  double map = 0;
  double mf1 = 0;
};

struct MetricSummary {
  double mean = 0;
  double std_dev = 0;  // sample standard deviation, 0 for a single split
};

struct EvalReport {
  std::vector<SplitMetrics> per_split;
  MetricSummary acc, map, mf1;
  std::string fingerprint;  // method/scheme/sampling/K/D/seed
};

// Mean and sample (n-1) standard deviation across per-split metrics.
inline EvalReport aggregate(const std::vector<SplitMetrics>& per_split) {
  if (per_split.empty()) throw InvalidArgument("aggregate: no split reports");
  EvalReport report;
  report.per_split = per_split;
  const auto n = static_cast<double>(per_split.size());
  const auto summarize = [&](auto getter) {
    MetricSummary s;
    for (const auto& m : per_split) s.mean += getter(m);
    s.mean /= n;
    if (per_split.size() > 1) {
      double sq = 0;
      for (const auto& m : per_split) {
        const double d = getter(m) - s.mean;
        sq += d * d;
      }
      s.std_dev = std::sqrt(sq / (n - 1.0));
    }
    return s;
  };
  report.acc = summarize([](const SplitMetrics& m) { return m.acc; });
  report.map = summarize([](const SplitMetrics& m) { return m.map; });
  report.mf1 = summarize([](const SplitMetrics& m) { return m.mf1; });
  return report;
}

}  // namespace vvpipe
