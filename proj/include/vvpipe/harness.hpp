#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "vvpipe/encoders.hpp"
#include "vvpipe/hash.hpp"
#include "vvpipe/metrics.hpp"
#include "vvpipe/sampler.hpp"
#include "vvpipe/svm.hpp"
#include "vvpipe/vocabulary.hpp"

namespace vvpipe {

using json = nlohmann::json;

// One grid of pipeline variants: sampling mode x vocabulary scheme x
// representation x K, executed end to end per cell with artifact caching.
struct ExperimentConfig {
  std::string manifest_path;
  std::vector<SamplingMode> sampling_modes = {SamplingMode::balanced_1a,
                                              SamplingMode::uniform_1b};
  std::vector<Scheme> schemes = {Scheme::per_component_2a, Scheme::joint_2b};
  std::vector<Representation> representations = {
      Representation::bof_3a, Representation::bof_per_category_3b,
      Representation::vlad_3c, Representation::fisher_3d};
  std::vector<int> k_values = {4, 8, 16, 32, 64, 128, 256};
  double memory_gb = 1.6;
  std::uint64_t seed = 0;
  std::string output_dir;
  int pca_dims = 24;
  int kmeans_restarts = 8;
  double svm_c = 100.0;

  void validate() const {
    if (manifest_path.empty()) throw InvalidArgument("config: manifest unset");
    if (output_dir.empty()) throw InvalidArgument("config: output_dir unset");
    if (sampling_modes.empty() || schemes.empty() ||
        representations.empty() || k_values.empty()) {
      throw InvalidArgument("config: empty grid axis");
    }
    for (int k : k_values) {
      if (k < 1) throw InvalidArgument("config: k values must be positive");
    }
    if (!(memory_gb > 0)) throw InvalidArgument("config: memory_gb <= 0");
  }

  json to_json() const {
    json j;
    j["manifest"] = manifest_path;
    j["output_dir"] = output_dir;
    j["memory_gb"] = memory_gb;
    j["seed"] = seed;
    j["pca_dims"] = pca_dims;
    j["kmeans_restarts"] = kmeans_restarts;
    j["svm_c"] = svm_c;
    for (auto m : sampling_modes) j["sampling_modes"].push_back(to_string(m));
    for (auto s : schemes) j["schemes"].push_back(to_string(s));
    for (auto r : representations) {
      j["representations"].push_back(to_string(r));
    }
    j["k_values"] = k_values;
    return j;
  }

  static ExperimentConfig from_json(const json& j) {
    ExperimentConfig c;
    c.manifest_path = j.at("manifest").get<std::string>();
    c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("memory_gb")) c.memory_gb = j["memory_gb"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("pca_dims")) c.pca_dims = j["pca_dims"].get<int>();
    if (j.contains("kmeans_restarts")) {
      c.kmeans_restarts = j["kmeans_restarts"].get<int>();
    }
    if (j.contains("svm_c")) c.svm_c = j["svm_c"].get<double>();
    if (j.contains("sampling_modes")) {
      c.sampling_modes.clear();
      for (const auto& v : j["sampling_modes"]) {
        c.sampling_modes.push_back(
            sampling_mode_from_string(v.get<std::string>()));
      }
    }
    if (j.contains("schemes")) {
      c.schemes.clear();
      for (const auto& v : j["schemes"]) {
        c.schemes.push_back(scheme_from_string(v.get<std::string>()));
      }
    }
    if (j.contains("representations")) {
      c.representations.clear();
      for (const auto& v : j["representations"]) {
        c.representations.push_back(
            representation_from_string(v.get<std::string>()));
      }
    }
    if (j.contains("k_values")) {
      c.k_values = j["k_values"].get<std::vector<int>>();
    }
    return c;
  }

  static ExperimentConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path.string());
    json j;
    in >> j;
    return from_json(j);
  }
};

struct CellKey {
  SamplingMode mode = SamplingMode::balanced_1a;
  Scheme scheme = Scheme::per_component_2a;
  Representation repr = Representation::bof_3a;
  int k = 0;

  // Table-style variables string, e.g. "3d-2a-1a".
  std::string variables() const {
    return std::string(to_string(repr)) + "-" + to_string(scheme) + "-" +
           to_string(mode);
  }
  std::string name() const {
    return std::string(to_string(repr)) + "_" + to_string(scheme) + "_" +
           to_string(mode) + "_k" + std::to_string(k);
  }
};

struct StageInfo {
  double seconds = 0;
  bool cache_hit = false;
  std::string cache_key;
};

struct RunRecord {
  CellKey cell;
  int d = 0;
  StageInfo sample, fit, encode;
  double train_seconds = 0;
  double eval_seconds = 0;
  EvalReport report;
  bool failed = false;
  std::string error;

  json to_json() const {
    json j;
    j["representation"] = to_string(cell.repr);
    j["scheme"] = to_string(cell.scheme);
    j["sampling"] = to_string(cell.mode);
    j["k"] = cell.k;
    j["d"] = d;
    j["variables"] = cell.variables();
    j["failed"] = failed;
    if (failed) {
      j["error"] = error;
      return j;
    }
    const auto stage = [](const StageInfo& s) {
      return json{{"seconds", s.seconds},
                  {"cache_hit", s.cache_hit},
                  {"cache_key", s.cache_key}};
    };
    j["stages"] = {{"sample", stage(sample)},
                   {"fit", stage(fit)},
                   {"encode", stage(encode)},
                   {"train", {{"seconds", train_seconds}}},
                   {"eval", {{"seconds", eval_seconds}}}};
    j["fingerprint"] = report.fingerprint;
    for (const auto& m : report.per_split) {
      j["per_split"].push_back({{"acc", m.acc}, {"map", m.map}, {"mf1", m.mf1}});
    }
    j["acc"] = {{"mean", report.acc.mean}, {"std", report.acc.std_dev}};
    j["map"] = {{"mean", report.map.mean}, {"std", report.map.std_dev}};
    j["mf1"] = {{"mean", report.mf1.mean}, {"std", report.mf1.std_dev}};
    return j;
  }

  static RunRecord from_json(const json& j) {
    RunRecord r;
    r.cell.repr = representation_from_string(j.at("representation"));
    r.cell.scheme = scheme_from_string(j.at("scheme"));
    r.cell.mode = sampling_mode_from_string(j.at("sampling"));
    r.cell.k = j.at("k").get<int>();
    r.d = j.value("d", 0);
    r.failed = j.value("failed", false);
    if (r.failed) {
      r.error = j.value("error", "");
      return r;
    }
    const auto load_stage = [&](const char* name, StageInfo& s) {
      if (!j.contains("stages") || !j["stages"].contains(name)) return;
      const auto& js = j["stages"][name];
      s.seconds = js.value("seconds", 0.0);
      s.cache_hit = js.value("cache_hit", false);
      s.cache_key = js.value("cache_key", "");
    };
    load_stage("sample", r.sample);
    load_stage("fit", r.fit);
    load_stage("encode", r.encode);
    if (j.contains("stages")) {
      r.train_seconds = j["stages"]["train"].value("seconds", 0.0);
      r.eval_seconds = j["stages"]["eval"].value("seconds", 0.0);
    }
    r.report.fingerprint = j.value("fingerprint", "");
    if (j.contains("per_split")) {
      for (const auto& m : j["per_split"]) {
        r.report.per_split.push_back(
            {m.at("acc").get<double>(), m.at("map").get<double>(),
             m.at("mf1").get<double>()});
      }
    }
    r.report.acc = {j.at("acc").at("mean").get<double>(),
                    j.at("acc").at("std").get<double>()};
    r.report.map = {j.at("map").at("mean").get<double>(),
                    j.at("map").at("std").get<double>()};
    r.report.mf1 = {j.at("mf1").at("mean").get<double>(),
                    j.at("mf1").at("std").get<double>()};
    return r;
  }
};

namespace detail {

// Serializes computed-once artifacts per key across worker threads, so
// concurrent cells wait for a producer instead of recomputing.
class KeyedMutex {
 public:
  std::shared_ptr<std::mutex> acquire(const std::string& key) {
    std::lock_guard<std::mutex> lock(master_);
    auto& slot = locks_[key];
    if (!slot) slot = std::make_shared<std::mutex>();
    return slot;
  }

 private:
  std::mutex master_;
  std::map<std::string, std::shared_ptr<std::mutex>> locks_;
};

inline double seconds_since(
    const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       start)
      .count();
}

}  // namespace detail

class ExperimentRunner {
 public:
  explicit ExperimentRunner(ExperimentConfig config)
      : cfg_(std::move(config)) {
    cfg_.validate();
    manifest_ = DatasetManifest::load(cfg_.manifest_path);
    manifest_hash_ = hash_file(cfg_.manifest_path);
    out_dir_ = cfg_.output_dir;
    cache_dir_ = out_dir_ / "cache";
    records_dir_ = out_dir_ / "records";
    std::filesystem::create_directories(cache_dir_);
    std::filesystem::create_directories(records_dir_);
  }

  const DatasetManifest& manifest() const { return manifest_; }

  std::vector<CellKey> grid_cells() const {
    std::vector<CellKey> cells;
    for (auto repr : cfg_.representations) {
      for (auto scheme : cfg_.schemes) {
        for (auto mode : cfg_.sampling_modes) {
          for (int k : cfg_.k_values) {
            cells.push_back({mode, scheme, repr, k});
          }
        }
      }
    }
    return cells;
  }

  // Executes every cell once. A cell failure is recorded, not fatal.
  std::vector<RunRecord> run_grid(int workers = 1, bool resume = false) {
    const auto cells = grid_cells();
    std::vector<RunRecord> records(cells.size());
    parallel_for(
        0, cells.size(),
        [&](std::size_t i) {
          const auto record_path =
              records_dir_ / (cells[i].name() + ".json");
          if (resume && std::filesystem::exists(record_path)) {
            std::ifstream in(record_path);
            json j;
            in >> j;
            records[i] = RunRecord::from_json(j);
            if (!records[i].failed) return;
          }
          records[i] = run_cell(cells[i]);
          atomic_write_file(record_path, [&](std::ostream& out) {
            out << records[i].to_json().dump(2) << "\n";
          });
        },
        workers);
    return records;
  }

  // One grid cell across every split, aggregated.
  RunRecord run_cell(const CellKey& cell) {
    RunRecord record;
    record.cell = cell;
    try {
      run_cell_impl(cell, record);
    } catch (const std::exception& e) {
      record.failed = true;
      record.error = e.what();
    }
    return record;
  }

 private:
  void run_cell_impl(const CellKey& cell, RunRecord& record) {
    if (manifest_.splits.empty()) {
      throw InvalidArgument("run_cell: manifest defines no splits");
    }
    const int num_splits = static_cast<int>(manifest_.splits.size());
    std::vector<SplitMetrics> split_metrics;

    record.d = encoding_dim(cell.repr, cell.scheme, cell.k,
                            manifest_.num_classes(), manifest_.layout,
                            cfg_.pca_dims);

    for (int split = 0; split < num_splits; ++split) {
      // --- sample ---------------------------------------------------------
      auto t0 = std::chrono::steady_clock::now();
      const std::string pool_key = this->pool_key(cell.mode, split);
      bool hit = false;
      FeaturePool stage_pool = load_or_make_pool(cell.mode, split, pool_key,
                                                 &hit);
      FeaturePool pool =
          final_subsample(stage_pool, cell.k, cell.mode,
                          Rng(cfg_.seed).split("final"));
      stage_pool = FeaturePool();  // release
      record.sample.seconds += detail::seconds_since(t0);
      record.sample.cache_hit = split == 0 ? hit : (record.sample.cache_hit && hit);
      record.sample.cache_key = pool_key;

      // --- fit -----------------------------------------------------------
      t0 = std::chrono::steady_clock::now();
      const VocabKind kind = vocab_kind_for(cell.repr);
      const std::string vkey = vocab_key(pool_key, cell, kind);
      const VocabularySet vocab =
          load_or_make_vocab(pool, cell, kind, vkey, &hit);
      pool = FeaturePool();
      record.fit.seconds += detail::seconds_since(t0);
      record.fit.cache_hit = split == 0 ? hit : (record.fit.cache_hit && hit);
      record.fit.cache_key = vkey;

      // --- encode ----------------------------------------------------------
      t0 = std::chrono::steady_clock::now();
      const std::string ekey = "enc_" + short_hash(vkey + "|" +
                                                   to_string(cell.repr));
      const EncodedDataset enc =
          load_or_make_encoding(vocab, cell.repr, ekey, &hit);
      record.encode.seconds += detail::seconds_since(t0);
      record.encode.cache_hit = split == 0 ? hit : (record.encode.cache_hit && hit);
      record.encode.cache_key = ekey;

      // --- train -----------------------------------------------------------
      t0 = std::chrono::steady_clock::now();
      const auto& ids = manifest_.splits[static_cast<std::size_t>(split)];
      MatrixD train_rows(static_cast<Eigen::Index>(ids.train_ids.size()),
                         enc.d);
      std::vector<int> train_labels;
      for (std::size_t i = 0; i < ids.train_ids.size(); ++i) {
        const auto idx = manifest_.index_of(ids.train_ids[i]);
        train_rows.row(static_cast<Eigen::Index>(i)) =
            enc.vectors.row(static_cast<Eigen::Index>(idx));
        train_labels.push_back(manifest_.videos[idx].class_label);
      }
      // Histogram methods pair with the exponentiated chi-squared kernel,
      // VLAD and Fisher vectors with a linear machine.
      const SvmKind svm_kind = (cell.repr == Representation::bof_3a ||
                                cell.repr == Representation::bof_per_category_3b)
                                   ? SvmKind::chi2_kernel
                                   : SvmKind::linear;
      SvmTrainOptions sopt;
      sopt.c = cfg_.svm_c;
      sopt.seed = Rng(cfg_.seed).split("svm", cell_index(cell)).seed();
      const SvmModel model = svm_train(train_rows, train_labels,
                                       manifest_.num_classes(), svm_kind,
                                       sopt);
      record.train_seconds += detail::seconds_since(t0);

      // --- eval --------------------------------------------------------------
      t0 = std::chrono::steady_clock::now();
      MatrixD test_rows(static_cast<Eigen::Index>(ids.test_ids.size()),
                        enc.d);
      std::vector<int> test_labels;
      for (std::size_t i = 0; i < ids.test_ids.size(); ++i) {
        const auto idx = manifest_.index_of(ids.test_ids[i]);
        test_rows.row(static_cast<Eigen::Index>(i)) =
            enc.vectors.row(static_cast<Eigen::Index>(idx));
        test_labels.push_back(manifest_.videos[idx].class_label);
      }
      const Predictions pred = svm_predict(model, test_rows);
      SplitMetrics m;
      m.acc = accuracy(pred.labels, test_labels);
      m.map = mean_average_precision(pred.scores, test_labels);
      m.mf1 = mean_f1(pred.labels, test_labels, manifest_.num_classes());
      split_metrics.push_back(m);
      record.eval_seconds += detail::seconds_since(t0);
    }

    record.report = aggregate(split_metrics);
    record.report.fingerprint =
        cell.variables() + " K=" + std::to_string(cell.k) +
        " D=" + std::to_string(record.d) +
        " seed=" + std::to_string(cfg_.seed);
  }

  std::uint64_t cell_index(const CellKey& cell) const {
    ContentHash h;
    h.update(cell.name());
    return h.digest();
  }

  std::string short_hash(const std::string& text) const {
    ContentHash h;
    h.update(text);
    return h.hex();
  }

  std::string pool_key(SamplingMode mode, int split) const {
    ContentHash h;
    h.update(manifest_hash_);
    h.update("|split=");
    h.update(std::to_string(split));
    h.update("|mode=");
    h.update(to_string(mode));
    h.update("|mem=");
    h.update(std::to_string(cfg_.memory_gb));
    h.update("|seed=");
    h.update(std::to_string(cfg_.seed));
    return "pool_" + h.hex();
  }

  std::string vocab_key(const std::string& pool_key, const CellKey& cell,
                        VocabKind kind) const {
    ContentHash h;
    h.update(pool_key);
    h.update("|scheme=");
    h.update(to_string(cell.scheme));
    h.update("|kind=");
    h.update(to_string(kind));
    h.update("|k=");
    h.update(std::to_string(cell.k));
    h.update("|pca=");
    h.update(std::to_string(cfg_.pca_dims));
    h.update("|restarts=");
    h.update(std::to_string(cfg_.kmeans_restarts));
    h.update("|seed=");
    h.update(std::to_string(cfg_.seed));
    return "vocab_" + h.hex();
  }

  FeaturePool load_or_make_pool(SamplingMode mode, int split,
                                const std::string& key, bool* hit) {
    const auto data = cache_dir_ / (key + ".bin");
    const auto side = cache_dir_ / (key + ".prov");
    const auto lock = keyed_.acquire(key);
    std::lock_guard<std::mutex> guard(*lock);
    if (std::filesystem::exists(data) && std::filesystem::exists(side)) {
      *hit = true;
      return FeaturePool::load(data, side);
    }
    *hit = false;
    SamplingConfig sc;
    sc.mode = mode;
    sc.memory_gb = cfg_.memory_gb;
    sc.k = 1;  // unused by the stage pool
    sc.seed = cfg_.seed;
    sc.split_index = split;
    FeaturePool pool = load_stage_pool(manifest_, sc);
    pool.save(data, side);
    return pool;
  }

  VocabularySet load_or_make_vocab(const FeaturePool& pool,
                                   const CellKey& cell, VocabKind kind,
                                   const std::string& key, bool* hit) {
    const auto path = cache_dir_ / (key + ".vocab");
    const auto lock = keyed_.acquire(key);
    std::lock_guard<std::mutex> guard(*lock);
    if (std::filesystem::exists(path)) {
      *hit = true;
      return VocabularySet::load(path);
    }
    *hit = false;
    VocabFitOptions opt;
    opt.pca_dims = cfg_.pca_dims;
    opt.kmeans_restarts = cfg_.kmeans_restarts;
    opt.seed = cfg_.seed;
    VocabularySet vocab = fit_vocabularies(pool, cell.k, cell.scheme, kind,
                                           opt);
    vocab.save(path);
    return vocab;
  }

  EncodedDataset load_or_make_encoding(const VocabularySet& vocab,
                                       Representation repr,
                                       const std::string& key, bool* hit) {
    const auto path = cache_dir_ / (key + ".enc");
    const auto lock = keyed_.acquire(key);
    std::lock_guard<std::mutex> guard(*lock);
    if (std::filesystem::exists(path)) {
      *hit = true;
      return EncodedDataset::load(path);
    }
    *hit = false;
    EncodedDataset enc = encode_dataset(manifest_, vocab, repr);
    enc.save(path);
    return enc;
  }

  ExperimentConfig cfg_;
  DatasetManifest manifest_;
  std::string manifest_hash_;
  std::filesystem::path out_dir_, cache_dir_, records_dir_;
  detail::KeyedMutex keyed_;
};

// ---------------------------------------------------------------------------
// Reporting: a Table-2-style text table, a best-per-metric summary, and
// metric-vs-K / metric-vs-D plot series. Plot rows are sorted by the axis
// value; consumers treat positions as ordinal.
// ---------------------------------------------------------------------------

inline void emit_results(const std::vector<RunRecord>& records,
                         const std::filesystem::path& out_dir) {
  if (records.empty()) throw InvalidArgument("emit_results: no records");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  json all = json::array();
  for (const auto& r : records) all.push_back(r.to_json());
  atomic_write_file(out_dir / "results.json", [&](std::ostream& out) {
    out << all.dump(2) << "\n";
  });

  std::vector<const RunRecord*> ok;
  for (const auto& r : records) {
    if (!r.failed) ok.push_back(&r);
  }

  atomic_write_file(out_dir / "results_table.txt", [&](std::ostream& out) {
    char line[256];
    std::snprintf(line, sizeof(line), "%-12s %6s %9s %19s %19s %19s\n",
                  "variables", "K", "D", "Acc", "mAP", "mF1");
    out << line;
    for (const auto* r : ok) {
      std::snprintf(line, sizeof(line),
                    "%-12s %6d %9d  %8.4f +-%7.4f  %8.4f +-%7.4f  %8.4f "
                    "+-%7.4f\n",
                    r->cell.variables().c_str(), r->cell.k, r->d,
                    r->report.acc.mean, r->report.acc.std_dev,
                    r->report.map.mean, r->report.map.std_dev,
                    r->report.mf1.mean, r->report.mf1.std_dev);
      out << line;
    }
    for (const auto& r : records) {
      if (r.failed) {
        out << r.cell.variables() << " K=" << r.cell.k
            << "  FAILED: " << r.error << "\n";
      }
    }

    if (!ok.empty()) {
      out << "\nbest per metric:\n";
      const auto best_row = [&](const char* name, auto getter) {
        const RunRecord* best = ok.front();
        for (const auto* r : ok) {
          if (getter(*r) > getter(*best)) best = r;
        }
        std::snprintf(line, sizeof(line), "  %-4s %.4f  %s  K=%d D=%d\n",
                      name, getter(*best), best->cell.variables().c_str(),
                      best->cell.k, best->d);
        out << line;
      };
      best_row("acc", [](const RunRecord& r) { return r.report.acc.mean; });
      best_row("map", [](const RunRecord& r) { return r.report.map.mean; });
      best_row("mf1", [](const RunRecord& r) { return r.report.mf1.mean; });
    }
  });

  // Plot series: columns representation scheme sampling K D metric mean std.
  const auto write_series = [&](const std::string& metric, bool by_k) {
    std::vector<const RunRecord*> rows = ok;
    std::stable_sort(rows.begin(), rows.end(),
                     [&](const RunRecord* a, const RunRecord* b) {
                       return by_k ? a->cell.k < b->cell.k : a->d < b->d;
                     });
    const auto path = out_dir / ("plot_" + metric + "_vs_" +
                                 (by_k ? std::string("K") : std::string("D")) +
                                 ".tsv");
    atomic_write_file(path, [&](std::ostream& out) {
      out << "representation\tscheme\tsampling\tK\tD\tmetric\tmean\tstd\n";
      for (const auto* r : rows) {
        const MetricSummary& s = metric == "acc"   ? r->report.acc
                                 : metric == "map" ? r->report.map
                                                   : r->report.mf1;
        out << to_string(r->cell.repr) << '\t' << to_string(r->cell.scheme)
            << '\t' << to_string(r->cell.mode) << '\t' << r->cell.k << '\t'
            << r->d << '\t' << metric << '\t' << s.mean << '\t' << s.std_dev
            << "\n";
      }
    });
  };
  for (const std::string metric : {"acc", "map", "mf1"}) {
    write_series(metric, true);
    write_series(metric, false);
  }
}

// Loads the records directory written by run_grid.
inline std::vector<RunRecord> load_records(
    const std::filesystem::path& out_dir) {
  std::vector<RunRecord> records;
  const auto dir = out_dir / "records";
  if (!std::filesystem::exists(dir)) {
    throw IoError("no records directory under " + out_dir.string());
  }
  std::vector<std::filesystem::path> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) {
    std::ifstream in(p);
    json j;
    in >> j;
    records.push_back(RunRecord::from_json(j));
  }
  return records;
}

}  // namespace vvpipe
