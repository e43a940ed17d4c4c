// vvpipe command line: synthetic data, sampling, vocabulary fitting,
// encoding, classification, and the full experiment grid.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vvpipe/encoders.hpp"
#include "vvpipe/harness.hpp"
#include "vvpipe/metrics.hpp"
#include "vvpipe/sampler.hpp"
#include "vvpipe/svm.hpp"
#include "vvpipe/synth.hpp"
#include "vvpipe/vocabulary.hpp"

namespace {

using namespace vvpipe;

std::vector<double> parse_scales(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

int cmd_synth(const std::string& out_dir, SynthSpec spec,
              const std::string& scales_csv, const std::string& layout_spec) {
  if (!scales_csv.empty()) spec.class_length_scale = parse_scales(scales_csv);
  if (!layout_spec.empty()) spec.layout = ComponentLayout::parse(layout_spec);
  const auto manifest = synth_generate(spec, out_dir);
  const auto stats = dataset_stats(manifest);
  std::printf("wrote %zu videos, %d classes to %s\n", manifest.videos.size(),
              manifest.num_classes(), out_dir.c_str());
  std::printf("features: sum=%llu mean=%.1f max=%llu min=%llu\n",
              static_cast<unsigned long long>(stats.sum), stats.mean,
              static_cast<unsigned long long>(stats.max),
              static_cast<unsigned long long>(stats.min));
  return 0;
}

int cmd_stats(const std::string& manifest_path) {
  const auto manifest = DatasetManifest::load(manifest_path);
  const auto s = dataset_stats(manifest);
  std::printf("dataset          %s (%d classes, %zu videos)\n",
              manifest.name.c_str(), manifest.num_classes(),
              manifest.videos.size());
  std::printf("sum              %llu\n",
              static_cast<unsigned long long>(s.sum));
  std::printf("memory (GB)      %.3f\n", s.memory_gb);
  std::printf("mean             %.2f\n", s.mean);
  std::printf("std dev          %.2f\n", s.std_dev);
  std::printf("median           %.1f\n", s.median);
  std::printf("maximum          %llu\n",
              static_cast<unsigned long long>(s.max));
  std::printf("minimum          %llu\n",
              static_cast<unsigned long long>(s.min));
  return 0;
}

int cmd_sample(const std::string& manifest_path, const std::string& mode,
               double memory_gb, int k, std::uint64_t seed, int split,
               const std::string& out_prefix) {
  const auto manifest = DatasetManifest::load(manifest_path);
  SamplingConfig config;
  config.mode = sampling_mode_from_string(mode);
  config.memory_gb = memory_gb;
  config.k = k;
  config.seed = seed;
  config.split_index = split;
  const FeaturePool pool = run_sampling(manifest, config);
  pool.save(out_prefix + ".bin", out_prefix + ".prov");
  std::printf("pool: %lld rows x %d dims -> %s.bin (+.prov)\n",
              static_cast<long long>(pool.size()),
              pool.layout().total_dims(), out_prefix.c_str());
  return 0;
}

int cmd_fit_vocab(const std::string& pool_prefix, int k,
                  const std::string& scheme, const std::string& kind,
                  int pca_dims, int restarts, std::uint64_t seed,
                  const std::string& out_path) {
  const FeaturePool pool =
      FeaturePool::load(pool_prefix + ".bin", pool_prefix + ".prov");
  VocabFitOptions opt;
  opt.pca_dims = pca_dims;
  opt.kmeans_restarts = restarts;
  opt.seed = seed;
  const auto vocab = fit_vocabularies(pool, k, scheme_from_string(scheme),
                                      vocab_kind_from_string(kind), opt);
  vocab.save(out_path);
  std::printf("vocabulary: kind=%s scheme=%s k=%d -> %s\n",
              to_string(vocab.kind), to_string(vocab.scheme), vocab.k,
              out_path.c_str());
  return 0;
}

int cmd_encode(const std::string& manifest_path, const std::string& vocab_path,
               const std::string& method, const std::string& out_path) {
  const auto manifest = DatasetManifest::load(manifest_path);
  const auto vocab = VocabularySet::load(vocab_path);
  const auto repr = representation_from_string(method);
  const auto enc = encode_dataset(manifest, vocab, repr);
  enc.save(out_path);
  std::printf("encoded %zu videos, D=%d -> %s\n", enc.video_ids.size(), enc.d,
              out_path.c_str());
  return 0;
}

int cmd_train(const std::string& enc_path, const std::string& manifest_path,
              int split, const std::string& kernel, double c,
              std::uint64_t seed, const std::string& out_path) {
  const auto enc = EncodedDataset::load(enc_path);
  const auto manifest = DatasetManifest::load(manifest_path);
  if (split < 0 || static_cast<std::size_t>(split) >= manifest.splits.size()) {
    throw InvalidArgument("train: split index out of range");
  }
  const auto& ids = manifest.splits[static_cast<std::size_t>(split)];
  MatrixD rows(static_cast<Eigen::Index>(ids.train_ids.size()), enc.d);
  std::vector<int> labels;
  for (std::size_t i = 0; i < ids.train_ids.size(); ++i) {
    const auto idx = manifest.index_of(ids.train_ids[i]);
    rows.row(static_cast<Eigen::Index>(i)) =
        enc.vectors.row(static_cast<Eigen::Index>(idx));
    labels.push_back(manifest.videos[idx].class_label);
  }
  SvmKind kind;
  if (kernel == "auto") {
    kind = (enc.method == Representation::bof_3a ||
            enc.method == Representation::bof_per_category_3b)
               ? SvmKind::chi2_kernel
               : SvmKind::linear;
  } else {
    kind = svm_kind_from_string(kernel);
  }
  SvmTrainOptions opt;
  opt.c = c;
  opt.seed = seed;
  const auto model =
      svm_train(rows, labels, manifest.num_classes(), kind, opt);
  model.save(out_path);
  std::printf("trained %d one-vs-all machines (%s, C=%.1f) -> %s\n",
              model.num_classes, to_string(model.kind), model.c,
              out_path.c_str());
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& enc_path,
                const std::string& manifest_path, int split,
                const std::string& subset, const std::string& out_path) {
  const auto model = SvmModel::load(model_path);
  const auto enc = EncodedDataset::load(enc_path);

  std::vector<std::size_t> rows_idx;
  if (!manifest_path.empty()) {
    const auto manifest = DatasetManifest::load(manifest_path);
    if (split < 0 ||
        static_cast<std::size_t>(split) >= manifest.splits.size()) {
      throw InvalidArgument("predict: split index out of range");
    }
    const auto& s = manifest.splits[static_cast<std::size_t>(split)];
    const auto& wanted = subset == "train" ? s.train_ids : s.test_ids;
    for (const auto& id : wanted) {
      for (std::size_t i = 0; i < enc.video_ids.size(); ++i) {
        if (enc.video_ids[i] == id) rows_idx.push_back(i);
      }
    }
  } else {
    for (std::size_t i = 0; i < enc.video_ids.size(); ++i) {
      rows_idx.push_back(i);
    }
  }

  MatrixD rows(static_cast<Eigen::Index>(rows_idx.size()), enc.d);
  std::vector<int> truth;
  for (std::size_t i = 0; i < rows_idx.size(); ++i) {
    rows.row(static_cast<Eigen::Index>(i)) =
        enc.vectors.row(static_cast<Eigen::Index>(rows_idx[i]));
    truth.push_back(enc.labels[rows_idx[i]]);
  }
  const Predictions pred = svm_predict(model, rows);

  if (!out_path.empty()) {
    atomic_write_file(out_path, [&](std::ostream& out) {
      out << "video_id\ttruth\tpredicted";
      for (int c = 0; c < model.num_classes; ++c) out << "\tscore" << c;
      out << "\n";
      for (std::size_t i = 0; i < rows_idx.size(); ++i) {
        out << enc.video_ids[rows_idx[i]] << '\t' << truth[i] << '\t'
            << pred.labels[i];
        for (int c = 0; c < model.num_classes; ++c) {
          out << '\t' << pred.scores(static_cast<Eigen::Index>(i), c);
        }
        out << "\n";
      }
    });
  }

  const double acc = accuracy(pred.labels, truth);
  const double f1 = mean_f1(pred.labels, truth, model.num_classes);
  std::printf("n=%zu  Acc=%.4f  mF1=%.4f", rows_idx.size(), acc, f1);
  try {
    std::printf("  mAP=%.4f", mean_average_precision(pred.scores, truth));
  } catch (const Error&) {
    // some class absent from this subset; mAP undefined
  }
  std::printf("\n");
  return 0;
}

int cmd_run(const std::string& config_path, int workers, bool resume) {
  const auto cfg = ExperimentConfig::load(config_path);
  ExperimentRunner runner(cfg);
  const auto records = runner.run_grid(workers, resume);
  emit_results(records, cfg.output_dir);
  int failed = 0;
  for (const auto& r : records) failed += r.failed ? 1 : 0;
  std::printf("grid: %zu cells, %d failed; results under %s\n",
              records.size(), failed, cfg.output_dir.c_str());
  return failed == 0 ? 0 : 2;
}

int cmd_report(const std::string& dir) {
  const auto records = load_records(dir);
  emit_results(records, dir);
  std::ifstream table(std::filesystem::path(dir) / "results_table.txt");
  std::cout << table.rdbuf();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"visual-vocabulary pipeline for action classification"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_out = "synth_data";
  SynthSpec spec;
  std::string scales_csv, layout_spec;
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--seed", spec.seed, "RNG seed");
  synth->add_option("--classes", spec.num_classes, "number of classes");
  synth->add_option("--videos-per-class", spec.videos_per_class,
                    "videos per class");
  synth->add_option("--features-per-video", spec.features_per_video,
                    "base feature count per video");
  synth->add_option("--jitter", spec.feature_count_jitter,
                    "relative feature-count jitter in [0,1)");
  synth->add_option("--class-scales", scales_csv,
                    "comma-separated per-class length scales");
  synth->add_option("--separation", spec.class_separation,
                    "class mixture separation");
  synth->add_option("--noise", spec.noise_sigma, "within-class noise sigma");
  synth->add_option("--mixtures", spec.mixture_components,
                    "mixture components per class/component");
  synth->add_option("--splits", spec.num_splits, "number of train/test splits");
  synth->add_option("--train-fraction", spec.train_fraction,
                    "train fraction per class");
  synth->add_option("--name", spec.name, "dataset name");
  synth->add_option("--layout", layout_spec,
                    "layout spec, e.g. traj:30,hog:96,...");

  // stats
  auto* stats = app.add_subcommand("stats", "per-dataset feature statistics");
  std::string stats_manifest;
  stats->add_option("--manifest", stats_manifest, "manifest path")
      ->required();

  // sample
  auto* sample =
      app.add_subcommand("sample", "build a feature pool (steps 2-6)");
  std::string sample_manifest, sample_mode = "balanced", sample_out = "pool";
  double sample_memory = 1.6;
  int sample_k = 256, sample_split = 0;
  std::uint64_t sample_seed = 0;
  sample->add_option("--manifest", sample_manifest, "manifest path")
      ->required();
  sample->add_option("--mode", sample_mode, "balanced|uniform");
  sample->add_option("--memory-gb", sample_memory, "memory budget M_Gb");
  sample->add_option("--k", sample_k, "cluster count (drives the pool cap)");
  sample->add_option("--seed", sample_seed, "RNG seed");
  sample->add_option("--split", sample_split, "split index");
  sample->add_option("--out", sample_out, "output prefix");

  // fit-vocab
  auto* fit = app.add_subcommand("fit-vocab", "fit vocabularies from a pool");
  std::string fit_pool = "pool", fit_scheme = "2a", fit_kind = "bof";
  std::string fit_out = "vocab.bin";
  int fit_k = 64, fit_pca = 24, fit_restarts = 8;
  std::uint64_t fit_seed = 0;
  fit->add_option("--pool", fit_pool, "pool prefix (from `sample`)");
  fit->add_option("--k", fit_k, "clusters per codebook");
  fit->add_option("--scheme", fit_scheme, "2a (per component) | 2b (joint)");
  fit->add_option("--kind", fit_kind, "bof|bof-percat|vlad|fisher");
  fit->add_option("--pca-dims", fit_pca, "PCA target dims (vlad/fisher)");
  fit->add_option("--restarts", fit_restarts, "k-means restarts");
  fit->add_option("--seed", fit_seed, "RNG seed");
  fit->add_option("--out", fit_out, "output vocabulary file");

  // encode
  auto* encode = app.add_subcommand("encode", "encode a dataset");
  std::string enc_manifest, enc_vocab, enc_method = "3a", enc_out = "enc.bin";
  encode->add_option("--manifest", enc_manifest, "manifest path")->required();
  encode->add_option("--vocab", enc_vocab, "vocabulary file")->required();
  encode->add_option("--method", enc_method, "3a|3b|3c|3d");
  encode->add_option("--out", enc_out, "output encodings file");

  // train
  auto* train = app.add_subcommand("train", "train 1-vs-all SVMs");
  std::string train_enc, train_manifest, train_kernel = "auto";
  std::string train_out = "model.bin";
  int train_split = 0;
  double train_c = 100.0;
  std::uint64_t train_seed = 0;
  train->add_option("--encodings", train_enc, "encoded dataset")->required();
  train->add_option("--manifest", train_manifest, "manifest path")->required();
  train->add_option("--split", train_split, "split index");
  train->add_option("--kernel", train_kernel, "auto|chi2|linear");
  train->add_option("--c", train_c, "regularization cost");
  train->add_option("--seed", train_seed, "RNG seed");
  train->add_option("--out", train_out, "output model file");

  // predict
  auto* predict = app.add_subcommand("predict", "predict and score");
  std::string pred_model, pred_enc, pred_manifest, pred_subset = "test";
  std::string pred_out;
  int pred_split = 0;
  predict->add_option("--model", pred_model, "model file")->required();
  predict->add_option("--encodings", pred_enc, "encoded dataset")->required();
  predict->add_option("--manifest", pred_manifest,
                      "manifest (restricts to a split subset)");
  predict->add_option("--split", pred_split, "split index");
  predict->add_option("--subset", pred_subset, "train|test");
  predict->add_option("--out", pred_out, "predictions TSV");

  // run
  auto* run = app.add_subcommand("run", "run an experiment grid");
  std::string run_config;
  int run_workers = 1;
  bool run_resume = false;
  run->add_option("--config", run_config, "config JSON")->required();
  run->add_option("--workers", run_workers, "parallel cells");
  run->add_flag("--resume", run_resume, "skip completed cells");

  // report
  auto* report = app.add_subcommand("report", "re-emit results for a grid");
  std::string report_dir;
  report->add_option("--dir", report_dir, "grid output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(synth_out, spec, scales_csv,
                                          layout_spec);
    if (stats->parsed()) return cmd_stats(stats_manifest);
    if (sample->parsed()) {
      return cmd_sample(sample_manifest, sample_mode, sample_memory, sample_k,
                        sample_seed, sample_split, sample_out);
    }
    if (fit->parsed()) {
      return cmd_fit_vocab(fit_pool, fit_k, fit_scheme, fit_kind, fit_pca,
                           fit_restarts, fit_seed, fit_out);
    }
    if (encode->parsed()) {
      return cmd_encode(enc_manifest, enc_vocab, enc_method, enc_out);
    }
    if (train->parsed()) {
      return cmd_train(train_enc, train_manifest, train_split, train_kernel,
                       train_c, train_seed, train_out);
    }
    if (predict->parsed()) {
      return cmd_predict(pred_model, pred_enc, pred_manifest, pred_split,
                         pred_subset, pred_out);
    }
    if (run->parsed()) return cmd_run(run_config, run_workers, run_resume);
    if (report->parsed()) return cmd_report(report_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
