#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "oa/corpus.hpp"
#include "oa/scope_model.hpp"

namespace oa {

// ---- metrics ------------------------------------------------------------------

struct Metrics {
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

// Positive class is label 1. With no predicted positives P is 0 unless there
// are also no gold positives (then P = R = F1 = 1); symmetric for R.
Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

// Positions with score_mask == 0 are ignored; an empty mask scores all.
Metrics token_f1(std::span<const int> pred, std::span<const int> gold, std::span<const std::uint8_t> score_mask = {});

// ---- optimizer ----------------------------------------------------------------

struct AdamOptions {
  double lr_backbone = 3e-5;
  double lr_head = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  std::vector<double> m, v;
};

// One bias-corrected Adam update; `step` counts from 1.
void adam_update(std::span<double> theta, std::span<const double> grad, AdamMoments& moments, double lr,
                 std::uint64_t step, const AdamOptions& options);

// Adam over a parameter list with one learning rate per ParamGroup.
class Adam {
 public:
  Adam(ParamList params, AdamOptions options);

  // Applies the accumulated gradients. Throws std::runtime_error naming the
  // parameter when a gradient is not finite; nothing is updated then.
  void step();
  void zero_grad();
  std::uint64_t steps() const { return steps_; }

 private:
  ParamList params_;
  AdamOptions options_;
  std::vector<AdamMoments> moments_;
  std::uint64_t steps_ = 0;
};

// ---- training -----------------------------------------------------------------

struct TrainConfig {
  double lr_backbone = 3e-5;
  double lr_oa = 1e-4;
  std::size_t batch_size = 32;
  double dropout = 0.3;
  std::size_t max_len = 128;
  std::size_t max_epochs = 60;
  std::size_t patience = 6;
  std::size_t k = 10;
  std::uint64_t seed = 1;
  Variant variant = Variant::kEM;
  Prep prep = Prep::kNormal;
  bool pooled = false;  // report pooled-token F1 instead of the fold macro average

  void validate() const;
};

// "{lr_backbone: 3e-5, lr_oa: 1e-4, batch: 32, dropout: 0.3, max_len: 128,
//   epochs: 60, patience: 6, k: 10}" for the defaults.
std::string hyperparameter_string(const TrainConfig& cfg);

// Shortest round-tripping decimal with a compact exponent ("3e-5", "0.3").
std::string format_number(double v);

// Pooled token metrics of the model's eval-mode predictions.
Metrics evaluate(const ScopeModel& model, std::span<const PreparedSample> data);

// Minibatch trainer. A batch is the token-weighted mean of per-sample losses,
// which equals a padded batch with padding masked out.
class Trainer {
 public:
  Trainer(ScopeModel& model, const TrainConfig& cfg, std::uint64_t seed);

  // One shuffled pass; returns the mean token loss.
  double train_epoch(std::span<const PreparedSample> data);
  std::uint64_t steps() const { return adam_.steps(); }

 private:
  ScopeModel& model_;
  TrainConfig cfg_;
  Adam adam_;
  Rng rng_;
};

struct FoldReport {
  std::size_t fold = 0;
  std::uint64_t seed = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  double best_val_f1 = 0.0;
  std::vector<double> val_f1;  // per epoch
  double train_seconds = 0.0;
};

struct FoldData {
  std::vector<PreparedSample> train, val, test;
};

// Trains up to max_epochs, keeps the snapshot with the best validation F1
// (strict improvement), stops after `patience` epochs without improvement
// and reports test metrics of the restored snapshot. `val_metric` replaces
// the validation F1 computation when given (used by tests).
FoldReport train_fold(const FoldData& data, const ModelConfig& model_cfg, const TrainConfig& cfg, std::size_t fold,
                      std::uint64_t seed, std::shared_ptr<const EmbeddingTable> table = nullptr,
                      ScopeModel* trained = nullptr,
                      const std::function<double(const ScopeModel&, std::size_t epoch)>& val_metric = {});

struct RunSummary {
  std::string variant, preprocessing, train_set, test_set;
  std::vector<FoldReport> folds;
  double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
  Metrics pooled;
  bool use_pooled = false;

  double score() const { return use_pooled ? pooled.f1 : macro_f1; }
};

// Averages and pooled counts over the fold reports.
void summarize(RunSummary& summary);

struct RunOptions {
  ModelConfig model;
  TrainConfig train;
  std::size_t jobs = 1;
  std::size_t repeats = 10;  // fixed-split repetitions
  std::shared_ptr<const EmbeddingTable> table;
  std::string train_set = "data", test_set;
  // Called with each finished fold's trained model (possibly from a worker thread).
  std::function<void(std::size_t fold, const ScopeModel&)> on_fold;
};

// k-fold CV over one dataset.
RunSummary run_cv(std::span<const ScopeSample> samples, const RunOptions& opts);
// Fixed train/dev/test split, `repeats` runs with seeds derived from the run seed.
RunSummary run_fixed_split(std::span<const ScopeSample> samples, const RunOptions& opts);
// Trains on fold splits of A, tests each fold on the matching test fold of B.
RunSummary run_crossdataset(std::span<const ScopeSample> train_set, std::span<const ScopeSample> test_set,
                            const RunOptions& opts);

// ---- reports ------------------------------------------------------------------

struct ReportRow {
  std::string variant, preprocessing, train_set, test_set;
  std::string metric;  // "macro" or "pooled"
  std::size_t folds = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  double diff_to_best = 0.0;  // f1 minus the best f1 of the same (train, test) pair
  bool best = false;
};

std::vector<ReportRow> make_report(std::span<const RunSummary> summaries);
// Values are written with 4 decimals; parse functions read them back.
std::string report_csv(std::span<const ReportRow> rows);
std::string report_markdown(std::span<const ReportRow> rows);
std::vector<ReportRow> parse_report_csv(std::string_view text);
std::vector<ReportRow> parse_report_markdown(std::string_view text);

// ---- benchmark ----------------------------------------------------------------

struct BenchRow {
  Variant variant = Variant::kEM;
  std::size_t batch = 1;
  std::size_t repeats = 0;
  double median_ms = 0.0, min_ms = 0.0, max_ms = 0.0;
};

// Eval-mode forward time of `batch` sequences of length `seq_len`, after one
// warm-up pass, median over `repeats`.
std::vector<BenchRow> bench(const ModelConfig& base, std::span<const Variant> variants,
                            std::span<const std::size_t> batch_sizes, std::size_t repeats, std::uint64_t seed,
                            std::size_t seq_len = 16);

std::string bench_table(std::span<const BenchRow> rows);

}  // namespace oa
