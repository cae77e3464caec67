#include "oa/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace oa {

// ---- metrics ------------------------------------------------------------------

Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  Metrics m{tp, fp, fn, 0.0, 0.0, 0.0};
  if (tp + fp == 0) {
    m.precision = fn == 0 ? 1.0 : 0.0;
  } else {
    m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
  if (tp + fn == 0) {
    m.recall = fp == 0 ? 1.0 : 0.0;
  } else {
    m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
  const double s = m.precision + m.recall;
  m.f1 = s > 0.0 ? 2.0 * m.precision * m.recall / s : 0.0;
  return m;
}

Metrics token_f1(std::span<const int> pred, std::span<const int> gold, std::span<const std::uint8_t> score_mask) {
  if (pred.size() != gold.size() || (!score_mask.empty() && score_mask.size() != gold.size())) {
    throw std::invalid_argument("token_f1: length mismatch (pred " + std::to_string(pred.size()) + ", gold " +
                                std::to_string(gold.size()) + ", mask " + std::to_string(score_mask.size()) + ")");
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (!score_mask.empty() && score_mask[i] == 0) continue;
    const bool p = pred[i] == 1, g = gold[i] == 1;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  return metrics_from_counts(tp, fp, fn);
}

// ---- optimizer ----------------------------------------------------------------

void adam_update(std::span<double> theta, std::span<const double> grad, AdamMoments& moments, double lr,
                 std::uint64_t step, const AdamOptions& o) {
  if (moments.m.size() != theta.size()) {
    moments.m.assign(theta.size(), 0.0);
    moments.v.assign(theta.size(), 0.0);
  }
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad.empty() ? 0.0 : grad[i];
    double& m = moments.m[i];
    double& v = moments.v[i];
    m = o.beta1 * m + (1.0 - o.beta1) * g;
    v = o.beta2 * v + (1.0 - o.beta2) * g * g;
    theta[i] -= lr * (m / c1) / (std::sqrt(v / c2) + o.eps);
  }
}

Adam::Adam(ParamList params, AdamOptions options)
    : params_(std::move(params)), options_(options), moments_(params_.size()) {}

void Adam::step() {
  for (const auto& p : params_) {
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw std::runtime_error("non-finite gradient in parameter " + p.name);
    }
  }
  ++steps_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor t = params_[i].tensor;
    const double lr = params_[i].group == ParamGroup::kBackbone ? options_.lr_backbone : options_.lr_head;
    adam_update(t.mutable_data(), t.grad(), moments_[i], lr, steps_, options_);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

// ---- configuration ------------------------------------------------------------

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("train config: " + what); };
  if (!(lr_backbone >= 0.0) || !(lr_oa > 0.0)) fail("learning rates must be positive");
  if (batch_size == 0) fail("batch_size must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (max_len == 0) fail("max_len must be positive");
  if (max_epochs == 0) fail("max_epochs must be positive");
  if (k < 3) fail("k must be at least 3");
}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  const auto e = s.find('e');
  if (e == std::string::npos) return s;
  std::string mant = s.substr(0, e), exp = s.substr(e + 1);
  std::string sign;
  if (!exp.empty() && (exp[0] == '-' || exp[0] == '+')) {
    if (exp[0] == '-') sign = "-";
    exp.erase(0, 1);
  }
  exp.erase(0, std::min(exp.find_first_not_of('0'), exp.size() - 1));
  return mant + "e" + sign + exp;
}

std::string hyperparameter_string(const TrainConfig& c) {
  std::ostringstream s;
  s << "{lr_backbone: " << format_number(c.lr_backbone) << ", lr_oa: " << format_number(c.lr_oa)
    << ", batch: " << c.batch_size << ", dropout: " << format_number(c.dropout) << ", max_len: " << c.max_len
    << ", epochs: " << c.max_epochs << ", patience: " << c.patience << ", k: " << c.k << "}";
  return s.str();
}

// ---- training -----------------------------------------------------------------

Metrics evaluate(const ScopeModel& model, std::span<const PreparedSample> data) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& s : data) {
    const Prediction p = model.predict(s.seq);
    const Metrics m = token_f1(p.labels, s.labels, s.score_mask);
    tp += m.tp;
    fp += m.fp;
    fn += m.fn;
  }
  return metrics_from_counts(tp, fp, fn);
}

Trainer::Trainer(ScopeModel& model, const TrainConfig& cfg, std::uint64_t seed)
    : model_(model), cfg_(cfg), adam_(model.parameters(), AdamOptions{cfg.lr_backbone, cfg.lr_oa}), rng_(seed) {}

double Trainer::train_epoch(std::span<const PreparedSample> data) {
  if (data.empty()) throw std::invalid_argument("train_epoch: empty training set");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  rng_.shuffle(std::span(order));

  double loss_sum = 0.0;
  std::size_t tokens = 0;
  for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
    const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
    std::size_t batch_tokens = 0;
    for (std::size_t b = start; b < end; ++b) batch_tokens += data[order[b]].seq.size();
    adam_.zero_grad();
    for (std::size_t b = start; b < end; ++b) {
      const PreparedSample& s = data[order[b]];
      const Tensor loss = token_loss(model_.logits(s.seq, RunMode::train(rng_)), s.labels);
      const double weight = static_cast<double>(s.seq.size()) / static_cast<double>(batch_tokens);
      scale(loss, weight).backward();
      loss_sum += loss.item() * static_cast<double>(s.seq.size());
    }
    adam_.step();
    tokens += batch_tokens;
  }
  return loss_sum / static_cast<double>(tokens);
}

FoldReport train_fold(const FoldData& data, const ModelConfig& model_cfg, const TrainConfig& cfg, std::size_t fold,
                      std::uint64_t seed, std::shared_ptr<const EmbeddingTable> table, ScopeModel* trained,
                      const std::function<double(const ScopeModel&, std::size_t)>& val_metric) {
  if (data.train.empty() || data.val.empty() || data.test.empty()) {
    throw std::invalid_argument("train_fold: fold " + std::to_string(fold) + " has an empty split");
  }
  const auto t0 = std::chrono::steady_clock::now();
  Rng init_rng(Rng::derive(seed, 1));
  ScopeModel model = ScopeModel::init(model_cfg, init_rng);
  if (table) model.backbone.set_table(table);
  Trainer trainer(model, cfg, Rng::derive(seed, 2));
  const ParamList params = model.parameters();

  FoldReport r;
  r.fold = fold;
  r.seed = seed;
  double best = -1.0;
  std::vector<std::vector<double>> best_values;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    trainer.train_epoch(data.train);
    const double f1 = val_metric ? val_metric(model, epoch) : evaluate(model, data.val).f1;
    r.val_f1.push_back(f1);
    r.epochs_run = epoch;
    if (f1 > best) {
      best = f1;
      best_values = snapshot(params);
      r.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  restore(params, best_values);
  r.best_val_f1 = best;
  const Metrics test = evaluate(model, data.test);
  r.precision = test.precision;
  r.recall = test.recall;
  r.f1 = test.f1;
  r.tp = test.tp;
  r.fp = test.fp;
  r.fn = test.fn;
  r.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (trained) *trained = model;
  return r;
}

void summarize(RunSummary& s) {
  s.macro_precision = s.macro_recall = s.macro_f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& f : s.folds) {
    s.macro_precision += f.precision;
    s.macro_recall += f.recall;
    s.macro_f1 += f.f1;
    tp += f.tp;
    fp += f.fp;
    fn += f.fn;
  }
  if (!s.folds.empty()) {
    const double n = static_cast<double>(s.folds.size());
    s.macro_precision /= n;
    s.macro_recall /= n;
    s.macro_f1 /= n;
  }
  s.pooled = metrics_from_counts(tp, fp, fn);
}

namespace {

struct Prepared {
  std::vector<PreparedSample> samples;  // usable samples in input order
  std::vector<std::ptrdiff_t> index;    // input position -> position in `samples`, -1 when skipped
};

Prepared prepare(std::span<const ScopeSample> samples, const RunOptions& opts) {
  Prepared p;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto s = preprocess(samples[i], opts.train.prep, opts.model.backbone.vocab_size, opts.train.max_len,
                        static_cast<std::uint32_t>(i));
    if (s) {
      p.index.push_back(static_cast<std::ptrdiff_t>(p.samples.size()));
      p.samples.push_back(std::move(*s));
    } else {
      p.index.push_back(-1);
      std::cerr << "warning: skipping sample " << samples[i].id << ": cue tokens do not fit in max_len "
                << opts.train.max_len << "\n";
    }
  }
  return p;
}

std::vector<PreparedSample> pick(const std::vector<PreparedSample>& all, std::span<const std::size_t> idx) {
  std::vector<PreparedSample> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(all[i]);
  return out;
}

RunSummary new_summary(const RunOptions& opts) {
  RunSummary s;
  s.variant = std::string(variant_name(opts.train.variant));
  s.preprocessing = std::string(prep_name(opts.train.prep));
  s.train_set = opts.train_set;
  s.test_set = opts.test_set.empty() ? opts.train_set : opts.test_set;
  s.use_pooled = opts.train.pooled;
  return s;
}

// Runs jobs [0, n) on up to `jobs` threads; results land at their own index.
void run_folds(std::size_t n, const RunOptions& opts, const std::function<FoldData(std::size_t)>& data_for,
               const std::function<std::uint64_t(std::size_t)>& seed_for, std::vector<FoldReport>& out) {
  out.assign(n, {});
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr error;
  auto worker = [&] {
    for (std::size_t f; (f = next.fetch_add(1)) < n;) {
      try {
        ScopeModel model;
        out[f] = train_fold(data_for(f), opts.model, opts.train, f, seed_for(f), opts.table, &model);
        if (opts.on_fold) {
          std::lock_guard lock(mu);
          opts.on_fold(f, model);
        }
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(opts.jobs, n));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

ModelConfig effective_model(const RunOptions& opts) {
  ModelConfig m = opts.model;
  m.oa.variant = opts.train.variant;
  m.oa.dropout_p = opts.train.dropout;
  m.dropout_p = opts.train.dropout;
  m.backbone.max_len = std::max(m.backbone.max_len, opts.train.max_len);
  return m;
}

}  // namespace

RunSummary run_cv(std::span<const ScopeSample> samples, const RunOptions& in) {
  RunOptions opts = in;
  opts.train.validate();
  opts.model = effective_model(in);
  const Prepared data = prepare(samples, opts);
  const auto splits = kfold_split(data.samples.size(), opts.train.k, opts.train.seed);
  RunSummary s = new_summary(opts);
  run_folds(
      splits.size(), opts,
      [&](std::size_t f) {
        return FoldData{pick(data.samples, splits[f].train), pick(data.samples, splits[f].val),
                        pick(data.samples, splits[f].test)};
      },
      [&](std::size_t f) { return Rng::derive(opts.train.seed, 100 + f); }, s.folds);
  summarize(s);
  return s;
}

RunSummary run_fixed_split(std::span<const ScopeSample> samples, const RunOptions& in) {
  RunOptions opts = in;
  opts.train.validate();
  opts.model = effective_model(in);
  const Prepared data = prepare(samples, opts);
  const FoldSplit raw = sherlock_split(samples);
  auto remap = [&](const std::vector<std::size_t>& idx) {
    std::vector<std::size_t> out;
    for (std::size_t i : idx)
      if (data.index[i] >= 0) out.push_back(static_cast<std::size_t>(data.index[i]));
    return out;
  };
  const FoldData fold{pick(data.samples, remap(raw.train)), pick(data.samples, remap(raw.val)),
                      pick(data.samples, remap(raw.test))};
  RunSummary s = new_summary(opts);
  run_folds(
      opts.repeats, opts, [&](std::size_t) { return fold; },
      [&](std::size_t r) { return Rng::derive(opts.train.seed, 100 + r); }, s.folds);
  summarize(s);
  return s;
}

RunSummary run_crossdataset(std::span<const ScopeSample> train_set, std::span<const ScopeSample> test_set,
                            const RunOptions& in) {
  RunOptions opts = in;
  opts.train.validate();
  opts.model = effective_model(in);
  if (opts.table) throw std::invalid_argument("cross-dataset runs do not support precomputed embeddings");
  const Prepared a = prepare(train_set, opts);
  const Prepared b = prepare(test_set, opts);
  const auto split_a = kfold_split(a.samples.size(), opts.train.k, opts.train.seed);
  const auto split_b = kfold_split(b.samples.size(), opts.train.k, opts.train.seed);
  RunSummary s = new_summary(opts);
  run_folds(
      split_a.size(), opts,
      [&](std::size_t f) {
        return FoldData{pick(a.samples, split_a[f].train), pick(a.samples, split_a[f].val),
                        pick(b.samples, split_b[f].test)};
      },
      [&](std::size_t f) { return Rng::derive(opts.train.seed, 100 + f); }, s.folds);
  summarize(s);
  return s;
}

// ---- reports ------------------------------------------------------------------

namespace {

double round4(double v) { return std::round(v * 1e4) / 1e4; }

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", round4(v) == 0.0 ? 0.0 : v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> csv_split(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view l = text.substr(pos, end - pos);
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    if (!l.empty()) out.push_back(l);
    pos = end + 1;
  }
  return out;
}

double to_double(const std::string& s) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::invalid_argument("bad number '" + s + "'");
  return v;
}

ReportRow row_from_fields(const std::vector<std::string>& f) {
  if (f.size() != 11) throw std::invalid_argument("report row has " + std::to_string(f.size()) + " fields");
  ReportRow r;
  r.variant = f[0];
  r.preprocessing = f[1];
  r.train_set = f[2];
  r.test_set = f[3];
  r.metric = f[4];
  r.folds = static_cast<std::size_t>(std::stoul(f[5]));
  r.precision = to_double(f[6]);
  r.recall = to_double(f[7]);
  r.f1 = to_double(f[8]);
  r.diff_to_best = to_double(f[9]);
  r.best = f[10] == "yes";
  return r;
}

constexpr const char* kCsvHeader = "variant,preprocessing,train_set,test_set,metric,folds,precision,recall,f1,"
                                   "diff_to_best,best";

}  // namespace

std::vector<ReportRow> make_report(std::span<const RunSummary> summaries) {
  std::vector<ReportRow> rows;
  for (const auto& s : summaries) {
    ReportRow r;
    r.variant = s.variant;
    r.preprocessing = s.preprocessing;
    r.train_set = s.train_set;
    r.test_set = s.test_set;
    r.metric = s.use_pooled ? "pooled" : "macro";
    r.folds = s.folds.size();
    r.precision = round4(s.use_pooled ? s.pooled.precision : s.macro_precision);
    r.recall = round4(s.use_pooled ? s.pooled.recall : s.macro_recall);
    r.f1 = round4(s.score());
    rows.push_back(r);
  }
  std::map<std::pair<std::string, std::string>, double> best;
  for (const auto& r : rows) {
    auto key = std::make_pair(r.train_set, r.test_set);
    auto it = best.find(key);
    if (it == best.end() || r.f1 > it->second) best[key] = r.f1;
  }
  for (auto& r : rows) {
    const double b = best[{r.train_set, r.test_set}];
    r.diff_to_best = round4(r.f1 - b);
    r.best = r.f1 == b;
  }
  return rows;
}

std::string report_csv(std::span<const ReportRow> rows) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : rows) {
    out += csv_field(r.variant) + "," + csv_field(r.preprocessing) + "," + csv_field(r.train_set) + "," +
           csv_field(r.test_set) + "," + r.metric + "," + std::to_string(r.folds) + "," + fixed4(r.precision) +
           "," + fixed4(r.recall) + "," + fixed4(r.f1) + "," + fixed4(r.diff_to_best) + "," +
           (r.best ? "yes" : "no") + "\n";
  }
  return out;
}

std::string report_markdown(std::span<const ReportRow> rows) {
  std::string out =
      "| variant | preprocessing | train | test | metric | folds | precision | recall | F1 | diff to best | best |\n"
      "|---|---|---|---|---|---:|---:|---:|---:|---:|---|\n";
  for (const auto& r : rows) {
    const std::string f1 = r.best ? "**" + fixed4(r.f1) + "**" : fixed4(r.f1);
    out += "| " + r.variant + " | " + r.preprocessing + " | " + r.train_set + " | " + r.test_set + " | " + r.metric +
           " | " + std::to_string(r.folds) + " | " + fixed4(r.precision) + " | " + fixed4(r.recall) + " | " + f1 +
           " | " + fixed4(r.diff_to_best) + " | " + (r.best ? "yes" : "no") + " |\n";
  }
  return out;
}

std::vector<ReportRow> parse_report_csv(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0] != kCsvHeader) throw std::invalid_argument("report CSV: unexpected header");
  std::vector<ReportRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) rows.push_back(row_from_fields(csv_split(lines[i])));
  return rows;
}

std::vector<ReportRow> parse_report_markdown(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.size() < 2) throw std::invalid_argument("report markdown: missing header");
  std::vector<ReportRow> rows;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    std::vector<std::string> cells;
    std::string_view l = lines[i];
    if (l.size() < 2 || l.front() != '|' || l.back() != '|') throw std::invalid_argument("report markdown: bad row");
    l = l.substr(1, l.size() - 2);
    std::size_t pos = 0;
    while (true) {
      const std::size_t bar = l.find('|', pos);
      std::string cell(l.substr(pos, bar == std::string_view::npos ? std::string_view::npos : bar - pos));
      cell.erase(0, cell.find_first_not_of(' '));
      cell.erase(cell.find_last_not_of(' ') + 1);
      if (cell.size() > 4 && cell.starts_with("**") && cell.ends_with("**")) cell = cell.substr(2, cell.size() - 4);
      cells.push_back(cell);
      if (bar == std::string_view::npos) break;
      pos = bar + 1;
    }
    rows.push_back(row_from_fields(cells));
  }
  return rows;
}

// ---- benchmark ----------------------------------------------------------------

std::vector<BenchRow> bench(const ModelConfig& base, std::span<const Variant> variants,
                            std::span<const std::size_t> batch_sizes, std::size_t repeats, std::uint64_t seed,
                            std::size_t seq_len) {
  using clock = std::chrono::steady_clock;
  std::vector<BenchRow> rows;
  for (Variant v : variants) {
    ModelConfig cfg = base;
    cfg.oa.variant = v;
    cfg.backbone.kind = BackboneKind::kToyEncoder;
    Rng rng(seed);
    const ScopeModel model = ScopeModel::init(cfg, rng);
    const std::size_t max_batch = batch_sizes.empty() ? 0 : *std::max_element(batch_sizes.begin(), batch_sizes.end());
    std::vector<TokenSequence> seqs(max_batch);
    for (auto& s : seqs) {
      for (std::size_t i = 0; i < seq_len; ++i) {
        s.token_ids.push_back(1 + static_cast<int>(rng.below(cfg.backbone.vocab_size - 1)));
        s.words.push_back("w");
      }
      s.cue_ids = {seq_len / 2};
    }
    for (std::size_t batch : batch_sizes) {
      auto run = [&] {
        for (std::size_t b = 0; b < batch; ++b) model.logits(seqs[b], RunMode::eval());
      };
      run();  // warm-up
      std::vector<double> ms;
      for (std::size_t r = 0; r < repeats; ++r) {
        const auto t0 = clock::now();
        run();
        ms.push_back(std::chrono::duration<double, std::milli>(clock::now() - t0).count());
      }
      std::sort(ms.begin(), ms.end());
      const std::size_t n = ms.size();
      const double median = n % 2 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
      rows.push_back({v, batch, repeats, median, ms.front(), ms.back()});
    }
  }
  return rows;
}

std::string bench_table(std::span<const BenchRow> rows) {
  std::string out = "variant  batch  repeats  median_ms  min_ms  max_ms  ms_per_seq\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-7s  %5zu  %7zu  %9.3f  %6.3f  %6.3f  %10.3f\n",
                  std::string(variant_name(r.variant)).c_str(), r.batch, r.repeats, r.median_ms, r.min_ms, r.max_ms,
                  r.median_ms / static_cast<double>(r.batch));
    out += buf;
  }
  return out;
}

}  // namespace oa
