// Command-line entry point: ingest, train, eval, gradcheck, bench, synth.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "oa/checkpoint.hpp"
#include "oa/config.hpp"
#include "oa/corpus.hpp"
#include "oa/experiment.hpp"
#include "oa/gradient_suite.hpp"
#include "oa/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

std::vector<oa::Variant> parse_variants(const std::string& s) {
  if (s == "all") return {std::begin(oa::kAllVariants), std::end(oa::kAllVariants)};
  std::vector<oa::Variant> out;
  std::stringstream in(s);
  for (std::string part; std::getline(in, part, ',');) out.push_back(oa::parse_variant(part));
  return out;
}

// ---- ingest ---------------------------------------------------------------

struct IngestArgs {
  std::string format, in, out, source, split;
};

int cmd_ingest(const IngestArgs& a) {
  const std::string text = read_file(a.in);
  std::vector<oa::RawSentence> sentences;
  if (a.format == "sem") {
    sentences = oa::parse_sem_conll(text);
  } else {
    sentences = oa::parse_bioscope_xml(text);
  }
  const std::string source = a.source.empty() ? fs::path(a.in).stem().string() : a.source;
  std::vector<oa::ScopeSample> samples;
  for (const auto& s : sentences) {
    for (auto& sample : oa::explode(s, source)) {
      sample.split = a.split;
      samples.push_back(std::move(sample));
    }
  }
  ensure_parent(a.out);
  oa::write_jsonl(a.out, samples);
  const auto st = oa::dataset_stats(sentences);
  std::cout << "sentences=" << st.sentences << " negated_sentences=" << st.negated_sentences
            << " samples=" << st.samples << "\n";
  return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string config, variant, prep, data, test_data, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
};

json fold_json(const oa::FoldReport& f) {
  return {{"fold", f.fold},
          {"seed", f.seed},
          {"precision", f.precision},
          {"recall", f.recall},
          {"f1", f.f1},
          {"tp", f.tp},
          {"fp", f.fp},
          {"fn", f.fn},
          {"best_epoch", f.best_epoch},
          {"epochs_run", f.epochs_run},
          {"best_val_f1", f.best_val_f1},
          {"val_f1", f.val_f1},
          {"train_seconds", f.train_seconds}};
}

int cmd_train(const TrainArgs& a) {
  oa::RunConfig cfg = a.config.empty() ? oa::RunConfig{} : oa::load_run_config(a.config);
  if (const char* env = std::getenv("OA_SEED")) {
    try {
      cfg.train.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw std::invalid_argument(std::string("OA_SEED is not an unsigned integer: ") + env);
    }
  }
  if (a.seed) cfg.train.seed = *a.seed;
  if (a.jobs) cfg.jobs = *a.jobs;
  if (!a.variant.empty()) cfg.train.variant = oa::parse_variant(a.variant);
  if (!a.prep.empty()) cfg.train.prep = oa::parse_prep(a.prep);
  if (!a.data.empty()) cfg.data = a.data;
  if (!a.test_data.empty()) cfg.test_data = a.test_data;
  cfg.sync();
  cfg.validate();
  if (cfg.data.empty()) throw std::invalid_argument("no training data: pass --data or set \"data\" in the config");

  const auto samples = oa::read_jsonl(cfg.data);
  fs::create_directories(a.out);
  const std::string config_text = oa::dump_run_config(cfg);
  write_file(fs::path(a.out) / "config.json", config_text);

  oa::RunOptions opts;
  opts.model = cfg.model;
  opts.train = cfg.train;
  opts.jobs = cfg.jobs;
  opts.repeats = cfg.repeats;
  opts.train_set = fs::path(cfg.data).stem().string();
  opts.test_set = cfg.test_data.empty() ? opts.train_set : fs::path(cfg.test_data).stem().string();
  if (cfg.model.backbone.kind == oa::BackboneKind::kPrecomputed) {
    opts.table = std::make_shared<oa::EmbeddingTable>(oa::load_precomputed(cfg.model.backbone.path, cfg.model.oa.d));
  }
  if (cfg.save_checkpoints) {
    opts.on_fold = [&](std::size_t fold, const oa::ScopeModel& model) {
      oa::write_checkpoint((fs::path(a.out) / ("fold" + std::to_string(fold) + ".ckpt")).string(), config_text,
                           model.parameters());
    };
  }

  oa::RunSummary summary;
  if (cfg.protocol == "fixed") {
    summary = oa::run_fixed_split(samples, opts);
  } else if (!cfg.test_data.empty()) {
    const auto test = oa::read_jsonl(cfg.test_data);
    summary = oa::run_crossdataset(samples, test, opts);
  } else {
    summary = oa::run_cv(samples, opts);
  }

  for (const auto& f : summary.folds) {
    json j = fold_json(f);
    j["hyperparameters"] = oa::hyperparameter_string(cfg.train);
    write_file(fs::path(a.out) / ("fold" + std::to_string(f.fold) + ".json"), j.dump(2) + "\n");
  }
  const auto rows = oa::make_report(std::span(&summary, 1));
  write_file(fs::path(a.out) / "summary.csv", oa::report_csv(rows));
  write_file(fs::path(a.out) / "summary.md", oa::report_markdown(rows));
  std::cout << oa::report_markdown(rows);
  return 0;
}

// ---- eval -----------------------------------------------------------------

int cmd_eval(const std::string& checkpoint, const std::string& data) {
  const oa::Checkpoint ckpt = oa::read_checkpoint(checkpoint);
  oa::RunConfig cfg = oa::parse_run_config(ckpt.metadata);
  oa::Rng rng(0);
  oa::ScopeModel model = oa::ScopeModel::init(cfg.model, rng);
  oa::load_parameters(ckpt, model.parameters());
  if (cfg.model.backbone.kind == oa::BackboneKind::kPrecomputed) {
    model.backbone.set_table(
        std::make_shared<oa::EmbeddingTable>(oa::load_precomputed(cfg.model.backbone.path, cfg.model.oa.d)));
  }
  const auto samples = oa::read_jsonl(data);
  const auto prepared = oa::prepare_all(samples, cfg.train.prep, cfg.model.backbone.vocab_size, cfg.train.max_len);
  for (const auto& id : prepared.skipped) std::cerr << "warning: skipping sample " << id << "\n";
  const oa::Metrics m = oa::evaluate(model, prepared.samples);
  json j = {{"samples", prepared.samples.size()}, {"precision", m.precision}, {"recall", m.recall},
            {"f1", m.f1},  {"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}};
  std::cout << j.dump() << "\n";
  return 0;
}

// ---- gradcheck / bench / synth ---------------------------------------------

int cmd_gradcheck(const std::string& variants, std::size_t d, std::size_t heads, std::uint64_t seed,
                  std::size_t probes, bool ops) {
  oa::GradCheckOptions o;
  o.probes = probes;
  std::vector<oa::GradCheckRow> rows;
  if (ops) rows = oa::op_gradient_suite(seed, o);
  for (oa::Variant v : parse_variants(variants)) {
    auto part = oa::layer_gradient_suite(v, d, heads, seed, o);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  std::cout << oa::gradcheck_table(rows);
  for (const auto& r : rows)
    if (!r.report.passed()) return 1;
  return 0;
}

int cmd_bench(const std::string& variants, const std::vector<std::size_t>& batches, std::size_t repeats,
              std::size_t d, std::size_t heads, std::size_t seq_len, std::uint64_t seed) {
  oa::ModelConfig cfg;
  cfg.oa.d = cfg.backbone.d = d;
  cfg.oa.n_heads = cfg.backbone.n_heads = heads;
  const auto vs = parse_variants(variants);
  const auto rows = oa::bench(cfg, vs, batches, repeats, seed, seq_len);
  std::cout << oa::bench_table(rows);
  return 0;
}

int cmd_synth(std::size_t count, std::uint64_t seed, const std::string& out) {
  const auto samples = oa::synthesize(count, seed);
  ensure_parent(out);
  oa::write_jsonl(out, samples);
  std::cout << "samples=" << samples.size() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Orthogonal attention for negation scope resolution"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Convert a *sem CoNLL or BioScope XML file to canonical JSONL");
  c_ingest->add_option("--format", ingest.format, "Input format")->required()->check(
      CLI::IsMember({"sem", "bioscope"}));
  c_ingest->add_option("--in", ingest.in, "Input file")->required()->check(CLI::ExistingFile);
  c_ingest->add_option("--out", ingest.out, "Output JSONL path")->required();
  c_ingest->add_option("--source", ingest.source, "Dataset tag (default: input file stem)");
  c_ingest->add_option("--split", ingest.split, "Fixed-split tag for every sample")->check(
      CLI::IsMember({"train", "dev", "test"}));

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Cross-validated (or fixed-split) training run");
  c_train->add_option("--config", train.config, "JSON run config")->check(CLI::ExistingFile);
  c_train->add_option("--variant", train.variant, "em | emb | c | ca")->check(
      CLI::IsMember({"em", "emb", "c", "ca"}));
  c_train->add_option("--prep", train.prep, "normal | augment")->check(CLI::IsMember({"normal", "augment"}));
  c_train->add_option("--data", train.data, "Training JSONL")->check(CLI::ExistingFile);
  c_train->add_option("--test-data", train.test_data, "Cross-dataset test JSONL")->check(CLI::ExistingFile);
  c_train->add_option("--seed", train.seed, "Run seed (overrides OA_SEED and the config)");
  c_train->add_option("--jobs", train.jobs, "Folds trained in parallel")->check(CLI::PositiveNumber);
  c_train->add_option("--out", train.out, "Run directory")->required();

  std::string eval_ckpt, eval_data;
  auto* c_eval = app.add_subcommand("eval", "Evaluate a fold checkpoint on a JSONL file");
  c_eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--data", eval_data, "JSONL samples")->required()->check(CLI::ExistingFile);

  std::string gc_variant = "all";
  std::size_t gc_d = 64, gc_heads = 4, gc_probes = 100;
  std::uint64_t gc_seed = 7;
  bool gc_ops = false;
  auto* c_grad = app.add_subcommand("gradcheck", "Central-difference gradient checks per layer");
  c_grad->add_option("--variant", gc_variant, "em | emb | c | ca | all, comma separated");
  c_grad->add_option("--d", gc_d, "Model width");
  c_grad->add_option("--heads", gc_heads, "OA heads");
  c_grad->add_option("--probes", gc_probes, "Probes per check");
  c_grad->add_option("--seed", gc_seed, "Seed");
  c_grad->add_flag("--ops", gc_ops, "Also check every tensor operation");

  std::string b_variant = "all";
  std::vector<std::size_t> b_batches = {1, 8, 32};
  std::size_t b_repeats = 10, b_d = 64, b_heads = 4, b_len = 16;
  std::uint64_t b_seed = 7;
  auto* c_bench = app.add_subcommand("bench", "Inference timing per variant and batch size");
  c_bench->add_option("--variant", b_variant, "em | emb | c | ca | all, comma separated");
  c_bench->add_option("--batch-sizes", b_batches, "Batch sizes")->delimiter(',');
  c_bench->add_option("--repeats", b_repeats, "Timed repeats (median reported)")->check(CLI::Range(10, 100000));
  c_bench->add_option("--d", b_d, "Model width");
  c_bench->add_option("--heads", b_heads, "Heads");
  c_bench->add_option("--seq-len", b_len, "Tokens per sequence");
  c_bench->add_option("--seed", b_seed, "Seed");

  std::size_t s_count = 64;
  std::uint64_t s_seed = 64;
  std::string s_out;
  auto* c_synth = app.add_subcommand("synth", "Write a synthetic negation corpus");
  c_synth->add_option("--count", s_count, "Samples");
  c_synth->add_option("--seed", s_seed, "Seed");
  c_synth->add_option("--out", s_out, "Output JSONL")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_ingest) return cmd_ingest(ingest);
    if (*c_train) return cmd_train(train);
    if (*c_eval) return cmd_eval(eval_ckpt, eval_data);
    if (*c_grad) return cmd_gradcheck(gc_variant, gc_d, gc_heads, gc_seed, gc_probes, gc_ops);
    if (*c_bench) return cmd_bench(b_variant, b_batches, b_repeats, b_d, b_heads, b_len, b_seed);
    if (*c_synth) return cmd_synth(s_count, s_seed, s_out);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& ch : msg)
      if (ch == '\n') ch = ' ';
    std::cerr << "error: " << msg << "\n";
    return 1;
  }
  return 0;
}
