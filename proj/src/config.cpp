#include "oa/config.hpp"

#include <fstream>
#include <iterator>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace oa {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw std::invalid_argument("unknown config key '" + where + key + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception&) {
      throw std::invalid_argument(std::string("config key '") + key + "' has the wrong type");
    }
  }
}

}  // namespace

void RunConfig::sync() {
  model.oa.variant = train.variant;
  model.oa.dropout_p = train.dropout;
  model.dropout_p = train.dropout;
  model.backbone.d = model.oa.d;
  model.backbone.max_len = train.max_len;
}

void RunConfig::validate() const {
  train.validate();
  model.validate();
  if (protocol != "cv" && protocol != "fixed") {
    throw std::invalid_argument("protocol must be cv or fixed, got '" + protocol + "'");
  }
  if (repeats == 0) throw std::invalid_argument("repeats must be positive");
  if (jobs == 0) throw std::invalid_argument("jobs must be positive");
  if (protocol == "fixed" && !test_data.empty()) {
    throw std::invalid_argument("fixed-split protocol takes its test part from the data file; drop test_data");
  }
}

RunConfig parse_run_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j,
                 {"lr_backbone", "lr_oa", "batch_size", "dropout", "max_len", "max_epochs", "patience", "k", "seed",
                  "variant", "preprocessing", "pooled", "protocol", "repeats", "jobs", "save_checkpoints", "data",
                  "test_data", "d", "oa", "backbone"},
                 "");
  RunConfig c;
  TrainConfig& t = c.train;
  read(j, "lr_backbone", t.lr_backbone);
  read(j, "lr_oa", t.lr_oa);
  read(j, "batch_size", t.batch_size);
  read(j, "dropout", t.dropout);
  read(j, "max_len", t.max_len);
  read(j, "max_epochs", t.max_epochs);
  read(j, "patience", t.patience);
  read(j, "k", t.k);
  read(j, "seed", t.seed);
  read(j, "pooled", t.pooled);
  std::string name;
  if (j.contains("variant")) {
    read(j, "variant", name);
    t.variant = parse_variant(name);
  }
  if (j.contains("preprocessing")) {
    read(j, "preprocessing", name);
    t.prep = parse_prep(name);
  }
  read(j, "protocol", c.protocol);
  read(j, "repeats", c.repeats);
  read(j, "jobs", c.jobs);
  read(j, "save_checkpoints", c.save_checkpoints);
  read(j, "data", c.data);
  read(j, "test_data", c.test_data);
  read(j, "d", c.model.oa.d);
  if (j.contains("oa")) {
    const json& o = j.at("oa");
    reject_unknown(o, {"n_heads", "d_ff", "ln_eps"}, "oa.");
    read(o, "n_heads", c.model.oa.n_heads);
    read(o, "d_ff", c.model.oa.d_ff);
    read(o, "ln_eps", c.model.oa.ln_eps);
  }
  if (j.contains("backbone")) {
    const json& b = j.at("backbone");
    reject_unknown(b, {"kind", "vocab_size", "n_layers", "n_heads", "d_ff", "path"}, "backbone.");
    BackboneSpec& s = c.model.backbone;
    if (b.contains("kind")) {
      read(b, "kind", name);
      s.kind = parse_backbone_kind(name);
    }
    read(b, "vocab_size", s.vocab_size);
    read(b, "n_layers", s.n_layers);
    read(b, "n_heads", s.n_heads);
    read(b, "d_ff", s.d_ff);
    read(b, "path", s.path);
  }
  c.sync();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

std::string dump_run_config(const RunConfig& c) {
  const TrainConfig& t = c.train;
  const BackboneSpec& b = c.model.backbone;
  json j = json::object();
  j["lr_backbone"] = t.lr_backbone;
  j["lr_oa"] = t.lr_oa;
  j["batch_size"] = t.batch_size;
  j["dropout"] = t.dropout;
  j["max_len"] = t.max_len;
  j["max_epochs"] = t.max_epochs;
  j["patience"] = t.patience;
  j["k"] = t.k;
  j["seed"] = t.seed;
  j["variant"] = variant_name(t.variant);
  j["preprocessing"] = prep_name(t.prep);
  j["pooled"] = t.pooled;
  j["protocol"] = c.protocol;
  j["repeats"] = c.repeats;
  j["jobs"] = c.jobs;
  j["save_checkpoints"] = c.save_checkpoints;
  j["data"] = c.data;
  j["test_data"] = c.test_data;
  j["d"] = c.model.oa.d;
  j["oa"] = {{"n_heads", c.model.oa.n_heads}, {"d_ff", c.model.oa.d_ff}, {"ln_eps", c.model.oa.ln_eps}};
  j["backbone"] = {{"kind", backbone_kind_name(b.kind)}, {"vocab_size", b.vocab_size}, {"n_layers", b.n_layers},
                   {"n_heads", b.n_heads}, {"d_ff", b.d_ff}, {"path", b.path}};
  return j.dump(2) + "\n";
}

}  // namespace oa
