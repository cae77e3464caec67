#include "oa/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "oa/rng.hpp"

namespace oa {

using nlohmann::json;

std::string_view prep_name(Prep p) { return p == Prep::kNormal ? "normal" : "augment"; }

Prep parse_prep(std::string_view name) {
  if (name == "normal") return Prep::kNormal;
  if (name == "augment") return Prep::kAugment;
  throw std::invalid_argument("unknown preprocessing '" + std::string(name) + "' (expected normal or augment)");
}

void ScopeSample::validate() const {
  if (words.empty()) throw std::invalid_argument("sample " + id + ": no words");
  if (cue_mask.size() != words.size() || scope_labels.size() != words.size()) {
    throw std::invalid_argument("sample " + id + ": words, cue_mask and scope_labels differ in length");
  }
  if (std::find(cue_mask.begin(), cue_mask.end(), true) == cue_mask.end()) {
    throw std::invalid_argument("sample " + id + ": no cue token");
  }
}

// ---- *sem CoNLL -------------------------------------------------------------

namespace {

std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  if (line.find('\t') != std::string_view::npos) {
    for (std::size_t i = 0;;) {
      const std::size_t j = line.find('\t', i);
      out.emplace_back(line.substr(i, j == std::string_view::npos ? std::string_view::npos : j - i));
      if (j == std::string_view::npos) break;
      i = j + 1;
    }
    return out;
  }
  std::istringstream in{std::string(line)};
  for (std::string f; in >> f;) out.push_back(f);
  return out;
}

constexpr std::size_t kSemFixedColumns = 7;

void finish_sem(std::vector<std::vector<std::string>>& rows, std::size_t first_line, std::vector<RawSentence>& out) {
  if (rows.empty()) return;
  RawSentence s;
  s.id = rows[0][0] + "-" + rows[0][1];
  const std::size_t width = rows[0].size();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != width) {
      throw ParseError("ragged columns: " + std::to_string(rows[r].size()) + " fields, sentence started with " +
                           std::to_string(width),
                       first_line + r);
    }
    s.words.push_back(rows[r][3]);
  }
  const std::size_t extra = width - kSemFixedColumns;
  const bool none = extra == 1 && std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.back() == "***"; });
  if (!none) {
    if (extra % 3 != 0) {
      throw ParseError("negation columns must come in (cue, scope, event) triples, found " + std::to_string(extra),
                       first_line);
    }
    for (std::size_t t = 0; t < extra / 3; ++t) {
      Negation neg;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::string& cue = rows[r][kSemFixedColumns + 3 * t];
        const std::string& scope = rows[r][kSemFixedColumns + 3 * t + 1];
        if (cue != "_") {
          neg.cue.push_back(r);
          neg.affix.push_back(cue == s.words[r] ? std::string() : cue);
        }
        if (scope != "_") neg.scope.push_back(r);
      }
      if (!neg.cue.empty()) s.negations.push_back(std::move(neg));
    }
  }
  out.push_back(std::move(s));
  rows.clear();
}

}  // namespace

std::vector<RawSentence> parse_sem_conll(std::string_view text) {
  std::vector<RawSentence> out;
  std::vector<std::vector<std::string>> rows;
  std::size_t line_no = 0, first_line = 1;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    pos = end + 1;
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      finish_sem(rows, first_line, out);
      continue;
    }
    auto fields = split_fields(line);
    if (fields.size() < kSemFixedColumns + 1) {
      throw ParseError("expected at least " + std::to_string(kSemFixedColumns + 1) + " columns, found " +
                           std::to_string(fields.size()),
                       line_no);
    }
    if (rows.empty()) first_line = line_no;
    rows.push_back(std::move(fields));
  }
  finish_sem(rows, first_line, out);
  return out;
}

// ---- BioScope XML -----------------------------------------------------------

namespace {

struct Tag {
  std::string name;
  std::map<std::string, std::string> attrs;
  bool closing = false;
  bool self_closing = false;
};

std::string decode_entities(std::string_view s) {
  static const std::pair<std::string_view, char> kEntities[] = {
      {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&apos;", '\''}};
  std::string out;
  for (std::size_t i = 0; i < s.size();) {
    bool matched = false;
    if (s[i] == '&') {
      for (const auto& [name, ch] : kEntities) {
        if (s.substr(i, name.size()) == name) {
          out.push_back(ch);
          i += name.size();
          matched = true;
          break;
        }
      }
    }
    if (!matched) out.push_back(s[i++]);
  }
  return out;
}

std::size_t line_at(std::string_view text, std::size_t pos) {
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

Tag parse_tag(std::string_view body, std::size_t line) {
  Tag t;
  std::size_t i = 0;
  auto skip_ws = [&] {
    while (i < body.size() && std::isspace(static_cast<unsigned char>(body[i]))) ++i;
  };
  if (!body.empty() && body[0] == '/') {
    t.closing = true;
    ++i;
  }
  if (!body.empty() && body.back() == '/') {
    t.self_closing = true;
    body.remove_suffix(1);
  }
  skip_ws();
  const std::size_t name_start = i;
  while (i < body.size() && !std::isspace(static_cast<unsigned char>(body[i]))) ++i;
  t.name = std::string(body.substr(name_start, i - name_start));
  if (t.name.empty()) throw ParseError("empty tag name", line);
  while (true) {
    skip_ws();
    if (i >= body.size()) break;
    const std::size_t k = i;
    while (i < body.size() && body[i] != '=' && !std::isspace(static_cast<unsigned char>(body[i]))) ++i;
    std::string key(body.substr(k, i - k));
    skip_ws();
    if (i >= body.size() || body[i] != '=') throw ParseError("attribute '" + key + "' has no value", line);
    ++i;
    skip_ws();
    if (i >= body.size() || (body[i] != '"' && body[i] != '\'')) {
      throw ParseError("attribute '" + key + "' value is not quoted", line);
    }
    const char q = body[i++];
    const std::size_t v = i;
    while (i < body.size() && body[i] != q) ++i;
    if (i >= body.size()) throw ParseError("unterminated attribute '" + key + "'", line);
    t.attrs[key] = decode_entities(body.substr(v, i - v));
    ++i;
  }
  return t;
}

struct OpenElement {
  std::string name;
  std::string id;
  std::size_t start = 0;  // first token index inside the element
  std::size_t line = 0;
};

struct CueSpan {
  std::string ref;  // xcope id this cue belongs to
  std::size_t begin = 0, end = 0;
};

struct SentenceBuilder {
  RawSentence raw;
  std::map<std::string, std::pair<std::size_t, std::size_t>> scopes;  // xcope id -> [begin, end)
  std::vector<CueSpan> cues;

  RawSentence finish() {
    std::vector<std::string> order;
    std::map<std::string, Negation> by_ref;
    for (const auto& c : cues) {
      if (!by_ref.count(c.ref)) order.push_back(c.ref);
      Negation& n = by_ref[c.ref];
      for (std::size_t p = c.begin; p < c.end; ++p) {
        n.cue.push_back(p);
        n.affix.emplace_back();
      }
    }
    for (const auto& ref : order) {
      Negation n = std::move(by_ref[ref]);
      if (n.cue.empty()) continue;
      auto it = scopes.find(ref);
      if (it != scopes.end()) {
        for (std::size_t p = it->second.first; p < it->second.second; ++p) n.scope.push_back(p);
      }
      std::vector<std::size_t> idx(n.cue.size());
      std::iota(idx.begin(), idx.end(), 0);
      std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return n.cue[a] < n.cue[b]; });
      Negation sorted;
      for (std::size_t k : idx) {
        sorted.cue.push_back(n.cue[k]);
        sorted.affix.push_back(n.affix[k]);
      }
      sorted.scope = std::move(n.scope);
      raw.negations.push_back(std::move(sorted));
    }
    return std::move(raw);
  }
};

}  // namespace

std::vector<RawSentence> parse_bioscope_xml(std::string_view text) {
  std::vector<RawSentence> out;
  std::vector<OpenElement> stack;
  std::optional<SentenceBuilder> sentence;
  std::size_t auto_id = 0, anon_cue = 0;

  auto add_text = [&](std::string_view chunk, std::size_t pos) {
    std::size_t i = 0;
    while (i < chunk.size()) {
      while (i < chunk.size() && std::isspace(static_cast<unsigned char>(chunk[i]))) ++i;
      if (i == chunk.size()) break;
      std::size_t j = i;
      while (j < chunk.size() && !std::isspace(static_cast<unsigned char>(chunk[j]))) ++j;
      if (!sentence) {
        bool in_cue = std::any_of(stack.begin(), stack.end(), [](const auto& e) { return e.name == "cue"; });
        if (in_cue) throw ParseError("cue outside a sentence", line_at(text, pos + i));
      } else {
        sentence->raw.words.push_back(decode_entities(chunk.substr(i, j - i)));
      }
      i = j;
    }
  };

  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t lt = text.find('<', pos);
    if (lt == std::string_view::npos) {
      add_text(text.substr(pos), pos);
      break;
    }
    add_text(text.substr(pos, lt - pos), pos);
    const std::size_t line = line_at(text, lt);
    if (text.substr(lt, 4) == "<!--") {
      const std::size_t end = text.find("-->", lt + 4);
      if (end == std::string_view::npos) throw ParseError("unterminated comment", line);
      pos = end + 3;
      continue;
    }
    const std::size_t gt = text.find('>', lt);
    if (gt == std::string_view::npos) throw ParseError("unterminated tag", line);
    pos = gt + 1;
    const std::string_view body = text.substr(lt + 1, gt - lt - 1);
    if (!body.empty() && (body[0] == '?' || body[0] == '!')) continue;  // declarations
    Tag tag = parse_tag(body, line);
    const std::size_t tokens = sentence ? sentence->raw.words.size() : 0;

    if (!tag.closing) {
      if (tag.name == "sentence") {
        if (sentence) throw ParseError("nested sentence", line);
        sentence.emplace();
        auto it = tag.attrs.find("id");
        sentence->raw.id = it != tag.attrs.end() ? it->second : "s" + std::to_string(auto_id);
        ++auto_id;
      } else if (tag.name == "cue" && !sentence) {
        throw ParseError("cue outside a sentence", line);
      }
      if (tag.self_closing) continue;
      OpenElement e{tag.name, "", tokens, line};
      if (tag.name == "xcope") {
        auto it = tag.attrs.find("id");
        e.id = it != tag.attrs.end() ? it->second : "";
      } else if (tag.name == "cue") {
        auto type = tag.attrs.find("type");
        const bool negation = type != tag.attrs.end() && type->second == "negation";
        auto ref = tag.attrs.find("ref");
        if (!negation) {
          e.id = "";
        } else if (ref != tag.attrs.end()) {
          e.id = "ref:" + ref->second;
        } else {
          // innermost enclosing xcope, or a standalone negation
          e.id = "anon:" + std::to_string(anon_cue++);
          for (auto s = stack.rbegin(); s != stack.rend(); ++s) {
            if (s->name == "xcope" && !s->id.empty()) {
              e.id = "ref:" + s->id;
              break;
            }
          }
        }
      }
      stack.push_back(std::move(e));
      continue;
    }

    if (stack.empty() || stack.back().name != tag.name) {
      throw ParseError("closing </" + tag.name + "> does not match " +
                           (stack.empty() ? std::string("any open element") : "<" + stack.back().name + ">"),
                       line);
    }
    OpenElement e = std::move(stack.back());
    stack.pop_back();
    if (tag.name == "xcope" && sentence && !e.id.empty()) {
      sentence->scopes["ref:" + e.id] = {e.start, tokens};
    } else if (tag.name == "cue" && sentence && !e.id.empty() && tokens > e.start) {
      sentence->cues.push_back({e.id, e.start, tokens});
    } else if (tag.name == "sentence") {
      out.push_back(sentence->finish());
      sentence.reset();
    }
  }
  if (!stack.empty()) throw ParseError("unclosed <" + stack.back().name + ">", stack.back().line);
  return out;
}

// ---- samples ------------------------------------------------------------------

std::vector<ScopeSample> explode(const RawSentence& raw, std::string_view source) {
  std::vector<ScopeSample> out;
  for (std::size_t k = 0; k < raw.negations.size(); ++k) {
    const Negation& n = raw.negations[k];
    if (n.cue.empty()) throw std::invalid_argument("sentence " + raw.id + ": negation " + std::to_string(k) +
                                                   " has no cue");
    ScopeSample s;
    s.id = raw.id + "." + std::to_string(k);
    s.words = raw.words;
    s.cue_mask.assign(raw.words.size(), false);
    s.scope_labels.assign(raw.words.size(), false);
    for (std::size_t p : n.cue) s.cue_mask.at(p) = true;
    for (std::size_t p : n.scope) s.scope_labels.at(p) = true;
    s.source = std::string(source);
    out.push_back(std::move(s));
  }
  return out;
}

DatasetStats dataset_stats(std::span<const RawSentence> sentences) {
  DatasetStats st;
  st.sentences = sentences.size();
  for (const auto& s : sentences) {
    st.negated_sentences += s.negations.empty() ? 0 : 1;
    st.samples += s.negations.size();
  }
  return st;
}

// ---- JSONL --------------------------------------------------------------------

namespace {

json to_json(const ScopeSample& s) {
  json j;
  j["id"] = s.id;
  j["words"] = s.words;
  j["cue_mask"] = s.cue_mask;
  j["scope_labels"] = s.scope_labels;
  j["source"] = s.source;
  j["preprocessing"] = prep_name(s.preprocessing);
  j["split"] = s.split;
  return j;
}

ScopeSample from_json(const json& j) {
  static const std::set<std::string> kKeys = {"id",     "words",         "cue_mask", "scope_labels",
                                               "source", "preprocessing", "split"};
  if (!j.is_object()) throw std::invalid_argument("sample is not a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.count(key)) throw std::invalid_argument("unknown sample field '" + key + "'");
  }
  ScopeSample s;
  s.id = j.at("id").get<std::string>();
  s.words = j.at("words").get<std::vector<std::string>>();
  s.cue_mask = j.at("cue_mask").get<std::vector<bool>>();
  s.scope_labels = j.at("scope_labels").get<std::vector<bool>>();
  s.source = j.value("source", "");
  s.preprocessing = parse_prep(j.value("preprocessing", "normal"));
  s.split = j.value("split", "");
  s.validate();
  return s;
}

}  // namespace

std::string to_jsonl(std::span<const ScopeSample> samples) {
  std::string out;
  for (const auto& s : samples) {
    out += to_json(s).dump();
    out += '\n';
  }
  return out;
}

std::vector<ScopeSample> parse_jsonl(std::string_view text) {
  std::vector<ScopeSample> out;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      out.push_back(from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return out;
}

std::vector<ScopeSample> read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_jsonl(text);
  } catch (const ParseError& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

void write_jsonl(const std::string& path, std::span<const ScopeSample> samples) {
  const std::string text = to_jsonl(samples);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) {
      std::remove(tmp.c_str());
      throw std::runtime_error("failed writing " + tmp);
    }
  }
  std::filesystem::rename(tmp, path);
}

// ---- preprocessing ------------------------------------------------------------

std::optional<PreparedSample> preprocess(const ScopeSample& sample, Prep mode, std::size_t vocab_size,
                                         std::size_t max_len, std::uint32_t sample_id) {
  sample.validate();
  std::vector<std::string> tokens;
  std::vector<int> labels;
  std::vector<std::uint8_t> scored;
  std::vector<std::size_t> cues;
  for (std::size_t i = 0; i < sample.words.size(); ++i) {
    if (mode == Prep::kAugment && sample.cue_mask[i]) {
      tokens.emplace_back(kAugmentToken);
      labels.push_back(0);
      scored.push_back(0);
    }
    if (sample.cue_mask[i]) cues.push_back(tokens.size());
    tokens.push_back(sample.words[i]);
    labels.push_back(sample.scope_labels[i] ? 1 : 0);
    scored.push_back(1);
  }

  std::size_t start = 0, len = tokens.size();
  if (len > max_len) {
    // cue span including an inserted token in front of the first cue
    const std::size_t lo = cues.front() - (mode == Prep::kAugment ? 1 : 0), hi = cues.back();
    if (hi - lo + 1 > max_len) return std::nullopt;
    const std::size_t center = cues.front();
    start = center > max_len / 2 ? center - max_len / 2 : 0;
    start = std::min(start, len - max_len);
    if (hi >= start + max_len) start = hi + 1 - max_len;
    if (lo < start) start = lo;
    len = max_len;
  }

  PreparedSample p;
  p.id = sample.id;
  p.seq.sample_id = sample_id;
  for (std::size_t i = start; i < start + len; ++i) {
    p.seq.words.push_back(tokens[i]);
    p.seq.token_ids.push_back(tokens[i] == kAugmentToken ? kAugmentTokenId : hash_token(tokens[i], vocab_size));
    p.labels.push_back(labels[i]);
    p.score_mask.push_back(scored[i]);
  }
  for (std::size_t c : cues) p.seq.cue_ids.push_back(c - start);
  return p;
}

std::vector<std::string> strip_special(std::span<const std::string> tokens) {
  std::vector<std::string> out;
  for (const auto& t : tokens)
    if (t != kAugmentToken) out.push_back(t);
  return out;
}

PrepareResult prepare_all(std::span<const ScopeSample> samples, Prep mode, std::size_t vocab_size,
                          std::size_t max_len) {
  PrepareResult r;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto p = preprocess(samples[i], mode, vocab_size, max_len, static_cast<std::uint32_t>(i));
    if (p) {
      r.samples.push_back(std::move(*p));
    } else {
      r.skipped.push_back(samples[i].id);
    }
  }
  return r;
}

// ---- splits ---------------------------------------------------------------------

std::vector<FoldSplit> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 3) throw std::invalid_argument("kfold_split: k must be at least 3 (test, validation and training folds)");
  if (n < 2 * k) {
    throw std::invalid_argument("kfold_split: " + std::to_string(n) + " samples are too few for k=" +
                                std::to_string(k));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span(order));

  std::vector<std::vector<std::size_t>> folds(k);
  for (std::size_t f = 0, pos = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                    order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }

  std::vector<FoldSplit> out(k);
  for (std::size_t f = 0; f < k; ++f) {
    FoldSplit& s = out[f];
    s.test = folds[f];
    std::vector<std::size_t> rest;
    for (std::size_t g = 0; g < k; ++g)
      if (g != f) rest.insert(rest.end(), folds[g].begin(), folds[g].end());
    Rng pick(Rng::derive(seed, f + 1));
    pick.shuffle(std::span(rest));
    s.val.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(s.test.size()));
    s.train.assign(rest.begin() + static_cast<std::ptrdiff_t>(s.test.size()), rest.end());
    std::sort(s.test.begin(), s.test.end());
    std::sort(s.val.begin(), s.val.end());
    std::sort(s.train.begin(), s.train.end());
  }
  return out;
}

FoldSplit sherlock_split(std::span<const ScopeSample> samples) {
  FoldSplit s;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string& tag = samples[i].split;
    if (tag == "train") {
      s.train.push_back(i);
    } else if (tag == "dev") {
      s.val.push_back(i);
    } else if (tag == "test") {
      s.test.push_back(i);
    } else {
      throw std::invalid_argument("sample " + samples[i].id + " has split '" + tag +
                                  "', fixed-split mode needs train, dev or test");
    }
  }
  if (s.train.empty() || s.val.empty() || s.test.empty()) {
    throw std::invalid_argument("fixed split needs nonempty train, dev and test parts");
  }
  return s;
}

}  // namespace oa
