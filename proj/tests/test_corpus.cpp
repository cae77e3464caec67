#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "oa/corpus.hpp"
#include "oa/synthetic.hpp"

using namespace oa;

namespace {

std::vector<std::string> words_of(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t j = std::min(text.find(' ', i), text.size());
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j + 1;
  }
  return out;
}

ScopeSample sample(std::string_view text, std::set<std::size_t> cues, std::set<std::size_t> scope) {
  ScopeSample s;
  s.id = "t";
  s.words = words_of(text);
  for (std::size_t i = 0; i < s.words.size(); ++i) {
    s.cue_mask.push_back(cues.count(i) > 0);
    s.scope_labels.push_back(scope.count(i) > 0);
  }
  return s;
}

std::vector<std::size_t> positions(const std::vector<bool>& mask) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.push_back(i);
  return out;
}

const char* kSemTwoNegations =
    "wisteria01\t5\t0\tHe\the\tPRP\t(S(NP*)\t_\tHe\t_\t_\t_\t_\n"
    "wisteria01\t5\t1\tdid\tdo\tVBD\t(VP*\t_\tdid\t_\t_\t_\t_\n"
    "wisteria01\t5\t2\tnot\tnot\tRB\t*\tnot\t_\t_\t_\t_\t_\n"
    "wisteria01\t5\t3\tsee\tsee\tVB\t(VP*\t_\tsee\tsee\t_\t_\t_\n"
    "wisteria01\t5\t4\tanything\tanything\tNN\t(NP*))\t_\tanything\t_\t_\tthing\t_\n"
    "wisteria01\t5\t5\tunusual\tunusual\tJJ\t*\t_\t_\t_\tun\tusual\tusual\n"
    "wisteria01\t5\t6\t.\t.\t.\t*)\t_\t_\t_\t_\t_\t_\n";

}  // namespace

// ---- *sem -------------------------------------------------------------------

TEST_CASE("*sem sentence without negation") {
  const auto s = parse_sem_conll(
      "c1\t0\t0\tIt\tit\tPRP\t*\t***\n"
      "c1\t0\t1\trained\train\tVBD\t*\t***\n"
      "c1\t0\t2\t.\t.\t.\t*\t***\n");
  REQUIRE(s.size() == 1);
  CHECK(s[0].id == "c1-0");
  CHECK(s[0].words == std::vector<std::string>{"It", "rained", "."});
  CHECK(s[0].negations.empty());
  CHECK(explode(s[0], "sem").empty());
}

TEST_CASE("*sem single cue") {
  const auto s = parse_sem_conll(
      "c1\t3\t0\tI\tI\tPRP\t*\t_\tI\t_\n"
      "c1\t3\t1\tdo\tdo\tVBP\t*\t_\tdo\t_\n"
      "c1\t3\t2\tnot\tnot\tRB\t*\tnot\t_\t_\n"
      "c1\t3\t3\tknow\tknow\tVB\t*\t_\tknow\tknow\n"
      "c1\t3\t4\t.\t.\t.\t*\t_\t_\t_\n");
  REQUIRE(s.size() == 1);
  REQUIRE(s[0].negations.size() == 1);
  const Negation& n = s[0].negations[0];
  CHECK(n.cue == std::vector<std::size_t>{2});
  CHECK(n.affix == std::vector<std::string>{""});
  CHECK(n.scope == std::vector<std::size_t>{0, 1, 3});
  const auto samples = explode(s[0], "sem");
  REQUIRE(samples.size() == 1);
  CHECK(samples[0].id == "c1-3.0");
  CHECK(samples[0].source == "sem");
  CHECK(positions(samples[0].cue_mask) == std::vector<std::size_t>{2});
  CHECK(positions(samples[0].scope_labels) == std::vector<std::size_t>{0, 1, 3});
}

TEST_CASE("*sem two negations and an affix cue") {
  const auto s = parse_sem_conll(kSemTwoNegations);
  REQUIRE(s.size() == 1);
  REQUIRE(s[0].negations.size() == 2);
  CHECK(s[0].negations[0].cue == std::vector<std::size_t>{2});
  CHECK(s[0].negations[0].scope == std::vector<std::size_t>{0, 1, 3, 4});
  CHECK(s[0].negations[1].cue == std::vector<std::size_t>{5});
  CHECK(s[0].negations[1].affix == std::vector<std::string>{"un"});
  CHECK(s[0].negations[1].scope == std::vector<std::size_t>{4, 5});
  const auto samples = explode(s[0], "sem");
  REQUIRE(samples.size() == 2);
  CHECK(samples[1].id == "wisteria01-5.1");
  // The affix-bearing word is both cue and (through its stem) in scope.
  CHECK(samples[1].cue_mask[5]);
  CHECK(samples[1].scope_labels[5]);
  const DatasetStats st = dataset_stats(s);
  CHECK(st.sentences == 1);
  CHECK(st.negated_sentences == 1);
  CHECK(st.samples == 2);
}

TEST_CASE("*sem whitespace-separated columns and multiple sentences") {
  const auto s = parse_sem_conll(
      "c 0 0 No no DT * No _ _\n"
      "c 0 1 way way NN * _ way _\n"
      "\n"
      "\n"
      "c 1 0 Fine fine JJ * ***\r\n");
  REQUIRE(s.size() == 2);
  CHECK(s[0].negations.size() == 1);
  CHECK(s[1].id == "c-1");
  CHECK(s[1].negations.empty());
}

TEST_CASE("*sem errors carry line numbers") {
  SUBCASE("ragged rows") {
    try {
      parse_sem_conll(
          "c\t0\t0\tA\ta\tDT\t*\t***\n"
          "c\t0\t1\tB\tb\tNN\t*\t_\t_\t_\n");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("columns not in triples") {
    CHECK_THROWS_AS(parse_sem_conll("c\t0\t0\tA\ta\tDT\t*\tx\ty\n"), ParseError);
  }
  SUBCASE("too few columns") {
    try {
      parse_sem_conll("c\t0\t0\tA\n\n");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 1);
      CHECK(std::string(e.what()).rfind("line 1:", 0) == 0);
    }
  }
}

TEST_CASE("*sem triple without a cue token is dropped") {
  const auto s = parse_sem_conll(
      "c\t0\t0\tA\ta\tDT\t*\t_\tA\t_\n"
      "c\t0\t1\tB\tb\tNN\t*\t_\t_\t_\n");
  REQUIRE(s.size() == 1);
  CHECK(s[0].negations.empty());
}

// ---- BioScope ---------------------------------------------------------------

TEST_CASE("BioScope negation scope of three words") {
  const auto s = parse_bioscope_xml(
      "<?xml version=\"1.0\"?>\n<Annotation><DocumentSet><Document><DocumentPart>"
      "<sentence id=\"S1.1\">The test was <xcope id=\"X1.1.1\"><cue type=\"negation\" ref=\"X1.1.1\">not</cue> "
      "clearly positive</xcope>.</sentence>"
      "</DocumentPart></Document></DocumentSet></Annotation>");
  REQUIRE(s.size() == 1);
  CHECK(s[0].id == "S1.1");
  CHECK(s[0].words == std::vector<std::string>{"The", "test", "was", "not", "clearly", "positive", "."});
  REQUIRE(s[0].negations.size() == 1);
  CHECK(s[0].negations[0].cue == std::vector<std::size_t>{3});
  CHECK(s[0].negations[0].scope == std::vector<std::size_t>{3, 4, 5});
  const auto samples = explode(s[0], "bioscope");
  REQUIRE(samples.size() == 1);
  CHECK(samples[0].id == "S1.1.0");
}

TEST_CASE("BioScope speculation cues are ignored") {
  const auto s = parse_bioscope_xml(
      "<sentence id=\"a\">It <xcope id=\"X1\"><cue type=\"speculation\" ref=\"X1\">may</cue> help</xcope> "
      "&amp; <xcope id=\"X2\"><cue type=\"negation\" ref=\"X2\">no</cue> harm</xcope></sentence>");
  REQUIRE(s.size() == 1);
  CHECK(s[0].words == std::vector<std::string>{"It", "may", "help", "&", "no", "harm"});
  REQUIRE(s[0].negations.size() == 1);
  CHECK(s[0].negations[0].cue == std::vector<std::size_t>{4});
  CHECK(s[0].negations[0].scope == std::vector<std::size_t>{4, 5});
}

TEST_CASE("BioScope nested scopes and multi-token cues") {
  const auto s = parse_bioscope_xml(
      "<sentence id=\"n\"><xcope id=\"A\">we <cue type=\"negation\" ref=\"A\">neither</cue> saw "
      "<xcope id=\"B\"><cue type=\"negation\">no</cue> cells</xcope> "
      "<cue type=\"negation\" ref=\"A\">nor</cue> debris</xcope> today</sentence>");
  REQUIRE(s.size() == 1);
  CHECK(s[0].words == std::vector<std::string>{"we", "neither", "saw", "no", "cells", "nor", "debris", "today"});
  REQUIRE(s[0].negations.size() == 2);
  std::vector<Negation> n = s[0].negations;
  std::sort(n.begin(), n.end(), [](const Negation& a, const Negation& b) { return a.cue < b.cue; });
  CHECK(n[0].cue == std::vector<std::size_t>{1, 5});
  CHECK(n[0].scope == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6});
  CHECK(n[1].cue == std::vector<std::size_t>{3});
  CHECK(n[1].scope == std::vector<std::size_t>{3, 4});
}

TEST_CASE("BioScope malformed input") {
  CHECK_THROWS_AS(parse_bioscope_xml("<sentence id=\"a\">open <xcope id=\"X\">never closed</sentence>"), ParseError);
  CHECK_THROWS_AS(parse_bioscope_xml("<sentence id=\"a\">no end"), ParseError);
  CHECK_THROWS_AS(parse_bioscope_xml("<doc><cue type=\"negation\">not</cue></doc>"), ParseError);
  try {
    parse_bioscope_xml("<doc>\n\n<sentence id=\"a\"><sentence id=\"b\">x</sentence></sentence></doc>");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

// ---- explode ------------------------------------------------------------------

TEST_CASE("explode keeps multi-word cues in one sample") {
  RawSentence r;
  r.id = "s9";
  r.words = words_of("he was neither tall nor short .");
  Negation n;
  n.cue = {2, 4};
  n.affix = {"", ""};
  n.scope = {3, 5};
  r.negations.push_back(n);
  const auto samples = explode(r, "x");
  REQUIRE(samples.size() == 1);
  CHECK(positions(samples[0].cue_mask) == std::vector<std::size_t>{2, 4});
  CHECK(positions(samples[0].scope_labels) == std::vector<std::size_t>{3, 5});

  r.negations[0].cue.clear();
  CHECK_THROWS(explode(r, "x"));
}

// ---- preprocessing ------------------------------------------------------------

TEST_CASE("augment inserts the special token before the cue") {
  const ScopeSample s = sample("I do not know the answer .", {2}, {0, 1, 3, 4, 5});
  const auto normal = preprocess(s, Prep::kNormal, 8192, 128, 0);
  REQUIRE(normal);
  CHECK(normal->seq.words == s.words);
  CHECK(normal->seq.cue_ids == std::vector<std::size_t>{2});
  CHECK(normal->labels == std::vector<int>{1, 1, 0, 1, 1, 1, 0});

  const auto aug = preprocess(s, Prep::kAugment, 8192, 128, 0);
  REQUIRE(aug);
  CHECK(aug->seq.words == std::vector<std::string>{"I", "do", "<tok0>", "not", "know", "the", "answer", "."});
  CHECK(aug->seq.token_ids[2] == kAugmentTokenId);
  CHECK(aug->seq.cue_ids == std::vector<std::size_t>{3});
  CHECK(aug->labels == std::vector<int>{1, 1, 0, 0, 1, 1, 1, 0});
  CHECK(aug->score_mask == std::vector<std::uint8_t>{1, 1, 0, 1, 1, 1, 1, 1});
  CHECK(strip_special(aug->seq.words) == s.words);
}

TEST_CASE("augment with a two-word cue realigns labels") {
  const ScopeSample s = sample("he was neither tall nor short .", {2, 4}, {0, 1, 3, 5});
  const auto aug = preprocess(s, Prep::kAugment, 8192, 128, 3);
  REQUIRE(aug);
  CHECK(aug->seq.sample_id == 3);
  CHECK(aug->seq.words ==
        std::vector<std::string>{"he", "was", "<tok0>", "neither", "tall", "<tok0>", "nor", "short", "."});
  CHECK(aug->seq.cue_ids == std::vector<std::size_t>{3, 6});
  CHECK(aug->labels == std::vector<int>{1, 1, 0, 0, 1, 0, 0, 1, 0});
  CHECK(strip_special(aug->seq.words) == s.words);
}

TEST_CASE("augment index shift matches a brute-force oracle") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng.below(12);
    ScopeSample s;
    s.id = "r";
    for (std::size_t i = 0; i < m; ++i) {
      s.words.push_back("w" + std::to_string(rng.below(5)));
      s.cue_mask.push_back(rng.below(4) == 0);
      s.scope_labels.push_back(rng.below(2) == 0);
    }
    s.cue_mask[rng.below(m)] = true;
    const auto aug = preprocess(s, Prep::kAugment, 64, 128, 0);
    REQUIRE(aug);
    // Oracle: original position i moves right by the number of cues at or before i.
    std::size_t shift = 0;
    std::size_t cue_k = 0;
    for (std::size_t i = 0; i < m; ++i) {
      if (s.cue_mask[i]) {
        ++shift;
        CHECK(aug->seq.words[i + shift - 1] == "<tok0>");
        CHECK(aug->seq.cue_ids[cue_k++] == i + shift);
      }
      CHECK(aug->seq.words[i + shift] == s.words[i]);
      CHECK(aug->labels[i + shift] == (s.scope_labels[i] ? 1 : 0));
    }
    CHECK(aug->seq.size() == m + shift);
    CHECK(cue_k == aug->seq.cue_ids.size());
  }
}

TEST_CASE("long sequences are windowed around the first cue") {
  std::string text;
  for (int i = 0; i < 40; ++i) text += "w" + std::to_string(i) + " ";
  const ScopeSample s = sample(text, {25, 27}, {26, 28});
  const auto p = preprocess(s, Prep::kNormal, 8192, 10, 0);
  REQUIRE(p);
  CHECK(p->seq.size() == 10);
  CHECK(p->seq.words.front() == "w20");
  CHECK(p->seq.cue_ids == std::vector<std::size_t>{5, 7});
  CHECK(p->labels[6] == 1);

  const auto a = preprocess(s, Prep::kAugment, 8192, 10, 0);
  REQUIRE(a);
  CHECK(a->seq.size() == 10);
  for (std::size_t c : a->seq.cue_ids) REQUIRE(c >= 1);
  for (std::size_t c : a->seq.cue_ids) CHECK(a->seq.words[c - 1] == "<tok0>");

  SUBCASE("cue near the end keeps the window inside the sequence") {
    const ScopeSample e = sample(text, {39}, {});
    const auto w = preprocess(e, Prep::kNormal, 8192, 10, 0);
    REQUIRE(w);
    CHECK(w->seq.words.back() == "w39");
    CHECK(w->seq.cue_ids == std::vector<std::size_t>{9});
  }
  SUBCASE("cues that cannot fit are skipped") {
    const ScopeSample far = sample(text, {2, 30}, {});
    CHECK_FALSE(preprocess(far, Prep::kNormal, 8192, 10, 0));
    const ScopeSample fits[] = {s, far};
    const PrepareResult r = prepare_all(fits, Prep::kNormal, 8192, 10);
    CHECK(r.samples.size() == 1);
    CHECK(r.skipped == std::vector<std::string>{"t"});
  }
}

// ---- JSONL --------------------------------------------------------------------

TEST_CASE("JSONL round trip is idempotent") {
  std::vector<ScopeSample> samples = synthesize(20, 5);
  samples[3].split = "dev";
  samples[4].preprocessing = Prep::kAugment;
  const std::string text = to_jsonl(samples);
  const auto back = parse_jsonl(text);
  CHECK(back == samples);
  CHECK(to_jsonl(back) == text);

  const std::string path = (std::filesystem::temp_directory_path() / "oa_test_corpus.jsonl").string();
  write_jsonl(path, samples);
  CHECK(read_jsonl(path) == samples);
  CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
  std::remove(path.c_str());
}

TEST_CASE("JSONL rejects malformed records with line numbers") {
  const std::string good = to_jsonl(synthesize(2, 1));
  const std::string line1 = good.substr(0, good.find('\n') + 1);
  SUBCASE("unknown field") {
    std::string bad = line1;
    bad.insert(1, "\"extra\":1,");
    try {
      parse_jsonl(line1 + bad);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("not JSON") { CHECK_THROWS_AS(parse_jsonl("{oops\n"), ParseError); }
  SUBCASE("length mismatch") {
    std::string bad = line1;
    const auto at = bad.find("\"words\":[");
    bad.insert(at + 9, "\"extra\",");
    CHECK_THROWS_AS(parse_jsonl(bad), ParseError);
  }
  SUBCASE("no cue") {
    ScopeSample s = sample("a b", {}, {});
    CHECK_THROWS(s.validate());
  }
}

// ---- splits -------------------------------------------------------------------

TEST_CASE("k-fold split of 100 samples into 10 folds") {
  const auto folds = kfold_split(100, 10, 42);
  REQUIRE(folds.size() == 10);
  std::vector<int> seen(100, 0);
  for (const auto& f : folds) {
    CHECK(f.test.size() == 10);
    CHECK(f.val.size() == 10);
    CHECK(f.train.size() == 80);
    for (std::size_t i : f.test) ++seen[i];
    std::set<std::size_t> all(f.train.begin(), f.train.end());
    for (std::size_t i : f.val) CHECK(all.insert(i).second);
    for (std::size_t i : f.test) CHECK(all.insert(i).second);
    CHECK(all.size() == 100);
    CHECK(std::is_sorted(f.train.begin(), f.train.end()));
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  CHECK(kfold_split(100, 10, 42)[3].test == folds[3].test);
  CHECK(kfold_split(100, 10, 43)[3].test != folds[3].test);
}

TEST_CASE("k-fold split with uneven folds and errors") {
  const auto folds = kfold_split(23, 4, 1);
  std::size_t total = 0;
  for (const auto& f : folds) {
    CHECK((f.test.size() == 5 || f.test.size() == 6));
    CHECK(f.val.size() == f.test.size());
    total += f.test.size();
  }
  CHECK(total == 23);
  CHECK_THROWS(kfold_split(100, 2, 0));
  CHECK_THROWS(kfold_split(5, 3, 0));
}

TEST_CASE("fixed split from the split field") {
  std::vector<ScopeSample> samples = synthesize(6, 2);
  const char* tags[] = {"train", "dev", "test", "train", "test", "train"};
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i].split = tags[i];
  const FoldSplit f = sherlock_split(samples);
  CHECK(f.train == std::vector<std::size_t>{0, 3, 5});
  CHECK(f.val == std::vector<std::size_t>{1});
  CHECK(f.test == std::vector<std::size_t>{2, 4});
  samples[0].split = "";
  CHECK_THROWS(sherlock_split(samples));
}

// ---- synthetic corpus -----------------------------------------------------------

TEST_CASE("synthetic corpus follows the scope rule") {
  const auto samples = synthesize(64, 64);
  CHECK(samples.size() == 64);
  CHECK(synthesize(64, 64) == samples);
  for (const auto& s : samples) {
    s.validate();
    const auto cues = positions(s.cue_mask);
    REQUIRE_FALSE(cues.empty());
    // In scope: every non-cue token after the first cue up to the clause end.
    std::size_t end = cues.front();
    while (s.words[end] != "." && s.words[end] != "!") ++end;
    for (std::size_t i = 0; i < s.words.size(); ++i) {
      const bool expected = i > cues.front() && i < end && !s.cue_mask[i];
      CHECK(s.scope_labels[i] == expected);
    }
  }
}
