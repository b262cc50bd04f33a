#include "ndsq/tasks.hpp"

#include <doctest.h>

#include <map>
#include <set>
#include <sstream>

#include "support/stats.hpp"

using namespace ndsq;

namespace {

// Splits a grammar terminal like "si12" into ("si", 12); index -1 if none.
std::pair<std::string, int> stem_of(const std::string& name) {
  std::size_t cut = name.size();
  while (cut > 0 && name[cut - 1] >= '0' && name[cut - 1] <= '9') --cut;
  if (cut == name.size()) return {name, -1};
  return {name.substr(0, cut), std::stoi(name.substr(cut))};
}

}  // namespace

TEST_CASE("synthetic transforms") {
  const std::vector<int> src{11, 12, 13, 14};
  CHECK(apply_transform(TaskKind::Copy, {7}) == std::vector<int>{7});
  CHECK(apply_transform(TaskKind::Reverse, src) == std::vector<int>{14, 13, 12, 11});
  CHECK(apply_transform(TaskKind::BigramFlip, src) == std::vector<int>{12, 11, 14, 13});
}

TEST_CASE("synthetic generation is deterministic per (config, seed)") {
  SampleConfig config;
  config.min_len = 4;
  config.max_len = 12;
  config.vocab = 32;
  Rng a(123, kStreamGen), b(123, kStreamGen);
  for (int i = 0; i < 20; ++i) {
    auto ea = gen_synthetic(TaskKind::Reverse, config, a);
    auto eb = gen_synthetic(TaskKind::Reverse, config, b);
    CHECK(ea.joint == eb.joint);
  }
}

TEST_CASE("transform involutions hold pointwise") {
  SampleConfig config;
  config.min_len = 2;
  config.max_len = 32;
  config.vocab = 128;
  Rng rng(5, kStreamGen);
  for (int i = 0; i < 1000; ++i) {
    auto copy = gen_synthetic(TaskKind::Copy, config, rng);
    CHECK(copy.target == copy.source);
    auto rev = gen_synthetic(TaskKind::Reverse, config, rng);
    CHECK(apply_transform(TaskKind::Reverse, rev.target) == rev.source);
    auto flip = gen_synthetic(TaskKind::BigramFlip, config, rng);
    CHECK(apply_transform(TaskKind::BigramFlip, flip.target) == flip.source);
  }
}

TEST_CASE("sampled lengths are uniform over the range") {
  SampleConfig config;
  config.min_len = 8;
  config.max_len = 64;
  config.vocab = 128;
  Rng rng(17, kStreamGen);
  std::vector<long> counts(64 - 8 + 1, 0);
  for (int i = 0; i < 10000; ++i)
    counts[gen_synthetic(TaskKind::Copy, config, rng).source.size() - 8]++;
  const double p = ndsq::testing::chi_square_p(counts, 10000.0 / counts.size());
  INFO("chi-square p = ", p);
  CHECK(p > 0.001);

  // Bigram-flip draws only even lengths, uniformly.
  std::vector<long> even_counts((64 - 8) / 2 + 1, 0);
  for (int i = 0; i < 10000; ++i) {
    auto ex = gen_synthetic(TaskKind::BigramFlip, config, rng);
    REQUIRE(ex.source.size() % 2 == 0);
    even_counts[(ex.source.size() - 8) / 2]++;
  }
  const double p_even = ndsq::testing::chi_square_p(even_counts, 10000.0 / even_counts.size());
  INFO("chi-square p = ", p_even);
  CHECK(p_even > 0.001);
}

TEST_CASE("bigram-flip rejects odd length configurations") {
  SampleConfig config;
  config.min_len = 7;
  config.max_len = 64;
  Rng rng(1);
  CHECK_THROWS_AS(gen_synthetic(TaskKind::BigramFlip, config, rng), ConfigError);
}

TEST_CASE("svo-sov grammar matches the published table") {
  auto g = build_grammar("svo-sov");
  const auto& a_rules = g.rules_by_head.at("A");
  REQUIRE(a_rules.size() == 1);
  const SyncRule& a = g.rules[a_rules[0]];
  CHECK(a.probability == 1.0);
  REQUIRE(a.source.size() == 3);
  REQUIRE(a.target.size() == 3);
  CHECK(a.source[0].text == "S");
  CHECK(a.source[0].link == 1);
  CHECK(a.source[1].text == "VT");
  CHECK(a.source[1].link == 2);
  CHECK(a.source[2].text == "O");
  CHECK(a.source[2].link == 3);
  // Target side moves the verb class to clause-final position.
  CHECK(a.target[0].text == "S");
  CHECK(a.target[1].text == "O");
  CHECK(a.target[1].link == 3);
  CHECK(a.target[2].text == "VT");
  CHECK(a.target[2].link == 2);

  CHECK(g.rules_by_head.at("ST").size() == 33);
  CHECK(g.rules_by_head.at("OT").size() == 33);
  CHECK(g.rules_by_head.at("VT").size() == 33);
  CHECK(g.source_ids.count("rpi") == 1);
  CHECK(g.target_ids.count("rpo") == 1);
  CHECK(g.vocab.n_source == 100);  // rpi + 3 classes of 33
  CHECK(g.vocab.n_target == 100);
}

TEST_CASE("gender grammar articles pair the noun classes") {
  auto g = build_grammar("gender");
  const auto& s_rules = g.rules_by_head.at("S");
  REQUIRE(s_rules.size() == 6);
  std::multiset<std::pair<std::string, std::string>> pairs;
  for (std::size_t r : s_rules) {
    const SyncRule& rule = g.rules[r];
    CHECK(rule.probability == doctest::Approx(1.0 / 6).epsilon(1e-12));
    REQUIRE(rule.source.size() == 2);
    REQUIRE(rule.target.size() == 2);
    pairs.insert({rule.source[0].text, rule.target[0].text});
    CHECK(rule.source[1].text == rule.target[1].text);  // same noun class both sides
  }
  const std::multiset<std::pair<std::string, std::string>> expected{
      {"the", "der"}, {"the", "die"}, {"the", "das"},
      {"a", "ein"},   {"a", "eine"},  {"a", "ein"}};
  CHECK(pairs == expected);
  CHECK(g.rules_by_head.at("W").size() == 25);
  CHECK(g.rules_by_head.at("N").size() == 25);
}

TEST_CASE("per-head probabilities sum to one") {
  for (const char* name : {"svo-sov", "gender"}) {
    auto g = build_grammar(name);
    for (const auto& [head, indices] : g.rules_by_head) {
      double sum = 0;
      for (std::size_t r : indices) sum += g.rules[r].probability;
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("grammar parser diagnostics") {
  CHECK_THROWS_AS(build_grammar("nonesuch"), GrammarError);
  CHECK_THROWS_AS(parse_grammar("rule 1 A -> x |||"), GrammarError);     // empty side
  CHECK_THROWS_AS(parse_grammar("bogus 1 A -> x ||| y"), GrammarError);  // unknown declaration
  CHECK_THROWS_AS(parse_grammar("rule 0.5 A -> x ||| y"), GrammarError);  // head sums to 0.5
  // Occurrences must pair by (nonterminal, index) across the sides.
  CHECK_THROWS_AS(parse_grammar("rule 1 A -> B1 ||| B2\nrule 1 B -> x ||| y"), GrammarError);
  CHECK_THROWS_AS(parse_grammar("rule 1 A -> B1 B2 ||| B1 B1\nrule 1 B -> x ||| y"),
                  GrammarError);
  // Root must exist.
  CHECK_THROWS_AS(parse_grammar("rule 1 B -> x ||| y"), GrammarError);

  auto ok = parse_grammar("# comment\nrule 1 A -> B1 w B2 ||| B2 B1 v\nrule 1 B -> x ||| y\n");
  CHECK(ok.rules.size() == 2);
  CHECK(ok.vocab.n_source == 2);  // w, x
  CHECK(ok.vocab.n_target == 2);  // v, y
}

TEST_CASE("itg samples re-validate and respect the length range") {
  Rng rng(23, kStreamGen);
  for (const char* name : {"svo-sov", "gender"}) {
    auto g = build_grammar(name);
    for (int i = 0; i < 60; ++i) {
      auto sample = sample_itg(g, 8, 64, rng);
      const int len = static_cast<int>(sample.example.source.size());
      CHECK(len >= 8);
      CHECK(len <= 64);
      CHECK(validate_sample(g, sample));
    }
  }
}

TEST_CASE("svo-sov moves the aligned verb to clause-final position") {
  auto g = build_grammar("svo-sov");
  Rng rng(29, kStreamGen);
  for (int i = 0; i < 60; ++i) {
    auto sample = sample_itg(g, 8, 64, rng);
    const auto& ex = sample.example;
    // Source tokens come from the input classes only.
    std::map<std::string, std::multiset<int>> src_idx, tgt_idx;
    for (int id : ex.source) {
      auto [stem, idx] = stem_of(g.vocab.source_name(id));
      CHECK((stem == "si" || stem == "oi" || stem == "vi" || stem == "rpi"));
      if (idx >= 0) src_idx[stem.substr(0, 1)].insert(idx);
    }
    for (int id : ex.target) {
      auto [stem, idx] = stem_of(g.vocab.target_name(id));
      CHECK((stem == "so" || stem == "oo" || stem == "vo" || stem == "rpo"));
      if (idx >= 0) tgt_idx[stem.substr(0, 1)].insert(idx);
    }
    // Content indices agree per class under the si_k <-> so_k pairing.
    CHECK(src_idx == tgt_idx);
    // The root rule puts its verb terminal clause-finally on the target side.
    auto [last_stem, last_idx] = stem_of(g.vocab.target_name(ex.target.back()));
    CHECK(last_stem == "vo");
    auto [src2_stem, src2_idx] = stem_of(g.vocab.source_name(ex.source[1]));
    if (src2_stem == "vi") CHECK(src2_idx == last_idx);  // simplest clause: S is one terminal
  }
}

TEST_CASE("gender articles agree with the noun class symbol by symbol") {
  auto g = build_grammar("gender");
  Rng rng(31, kStreamGen);
  const std::map<std::string, std::string> article{{"the;m", "der"}, {"the;f", "die"},
                                                   {"the;n", "das"}, {"a;m", "ein"},
                                                   {"a;f", "eine"},  {"a;n", "ein"}};
  int checked = 0;
  for (int i = 0; i < 40; ++i) {
    auto sample = sample_itg(g, 8, 64, rng);
    const auto& ex = sample.example;
    REQUIRE(ex.source.size() == ex.target.size());  // this grammar never reorders
    for (std::size_t k = 0; k + 1 < ex.source.size(); ++k) {
      const std::string src_word = g.vocab.source_name(ex.source[k]);
      if (src_word != "the" && src_word != "a") continue;
      auto [noun_stem, noun_idx] = stem_of(g.vocab.source_name(ex.source[k + 1]));
      REQUIRE(noun_stem.size() == 2);
      const std::string gender(1, noun_stem[1]);
      CHECK(g.vocab.target_name(ex.target[k]) == article.at(src_word + ";" + gender));
      auto [tgt_stem, tgt_idx] = stem_of(g.vocab.target_name(ex.target[k + 1]));
      CHECK(tgt_stem == "g" + gender);
      CHECK(tgt_idx == noun_idx);
      ++checked;
    }
  }
  CHECK(checked > 50);
}

TEST_CASE("rejection budget exhaustion raises") {
  auto g = build_grammar("svo-sov");  // minimum source length is 3
  Rng rng(37);
  CHECK_THROWS_AS(sample_itg(g, 1, 2, rng, 50), GrammarError);
}

TEST_CASE("dataset files round-trip") {
  SampleConfig config;
  config.min_len = 2;
  config.max_len = 8;
  config.vocab = 16;
  Rng rng(41, kStreamGen);
  std::vector<TransductionExample> examples;
  for (int i = 0; i < 10; ++i) examples.push_back(gen_synthetic(TaskKind::Reverse, config, rng));
  std::ostringstream out;
  write_dataset(out, examples);
  std::istringstream in(out.str());
  auto loaded = read_dataset(in);
  REQUIRE(loaded.size() == examples.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].source == examples[i].source);
    CHECK(loaded[i].target == examples[i].target);
    CHECK(loaded[i].joint == examples[i].joint);
  }
}

TEST_CASE("task sampler streams are reproducible") {
  auto sampler = TaskSampler::make(TaskKind::SvoSov, 0);
  Rng a(9, kStreamTrainData), b(9, kStreamTrainData);
  for (int i = 0; i < 5; ++i) {
    CHECK(sampler.sample(a, 8, 64).joint == sampler.sample(b, 8, 64).joint);
  }
}
