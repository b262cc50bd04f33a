#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ndsq/tasks.hpp"

namespace ndsq {

namespace {

bool all_digits(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

double parse_probability(const std::string& text, int line_no) {
  const auto slash = text.find('/');
  try {
    if (slash == std::string::npos) return std::stod(text);
    const double num = std::stod(text.substr(0, slash));
    const double den = std::stod(text.substr(slash + 1));
    if (den == 0) throw GrammarError("zero denominator");
    return num / den;
  } catch (const std::exception&) {
    throw GrammarError("line " + std::to_string(line_no) + ": bad probability '" + text + "'");
  }
}

std::vector<std::string> split_ws(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

struct RawRule {
  double p;
  std::string head;
  std::vector<std::string> source, target;
  int line_no;
};

// Longest declared head that prefixes the token with a digit suffix.
SyncToken classify(const std::string& token, const std::set<std::string>& heads) {
  SyncToken result;
  result.text = token;
  std::size_t best = 0;
  for (const auto& head : heads) {
    if (head.size() >= token.size() || head.size() <= best) continue;
    if (token.compare(0, head.size(), head) == 0 && all_digits(token.substr(head.size())))
      best = head.size();
  }
  if (best > 0) {
    result.nonterminal = true;
    result.link = std::stoi(token.substr(best));
    result.text = token.substr(0, best);
  }
  return result;
}

void finalize(SyncGrammar& g) {
  std::vector<std::string> source_names, target_names;
  for (std::size_t r = 0; r < g.rules.size(); ++r) {
    SyncRule& rule = g.rules[r];
    g.rules_by_head[rule.head].push_back(r);

    // Synchronized occurrences pair by (nonterminal, index): B1 and V1 may
    // coexist in one rule.
    std::set<std::pair<std::string, int>> src_links, tgt_links;
    for (const auto& tok : rule.source) {
      if (tok.nonterminal) {
        if (!src_links.emplace(tok.text, tok.link).second)
          throw GrammarError("rule for " + rule.head + ": duplicate source occurrence " +
                             tok.text + std::to_string(tok.link));
        rule.links.emplace_back(tok.text, tok.link);
      } else if (!g.source_ids.count(tok.text)) {
        g.source_ids[tok.text] = 0;  // id assigned below
        source_names.push_back(tok.text);
      }
    }
    for (const auto& tok : rule.target) {
      if (tok.nonterminal) {
        if (!tgt_links.emplace(tok.text, tok.link).second)
          throw GrammarError("rule for " + rule.head + ": duplicate target occurrence " +
                             tok.text + std::to_string(tok.link));
      } else if (!g.target_ids.count(tok.text)) {
        g.target_ids[tok.text] = 0;
        target_names.push_back(tok.text);
      }
    }
    if (src_links != tgt_links)
      throw GrammarError("rule for " + rule.head +
                         ": nonterminal occurrences are not a bijection between the sides");
  }

  if (!g.rules_by_head.count(g.root))
    throw GrammarError("grammar has no rules for the root symbol '" + g.root + "'");
  for (const auto& [head, indices] : g.rules_by_head) {
    double sum = 0;
    for (std::size_t r : indices) sum += g.rules[r].probability;
    if (std::abs(sum - 1.0) > 1e-9)
      throw GrammarError("probabilities for head '" + head + "' sum to " + std::to_string(sum));
  }
  g.vocab = Vocabulary::split(source_names, target_names);
  for (int i = 0; i < g.vocab.n_source; ++i) g.source_ids[source_names[i]] = g.vocab.source_id(i);
  for (int i = 0; i < g.vocab.n_target; ++i) g.target_ids[target_names[i]] = g.vocab.target_id(i);
}

}  // namespace

int SyncRule::child_slot(const std::string& child_head, int link) const {
  for (std::size_t i = 0; i < links.size(); ++i)
    if (links[i].first == child_head && links[i].second == link) return static_cast<int>(i);
  throw GrammarError("rule for " + head + " has no occurrence " + child_head +
                     std::to_string(link));
}

SyncGrammar parse_grammar(const std::string& text) {
  std::vector<RawRule> raw;
  std::set<std::string> heads;

  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto fields = split_ws(line);
    if (fields.empty()) continue;

    const auto arrow = std::find(fields.begin(), fields.end(), "->");
    const auto sep = std::find(fields.begin(), fields.end(), "|||");
    if (arrow == fields.end() || sep == fields.end() || sep < arrow)
      throw GrammarError("line " + std::to_string(line_no) + ": expected '-> ... ||| ...'");

    if (fields[0] == "rule") {
      if (arrow - fields.begin() != 3)
        throw GrammarError("line " + std::to_string(line_no) + ": expected 'rule <p> <HEAD> ->'");
      RawRule r;
      r.p = parse_probability(fields[1], line_no);
      r.head = fields[2];
      r.source.assign(arrow + 1, sep);
      r.target.assign(sep + 1, fields.end());
      r.line_no = line_no;
      if (r.source.empty() || r.target.empty())
        throw GrammarError("line " + std::to_string(line_no) + ": empty expansion");
      heads.insert(r.head);
      raw.push_back(std::move(r));
    } else if (fields[0] == "class") {
      if (arrow - fields.begin() != 3 || sep - arrow != 2 || fields.end() - sep != 2)
        throw GrammarError("line " + std::to_string(line_no) +
                           ": expected 'class <HEAD> <k> -> <stem> ||| <stem>'");
      const std::string& head = fields[1];
      if (!all_digits(fields[2]))
        throw GrammarError("line " + std::to_string(line_no) + ": bad class size '" + fields[2] +
                           "'");
      const int k = std::stoi(fields[2]);
      if (k < 1) throw GrammarError("line " + std::to_string(line_no) + ": class size must be >=1");
      const std::string src_stem = *(arrow + 1);
      const std::string tgt_stem = *(sep + 1);
      heads.insert(head);
      for (int i = 1; i <= k; ++i) {
        RawRule r;
        r.p = 1.0 / k;
        r.head = head;
        r.source = {src_stem + std::to_string(i)};
        r.target = {tgt_stem + std::to_string(i)};
        r.line_no = line_no;
        raw.push_back(std::move(r));
      }
    } else {
      throw GrammarError("line " + std::to_string(line_no) + ": unknown declaration '" +
                         fields[0] + "'");
    }
  }

  SyncGrammar g;
  for (const auto& r : raw) {
    SyncRule rule;
    rule.head = r.head;
    rule.probability = r.p;
    for (const auto& tok : r.source) rule.source.push_back(classify(tok, heads));
    for (const auto& tok : r.target) rule.target.push_back(classify(tok, heads));
    g.rules.push_back(std::move(rule));
  }
  finalize(g);
  return g;
}

SyncGrammar load_grammar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open grammar file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_grammar(buffer.str());
}

namespace {

// Verb movement with embedded relative clauses: terminal classes of 33
// indexed symbols; si/oi/vi on the source side pair so/oo/vo on the target.
const char* kSvoSovGrammar = R"(
rule 1    A -> S1 VT2 O3 ||| S1 O3 VT2
rule 1/5  S -> S1 S2 ||| S1 S2
rule 1/5  S -> S1 rpi S2 VT3 ||| S1 rpo S2 VT3
rule 3/5  S -> ST1 ||| ST1
rule 1/5  O -> O1 O2 ||| O1 O2
rule 1/5  O -> S1 rpi S2 VT3 ||| S1 rpo S2 VT3
rule 3/5  O -> OT1 ||| OT1
class ST 33 -> si ||| so
class OT 33 -> oi ||| oo
class VT 33 -> vi ||| vo
)";

// Genderless articles to gendered ones; noun classes of 25 indexed symbols
// per gender, verbs shared.
const char* kGenderGrammar = R"(
rule 1    A -> B1 ||| B1
rule 1/4  B -> B1 or B2 ||| B1 oder B2
rule 1/4  B -> S1 and S2 ||| S1 und S2
rule 1/2  B -> B1 V1 ||| B1 V1
rule 3/4  V -> W1 B2 ||| W1 B2
rule 1/4  V -> W1 ||| W1
rule 1/6  S -> the M1 ||| der M1
rule 1/6  S -> the F1 ||| die F1
rule 1/6  S -> the N1 ||| das N1
rule 1/6  S -> a M1 ||| ein M1
rule 1/6  S -> a F1 ||| eine F1
rule 1/6  S -> a N1 ||| ein N1
class W 25 -> we ||| wg
class M 25 -> em ||| gm
class F 25 -> ef ||| gf
class N 25 -> en ||| gn
)";

}  // namespace

SyncGrammar build_grammar(const std::string& name) {
  if (name == "svo-sov") return parse_grammar(kSvoSovGrammar);
  if (name == "gender") return parse_grammar(kGenderGrammar);
  throw GrammarError("unknown grammar '" + name + "'");
}

SyncGrammar build_grammar(TaskKind kind) {
  if (kind == TaskKind::SvoSov) return build_grammar("svo-sov");
  if (kind == TaskKind::Gender) return build_grammar("gender");
  throw GrammarError(std::string("task '") + to_string(kind) + "' has no grammar");
}

namespace {

struct DepthExceeded {};

Derivation expand(const SyncGrammar& g, const std::string& head, int depth, int max_depth,
                  Rng& rng) {
  if (depth > max_depth) throw DepthExceeded{};
  const auto& indices = g.rules_by_head.at(head);
  std::vector<double> probs;
  probs.reserve(indices.size());
  for (std::size_t r : indices) probs.push_back(g.rules[r].probability);
  Derivation d;
  d.rule_index = indices[rng.categorical(probs)];
  const SyncRule& rule = g.rules[d.rule_index];
  d.children.reserve(rule.links.size());
  for (const auto& [child_head, link] : rule.links)
    d.children.push_back(expand(g, child_head, depth + 1, max_depth, rng));
  return d;
}

void emit(const SyncGrammar& g, const Derivation& d, bool target_side, std::vector<int>& out) {
  const SyncRule& rule = g.rules[d.rule_index];
  for (const auto& tok : target_side ? rule.target : rule.source) {
    if (tok.nonterminal) {
      emit(g, d.children[rule.child_slot(tok.text, tok.link)], target_side, out);
    } else {
      out.push_back(target_side ? g.target_ids.at(tok.text) : g.source_ids.at(tok.text));
    }
  }
}

}  // namespace

ItgSample sample_itg(const SyncGrammar& grammar, int min_len, int max_len, Rng& rng,
                     int max_attempts, int max_depth) {
  if (min_len < 1 || min_len > max_len) throw ConfigError("bad length range for the sampler");
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    Derivation d;
    try {
      d = expand(grammar, grammar.root, 0, max_depth, rng);
    } catch (const DepthExceeded&) {
      continue;
    }
    std::vector<int> source, target;
    emit(grammar, d, false, source);
    const int len = static_cast<int>(source.size());
    if (len < min_len || len > max_len) continue;
    emit(grammar, d, true, target);
    ItgSample sample;
    sample.example = encode_example(std::move(source), std::move(target), grammar.vocab);
    sample.derivation = std::move(d);
    sample.attempts = attempt;
    return sample;
  }
  throw GrammarError("rejection budget exhausted after " + std::to_string(max_attempts) +
                     " attempts for lengths [" + std::to_string(min_len) + ", " +
                     std::to_string(max_len) + "]");
}

bool validate_sample(const SyncGrammar& grammar, const ItgSample& sample) {
  std::vector<int> source, target;
  try {
    emit(grammar, sample.derivation, false, source);
    emit(grammar, sample.derivation, true, target);
  } catch (const std::exception&) {
    return false;
  }
  return source == sample.example.source && target == sample.example.target;
}

}  // namespace ndsq
