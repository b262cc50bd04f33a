#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "ndsq/common.hpp"
#include "ndsq/vocab.hpp"

namespace ndsq {

enum class TaskKind { Copy, Reverse, BigramFlip, SvoSov, Gender };

const char* to_string(TaskKind kind);
TaskKind task_from_string(const std::string& name);
bool is_itg_task(TaskKind kind);

struct SampleConfig {
  int min_len = 8;
  int max_len = 64;
  int vocab = 128;  // source vocabulary size, SOS/SEP/EOS excluded
  std::uint64_t seed = 0;

  void validate(TaskKind kind) const;
};

/// The deterministic task transform applied to a source sequence.
std::vector<int> apply_transform(TaskKind kind, const std::vector<int>& source);

/// One synthetic example: source drawn i.i.d. uniform over the vocabulary with
/// length uniform over the configured range (even lengths only for
/// bigram-flip), target the deterministic transform.
TransductionExample gen_synthetic(TaskKind kind, const SampleConfig& config, Rng& rng);

// ---------------------------------------------------------------------------
// Synchronous grammars
// ---------------------------------------------------------------------------

struct SyncToken {
  std::string text;          // literal terminal, or the head name
  bool nonterminal = false;
  int link = 0;              // pairing index of synchronized nonterminals
};

struct SyncRule {
  std::string head;
  double probability = 0;
  std::vector<SyncToken> source, target;
  std::vector<std::pair<std::string, int>> links;  // (head, index), in source order

  int child_slot(const std::string& child_head, int link) const;
};

/// Weighted synchronous rules with linked nonterminals. Rule text format, one
/// declaration per line ('#' starts a comment):
///
///   rule <p> <HEAD> -> <tokens> ||| <tokens>
///   class <HEAD> <k> -> <source-stem> ||| <target-stem>
///
/// <p> is a decimal or a fraction such as 3/5. A token consisting of a
/// declared head followed by digits (S1, VT2) is a synchronized nonterminal;
/// the (head, number) pair links the occurrence to its counterpart on the
/// other side. Anything else is a terminal literal. A
/// class line declares k rules HEAD -> stem<i> ||| stem<i> with probability
/// 1/k each, one per i in 1..k.
struct SyncGrammar {
  std::string root = "A";
  std::vector<SyncRule> rules;
  std::map<std::string, std::vector<std::size_t>> rules_by_head;
  Vocabulary vocab;
  std::unordered_map<std::string, int> source_ids, target_ids;  // terminal -> joint id
};

SyncGrammar parse_grammar(const std::string& text);
SyncGrammar load_grammar(const std::string& path);

/// The two built-in grammars: "svo-sov" and "gender".
SyncGrammar build_grammar(const std::string& name);
SyncGrammar build_grammar(TaskKind kind);

struct Derivation {
  std::size_t rule_index = 0;
  std::vector<Derivation> children;  // one per link, in link order
};

struct ItgSample {
  TransductionExample example;
  Derivation derivation;
  int attempts = 1;  // rejection attempts consumed, accepted draw included
};

/// Top-down synchronized expansion from the root, resampled until the source
/// length falls inside [min_len, max_len]. A single expansion deeper than
/// max_depth is aborted and counts as an attempt. Throws GrammarError when
/// max_attempts is exhausted.
ItgSample sample_itg(const SyncGrammar& grammar, int min_len, int max_len, Rng& rng,
                     int max_attempts = 10000, int max_depth = 64);

/// Recomputes both yields of the sample's derivation and compares them to the
/// stored example.
bool validate_sample(const SyncGrammar& grammar, const ItgSample& sample);

// ---------------------------------------------------------------------------
// Unified sampling front end
// ---------------------------------------------------------------------------

/// Value-semantics example stream; the caller owns the Rng, so distinct
/// streams are just distinct (seed, stream) pairs.
class TaskSampler {
 public:
  static TaskSampler make(TaskKind kind, int vocab_size);
  static TaskSampler make_grammar(TaskKind kind, SyncGrammar grammar);

  TaskKind kind() const { return kind_; }
  const Vocabulary& vocab() const { return vocab_; }
  const SyncGrammar* grammar() const { return grammar_.get(); }

  TransductionExample sample(Rng& rng, int min_len, int max_len) const;

 private:
  TaskSampler() = default;
  TaskKind kind_ = TaskKind::Copy;
  int vocab_size_ = 0;
  Vocabulary vocab_;
  std::shared_ptr<const SyncGrammar> grammar_;
};

/// Line-delimited dataset records: {"source": [ints], "target": [ints]}.
void write_dataset(std::ostream& out, const std::vector<TransductionExample>& examples);
std::vector<TransductionExample> read_dataset(std::istream& in);

}  // namespace ndsq
