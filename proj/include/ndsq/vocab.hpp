#pragma once

#include <string>
#include <vector>

#include "ndsq/common.hpp"

namespace ndsq {

/// Symbol index spaces. Reserved indices SOS=0, SEP=1, EOS=2 are shared; the
/// content symbols of the source and target vocabularies follow. Synthetic
/// tasks transform symbols in place, so both sides map onto one content range
/// (`shared`); grammar tasks have disjoint terminal sets.
struct Vocabulary {
  static constexpr int kSos = 0;
  static constexpr int kSep = 1;
  static constexpr int kEos = 2;
  static constexpr int kReserved = 3;

  int n_source = 0;
  int n_target = 0;
  bool shared = true;
  std::vector<std::string> source_names;  // optional, grammar terminals
  std::vector<std::string> target_names;

  static Vocabulary synthetic(int n_symbols);
  static Vocabulary split(std::vector<std::string> source, std::vector<std::string> target);

  int source_base() const { return kReserved; }
  int target_base() const { return kReserved + (shared ? 0 : n_source); }
  int source_id(int k) const { return source_base() + k; }
  int target_id(int k) const { return target_base() + k; }
  bool valid_source(int id) const { return id >= source_base() && id < source_base() + n_source; }
  bool valid_target(int id) const { return id >= target_base() && id < target_base() + n_target; }

  /// Rows of the input embedding table.
  int input_symbols() const { return kReserved + n_source + (shared ? 0 : n_target); }
  /// Softmax classes: the target vocabulary plus EOS (the last class).
  int output_classes() const { return n_target + 1; }

  int class_of(int id) const;       // target symbol or EOS -> class index
  int id_of_class(int cls) const;   // inverse

  std::string source_name(int id) const;
  std::string target_name(int id) const;
};

struct TransductionExample {
  std::vector<int> source;
  std::vector<int> target;
  std::vector<int> joint;  // SOS + source + SEP + target + EOS
};

/// Lays out the joint sequence and validates every symbol against the
/// vocabulary. Throws VocabError on unknown symbols.
TransductionExample encode_example(std::vector<int> source, std::vector<int> target,
                                   const Vocabulary& vocab);

}  // namespace ndsq
