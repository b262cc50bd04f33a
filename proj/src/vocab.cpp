#include "ndsq/vocab.hpp"

namespace ndsq {

Vocabulary Vocabulary::synthetic(int n_symbols) {
  Vocabulary v;
  v.n_source = n_symbols;
  v.n_target = n_symbols;
  v.shared = true;
  return v;
}

Vocabulary Vocabulary::split(std::vector<std::string> source, std::vector<std::string> target) {
  Vocabulary v;
  v.n_source = static_cast<int>(source.size());
  v.n_target = static_cast<int>(target.size());
  v.shared = false;
  v.source_names = std::move(source);
  v.target_names = std::move(target);
  return v;
}

int Vocabulary::class_of(int id) const {
  if (id == kEos) return n_target;
  if (!valid_target(id))
    throw VocabError("symbol " + std::to_string(id) + " is not a target symbol");
  return id - target_base();
}

int Vocabulary::id_of_class(int cls) const {
  if (cls == n_target) return kEos;
  if (cls < 0 || cls > n_target) throw VocabError("class " + std::to_string(cls) + " out of range");
  return target_base() + cls;
}

std::string Vocabulary::source_name(int id) const {
  const int k = id - source_base();
  if (k >= 0 && k < static_cast<int>(source_names.size())) return source_names[k];
  return std::to_string(id);
}

std::string Vocabulary::target_name(int id) const {
  const int k = id - target_base();
  if (k >= 0 && k < static_cast<int>(target_names.size())) return target_names[k];
  return std::to_string(id);
}

TransductionExample encode_example(std::vector<int> source, std::vector<int> target,
                                   const Vocabulary& vocab) {
  for (int id : source)
    if (!vocab.valid_source(id))
      throw VocabError("unknown source symbol " + std::to_string(id));
  for (int id : target)
    if (!vocab.valid_target(id))
      throw VocabError("unknown target symbol " + std::to_string(id));
  TransductionExample ex;
  ex.joint.reserve(source.size() + target.size() + 3);
  ex.joint.push_back(Vocabulary::kSos);
  ex.joint.insert(ex.joint.end(), source.begin(), source.end());
  ex.joint.push_back(Vocabulary::kSep);
  ex.joint.insert(ex.joint.end(), target.begin(), target.end());
  ex.joint.push_back(Vocabulary::kEos);
  ex.source = std::move(source);
  ex.target = std::move(target);
  return ex;
}

}  // namespace ndsq
