#include "ndsq/tasks.hpp"

#include <json.hpp>

#include <algorithm>
#include <istream>
#include <ostream>

namespace ndsq {

const char* to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Copy: return "copy";
    case TaskKind::Reverse: return "reverse";
    case TaskKind::BigramFlip: return "bigram-flip";
    case TaskKind::SvoSov: return "svo-sov";
    case TaskKind::Gender: return "gender";
  }
  return "?";
}

TaskKind task_from_string(const std::string& name) {
  for (TaskKind kind : {TaskKind::Copy, TaskKind::Reverse, TaskKind::BigramFlip, TaskKind::SvoSov,
                        TaskKind::Gender})
    if (name == to_string(kind)) return kind;
  throw ConfigError("unknown task '" + name + "'");
}

bool is_itg_task(TaskKind kind) {
  return kind == TaskKind::SvoSov || kind == TaskKind::Gender;
}

void SampleConfig::validate(TaskKind kind) const {
  if (min_len < 1 || min_len > max_len) throw ConfigError("length range must satisfy 1 <= lo <= hi");
  if (!is_itg_task(kind) && vocab < 1) throw ConfigError("vocabulary size must be positive");
  if (kind == TaskKind::BigramFlip && (min_len % 2 != 0 || max_len % 2 != 0))
    throw ConfigError("bigram-flip requires even sequence lengths (got [" +
                      std::to_string(min_len) + ", " + std::to_string(max_len) + "])");
}

std::vector<int> apply_transform(TaskKind kind, const std::vector<int>& source) {
  switch (kind) {
    case TaskKind::Copy: return source;
    case TaskKind::Reverse: {
      std::vector<int> target(source.rbegin(), source.rend());
      return target;
    }
    case TaskKind::BigramFlip: {
      if (source.size() % 2 != 0)
        throw ConfigError("bigram-flip requires an even-length source");
      std::vector<int> target(source.size());
      for (std::size_t i = 0; i + 1 < source.size(); i += 2) {
        target[i] = source[i + 1];
        target[i + 1] = source[i];
      }
      return target;
    }
    default: throw ConfigError("no deterministic transform for an ITG task");
  }
}

TransductionExample gen_synthetic(TaskKind kind, const SampleConfig& config, Rng& rng) {
  if (is_itg_task(kind)) throw ConfigError("gen_synthetic cannot sample an ITG task");
  config.validate(kind);
  int length;
  if (kind == TaskKind::BigramFlip) {
    const int lo = config.min_len / 2, hi = config.max_len / 2;
    length = 2 * static_cast<int>(rng.uniform_int(lo, hi));
  } else {
    length = static_cast<int>(rng.uniform_int(config.min_len, config.max_len));
  }
  const Vocabulary vocab = Vocabulary::synthetic(config.vocab);
  std::vector<int> source(length);
  for (int& sym : source)
    sym = vocab.source_id(static_cast<int>(rng.uniform_int(0, config.vocab - 1)));
  std::vector<int> target = apply_transform(kind, source);
  return encode_example(std::move(source), std::move(target), vocab);
}

TaskSampler TaskSampler::make(TaskKind kind, int vocab_size) {
  if (is_itg_task(kind)) return make_grammar(kind, build_grammar(kind));
  TaskSampler sampler;
  sampler.kind_ = kind;
  sampler.vocab_size_ = vocab_size;
  sampler.vocab_ = Vocabulary::synthetic(vocab_size);
  return sampler;
}

TaskSampler TaskSampler::make_grammar(TaskKind kind, SyncGrammar grammar) {
  TaskSampler sampler;
  sampler.kind_ = kind;
  sampler.grammar_ = std::make_shared<SyncGrammar>(std::move(grammar));
  sampler.vocab_ = sampler.grammar_->vocab;
  return sampler;
}

TransductionExample TaskSampler::sample(Rng& rng, int min_len, int max_len) const {
  if (grammar_) return sample_itg(*grammar_, min_len, max_len, rng).example;
  SampleConfig config;
  config.min_len = min_len;
  config.max_len = max_len;
  config.vocab = vocab_size_;
  return gen_synthetic(kind_, config, rng);
}

void write_dataset(std::ostream& out, const std::vector<TransductionExample>& examples) {
  for (const auto& ex : examples) {
    nlohmann::json record;
    record["source"] = ex.source;
    record["target"] = ex.target;
    out << record.dump() << "\n";
  }
}

std::vector<TransductionExample> read_dataset(std::istream& in) {
  std::vector<TransductionExample> examples;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
    TransductionExample ex;
    ex.source = record.at("source").get<std::vector<int>>();
    ex.target = record.at("target").get<std::vector<int>>();
    ex.joint.push_back(Vocabulary::kSos);
    ex.joint.insert(ex.joint.end(), ex.source.begin(), ex.source.end());
    ex.joint.push_back(Vocabulary::kSep);
    ex.joint.insert(ex.joint.end(), ex.target.begin(), ex.target.end());
    ex.joint.push_back(Vocabulary::kEos);
    examples.push_back(std::move(ex));
  }
  return examples;
}

}  // namespace ndsq
