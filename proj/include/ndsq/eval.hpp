#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "ndsq/common.hpp"
#include "ndsq/seqmodel.hpp"
#include "ndsq/tasks.hpp"

namespace ndsq {

struct EvalReport {
  double coarse = 0;  // fraction predicted exactly end to end, EOS included
  double fine = 0;    // mean fraction correct before the first error
  std::size_t count = 0;
  std::vector<std::size_t> first_errors;  // 1-based position of the first error; 0 = none
};

/// Position-by-position scoring of (prediction, target) pairs. Targets must
/// be nonempty and include their EOS; EOS compares as an ordinary symbol, so
/// a prediction that overruns the target mismatches at the EOS position.
EvalReport accuracy(const std::vector<std::pair<std::vector<int>, std::vector<int>>>& pairs);

/// Samples n examples, decodes each with the given decoder (a prediction
/// includes its EOS when the decode terminated), and scores them.
EvalReport run_eval_with(const std::function<std::vector<int>(const TransductionExample&)>& decode,
                         const TaskSampler& task, int n, int min_len, int max_len,
                         std::uint64_t seed, std::uint64_t stream = kStreamEvalTest);

/// Greedy-decode evaluation: n sampled sequences, decode cap 2*max_len + 2.
template <class Scalar>
EvalReport run_eval(const ModelParameters<Scalar>& params, const TaskSampler& task, int n,
                    int min_len, int max_len, std::uint64_t seed,
                    std::uint64_t stream = kStreamEvalTest) {
  const Vocabulary& vocab = task.vocab();
  return run_eval_with(
      [&](const TransductionExample& ex) {
        DecodeResult result =
            greedy_decode(params, vocab, ex.source, 2 * static_cast<Index>(max_len) + 2);
        std::vector<int> pred = std::move(result.symbols);
        if (!result.truncated) pred.push_back(Vocabulary::kEos);
        return pred;
      },
      task, n, min_len, max_len, seed, stream);
}

}  // namespace ndsq
