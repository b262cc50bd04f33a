#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ndsq/common.hpp"
#include "ndsq/controller.hpp"
#include "ndsq/vocab.hpp"

// Full-sequence model over the joint encoding SOS + source + SEP + target +
// EOS: one controller step per joint symbol, a softmax over target classes at
// every position of the target segment (first prediction when SEP is fed,
// last is EOS), and exact backpropagation through time. Predictions made
// while the source is being read are not scored.

namespace ndsq {

template <class Scalar>
struct LossReport {
  Scalar nll = 0;        // summed cross-entropy, nats
  Index positions = 0;   // scored predictions, |target| + 1
  Scalar perplexity() const {
    return positions == 0 ? Scalar(1) : std::exp(nll / static_cast<Scalar>(positions));
  }
};

template <class Scalar>
struct StepTrace {
  std::vector<int> inputs;                     // joint symbol fed at each step
  std::vector<RecurrentState<Scalar>> states;  // states[0] is the initial state
  std::vector<StepCache<Scalar>> caches;
  Index sep_step = 0;                          // step that feeds SEP; first scored step
};

template <class Scalar>
struct ForwardResult {
  Matrix<Scalar> logits;  // classes x scored positions
  Matrix<Scalar> probs;
  LossReport<Scalar> loss;
  StepTrace<Scalar> trace;
};

template <class Scalar>
ForwardResult<Scalar> model_forward(const ModelParameters<Scalar>& params,
                                    const Vocabulary& vocab, const TransductionExample& ex) {
  const ModelConfig& config = params.config;
  if (config.input_symbols != vocab.input_symbols() ||
      config.output_classes != vocab.output_classes())
    throw DimensionError("model vocabulary sizes do not match the vocabulary");
  const auto& joint = ex.joint;
  if (joint.size() < 3) throw DimensionError("joint sequence too short");
  const Index steps = static_cast<Index>(joint.size());
  const Index scored = static_cast<Index>(ex.target.size()) + 1;

  ForwardResult<Scalar> result;
  result.logits.resize(config.output_classes, scored);
  result.probs.resize(config.output_classes, scored);
  result.trace.inputs = joint;
  result.trace.sep_step = static_cast<Index>(ex.source.size()) + 1;
  result.trace.states.reserve(steps + 1);
  result.trace.caches.resize(steps);
  result.trace.states.push_back(initial_state(params));

  Vector<Scalar> out;
  Index pos = 0;
  for (Index t = 0; t < steps; ++t) {
    const int sym = joint[t];
    if (sym < 0 || sym >= config.input_symbols)
      throw VocabError("joint symbol " + std::to_string(sym) + " outside the input table");
    const Vector<Scalar> x = params.input_embed.row(sym).transpose();
    result.trace.states.push_back(
        controller_step(params, result.trace.states[t], x, out, &result.trace.caches[t]));
    if (!result.trace.states.back().layers.back().h.allFinite())
      throw NumericError("non-finite activation at step " + std::to_string(t));
    if (t >= result.trace.sep_step && pos < scored) {
      Vector<Scalar> z = params.out_embed * out + params.out_bias;
      if (!z.allFinite())
        throw NumericError("non-finite logits at step " + std::to_string(t) + " (position " +
                           std::to_string(pos) + ")");
      result.logits.col(pos) = z;
      const Scalar zmax = z.maxCoeff();
      Vector<Scalar> e = (z.array() - zmax).exp().matrix();
      result.probs.col(pos) = e / e.sum();
      const int cls = vocab.class_of(joint[t + 1]);
      result.loss.nll -= std::log(result.probs(cls, pos));
      ++pos;
    }
  }
  result.loss.positions = scored;
  if (!std::isfinite(static_cast<double>(result.loss.nll)))
    throw NumericError("non-finite loss over " + std::to_string(scored) + " positions");
  return result;
}

/// Accumulates the gradient of the summed cross-entropy into `grads`.
/// `position_mask`, when given, scales each scored position's loss term.
template <class Scalar>
void model_backward_into(const ModelParameters<Scalar>& params, const Vocabulary& vocab,
                         const TransductionExample& ex, const ForwardResult<Scalar>& fwd,
                         ModelParameters<Scalar>& grads,
                         const Vector<Scalar>* position_mask = nullptr) {
  const ModelConfig& config = params.config;
  const Index steps = static_cast<Index>(fwd.trace.inputs.size());
  const Index scored = fwd.loss.positions;
  if (static_cast<Index>(fwd.trace.states.size()) != steps + 1)
    throw DimensionError("trace does not match the example");
  if (position_mask && position_mask->size() != scored)
    throw DimensionError("position mask size mismatch");

  StateAdjoint<Scalar> d_next = StateAdjoint<Scalar>::zero(params);
  Vector<Scalar> d_input;
  for (Index t = steps; t-- > 0;) {
    Vector<Scalar> d_output;
    const Index pos = t - fwd.trace.sep_step;
    if (pos >= 0 && pos < scored) {
      Vector<Scalar> dz = fwd.probs.col(pos);
      dz[vocab.class_of(fwd.trace.inputs[t + 1])] -= Scalar(1);
      if (position_mask) dz *= (*position_mask)[pos];
      const Vector<Scalar>& o = fwd.trace.caches[t].out;
      grads.out_embed.noalias() += dz * o.transpose();
      grads.out_bias += dz;
      d_output.noalias() = params.out_embed.transpose() * dz;
    }
    StateAdjoint<Scalar> d_prev;
    controller_step_backward(params, fwd.trace.states[t], fwd.trace.states[t + 1],
                             fwd.trace.caches[t], d_output, d_next, grads, d_prev, d_input);
    grads.input_embed.row(fwd.trace.inputs[t]) += d_input.transpose();
    d_next = std::move(d_prev);
  }
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    grads.h0[k] += d_next.d_h[k];
    grads.c0[k] += d_next.d_c[k];
  }
}

template <class Scalar>
ModelParameters<Scalar> model_backward(const ModelParameters<Scalar>& params,
                                       const Vocabulary& vocab, const TransductionExample& ex,
                                       const ForwardResult<Scalar>& fwd,
                                       const Vector<Scalar>* position_mask = nullptr) {
  ModelParameters<Scalar> grads = zeros_like(params);
  model_backward_into(params, vocab, ex, fwd, grads, position_mask);
  return grads;
}

struct DecodeResult {
  std::vector<int> symbols;  // joint-space target symbols, EOS not included
  bool truncated = false;    // max_len reached before EOS
};

/// Feeds SOS + source + SEP, then feeds back its own argmax predictions until
/// EOS or max_len. Ties pick the lowest class index.
template <class Scalar>
DecodeResult greedy_decode(const ModelParameters<Scalar>& params, const Vocabulary& vocab,
                           const std::vector<int>& source, Index max_len) {
  RecurrentState<Scalar> state = initial_state(params);
  Vector<Scalar> out;
  auto feed = [&](int sym) {
    const Vector<Scalar> x = params.input_embed.row(sym).transpose();
    state = controller_step(params, state, x, out);
  };
  feed(Vocabulary::kSos);
  for (int sym : source) {
    if (!vocab.valid_source(sym))
      throw VocabError("cannot decode from unknown source symbol " + std::to_string(sym));
    feed(sym);
  }
  feed(Vocabulary::kSep);

  DecodeResult result;
  while (static_cast<Index>(result.symbols.size()) < max_len) {
    const Vector<Scalar> z = params.out_embed * out + params.out_bias;
    Index best = 0;
    for (Index i = 1; i < z.size(); ++i)
      if (z[i] > z[best]) best = i;
    if (static_cast<int>(best) == vocab.n_target) return result;  // EOS
    const int sym = vocab.id_of_class(static_cast<int>(best));
    result.symbols.push_back(sym);
    feed(sym);
  }
  result.truncated = true;
  return result;
}

}  // namespace ndsq
